"""Closed-form capacity/generalization calculators and Monte-Carlo verifiers.

Unit discipline: entropies and mutual information enter the public API in
bits and are converted to nats exactly where a formula needs natural-log
units (lemma1_rhs takes nats directly, matching its I_nats signature).
The absolute constant a1^2 = 72 is fixed by the subgaussian convention
P(|X| >= t) <= 2 exp(-t^2 / C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .harness import plugin_entropy
from .rng import derive_seed

A1SQ = 72.0
LN2 = math.log(2.0)


def bits_to_nats(bits: float) -> float:
    return bits * LN2


def nats_to_bits(nats: float) -> float:
    return nats / LN2


@dataclass
class BoundInputs:
    """All symbols the bound calculators consume.

    eps may be 0 (the Lipschitz bound degenerates to 0 there) but
    peff_continuous needs eps > 0; delta must lie strictly in (0,1).
    I_bits is mutual information in bits, gamma the pruned fraction.
    """

    n: int
    d: int
    eps: float
    delta: float
    sigma2: float = 1.0
    c: float = 1.0
    k: int = 1
    L: float = 1.0
    W_diam: float = 1.0
    J: float = 1.0
    I_bits: float = 0.0
    gamma: float = 0.0
    p: int = 1
    a1sq: float = A1SQ

    def __post_init__(self) -> None:
        if not 0 <= self.eps < 1:
            raise ValueError("eps must be in [0,1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0,1)")
        if min(self.n, self.d, self.k, self.p) < 1:
            raise ValueError("n, d, k, p must be >= 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be strictly positive")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0,1]")
        if self.c <= 0 or self.L < 0 or self.W_diam < 0 or self.J < 0:
            raise ValueError("c must be positive; L, W_diam, J nonnegative")
        if self.I_bits < 0:
            raise ValueError("I_bits must be nonnegative")
        if self.a1sq != A1SQ:
            raise ValueError(f"a1sq is the fixed constant {A1SQ}")


def c0(inputs: BoundInputs) -> float:
    """Subgaussian scale of the noise-correlation process: 144 c L^2 / (n d)."""
    return 144.0 * inputs.c * inputs.L**2 / (inputs.n * inputs.d)


def peff_finite(I_mask_bits: float, expected_log2_Nm: float) -> float:
    """Effective parameter count, finite families: I + E[log2 N_m]."""
    return I_mask_bits + expected_log2_Nm


def peff_continuous(
    I_mask_bits: float, expected_mask_l1: float, W_diam: float, J: float, eps: float
) -> float:
    """Effective count, continuous families: I + E||m||_1 log2(1 + 60 W J / eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return I_mask_bits + expected_mask_l1 * math.log2(1.0 + 60.0 * W_diam * J / eps)


@dataclass
class LipschitzBound:
    value: float
    precondition_ok: bool
    precondition_lhs: float
    precondition_rhs: float


def lipschitz_lower_bound(inputs: BoundInputs, peff: float) -> LipschitzBound:
    """Smoothness floor implied by fitting eps below the noise level.

    value = (eps / (96 a1 sqrt(2c))) * sqrt(n d delta / (peff + (delta/2) ln(4/delta)));
    the precondition 8^3 k ln(8k/delta) <= n eps^2 is reported, not enforced.
    """
    lhs = 8.0**3 * inputs.k * math.log(8.0 * inputs.k / inputs.delta)
    rhs = inputs.n * inputs.eps**2
    denom = peff + (inputs.delta / 2.0) * math.log(4.0 / inputs.delta)
    value = (
        inputs.eps
        / (96.0 * math.sqrt(A1SQ) * math.sqrt(2.0 * inputs.c))
        * math.sqrt(inputs.n * inputs.d * inputs.delta / denom)
    )
    return LipschitzBound(value, lhs <= rhs, lhs, rhs)


@dataclass
class EntropyBound:
    exact_bits: float
    asymptotic_bits: float


def log2_binomial(p: int, k: int) -> float:
    """log2 C(p, k) via log-gamma."""
    if not 0 <= k <= p:
        raise ValueError(f"need 0 <= k <= p, got k={k}, p={p}")
    return (
        math.lgamma(p + 1) - math.lgamma(k + 1) - math.lgamma(p - k + 1)
    ) / LN2


def entropy_upper_bound(p: int, gamma: float) -> EntropyBound:
    """Mask-entropy cap at sparsity gamma: exact log2 C(p, round(gamma p))
    and the asymptotic form p((1-gamma)log2(1/(1-gamma)) + gamma log2(1/gamma))."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must be in [0,1]")
    k = round(gamma * p)
    exact = log2_binomial(p, k)
    h2 = 0.0
    if 0 < gamma < 1:
        h2 = (1 - gamma) * math.log2(1 / (1 - gamma)) + gamma * math.log2(1 / gamma)
    return EntropyBound(exact_bits=exact, asymptotic_bits=p * h2)


def peff_ratio(gamma: float) -> float:
    """Growth rate of p_eff relative to surviving weights: log2(1/(1-gamma))."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must be in [0,1)")
    return math.log2(1.0 / (1.0 - gamma))


def lemma1_rhs(C: float, I_nats: float, delta: float) -> float:
    """Selected-variable tail radius a1 sqrt((C/delta) I + C ln(2/delta)).

    I_nats is mutual information in nats (convert bits via bits_to_nats).
    """
    if C < 0 or I_nats < 0:
        raise ValueError("C and I_nats must be nonnegative")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0,1)")
    return math.sqrt(A1SQ) * math.sqrt(
        (C / delta) * I_nats + C * math.log(2.0 / delta)
    )


def vc_mi_bound(d_vc: int, m: int, I_bits: float, delta: float) -> float:
    """Uniform-deviation bound for a selected VC class:
    (4 + sqrt(d ln(2em/d)) + sqrt((4 a1^2/delta)(I + delta ln(2/delta)))) / sqrt(2m)."""
    if m <= d_vc + 1:
        raise ValueError(f"need m > d_vc + 1, got m={m}, d_vc={d_vc}")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0,1)")
    I_nats = bits_to_nats(I_bits)
    return (
        4.0
        + math.sqrt(d_vc * math.log(2.0 * math.e * m / d_vc))
        + math.sqrt((4.0 * A1SQ / delta) * (I_nats + delta * math.log(2.0 / delta)))
    ) / math.sqrt(2.0 * m)


def rademacher_mi_bound(
    rad_hat: float, m: int, b: float, I_bits: float, delta: float
) -> float:
    """2 rad_hat + (6/sqrt(m)) sqrt((a1^2 b / delta)(I + (delta/2) ln(4/delta)))."""
    if m < 1 or b < 0 or rad_hat < 0:
        raise ValueError("need m >= 1, b >= 0, rad_hat >= 0")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0,1)")
    I_nats = bits_to_nats(I_bits)
    return 2.0 * rad_hat + (6.0 / math.sqrt(m)) * math.sqrt(
        (A1SQ * b / delta) * (I_nats + (delta / 2.0) * math.log(4.0 / delta))
    )


def massart(N: int, b: float, m: int) -> float:
    """Finite-class Rademacher cap b sqrt(2 ln N) / sqrt(m)."""
    if N < 1 or m < 1 or b < 0:
        raise ValueError("need N >= 1, m >= 1, b >= 0")
    return b * math.sqrt(2.0 * math.log(N)) / math.sqrt(m)


# ---- discretized plug-in mutual information ---------------------------------


def plugin_mi(xs, ws, bins: int = 64) -> float:
    """Plug-in I(X;W) in bits with X quantized to `bins` bins over its range.

    ws must be small-cardinality discrete labels. Biased like any plug-in
    estimate; used for diagnostics on scalar summaries of a process.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ws = np.asarray(ws).ravel()
    if xs.size != ws.size or xs.size == 0:
        raise ValueError("xs and ws must be nonempty and equal length")
    lo, hi = float(xs.min()), float(xs.max())
    if hi == lo:
        xq = np.zeros(xs.size, dtype=int)
    else:
        xq = np.minimum((bins * (xs - lo) / (hi - lo)).astype(int), bins - 1)
    _, winv = np.unique(ws, return_inverse=True)
    joint = np.zeros((bins, int(winv.max()) + 1))
    np.add.at(joint, (xq, winv), 1.0)
    n = joint.sum()
    px = joint.sum(axis=1) / n
    pw = joint.sum(axis=0) / n
    pj = joint / n
    mask = pj > 0
    return float(
        (pj[mask] * np.log2(pj[mask] / np.outer(px, pw)[mask])).sum()
    )


# ---- Monte-Carlo verifiers ---------------------------------------------------

LEMMA1_SELECTORS = ("independent", "argmax", "noisy_argmax")


@dataclass
class Lemma1Report:
    selector: str
    family_size: int
    trials: int
    delta: float
    c_subg: float
    mi_bits: float
    mi_kind: str
    rhs: float
    violation_freq: float
    mean_abs_xw: float
    max_abs_xw: float

    @property
    def passed(self) -> bool:
        return self.violation_freq <= self.delta


def verify_lemma1(
    family_size: int,
    selector: str,
    trials: int,
    delta: float,
    c_subg: float = 1.0,
    seed: int = 0,
    noise_scale: float = 1.0,
) -> Lemma1Report:
    """Empirically check P(|X_W| >= lemma1_rhs) <= delta.

    Each trial draws the process as family_size i.i.d. centered Gaussians of
    variance C/2 (hence C-subgaussian under the 2 exp(-t^2/C) convention) and
    applies the selector. Mutual information fed to the RHS: structurally 0
    for the independent selector, the plug-in entropy of W for the
    deterministic argmax selector (I(W;X) = H(W) there), and the same plug-in
    H(W) as an upper bound for noisy_argmax (a larger I only loosens the RHS,
    so the check remains valid).
    """
    if selector not in LEMMA1_SELECTORS:
        raise ValueError(f"selector must be one of {LEMMA1_SELECTORS}")
    if family_size < 1 or trials < 1:
        raise ValueError("family_size and trials must be >= 1")
    sigma = math.sqrt(c_subg / 2.0)
    rng = np.random.default_rng(derive_seed(seed, "lemma1", selector))
    picks = np.empty(trials, dtype=int)
    x_w = np.empty(trials)
    for t in range(trials):
        X = rng.normal(0.0, sigma, size=family_size)
        if selector == "independent":
            w = int(rng.integers(family_size))
        elif selector == "argmax":
            w = int(np.argmax(X))
        else:
            w = int(np.argmax(X + rng.normal(0.0, noise_scale * sigma, family_size)))
        picks[t] = w
        x_w[t] = X[w]
    if selector == "independent":
        mi_bits, mi_kind = 0.0, "exact zero (selector independent of process)"
    else:
        counts = np.bincount(picks, minlength=family_size)
        mi_bits = plugin_entropy(counts[counts > 0])
        mi_kind = (
            "plug-in H(W) (= I for deterministic selector)"
            if selector == "argmax"
            else "plug-in H(W), upper bound on I"
        )
    rhs = lemma1_rhs(c_subg, bits_to_nats(mi_bits), delta)
    viol = float(np.mean(np.abs(x_w) >= rhs))
    return Lemma1Report(
        selector=selector,
        family_size=family_size,
        trials=trials,
        delta=delta,
        c_subg=c_subg,
        mi_bits=mi_bits,
        mi_kind=mi_kind,
        rhs=rhs,
        violation_freq=viol,
        mean_abs_xw=float(np.abs(x_w).mean()),
        max_abs_xw=float(np.abs(x_w).max()),
    )


GENBOUND_SELECTORS = ("adversarial", "independent", "first")


@dataclass
class GenboundsReport:
    classes: int
    selector: str
    trials: int
    delta: float
    m: int
    d_vc: int
    mi_bits: float
    vc_bound: float
    mean_rad_bound: float
    mean_sup_gap: float
    max_sup_gap: float
    violation_freq_vc: float
    violation_freq_rad: float

    @property
    def passed(self) -> bool:
        return (
            self.violation_freq_vc <= self.delta
            and self.violation_freq_rad <= self.delta
        )


def verify_genbounds(
    classes: int,
    selector: str,
    trials: int,
    delta: float,
    m: int = 100,
    hyps_per_class: int = 16,
    domain_size: int = 16,
    noise_rate: float = 0.25,
    rad_draws: int = 128,
    seed: int = 0,
) -> GenboundsReport:
    """Brute-force check of the selected-class deviation bounds.

    Hypotheses are random binary functions on a uniform finite domain, so
    population risks are exact sums; the generalization gap per class is the
    brute-force sup over its hypotheses; the adversarial selector picks the
    class with the worst gap. VC dimension is capped by log2(class size).
    """
    if selector not in GENBOUND_SELECTORS:
        raise ValueError(f"selector must be one of {GENBOUND_SELECTORS}")
    if classes < 1 or trials < 1:
        raise ValueError("classes and trials must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, "genbounds", selector, classes))
    V = domain_size
    truth = rng.integers(0, 2, size=V).astype(float)
    hyps = rng.integers(0, 2, size=(classes, hyps_per_class, V)).astype(float)
    # exact population 0-1 risk under uniform inputs and label flips
    mismatch = (hyps != truth[None, None, :]).mean(axis=2)
    pop_risk = noise_rate + (1.0 - 2.0 * noise_rate) * mismatch  # (classes, N)

    d_vc = int(math.log2(hyps_per_class))
    picks = np.empty(trials, dtype=int)
    sup_gap = np.empty(trials)
    rad_hat = np.empty(trials)
    for t in range(trials):
        xs = rng.integers(0, V, size=m)
        ys = np.where(rng.random(m) < noise_rate, 1.0 - truth[xs], truth[xs])
        c1 = np.bincount(xs, weights=ys, minlength=V)
        c0_ = np.bincount(xs, weights=1.0 - ys, minlength=V)
        emp = (hyps @ c0_ + (1.0 - hyps) @ c1) / m  # (classes, N)
        gaps = np.abs(pop_risk - emp).max(axis=1)  # sup over class
        if selector == "adversarial":
            w = int(np.argmax(gaps))
        elif selector == "independent":
            w = int(rng.integers(classes))
        else:
            w = 0
        picks[t] = w
        sup_gap[t] = gaps[w]
        hx = hyps[w][:, xs]  # (N, m) selected class on the sample
        sigma = rng.choice([-1.0, 1.0], size=(m, rad_draws))
        rad_hat[t] = float((hx @ sigma).max(axis=0).mean()) / m
    if selector == "independent":
        mi_bits = 0.0
    else:
        counts = np.bincount(picks, minlength=classes)
        mi_bits = plugin_entropy(counts[counts > 0])
    vcb = vc_mi_bound(d_vc, m, mi_bits, delta)
    rad_bounds = np.array(
        [rademacher_mi_bound(r, m, 1.0, mi_bits, delta) for r in rad_hat]
    )
    return GenboundsReport(
        classes=classes,
        selector=selector,
        trials=trials,
        delta=delta,
        m=m,
        d_vc=d_vc,
        mi_bits=mi_bits,
        vc_bound=vcb,
        mean_rad_bound=float(rad_bounds.mean()),
        mean_sup_gap=float(sup_gap.mean()),
        max_sup_gap=float(sup_gap.max()),
        violation_freq_vc=float(np.mean(sup_gap > vcb)),
        violation_freq_rad=float(np.mean(sup_gap > rad_bounds)),
    )


__all__ = [
    "A1SQ",
    "bits_to_nats",
    "nats_to_bits",
    "BoundInputs",
    "c0",
    "peff_finite",
    "peff_continuous",
    "LipschitzBound",
    "lipschitz_lower_bound",
    "EntropyBound",
    "log2_binomial",
    "entropy_upper_bound",
    "peff_ratio",
    "lemma1_rhs",
    "vc_mi_bound",
    "rademacher_mi_bound",
    "massart",
    "plugin_mi",
    "Lemma1Report",
    "verify_lemma1",
    "GenboundsReport",
    "verify_genbounds",
]
