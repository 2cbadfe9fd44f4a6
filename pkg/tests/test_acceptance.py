"""End-to-end acceptance suite: every check drives a full measurement
protocol at its stated scale and tolerance.

Each test finishes by printing one `[acceptance] ...: PASS/FAIL` line with
the measured numbers (run `-s` to stream them live; pytest otherwise
captures them, replaying the line for failures). The expensive sweeps (50-seed
capacity grid, 25-seed correlation traces, 32k-sample toy mask entropy) are
module-scoped fixtures shared between the tests that need them. Expect on
the order of 1.5 hours on a single core for the whole module; everything
else in tests/ stays fast.
"""

import math
import sys
import time
from collections import Counter

import numpy as np
import pytest

from sparsecap import cli, data, harness, nn, pruning, saturator, theory
from sparsecap.rng import derive_seed

MASTER = 2024

# capacity grid (criteria 2 and 3)
MEMCAP_SEEDS = 50
MEMCAP_NET = (30, 24, 24, 1)
MEMCAP_KEEPS = (0.2, 0.1, 0.05)
MEMCAP_METHODS = ("random", "magnitude_after", "snip", "grasp", "synflow", "imp")

# correlation traces (criteria 4 and 5)
TRACE_SEEDS = 25
NOISE_SEEDS = 25
NOISE_SCALE = 10.0  # gradient-noise std; ~9000x the init gradient RMS here

# toy mask entropy (criterion 6)
TOY_HEADLINE = 32_000
TOY_PER_INIT = 1_000
TOY_INITS = (0, 1, 2, 3, 4)
TOY_KEEPS = (0.5, 0.4)
TOY_METHODS = ("snip", "grasp", "magnitude_after", "imp")

SAT_SEEDS = 40


def _say(msg):
    print(msg, file=sys.__stdout__, flush=True)


def _announce(name, ok, detail):
    _say(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, f"{name}: {detail}"


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std() / math.sqrt(len(v)))


# ---- 1. gradient / HVP correctness -------------------------------------------


def _random_case(rng, loss):
    """Net + batch with every hidden pre-activation clear of the ReLU kink
    (central differences straddle the kink otherwise)."""
    for _ in range(200):
        depth = int(rng.integers(1, 4))
        spec = (int(rng.integers(2, 5)),) + tuple(
            int(rng.integers(2, 6)) for _ in range(depth)
        ) + ((1,) if loss == "bce" else (int(rng.integers(1, 3)),))
        net = nn.MaskedMlp(spec, seed=int(rng.integers(2**32)), bias=bool(rng.integers(2)))
        if rng.random() < 0.5:
            pruning.prune_random(net, 0.7, seed=int(rng.integers(2**32))).apply_to(net)
        n = int(rng.integers(2, 6))
        X = rng.normal(size=(n, spec[0]))
        y = (rng.choice([-1.0, 1.0], size=(n, spec[-1])) if spec[-1] > 1
             else rng.choice([-1.0, 1.0], size=n))
        _, pre = net._forward_cache(X)
        if len(pre) == 1 or all(np.abs(a).min() > 1e-3 for a in pre[:-1]):
            return net, X, y
    raise AssertionError("no well-conditioned draw in 200 tries")


def test_01_gradient_and_hvp_match_finite_differences():
    rng = np.random.default_rng(derive_seed(MASTER, "fd"))
    h = 1e-6
    worst_g, worst_h = 0.0, 0.0
    t0 = time.time()
    for trial in range(100):
        loss = ("mse", "bce")[trial % 2]
        net, X, y = _random_case(rng, loss)
        theta = net.get_params()

        g = nn.gradient(net, X, y, loss)
        fd = np.zeros_like(theta)
        for i in range(theta.size):
            for sgn in (1.0, -1.0):
                t = theta.copy()
                t[i] += sgn * h
                net.set_params(t)
                fd[i] += sgn * nn.mean_loss(net, X, y, loss)
        fd /= 2 * h
        net.set_params(theta)
        worst_g = max(worst_g, np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-12))

        v = rng.normal(size=theta.size)
        hv = nn.hvp(net, X, y, loss, v)
        net.set_params(theta + h * v)
        gp = nn.gradient(net, X, y, loss)
        net.set_params(theta - h * v)
        gm = nn.gradient(net, X, y, loss)
        net.set_params(theta)
        fd_hv = (gp - gm) / (2 * h)
        denom = max(float(np.abs(fd_hv).max()), 1e-12)
        worst_h = max(worst_h, float(np.abs(hv - fd_hv).max()) / denom)
    dt = time.time() - t0
    ok = worst_g < 1e-4 and worst_h < 1e-3 and dt < 60.0
    _announce(
        "01 gradient/hvp vs finite differences (100 nets)",
        ok,
        f"worst grad rel {worst_g:.2e} < 1e-4, worst hvp rel {worst_h:.2e} < 1e-3, {dt:.1f}s < 60s",
    )


# ---- 2/3. memorization-capacity grid ------------------------------------------


@pytest.fixture(scope="module")
def memcap_sweep():
    cfg = harness.default_memcap_config()
    acc = {("dense", 1.0): []}
    for m in MEMCAP_METHODS:
        for k in MEMCAP_KEEPS:
            acc[(m, k)] = []
    t0 = time.time()
    for s in range(MEMCAP_SEEDS):
        ws = derive_seed(MASTER, "memcap", s)
        ds = data.gaussian_random_labels(30, 30, seed=derive_seed(ws, "data"))
        res = harness.memorization_capacity(MEMCAP_NET, ds, "random", 1.0, seed=ws, train_cfg=cfg)
        acc[("dense", 1.0)].append(res.fraction)
        for k in MEMCAP_KEEPS:
            for m in MEMCAP_METHODS:
                res = harness.memorization_capacity(MEMCAP_NET, ds, m, k, seed=ws, train_cfg=cfg)
                acc[(m, k)].append(res.fraction)
        if (s + 1) % 10 == 0:
            _say(f"[acceptance] capacity grid seed {s + 1}/{MEMCAP_SEEDS} t={time.time() - t0:.0f}s")
    return acc


def test_02_capacity_ordering_with_pooled_error_gaps(memcap_sweep):
    stats = {key: _mean_se(vals) for key, vals in memcap_sweep.items()}
    ok = True
    details = []
    for k in MEMCAP_KEEPS:
        imp_m, _ = stats[("imp", k)]
        mag_m, mag_se = stats[("magnitude_after", k)]
        others = {m: stats[(m, k)] for m in ("snip", "grasp", "synflow", "random")}
        best = max(others, key=lambda m: others[m][0])
        best_m, best_se = others[best]
        ok &= imp_m >= mag_m > best_m
        line = f"keep {k}: imp {imp_m:.3f} >= mag {mag_m:.3f} > {best} {best_m:.3f}"
        if k <= 0.1:
            gap = mag_m - best_m
            two_se = 2.0 * math.sqrt(mag_se**2 + best_se**2)
            ok &= gap > two_se
            line += f" (gap {gap:.3f} > 2se {two_se:.3f})"
        details.append(line)
    _announce(f"02 capacity ordering ({MEMCAP_SEEDS} seeds)", ok, "; ".join(details))


def test_03_dense_network_memorizes(memcap_sweep):
    mean, _ = _mean_se(memcap_sweep[("dense", 1.0)])
    _announce(
        f"03 dense memorization ({MEMCAP_SEEDS} seeds)",
        mean >= 0.99,
        f"keep=1 mean memorized fraction {mean:.4f} >= 0.99",
    )


# ---- 4/5. noise-correlation traces ---------------------------------------------


@pytest.fixture(scope="module")
def trace_sweep():
    per_seed = []
    t0 = time.time()
    for s in range(TRACE_SEEDS):
        recs = harness.imp_correlation_trace(
            harness.TraceSpec(seed=derive_seed(MASTER, "trace", s), eval_every=0)
        )
        starts = [r.value for r in recs if r.metric == "corr_round_start"]
        ends = [r.value for r in recs if r.metric == "corr_round_end"]
        per_seed.append((starts, ends))
        if (s + 1) % 5 == 0:
            _say(f"[acceptance] trace seed {s + 1}/{TRACE_SEEDS} t={time.time() - t0:.0f}s")
    return per_seed


def test_04_pruning_rounds_rebuild_then_lose_noise_correlation(trace_sweep):
    # legs 2..7 start right after pruning rounds 1..6
    rises = [
        ends[leg] > starts[leg]
        for starts, ends in trace_sweep
        for leg in range(1, 7)
    ]
    rise_frac = float(np.mean(rises))

    mean_ends = np.asarray([ends for _, ends in trace_sweep]).mean(axis=0)
    late = mean_ends[9:]  # keep <= 0.8^9 ~ 0.134 from leg 10 on
    slope = float(np.polyfit(np.arange(late.size), late, 1)[0])
    ok = rise_frac >= 0.8 and slope < 0 and late[-1] < late[0]
    _announce(
        f"04 iterative-pruning sawtooth ({TRACE_SEEDS} seeds)",
        ok,
        f"within-round rise in {rise_frac:.0%} of cells (>= 80%), "
        f"late-round end-corr slope {slope:+.4f} < 0 ({late[0]:.3f} -> {late[-1]:.3f})",
    )


def test_05_large_gradient_noise_erases_noise_correlation():
    # scale floor: 10x the typical (init) gradient RMS of this protocol
    rms = []
    for s in range(5):
        seed = derive_seed(MASTER, "noise", s)
        ds, _ = data.student_teacher(1000, 50, (50, 50, 50, 1), 1.0, derive_seed(seed, "data"))
        net = nn.MaskedMlp((50, 100, 100, 100, 100, 1), derive_seed(seed, "init"))
        g = nn.gradient(net, ds.X, ds.y, "mse")
        rms.append(float(np.sqrt((g**2).mean())))
    floor_ok = NOISE_SCALE >= 10.0 * max(rms)

    ends = []
    for s in range(NOISE_SEEDS):
        recs = harness.imp_correlation_trace(
            harness.TraceSpec(
                seed=derive_seed(MASTER, "noise", s),
                eval_every=0,
                prune=False,
                gradient_noise_scale=NOISE_SCALE,
            )
        )
        ends.append([r.value for r in recs if r.metric == "corr_round_end"][-1])
    mean, se = _mean_se(ends)
    ok = floor_ok and abs(mean) <= 2.0 * se
    _announce(
        f"05 gradient-noise ablation ({NOISE_SEEDS} seeds)",
        ok,
        f"scale {NOISE_SCALE} >= 10x grad RMS {max(rms):.4f}; "
        f"end corr {mean:+.5f} within 2se {2 * se:.5f} of 0",
    )


# ---- 6. exact toy mask entropy --------------------------------------------------


@pytest.fixture(scope="module")
def toy_headline():
    keys = {}
    t0 = time.time()
    for method in ("synflow",) + TOY_METHODS:
        keys[method] = harness.toy_mask_samples(
            method, 0.5, TOY_HEADLINE, fixed_init_seed=TOY_INITS[0], loss="mse"
        )
        _say(f"[acceptance] toy headline {method} done t={time.time() - t0:.0f}s")
    return keys


@pytest.fixture(scope="module")
def toy_entropies(toy_headline):
    ent = {}
    t0 = time.time()
    for init in TOY_INITS:
        for keep in TOY_KEEPS:
            for method in TOY_METHODS:
                if init == TOY_INITS[0] and keep == 0.5:
                    keys = toy_headline[method]
                else:
                    keys = harness.toy_mask_samples(
                        method, keep, TOY_PER_INIT, fixed_init_seed=init, loss="mse"
                    )
                ent[(init, keep, method)] = harness.plugin_entropy(Counter(keys))
        _say(f"[acceptance] toy entropies init {init} done t={time.time() - t0:.0f}s")
    return ent


def test_06_toy_mask_entropy(toy_headline, toy_entropies):
    h_synflow = harness.plugin_entropy(Counter(toy_headline["synflow"]))

    gaps = {}
    for method, keys in toy_headline.items():
        h_head, h_all, _ = harness.entropy_stability(keys, head=1000)
        gaps[method] = abs(h_all - h_head)
    worst_gap = max(gaps.values())

    order_ok = True
    order_lines = []
    for keep in TOY_KEEPS:
        means = {
            m: float(np.mean([toy_entropies[(i, keep, m)] for i in TOY_INITS]))
            for m in TOY_METHODS
        }
        lo = min(means["imp"], means["magnitude_after"])
        hi = max(means["snip"], means["grasp"])
        order_ok &= lo > hi
        order_lines.append(
            f"keep {keep}: imp {means['imp']:.2f}/mag {means['magnitude_after']:.2f}"
            f" > snip {means['snip']:.2f}/grasp {means['grasp']:.2f}"
        )
    ok = h_synflow == 0.0 and worst_gap < 0.05 and order_ok
    _announce(
        f"06 toy mask entropy ({TOY_HEADLINE} datasets, {len(TOY_INITS)} inits)",
        ok,
        f"synflow H = {h_synflow} (exact 0); worst 1k-vs-32k gap {worst_gap:.3f} < 0.05 bits; "
        + "; ".join(order_lines),
    )


# ---- 7. closed-form bounds vs duplicate arithmetic ------------------------------


def test_07_bound_formulas_match_independent_arithmetic():
    LN2 = math.log(2.0)
    rng = np.random.default_rng(derive_seed(MASTER, "bounds"))

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300)

    worst = {}
    for _ in range(1000):
        b = theory.BoundInputs(
            n=int(rng.integers(1, 10**6)),
            d=int(rng.integers(1, 10**4)),
            eps=float(rng.uniform(1e-6, 0.999)),
            delta=float(rng.uniform(1e-6, 1 - 1e-6)),
            sigma2=float(np.exp(rng.uniform(-3, 3))),
            c=float(np.exp(rng.uniform(-6, 6))),
            k=int(rng.integers(1, 10**3)),
            L=float(np.exp(rng.uniform(-6, 6))),
            W_diam=float(np.exp(rng.uniform(-3, 3))),
            J=float(np.exp(rng.uniform(-3, 3))),
            I_bits=float(rng.uniform(0, 1e3)),
            gamma=float(rng.uniform(0, 0.999)),
            p=int(rng.integers(1, 10**4)),
        )

        def track(name, got, alt):
            worst[name] = max(worst.get(name, 0.0), rel(got, alt))

        track("c0", theory.c0(b),
              math.exp(math.log(144.0) + math.log(b.c) + 2 * math.log(b.L)
                       - math.log(b.n) - math.log(b.d)))

        i_bits, extra = float(rng.uniform(0, 1e4)), float(rng.uniform(0, 1e6))
        track("peff_finite", theory.peff_finite(i_bits, extra), math.fsum((i_bits, extra)))

        l1 = float(rng.uniform(0, 1e4))
        track("peff_continuous",
              theory.peff_continuous(b.I_bits, l1, b.W_diam, b.J, b.eps),
              b.I_bits + l1 * math.log1p(60.0 * b.W_diam * b.J / b.eps) / LN2)

        peff = float(rng.uniform(1e-3, 1e6))
        lip = theory.lipschitz_lower_bound(b, peff)
        denom = peff + b.delta * math.log(4.0 / b.delta) / 2.0
        track("lipschitz", lip.value,
              b.eps * math.sqrt(b.n * b.d * b.delta / denom) / (1152.0 * math.sqrt(b.c)))

        p = int(rng.integers(1, 500))
        gamma = float(rng.uniform(0, 1))
        ent = theory.entropy_upper_bound(p, gamma)
        kk = round(gamma * p)
        if kk not in (0, p):
            track("entropy_exact", ent.exact_bits, math.log2(math.comb(p, kk)))
        g = gamma
        alt_asym = 0.0 if g in (0.0, 1.0) else (
            -p * ((1 - g) * math.log(1 - g) + g * math.log(g)) / LN2
        )
        track("entropy_asymptotic", ent.asymptotic_bits, alt_asym)

        i_nats = float(rng.uniform(0, 1e3))
        track("lemma1_rhs", theory.lemma1_rhs(b.c, i_nats, b.delta),
              math.sqrt(72.0 * (b.c * i_nats / b.delta
                                + b.c * (math.log(2.0) - math.log(b.delta)))))

        d_vc = int(rng.integers(1, 50))
        m = int(rng.integers(d_vc + 2, 10**6))
        track("vc_mi_bound", theory.vc_mi_bound(d_vc, m, b.I_bits, b.delta),
              (4.0 + math.sqrt(d_vc * (LN2 + 1.0 + math.log(m) - math.log(d_vc)))
               + math.sqrt(4.0 * 72.0 * (b.I_bits * LN2
                                         + b.delta * math.log(2.0 / b.delta)) / b.delta))
              / math.sqrt(2.0 * m))

        r = float(rng.uniform(0, 10))
        track("rademacher_mi_bound",
              theory.rademacher_mi_bound(r, m, b.W_diam, b.I_bits, b.delta),
              2.0 * r + 6.0 * math.sqrt(
                  72.0 * b.W_diam * (b.I_bits * LN2 + b.delta * math.log(4.0 / b.delta) / 2.0)
                  / (b.delta * m)))

        N = int(rng.integers(1, 10**9))
        track("massart", theory.massart(N, b.W_diam, m),
              b.W_diam * math.sqrt(2.0 * math.log(N) / m))

        track("peff_ratio", theory.peff_ratio(b.gamma), -math.log1p(-b.gamma) / LN2)

    bad = {name: w for name, w in worst.items() if w >= 1e-12}
    _announce(
        "07 bound formulas vs duplicate arithmetic (1000 inputs each)",
        not bad,
        f"{len(worst)} formulas, worst rel err {max(worst.values()):.2e} < 1e-12"
        + (f"; failing: {bad}" if bad else ""),
    )


# ---- 8/9. Monte-Carlo bound verification ----------------------------------------


def test_08_subgaussian_maxima_bound_monte_carlo():
    ok = True
    details = []
    for delta in (0.05, 0.1):
        for selector in ("independent", "argmax"):
            rep = theory.verify_lemma1(
                1024, selector, trials=10_000, delta=delta,
                seed=derive_seed(MASTER, "lemma1", selector, str(delta)),
            )
            ok &= rep.violation_freq <= delta
            details.append(f"{selector}@{delta}: {rep.violation_freq:.4f}")
    _announce("08 correlation bound Monte-Carlo (1e4 trials)", ok,
              "violation freq " + ", ".join(details) + " (all <= delta)")


def test_09_generalization_bounds_monte_carlo():
    delta = 0.05
    rep = theory.verify_genbounds(
        64, "adversarial", trials=10_000, delta=delta,
        seed=derive_seed(MASTER, "genbounds"),
    )
    ok = rep.violation_freq_vc <= delta and rep.violation_freq_rad <= delta and rep.passed
    _announce(
        "09 generalization bounds Monte-Carlo (64 classes, 1e4 trials)",
        ok,
        f"vc violations {rep.violation_freq_vc:.4f}, rademacher {rep.violation_freq_rad:.4f} <= {delta}",
    )


# ---- 10. planted saturating construction ----------------------------------------


def test_10_saturating_construction():
    passed = 0
    worst_interp = 0.0
    for s in range(SAT_SEEDS):
        inst = saturator.build_saturating(20, 400, 2000, seed=derive_seed(MASTER, "sat", s))
        rep = saturator.verify_saturating(inst)
        passed += int(rep.passed)
        worst_interp = max(worst_interp, rep.checks["interpolation"]["worst"])

    lips = []
    for n in (5, 10, 20):
        inst = saturator.build_saturating(n, 400, 2000, seed=derive_seed(MASTER, "sat-lip"))
        lips.append(saturator.estimate_lipschitz(inst))
    lip_ratio = max(lips) / min(lips)

    inst = saturator.build_saturating(20, 400, 2000, seed=derive_seed(MASTER, "sat", 0))
    acct = saturator.saturating_mi_account(inst)
    cap = acct["entropy_cap_bits"]
    cap_exact = math.log2(math.comb(2000, 20))
    cap_ok = abs(cap - cap_exact) / cap_exact < 1e-12
    sparse_ok = acct["mask_l1"] == 20 and 100 * acct["mask_l1"] <= acct["nd"]

    ok = (passed >= math.ceil(0.95 * SAT_SEEDS) and worst_interp < 1e-9
          and lip_ratio < 2.0 and cap_ok and sparse_ok)
    _announce(
        f"10 saturating construction ({SAT_SEEDS} seeds)",
        ok,
        f"{passed}/{SAT_SEEDS} pass (>= 95%), interp residual {worst_interp:.1e} < 1e-9, "
        f"lipschitz ratio {lip_ratio:.2f} < 2 over n in (5,10,20), "
        f"mask cap {cap:.6f} bits = log2 C(2000,20) with ||m||_1 {acct['mask_l1']} << nd {acct['nd']}",
    )


# ---- 11. byte-identical reruns ---------------------------------------------------


def _csv_body(path):
    with open(path, "rb") as fh:
        return b"".join(line for line in fh if not line.startswith(b"#"))


def test_11_reruns_are_byte_identical(tmp_path):
    runs = {
        "memcap": [
            "memcap", "--methods", "magnitude_after,snip", "--keeps", "0.2,0.1",
            "--num-seeds", "2", "--master-seed", str(MASTER), "--workers", "1",
            "--formats", "csv",
        ],
        "mi-toy": [
            "mi-toy", "--methods", "snip,grasp", "--num-datasets", "200",
            "--head", "100", "--num-seeds", "2", "--master-seed", str(MASTER),
            "--workers", "1", "--formats", "csv",
        ],
    }
    ok = True
    details = []
    for name, argv in runs.items():
        bodies = []
        for rep in ("a", "b"):
            out = tmp_path / f"{name}-{rep}"
            out.mkdir()
            code = cli.main(argv + ["--out", str(out)])
            assert code == 0, f"{name} run exited {code}"
            (csv_path,) = sorted(out.glob("*.csv"))
            bodies.append(_csv_body(csv_path))
        same = bodies[0] == bodies[1]
        ok &= same
        details.append(f"{name}: {len(bodies[0])} bytes {'identical' if same else 'DIFFER'}")
    _announce("11 rerun determinism (csv bodies)", ok, "; ".join(details))
