"""Mask derivation: random, magnitude, gradient/curvature/flow scores, and
iterative magnitude pruning with rewinding.

Every one-shot method is a scoring function composed with global_rank_prune;
ties always break toward the lower flat index so runs are deterministic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from .rng import make_rng

METHODS = (
    "random",
    "magnitude_init",
    "magnitude_after",
    "snip",
    "grasp",
    "synflow",
    "imp",
)


@dataclass(eq=False)
class Mask:
    """Flat binary vector over prunable weights plus the per-layer layout."""

    bits: np.ndarray
    layout: tuple

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        total = sum(int(np.prod(shape)) for _, shape in self.layout)
        if self.bits.size != total:
            raise ValueError(f"mask has {self.bits.size} bits, layout expects {total}")

    @classmethod
    def ones(cls, layout) -> "Mask":
        total = sum(int(np.prod(shape)) for _, shape in layout)
        return cls(np.ones(total, dtype=np.uint8), tuple(layout))

    @classmethod
    def from_layers(cls, layers) -> "Mask":
        layout = []
        off = 0
        for m in layers:
            layout.append((off, np.asarray(m).shape))
            off += np.asarray(m).size
        bits = np.concatenate([np.asarray(m, dtype=np.uint8).ravel() for m in layers])
        return cls(bits, tuple(layout))

    @classmethod
    def from_net(cls, net: nn.MaskedMlp) -> "Mask":
        return cls.from_layers(net.masks)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def as_layers(self):
        return [
            self.bits[off : off + int(np.prod(shape))].reshape(shape)
            for off, shape in self.layout
        ]

    def per_layer_counts(self):
        return [int(m.sum()) for m in self.as_layers()]

    def collapsed_layers(self):
        return [l for l, c in enumerate(self.per_layer_counts()) if c == 0]

    def apply_to(self, net: nn.MaskedMlp) -> None:
        net.set_layer_masks(self.as_layers())

    def key(self) -> bytes:
        return self.bits.tobytes()


def keep_count(keep: float, p: int) -> int:
    """ceil(keep * p) guarded against float slop (0.8*20 -> 16, not 17)."""
    return min(p, max(1, math.ceil(keep * p - 1e-9)))


def _top_k_mask(scores: np.ndarray, k: int, layout) -> Mask:
    order = np.argsort(-scores, kind="stable")  # stable: lower index wins ties
    bits = np.zeros(scores.size, dtype=np.uint8)
    bits[order[:k]] = 1
    return Mask(bits, tuple(layout))


def global_rank_prune(scores: np.ndarray, keep: float, layout=None) -> Mask:
    """Keep the ceil(keep*p) highest-scoring weights, lower index on ties."""
    scores = np.asarray(scores, dtype=float).ravel()
    if not 0 < keep <= 1:
        raise ValueError(f"keep must be in (0,1], got {keep}")
    if layout is None:
        layout = ((0, (scores.size,)),)
    return _top_k_mask(scores, keep_count(keep, scores.size), layout)


def _warn_zero_ties(scores: np.ndarray, k: int, method: str) -> None:
    if int(np.count_nonzero(scores)) < k:
        warnings.warn(
            f"{method}: fewer than {k} nonzero scores; "
            "keep set includes zero-score weights via index tie-break",
            RuntimeWarning,
            stacklevel=3,
        )


def prune_random(net: nn.MaskedMlp, keep: float, seed: int) -> Mask:
    """Uniformly random keep-set of size ceil(keep*p)."""
    if not 0 < keep <= 1:
        raise ValueError(f"keep must be in (0,1], got {keep}")
    p = net.num_weights
    k = keep_count(keep, p)
    rng = make_rng(seed, "prune-random")
    bits = np.zeros(p, dtype=np.uint8)
    bits[rng.choice(p, size=k, replace=False)] = 1
    return Mask(bits, net.weight_layout())


def prune_magnitude(net: nn.MaskedMlp, keep: float, when: str = "at_init") -> Mask:
    """score = |w| on the net's current weights; `when` only labels the stage
    (the caller decides whether the net has been trained)."""
    if when not in ("at_init", "after_training"):
        raise ValueError(f"when must be at_init or after_training, got {when!r}")
    scores = np.abs(net.weight_vector() * net.mask_vector())
    return global_rank_prune(scores, keep, net.weight_layout())


def prune_snip(net: nn.MaskedMlp, data, keep: float, loss: str = "mse") -> Mask:
    """score = |w * dL/dw| from one full-batch gradient at the current weights."""
    X, y = nn._data_arrays(data)
    g = nn.gradient(net, X, y, loss)
    gw = np.concatenate([wv.ravel() for wv, _ in net.split_param_vector(g)])
    scores = np.abs(net.weight_vector() * gw)
    k = keep_count(keep, scores.size)
    _warn_zero_ties(scores, k, "snip")
    return global_rank_prune(scores, keep, net.weight_layout())


def prune_grasp(net: nn.MaskedMlp, data, keep: float, loss: str = "mse") -> Mask:
    """score = -w * (H g); highest scores kept (gradient-flow preserving)."""
    X, y = nn._data_arrays(data)
    g = nn.gradient(net, X, y, loss)
    h = nn.hvp(net, X, y, loss, g)
    hw = np.concatenate([wv.ravel() for wv, _ in net.split_param_vector(h)])
    scores = -net.weight_vector() * hw
    k = keep_count(keep, scores.size)
    _warn_zero_ties(scores, k, "grasp")
    return global_rank_prune(scores, keep, net.weight_layout())


def _abs_output_weight_grads(net: nn.MaskedMlp):
    """d(sum of outputs)/dW on the |params| version of the net, all-ones input.

    Returns (per-layer gradients, per-layer |w| matrices). The net itself is
    not modified.
    """
    absW = [np.abs(w) * m for w, m in zip(net.weights, net.masks)]
    absb = [np.abs(b) for b in net.biases]
    X = np.ones((1, net.layer_dims[0]))
    hs = [X]
    pre = []
    h = X
    last = net.num_layers - 1
    for l in range(net.num_layers):
        a = h @ absW[l]
        if net.bias:
            a = a + absb[l]
        pre.append(a)
        h = a if l == last else np.maximum(a, 0.0)
        hs.append(h)
    delta = np.ones_like(hs[-1])
    grads = [None] * net.num_layers
    for l in range(net.num_layers - 1, -1, -1):
        grads[l] = (hs[l].T @ delta) * net.masks[l]
        if l > 0:
            delta = (delta @ absW[l].T) * (pre[l - 1] > 0)
    return grads, absW


def prune_synflow(net: nn.MaskedMlp, keep: float, iterations: int = 100) -> Mask:
    """Data-agnostic iterative flow pruning with the exponential schedule
    keep^(r/iterations); takes no dataset by contract."""
    if not 0 < keep <= 1:
        raise ValueError(f"keep must be in (0,1], got {keep}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    work = net.clone()
    layout = net.weight_layout()
    p = net.num_weights
    mask = Mask.from_net(net)
    for r in range(1, iterations + 1):
        work.set_layer_masks(mask.as_layers())
        grads, absW = _abs_output_weight_grads(work)
        scores = np.concatenate(
            [(aw * g).ravel() for aw, g in zip(absW, grads)]
        )  # |w| and dR/dw are both >= 0 here
        scores[mask.bits == 0] = -1.0  # already-pruned weights never resurface
        keep_r = keep ** (r / iterations)
        mask = _top_k_mask(scores, keep_count(keep_r, p), layout)
    return mask


@dataclass
class ImpSpec:
    """Iterative magnitude pruning schedule.

    Either rounds or final_keep must be given; with final_keep the round
    count is ceil(log(final_keep)/log(1-drop_rate)) and the last round's
    target is clamped to ceil(final_keep * p).
    """

    train_cfg: nn.TrainConfig
    drop_rate: float = 0.2
    rounds: Optional[int] = None
    final_keep: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0 < self.drop_rate < 1:
            raise ValueError("drop_rate must be in (0,1)")
        if self.rounds is None and self.final_keep is None:
            raise ValueError("give rounds or final_keep")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.final_keep is not None and not 0 < self.final_keep <= 1:
            raise ValueError("final_keep must be in (0,1]")

    def num_rounds(self) -> int:
        if self.rounds is not None:
            return self.rounds
        if self.final_keep >= 1:
            return 0
        return math.ceil(
            math.log(self.final_keep) / math.log(1.0 - self.drop_rate) - 1e-12
        )


@dataclass
class ImpRound:
    round: int
    target_count: int
    kept_count: int
    epochs: int
    final_loss: float
    collapsed_layers: list
    mask: Mask


@dataclass
class ImpResult:
    mask: Mask
    rounds: list
    keep_fraction: float


def imp_prune_step(net: nn.MaskedMlp, mask: Mask, target_count: int) -> Mask:
    """One pruning step of IMP: rank |w| among surviving weights, keep the
    top target_count, apply the mask, rewind to init. Returns the new mask."""
    scores = np.abs(net.weight_vector())
    scores[mask.bits == 0] = -1.0  # rank among surviving weights only
    new = _top_k_mask(scores, min(target_count, mask.count), net.weight_layout())
    new.apply_to(net)
    net.rewind()
    return new


def run_imp(net: nn.MaskedMlp, data, spec: ImpSpec) -> ImpResult:
    """Train, drop the lowest-|w| fraction of remaining weights, rewind,
    repeat. The net is left rewound under the final mask. Masks are nested;
    layer collapse is recorded per round, never fatal."""
    p = net.num_weights
    rounds_total = spec.num_rounds()
    final_target = (
        keep_count(spec.final_keep, p) if spec.final_keep is not None else None
    )
    mask = Mask.from_net(net)
    trace = []
    for r in range(1, rounds_total + 1):
        tr = nn.train(net, data, spec.train_cfg)
        target = keep_count((1.0 - spec.drop_rate) ** r, p)
        if final_target is not None:
            target = max(target, final_target)
            if r == rounds_total:
                target = final_target
        mask = imp_prune_step(net, mask, target)
        trace.append(
            ImpRound(
                round=r,
                target_count=target,
                kept_count=mask.count,
                epochs=tr.epochs_run,
                final_loss=tr.final_loss,
                collapsed_layers=mask.collapsed_layers(),
                mask=Mask(mask.bits.copy(), mask.layout),
            )
        )
    return ImpResult(mask=mask, rounds=trace, keep_fraction=mask.count / p)


__all__ = [
    "METHODS",
    "Mask",
    "ImpSpec",
    "ImpRound",
    "ImpResult",
    "keep_count",
    "global_rank_prune",
    "prune_random",
    "prune_magnitude",
    "prune_snip",
    "prune_grasp",
    "prune_synflow",
    "imp_prune_step",
    "run_imp",
]
