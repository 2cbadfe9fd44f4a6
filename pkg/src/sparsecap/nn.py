"""Dense MLP with per-weight binary masks.

Plain numpy engine: forward, reverse-mode gradients, Hessian-vector
products (forward-over-reverse), SGD/Adam training, and init rewinding.
Masked weights are pinned to zero through every operation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_seed, make_rng

LOSSES = ("mse", "bce")
OPTIMIZERS = ("sgd", "adam")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Optimization settings for train().

    loss_tol stops training once mean train loss <= loss_tol (0 disables);
    patience stops after that many consecutive epochs with unchanged train
    accuracy (0 disables). gradient_noise_scale is the std of i.i.d. Gaussian
    noise added to every gradient coordinate before each step.
    """

    loss: str = "mse"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int | None = None
    max_epochs: int = 100
    loss_tol: float = 0.0
    patience: int = 0
    gradient_noise_scale: float = 0.0

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}, expected one of {LOSSES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.gradient_noise_scale < 0:
            raise ValueError("gradient_noise_scale must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None (full batch)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")


@dataclass
class TrainTrace:
    epochs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    stopped: str = "max_epochs"

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")

    @property
    def epochs_run(self) -> int:
        return len(self.epochs)


class MaskedMlp:
    """Fully connected ReLU net; hidden activations ReLU, linear output.

    layer_dims = (input, hidden..., output). Weight init is uniform in
    +-sqrt(6/(fan_in+fan_out)); biases start at zero. The construction-time
    weights are snapshotted for rewinding. Biases are never masked.
    """

    def __init__(
        self,
        layer_dims,
        seed: int,
        bias: bool = True,
        output_clip: bool = False,
    ) -> None:
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must be >=2 positive integers, got {dims}")
        self.layer_dims = dims
        self.rng_seed = int(seed)
        self.bias = bool(bias)
        self.output_clip = bool(output_clip)
        self.activation = "relu"
        rng = make_rng(self.rng_seed, "init")
        self.weights = []
        self.biases = []
        self.masks = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (d_in + d_out))
            self.weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))
            self.masks.append(np.ones((d_in, d_out), dtype=np.uint8))
        self._init_weights = tuple(w.copy() for w in self.weights)
        self._init_biases = tuple(b.copy() for b in self.biases)
        self._train_calls = 0

    # ---- structure ------------------------------------------------------

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_weights(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def num_params(self) -> int:
        n = self.num_weights
        if self.bias:
            n += sum(b.size for b in self.biases)
        return n

    def weight_layout(self):
        """Per-layer (flat offset, shape) for the weight-only vector."""
        layout = []
        off = 0
        for w in self.weights:
            layout.append((off, w.shape))
            off += w.size
        return tuple(layout)

    def weight_vector(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def mask_vector(self) -> np.ndarray:
        return np.concatenate([m.ravel() for m in self.masks])

    def set_layer_masks(self, layer_masks) -> None:
        if len(layer_masks) != self.num_layers:
            raise ValueError("mask layer count mismatch")
        new = []
        for m, w in zip(layer_masks, self.weights):
            m = np.asarray(m, dtype=np.uint8)
            if m.shape != w.shape:
                raise ValueError(f"mask shape {m.shape} != weight shape {w.shape}")
            new.append(m.copy())
        self.masks = new
        self.apply_masks()

    def apply_masks(self) -> None:
        for w, m in zip(self.weights, self.masks):
            w *= m

    def init_snapshot(self):
        return (
            tuple(w.copy() for w in self._init_weights),
            tuple(b.copy() for b in self._init_biases),
        )

    def rewind(self) -> None:
        """Restore the construction-time weights, masked entries forced to 0."""
        for w, w0, m in zip(self.weights, self._init_weights, self.masks):
            np.copyto(w, w0)
            w *= m
        for b, b0 in zip(self.biases, self._init_biases):
            np.copyto(b, b0)

    def clone(self) -> "MaskedMlp":
        """Independent copy sharing no arrays (same seed, weights, masks)."""
        other = MaskedMlp(self.layer_dims, self.rng_seed, self.bias, self.output_clip)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.masks = [m.copy() for m in self.masks]
        other._init_weights = tuple(w.copy() for w in self._init_weights)
        other._init_biases = tuple(b.copy() for b in self._init_biases)
        other._train_calls = self._train_calls
        return other

    # ---- flat parameter view (weights then bias, per layer) -------------

    def get_params(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            if self.bias:
                chunks.append(b)
        return np.concatenate(chunks)

    def set_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} params, got {vec.shape}")
        off = 0
        for w, b in zip(self.weights, self.biases):
            np.copyto(w, vec[off : off + w.size].reshape(w.shape))
            off += w.size
            if self.bias:
                np.copyto(b, vec[off : off + b.size])
                off += b.size
        self.apply_masks()

    def split_param_vector(self, vec: np.ndarray):
        """View a flat param vector as per-layer (W, b) arrays (b None if biasless)."""
        out = []
        off = 0
        for w, b in zip(self.weights, self.biases):
            wv = vec[off : off + w.size].reshape(w.shape)
            off += w.size
            bv = None
            if self.bias:
                bv = vec[off : off + b.size]
                off += b.size
            out.append((wv, bv))
        return out

    # ---- evaluation ------------------------------------------------------

    def _forward_cache(self, X: np.ndarray):
        """Forward pass keeping hidden activations for backprop.

        Returns (hs, pre) where hs[0]=X, hs[l]=post-activation of layer l,
        pre[l]=pre-activation of layer l; hs[-1] is the (clipped) output.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.layer_dims[0]:
            raise ValueError(
                f"input has {X.shape[1]} columns, net expects {self.layer_dims[0]}"
            )
        hs = [X]
        pre = []
        h = X
        last = self.num_layers - 1
        for l, (w, b, m) in enumerate(zip(self.weights, self.biases, self.masks)):
            a = h @ (w * m)
            if self.bias:
                a = a + b
            pre.append(a)
            h = a if l == last else np.maximum(a, 0.0)
            hs.append(h)
        if self.output_clip:
            hs[-1] = np.clip(hs[-1], -1.0, 1.0)
        return hs, pre

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Outputs, shape (n, out_dim); clipped to [-1,1] if output_clip."""
        hs, _ = self._forward_cache(X)
        return hs[-1]


# ---- losses --------------------------------------------------------------


def _as_targets(y: np.ndarray, out_dim: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != out_dim:
        raise ValueError(f"targets have {y.shape[1]} columns, outputs have {out_dim}")
    return y


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def per_example_loss(out: np.ndarray, y: np.ndarray, loss: str) -> np.ndarray:
    """Length-n vector of per-sample losses (summed over output dims for mse)."""
    y = _as_targets(y, out.shape[1])
    if loss == "mse":
        return ((out - y) ** 2).sum(axis=1)
    if loss == "bce":
        if out.shape[1] != 1:
            raise ValueError("bce expects a single output logit")
        t = (y + 1.0) / 2.0
        return (np.logaddexp(0.0, out) - t * out).ravel()
    raise ValueError(f"unknown loss {loss!r}")


def _loss_grads(out: np.ndarray, y: np.ndarray, loss: str):
    """(per-example losses, dL/dout, d2L/dout2) for mean loss L; n = len(y)."""
    n = out.shape[0]
    y = _as_targets(y, out.shape[1])
    if loss == "mse":
        ell = ((out - y) ** 2).sum(axis=1)
        d1 = 2.0 * (out - y) / n
        d2 = np.full_like(out, 2.0 / n)
    elif loss == "bce":
        t = (y + 1.0) / 2.0
        ell = (np.logaddexp(0.0, out) - t * out).ravel()
        s = _sigmoid(out)
        d1 = (s - t) / n
        d2 = s * (1.0 - s) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return ell, d1, d2


def _check_finite(ell: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(ell))
    if bad.size:
        raise FloatingPointError(f"non-finite loss at sample index {int(bad[0])}")


def mean_loss(net: MaskedMlp, X: np.ndarray, y: np.ndarray, loss: str) -> float:
    ell = per_example_loss(net.forward(X), y, loss)
    return float(ell.mean())


def accuracy(out: np.ndarray, y: np.ndarray) -> float:
    """Sign agreement between first output column and labels."""
    y = np.asarray(y, dtype=float).reshape(out.shape[0], -1)[:, 0]
    return float(np.mean((out[:, 0] > 0) == (y > 0)))


# ---- reverse mode ---------------------------------------------------------


def _backprop(net: MaskedMlp, X: np.ndarray, y: np.ndarray, loss: str):
    """Gradient of mean loss. Returns (grads per layer, cache for reuse)."""
    hs, pre = net._forward_cache(X)
    out = hs[-1]
    ell, d1, _ = _loss_grads(out, y, loss)
    _check_finite(ell)
    delta = d1
    if net.output_clip:
        delta = delta * (np.abs(pre[-1]) < 1.0)
    gW = [None] * net.num_layers
    gb = [None] * net.num_layers
    deltas = [None] * net.num_layers
    for l in range(net.num_layers - 1, -1, -1):
        deltas[l] = delta
        gW[l] = (hs[l].T @ delta) * net.masks[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            wm = net.weights[l] * net.masks[l]
            delta = (delta @ wm.T) * (pre[l - 1] > 0)
    cache = (hs, pre, deltas, ell)
    return gW, gb, cache


def _flatten_grads(net: MaskedMlp, gW, gb) -> np.ndarray:
    chunks = []
    for l in range(net.num_layers):
        chunks.append(gW[l].ravel())
        if net.bias:
            chunks.append(gb[l])
    return np.concatenate(chunks)


def gradient(net: MaskedMlp, X: np.ndarray, y: np.ndarray, loss: str) -> np.ndarray:
    """Flat gradient of mean loss over the batch; zero at masked coordinates."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    gW, gb, _ = _backprop(net, X, y, loss)
    return _flatten_grads(net, gW, gb)


def hvp(
    net: MaskedMlp, X: np.ndarray, y: np.ndarray, loss: str, v: np.ndarray
) -> np.ndarray:
    """Hessian-vector product H v of the mean loss, Pearlmutter's R-operator.

    Forward-over-reverse: propagate directional derivatives R{.} alongside
    the ordinary forward/backward quantities. ReLU contributes no curvature
    term (second derivative zero a.e.).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (net.num_params,):
        raise ValueError(f"v has shape {v.shape}, expected ({net.num_params},)")
    gW, gb, cache = _backprop(net, X, y, loss)
    hs, pre, deltas, _ = cache
    out = hs[-1]
    _, _, d2 = _loss_grads(out, y, loss)
    vlayers = net.split_param_vector(v)
    L = net.num_layers

    # R-forward sweep: direction projected onto unmasked coordinates.
    wm = [w * m for w, m in zip(net.weights, net.masks)]
    vm = [vw * m for (vw, _), m in zip(vlayers, net.masks)]
    r_h = np.zeros_like(hs[0])
    r_hs = [r_h]
    r_pre = []
    for l in range(L):
        r_a = r_h @ wm[l] + hs[l] @ vm[l]
        if net.bias:
            r_a = r_a + vlayers[l][1]
        r_pre.append(r_a)
        r_h = r_a if l == L - 1 else r_a * (pre[l] > 0)
        r_hs.append(r_h)

    # R-backward sweep.
    r_out = r_pre[-1]
    if net.output_clip:
        gate = np.abs(pre[-1]) < 1.0
        r_out = r_out * gate
        r_delta = d2 * r_out * gate
    else:
        r_delta = d2 * r_out
    hW = [None] * L
    hb = [None] * L
    for l in range(L - 1, -1, -1):
        hW[l] = (r_hs[l].T @ deltas[l] + hs[l].T @ r_delta) * net.masks[l]
        hb[l] = r_delta.sum(axis=0)
        if l > 0:
            r_delta = (r_delta @ wm[l].T + deltas[l] @ vm[l].T) * (pre[l - 1] > 0)
    return _flatten_grads(net, hW, hb)


# ---- training -------------------------------------------------------------


class _Sgd:
    def __init__(self, net: MaskedMlp, lr: float) -> None:
        self.lr = lr

    def step(self, net: MaskedMlp, gW, gb) -> None:
        for l in range(net.num_layers):
            net.weights[l] -= self.lr * gW[l]
            if net.bias:
                net.biases[l] -= self.lr * gb[l]


class _Adam:
    def __init__(self, net: MaskedMlp, lr: float) -> None:
        self.lr = lr
        self.t = 0
        self.mW = [np.zeros_like(w) for w in net.weights]
        self.vW = [np.zeros_like(w) for w in net.weights]
        self.mb = [np.zeros_like(b) for b in net.biases]
        self.vb = [np.zeros_like(b) for b in net.biases]

    def step(self, net: MaskedMlp, gW, gb) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for l in range(net.num_layers):
            m, v = self.mW[l], self.vW[l]
            m += (1.0 - ADAM_BETA1) * (gW[l] - m)
            v += (1.0 - ADAM_BETA2) * (gW[l] ** 2 - v)
            net.weights[l] -= self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
            if net.bias:
                mb, vb = self.mb[l], self.vb[l]
                mb += (1.0 - ADAM_BETA1) * (gb[l] - mb)
                vb += (1.0 - ADAM_BETA2) * (gb[l] ** 2 - vb)
                net.biases[l] -= self.lr * (mb / c1) / (np.sqrt(vb / c2) + ADAM_EPS)


def _data_arrays(data):
    if hasattr(data, "X") and hasattr(data, "y"):
        return np.asarray(data.X, dtype=float), np.asarray(data.y, dtype=float)
    X, y = data
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


def train(net: MaskedMlp, data, cfg: TrainConfig, on_epoch=None) -> TrainTrace:
    """Train in place, respecting masks; deterministic given net seed and
    call order. on_epoch(net, epoch, loss, acc) runs after each epoch."""
    X, y = _data_arrays(data)
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    rng = make_rng(net.rng_seed, "train", net._train_calls)
    net._train_calls += 1
    opt = _Adam(net, cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(net, cfg.learning_rate)
    n = X.shape[0]
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    trace = TrainTrace()
    last_acc = None
    flat_epochs = 0
    # divergence is detected and raised explicitly; keep numpy quiet about
    # the overflows that precede it
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.max_epochs):
            if bs >= n:
                order = np.arange(n)
            else:
                order = rng.permutation(n)
            loss_sum = 0.0
            acc_sum = 0.0
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                try:
                    gW, gb, cache = _backprop(net, X[idx], y[idx], cfg.loss)
                except FloatingPointError as exc:
                    raise FloatingPointError(f"diverged at epoch {epoch}: {exc}") from exc
                ell = cache[3]
                loss_sum += float(ell.sum())
                acc_sum += accuracy(cache[0][-1], y[idx]) * len(idx)
                if cfg.gradient_noise_scale > 0:
                    for l in range(net.num_layers):
                        gW[l] = (gW[l] + rng.normal(0.0, cfg.gradient_noise_scale, gW[l].shape)) * net.masks[l]
                        if net.bias:
                            gb[l] = gb[l] + rng.normal(0.0, cfg.gradient_noise_scale, gb[l].shape)
                opt.step(net, gW, gb)
            net.apply_masks()
            epoch_loss = loss_sum / n
            epoch_acc = acc_sum / n
            if not np.isfinite(epoch_loss):
                raise FloatingPointError(f"diverged at epoch {epoch}: non-finite loss")
            trace.epochs.append(epoch)
            trace.losses.append(epoch_loss)
            trace.accuracies.append(epoch_acc)
            if on_epoch is not None:
                on_epoch(net, epoch, epoch_loss, epoch_acc)
            if cfg.loss_tol > 0 and epoch_loss <= cfg.loss_tol:
                trace.stopped = "loss_tol"
                break
            if cfg.patience > 0:
                if last_acc is not None and epoch_acc == last_acc:
                    flat_epochs += 1
                    if flat_epochs >= cfg.patience:
                        trace.stopped = "patience"
                        break
                else:
                    flat_epochs = 0
                last_acc = epoch_acc
    return trace


# ---- checkpoints ----------------------------------------------------------

CHECKPOINT_FORMAT = "sparsecap-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(net: MaskedMlp, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(net.layer_dims),
        "bias": net.bias,
        "output_clip": net.output_clip,
        "activation": net.activation,
        "rng_seed": net.rng_seed,
        "train_calls": net._train_calls,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "masks": [m.tolist() for m in net.masks],
        "init_weights": [w.tolist() for w in net._init_weights],
        "init_biases": [b.tolist() for b in net._init_biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> MaskedMlp:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    net = MaskedMlp(doc["layer_dims"], doc["rng_seed"], doc["bias"], doc["output_clip"])
    net.weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
    net.biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    net.masks = [np.asarray(m, dtype=np.uint8) for m in doc["masks"]]
    net._init_weights = tuple(np.asarray(w, dtype=float) for w in doc["init_weights"])
    net._init_biases = tuple(np.asarray(b, dtype=float) for b in doc["init_biases"])
    net._train_calls = int(doc.get("train_calls", 0))
    return net


__all__ = [
    "MaskedMlp",
    "TrainConfig",
    "TrainTrace",
    "train",
    "gradient",
    "hvp",
    "per_example_loss",
    "mean_loss",
    "accuracy",
    "save_checkpoint",
    "load_checkpoint",
]
