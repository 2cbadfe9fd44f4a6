"""Dataset generators with frozen noise, plus an IDX file parser.

Covariates are scaled so E||x||^2 = 1 (rows ~ N(0, I_d/d)). Each dataset
carries the noise vector z it was generated with; harnesses read the stored
z, never resample it.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nn
from .rng import derive_seed, make_rng


@dataclass
class Dataset:
    """n x d covariates with labels, frozen noise, and component indices.

    fresh_sampler(m, seed) draws m new i.i.d. covariates from the same
    input law (None when no sampler applies, e.g. file-backed data).
    """

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray
    component: np.ndarray
    seed: int
    fresh_sampler: Optional[Callable[[int, int], np.ndarray]] = field(
        default=None, repr=False
    )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def to_csv(self, path) -> None:
        """Row = x0..x{d-1}, y, z, component."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j}" for j in range(self.d)] + ["y", "z", "component"])
            for i in range(self.n):
                writer.writerow(
                    [repr(float(v)) for v in self.X[i]]
                    + [repr(float(self.y[i])), repr(float(self.z[i])), int(self.component[i])]
                )


def dataset_from_csv(path) -> Dataset:
    """Inverse of Dataset.to_csv (fresh_sampler not recoverable)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = header.index("y")
        rows = [[float(v) for v in row] for row in reader]
    arr = np.asarray(rows, dtype=float)
    return Dataset(
        X=arr[:, :d],
        y=arr[:, d],
        z=arr[:, d + 1],
        component=arr[:, d + 2].astype(int),
        seed=0,
    )


def _gaussian_sampler(d: int):
    def sample(m: int, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).normal(0.0, 1.0 / np.sqrt(d), size=(m, d))

    return sample


def gaussian_random_labels(n: int, d: int, seed: int) -> Dataset:
    """n rows ~ N(0, I_d/d) with uniform +-1 labels; pure-noise task (z = y)."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = make_rng(seed, "gaussian")
    X = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    y = rng.choice([-1.0, 1.0], size=n)
    return Dataset(
        X=X,
        y=y,
        z=y.copy(),
        component=np.ones(n, dtype=int),
        seed=int(seed),
        fresh_sampler=_gaussian_sampler(d),
    )


def _cube_sampler(m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.choice([-1.0, 1.0], size=(m, 3))


def hypercube_toy(seed: int, corner_seed: Optional[int] = None) -> Dataset:
    """6 distinct corners of {+-1}^3 with i.i.d. uniform +-1 labels.

    corner_seed pins the corner subset independently of the labels, so a
    family of datasets can share support while resampling only the labels
    (the per-init mask-entropy runs need the label pattern to be the sole
    source of randomness; 64 outcomes keep the plug-in estimate convergent
    at 1000 samples)."""
    rng = make_rng(seed, "cube")
    corners = np.array(
        [[(1.0 if (c >> b) & 1 else -1.0) for b in range(3)] for c in range(8)]
    )
    pick_rng = rng if corner_seed is None else make_rng(corner_seed, "cube-corners")
    pick = pick_rng.choice(8, size=6, replace=False)
    X = corners[pick]
    y = rng.choice([-1.0, 1.0], size=6)
    return Dataset(
        X=X,
        y=y,
        z=y.copy(),
        component=np.ones(6, dtype=int),
        seed=int(seed),
        fresh_sampler=_cube_sampler,
    )


def student_teacher(n: int, d: int, teacher_dims, noise_var: float, seed: int):
    """Labels = teacher(x) + N(0, noise_var) with the draw stored in z.

    teacher_dims are the teacher's layer dims, first entry must equal d.
    Returns (dataset, teacher net).
    """
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    teacher_dims = tuple(int(v) for v in teacher_dims)
    if teacher_dims[0] != d:
        raise ValueError(f"teacher input dim {teacher_dims[0]} != d={d}")
    teacher = nn.MaskedMlp(teacher_dims, derive_seed(seed, "teacher"))
    rng = make_rng(seed, "student-teacher")
    X = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    z = (
        rng.normal(0.0, np.sqrt(noise_var), size=n)
        if noise_var > 0
        else np.zeros(n)
    )
    y = teacher.forward(X)[:, 0] + z
    ds = Dataset(
        X=X,
        y=y,
        z=z,
        component=np.ones(n, dtype=int),
        seed=int(seed),
        fresh_sampler=_gaussian_sampler(d),
    )
    return ds, teacher


def noisify_inputs(dataset: Dataset, noise_var: float, seed: int) -> Dataset:
    """New dataset with per-entry Gaussian input noise; labels and z unchanged."""
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    X = dataset.X.copy()
    if noise_var > 0:
        rng = make_rng(seed, "noisify")
        X = X + rng.normal(0.0, np.sqrt(noise_var), size=X.shape)
    return Dataset(
        X=X,
        y=dataset.y.copy(),
        z=dataset.z.copy(),
        component=dataset.component.copy(),
        seed=int(seed),
        fresh_sampler=dataset.fresh_sampler,
    )


# ---- IDX format ------------------------------------------------------------

_IDX_MAGIC_IMAGES = 0x00000803
_IDX_MAGIC_LABELS = 0x00000801


def parse_idx(path) -> np.ndarray:
    """Parse a big-endian IDX file (u8 images, 3 dims, or u8 labels, 1 dim).

    Gzipped files are handled transparently. Raises ValueError with the byte
    offset on a bad magic number or truncated payload.
    """
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        data = gzip.open(fh).read() if head == b"\x1f\x8b" else fh.read()
    if len(data) < 4:
        raise ValueError(f"{path}: truncated header at byte offset {len(data)}")
    (magic,) = struct.unpack(">i", data[:4])
    if magic == _IDX_MAGIC_IMAGES:
        ndim = 3
    elif magic == _IDX_MAGIC_LABELS:
        ndim = 1
    else:
        raise ValueError(f"{path}: bad magic 0x{magic & 0xFFFFFFFF:08X} at byte offset 0")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise ValueError(f"{path}: truncated header at byte offset {len(data)}")
    dims = struct.unpack(f">{ndim}i", data[4:header_len])
    count = int(np.prod(dims))
    if len(data) < header_len + count:
        raise ValueError(
            f"{path}: truncated payload at byte offset {len(data)} "
            f"(expected {header_len + count} bytes)"
        )
    if len(data) > header_len + count:
        raise ValueError(
            f"{path}: {len(data) - header_len - count} trailing bytes "
            f"after byte offset {header_len + count}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


def idx_dataset(images_path, labels_path) -> Dataset:
    """Flattened u8 images scaled to [0,1] with labels binarized to +-1.

    Classes 0-4 map to -1 and 5-9 to +1 so the single-logit losses apply.
    z is zero (labels are not noise here); no fresh sampler.
    """
    images = parse_idx(images_path)
    labels = parse_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    y = np.where(labels >= 5, 1.0, -1.0)
    n = X.shape[0]
    return Dataset(
        X=X, y=y, z=np.zeros(n), component=np.ones(n, dtype=int), seed=0
    )


__all__ = [
    "Dataset",
    "dataset_from_csv",
    "gaussian_random_labels",
    "hypercube_toy",
    "student_teacher",
    "noisify_inputs",
    "parse_idx",
    "idx_dataset",
]
