"""sparsecap: capacity accounting for pruned-at-initialization networks.

Masked dense networks (numpy), synthetic data generators, prune-at-init and
iterative-magnitude baselines, memorization/noise-correlation experiment
harness, information-theoretic bound calculators with Monte-Carlo verifiers,
and a planted construction showing few weights != small capacity.
"""

from .data import (
    Dataset,
    dataset_from_csv,
    gaussian_random_labels,
    hypercube_toy,
    idx_dataset,
    noisify_inputs,
    parse_idx,
    student_teacher,
)
from .nn import LOSSES, OPTIMIZERS, MaskedMlp, TrainConfig, TrainTrace
from .pruning import (
    METHODS,
    ImpResult,
    ImpSpec,
    Mask,
    keep_count,
    prune_grasp,
    prune_magnitude,
    prune_random,
    prune_snip,
    prune_synflow,
    run_imp,
)
from .rng import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "dataset_from_csv",
    "gaussian_random_labels",
    "hypercube_toy",
    "idx_dataset",
    "noisify_inputs",
    "parse_idx",
    "student_teacher",
    "LOSSES",
    "OPTIMIZERS",
    "MaskedMlp",
    "TrainConfig",
    "TrainTrace",
    "METHODS",
    "ImpResult",
    "ImpSpec",
    "Mask",
    "keep_count",
    "prune_grasp",
    "prune_magnitude",
    "prune_random",
    "prune_snip",
    "prune_synflow",
    "run_imp",
    "derive_seed",
    "make_rng",
    "__version__",
]
