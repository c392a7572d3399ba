"""Density estimation with squared tensor-ring B-spline expansions.

A multivariate density is modeled as the square of a B-spline expansion
whose coefficient tensor lives in tensor-ring format.  The ring structure
gives exact normalization, exact marginal/conditional/cumulative queries,
and exact autoregressive inverse-CDF sampling; a mixture over circular
permutations of the variable ordering adds expressive flexibility with
derived (not trained) weights.
"""

from .checkpoint import export_json, load_checkpoint, save_checkpoint
from .datasets import (
    Dataset,
    ToySpec,
    generate_toy,
    histogram_kl,
    ingest_csv,
    toy_samples,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateConditionalError,
    DomainError,
    ShapeMismatchError,
)
from .mixture import (
    PermutationSet,
    RingMixtureModel,
    canonical_circular,
    count_circular,
    create_mixture,
    enumerate_circular,
)
from .model import DensityQuery, RingDensityModel, random_model
from .sampler import (
    SamplePlan,
    build_plan,
    sample_batch,
    sample_from_uniforms,
    sample_one,
)
from .splines import BasisGrid
from .tensor_ring import (
    TrCores,
    element,
    inner_product,
    kron_square,
    marginalize,
    pair_transfer,
    to_dense,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    evaluate_nll,
    fit,
    gaussian_baseline_nll,
    nll_per_sample,
)

__version__ = "0.1.0"

__all__ = [
    "BasisGrid",
    "CheckpointError",
    "ConfigError",
    "Dataset",
    "DegenerateConditionalError",
    "DensityQuery",
    "DomainError",
    "PermutationSet",
    "RingDensityModel",
    "RingMixtureModel",
    "SamplePlan",
    "ShapeMismatchError",
    "ToySpec",
    "TrCores",
    "TrainConfig",
    "TrainReport",
    "build_plan",
    "canonical_circular",
    "count_circular",
    "create_mixture",
    "element",
    "enumerate_circular",
    "evaluate_nll",
    "export_json",
    "fit",
    "gaussian_baseline_nll",
    "generate_toy",
    "histogram_kl",
    "ingest_csv",
    "inner_product",
    "kron_square",
    "load_checkpoint",
    "marginalize",
    "nll_per_sample",
    "pair_transfer",
    "random_model",
    "sample_batch",
    "sample_from_uniforms",
    "sample_one",
    "save_checkpoint",
    "to_dense",
    "toy_samples",
]
