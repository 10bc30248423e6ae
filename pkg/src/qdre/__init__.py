"""qdre: quasiprobabilistic density ratio estimation.

Classifier-based density ratio estimation that stays valid when event
weights, and therefore the underlying densities and ratios, can be
negative.  The pieces:

* losses: the revert loss family, its output-to-ratio transform, and
  pointwise convexity diagnostics;
* data / mixtures: signed weighted datasets with CSV/JSONL I/O, and
  Gaussian mixture generators with analytic density and ratio oracles;
* nn: small dense networks trained by minibatch Adam with validation
  patience;
* rosmm: the ratio-of-signed-mixtures model built from two positive
  sub-ratio networks and a learned coefficient;
* metrics: extended sliced Wasserstein-1 for signed measures, exact 1-D
  W₁, per-feature χ² and Tsallis closure scores;
* cli: reproducible generate / train / evaluate / reweight / compare runs.
"""

from .data import Dataset, WeightedSample, balance_classes, is_balanced, split
from .errors import ConfigError, DataError, NumericsError, QdreError
from .losses import (
    BCE,
    EPS_CLAMP,
    REVERT,
    ConvexityReport,
    LagrangianProbe,
    LossSpec,
    RatioTrickTransform,
    convexity_scan,
    inverse_transform,
    lagrangian_value,
    logit_to_ratio,
    transform,
    transform_derivative,
)
from .metrics import (
    ClosureReport,
    Histogram,
    SignedEmpiricalMeasure,
    SwConfig,
    chi2_score,
    extended_sw1,
    percentile_edges,
    reweight_closure,
    tsallis_d2,
    w1_1d,
    weighted_histogram,
)
from .mixtures import (
    GaussianComponent,
    SignedMixtureSpec,
    analytic_density,
    analytic_ratio,
    benchmark_spec,
    oracle_subratios,
    sample_mixture,
)
from .nn import (
    Adam,
    EarlyStopper,
    MlpModel,
    TrainConfig,
    TrainReport,
    backward,
    forward,
    init_mlp,
    predict_ratio,
    train,
    weighted_risk,
)
from .rosmm import (
    RosmmModel,
    fit_rosmm,
    initial_theta,
    rosmm_ratio,
    signed_partition,
    train_subratios,
)
from .seeding import derive_seed, rng_for

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BCE",
    "ClosureReport",
    "ConfigError",
    "ConvexityReport",
    "DataError",
    "Dataset",
    "EPS_CLAMP",
    "EarlyStopper",
    "GaussianComponent",
    "Histogram",
    "LagrangianProbe",
    "LossSpec",
    "MlpModel",
    "NumericsError",
    "QdreError",
    "REVERT",
    "RatioTrickTransform",
    "RosmmModel",
    "SignedEmpiricalMeasure",
    "SignedMixtureSpec",
    "SwConfig",
    "TrainConfig",
    "TrainReport",
    "WeightedSample",
    "analytic_density",
    "analytic_ratio",
    "backward",
    "balance_classes",
    "benchmark_spec",
    "chi2_score",
    "convexity_scan",
    "derive_seed",
    "extended_sw1",
    "fit_rosmm",
    "forward",
    "init_mlp",
    "initial_theta",
    "inverse_transform",
    "is_balanced",
    "lagrangian_value",
    "logit_to_ratio",
    "oracle_subratios",
    "percentile_edges",
    "predict_ratio",
    "reweight_closure",
    "rng_for",
    "rosmm_ratio",
    "sample_mixture",
    "signed_partition",
    "split",
    "train",
    "train_subratios",
    "transform",
    "transform_derivative",
    "tsallis_d2",
    "w1_1d",
    "weighted_histogram",
    "weighted_risk",
]
