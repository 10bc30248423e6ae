"""Ratio-of-signed-mixtures model.

A signed target q1 = m⁺ p_w+ − m⁻ p_w− with m⁺ − m⁻ = 1 has density ratio

    r(x) = c r₊₊(x) + (1 − c) r₊₋(x),        c = m⁺ ∈ [1, ∞),

where r₊₊ and r₊₋ are ordinary positive density ratios of the normalized
positive-weight and negative-weight parts against the reference.  Each
sub-ratio is learnable by a plain cross-entropy classifier on positive
weights, so the signed structure is carried entirely by the coefficient.
c is parameterized as 1 + softplus(theta_c), keeping c > 1 after every
optimizer step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import default_hidden_dims, default_train_config
from .data import Dataset, balance_classes
from .errors import ConfigError, DataError
from .losses import (
    BCE,
    EPS_CLAMP,
    REVERT,
    LossSpec,
    inverse_transform,
    transform_derivative,
)
from .nn import (
    Adam,
    EarlyStopper,
    MlpModel,
    TrainConfig,
    TrainReport,
    _check_trainable,
    backprop_output_grad,
    forward_cache,
    init_mlp,
    model_from_dict,
    model_to_dict,
    params_checksum,
    train,
)
from .seeding import derive_seed, rng_for

COEFFICIENT_ONLY = "coefficient-only"
JOINT = "joint"

_VARIANT_ALIASES = {
    COEFFICIENT_ONLY: COEFFICIENT_ONLY,
    "coefficientonly": COEFFICIENT_ONLY,
    "c": COEFFICIENT_ONLY,
    "rosmm-c": COEFFICIENT_ONLY,
    JOINT: JOINT,
    "r": JOINT,
    "rosmm-r": JOINT,
}

BCE_SPEC = LossSpec(kind=BCE)


def normalize_variant(variant: str) -> str:
    key = str(variant).strip().lower()
    if key not in _VARIANT_ALIASES:
        raise ConfigError(
            f"unknown variant {variant!r}; expected {COEFFICIENT_ONLY!r} or {JOINT!r}"
        )
    return _VARIANT_ALIASES[key]


def _softplus(t: float) -> float:
    return float(np.logaddexp(0.0, t))


def _softplus_inv(y: float) -> float:
    """Inverse of log(1 + e^t) for y > 0."""
    if y <= 0:
        raise ValueError(f"softplus inverse needs a positive argument, got {y}")
    return y + math.log1p(-math.exp(-y))


def _sigmoid_scalar(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    et = math.exp(t)
    return et / (1.0 + et)


@dataclass
class RosmmModel:
    """Two positive sub-ratio models plus the unconstrained coefficient.

    Sub-ratios may be MlpModels (sigmoid output, cross-entropy ratio
    s/(1−s)) or plain callables mapping an (n, d) array to n ratios; the
    callable form exists so exact oracles can stand in for the networks.
    """

    r_pp: object
    r_pm: object
    theta_c: float = 0.0
    variant: str = COEFFICIENT_ONLY

    def __post_init__(self):
        self.theta_c = float(self.theta_c)
        self.variant = normalize_variant(self.variant)

    @property
    def c(self) -> float:
        return 1.0 + _softplus(self.theta_c)


def _sub_values(sub, X: np.ndarray) -> np.ndarray:
    if isinstance(sub, MlpModel):
        _, acts = forward_cache(sub, X)
        return BCE_SPEC.ratio(acts[-1][:, 0])
    return np.asarray(sub(X), dtype=float)


def rosmm_ratio(model: RosmmModel, x):
    """c·r₊₊(x) + (1−c)·r₊₋(x)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    X = np.atleast_2d(x)
    c = model.c
    out = c * _sub_values(model.r_pp, X) + (1.0 - c) * _sub_values(model.r_pm, X)
    return float(out[0]) if scalar else out


def signed_partition(data: Dataset) -> tuple[Dataset, Dataset]:
    """Split into the two balanced sub-ratio training problems.

    Returns (pp, pm): reference vs positive-weight target part, and
    reference vs sign-flipped negative-weight target part, each rescaled to
    unit class masses.  Raises DataError when either part is empty, or when
    class 0 carries non-positive weights.
    """
    class0 = data.class_subset(0)
    class1 = data.class_subset(1)
    if len(class0) == 0 or len(class1) == 0:
        raise DataError("both classes are required to build sub-ratio datasets")
    if np.any(class0.w <= 0):
        raise DataError("class-0 weights must all be positive")
    pos = class1.subset(class1.w > 0)
    neg = class1.subset(class1.w < 0)
    if len(pos) == 0:
        raise DataError("class-1 positive-weight partition is empty")
    if len(neg) == 0:
        raise DataError("class-1 negative-weight partition is empty")
    flipped = Dataset(neg.X, -neg.w, neg.y)
    pp = balance_classes(Dataset.concatenate([class0, pos]))
    pm = balance_classes(Dataset.concatenate([class0, flipped]))
    return pp, pm


def initial_theta(data: Dataset) -> float:
    """theta_c matching the empirical positive-part mass of class 1.

    m⁺ = (sum of positive class-1 weights) / (signed class-1 sum) estimates
    c; inverting c = 1 + softplus(theta) gives the starting point.
    """
    class1 = data.class_subset(1)
    total = float(np.sum(class1.w))
    if total <= 0:
        raise DataError(f"class-1 signed weight sum must be positive, got {total}")
    m_pos = float(np.sum(class1.w[class1.w > 0])) / total
    if m_pos <= 1.0:
        return 0.0
    return _softplus_inv(m_pos - 1.0)


def train_subratios(
    train_data: Dataset,
    val_data: Dataset,
    seed: int = 0,
    hidden_dims: tuple[int, ...] | None = None,
    cfg_pp: TrainConfig | None = None,
    cfg_pm: TrainConfig | None = None,
    max_epochs: int = 500,
):
    """Train the two cross-entropy sub-ratio networks.

    Returns (r_pp, r_pm, reports) where reports maps "r_pp"/"r_pm" to the
    TrainReport of each fit.  Defaults follow the benchmark settings for
    the sub-ratio columns (cross-entropy, lr 1e-3, batches 128 and 64,
    patience 15) with per-network derived seeds.
    """
    pp_train, pm_train = signed_partition(train_data)
    pp_val, pm_val = signed_partition(val_data)
    hidden = tuple(hidden_dims) if hidden_dims is not None else default_hidden_dims("subratio-pp")

    seed_pp = derive_seed(seed, "subratio-pp")
    seed_pm = derive_seed(seed, "subratio-pm")
    if cfg_pp is None:
        cfg_pp = default_train_config("subratio-pp", seed=seed_pp, max_epochs=max_epochs)
    if cfg_pm is None:
        cfg_pm = default_train_config("subratio-pm", seed=seed_pm, max_epochs=max_epochs)

    r_pp = init_mlp(train_data.d, hidden, seed_pp)
    r_pm = init_mlp(train_data.d, hidden, seed_pm)
    report_pp = train(r_pp, pp_train, pp_val, cfg_pp)
    report_pm = train(r_pm, pm_train, pm_val, cfg_pm)
    return r_pp, r_pm, {"r_pp": report_pp, "r_pm": report_pm}


def rosmm_risk(model: RosmmModel, data: Dataset, loss: LossSpec) -> float:
    """Weighted risk of the composed output s = T⁻¹(r̂)."""
    if len(data) == 0:
        raise DataError("empty dataset")
    denom = float(np.sum(np.abs(data.w)))
    if denom == 0.0:
        raise DataError("zero total absolute weight")
    u = loss.ratio_to_output(rosmm_ratio(model, data.X))
    return float(np.sum(data.w * loss.loss(u, data.y)) / denom)


def _sub_forward(sub, X: np.ndarray):
    """(ratio values, caches, inside-clamp mask); caches None for callables."""
    if isinstance(sub, MlpModel):
        zs, acts = forward_cache(sub, X)
        s = acts[-1][:, 0]
        inside = (s > EPS_CLAMP) & (s < 1.0 - EPS_CLAMP)
        return BCE_SPEC.ratio(s), (zs, acts), inside
    return np.asarray(sub(X), dtype=float), None, None


def fit_rosmm(
    model: RosmmModel,
    train_data: Dataset,
    val_data: Dataset,
    cfg: TrainConfig,
    variant: str | None = None,
) -> TrainReport:
    """Optimize the composed REVERT risk with Adam and validation patience.

    CoefficientOnly updates only theta_c; Joint additionally backpropagates
    into both sub-networks (requires MlpModel sub-ratios).  Training aborts
    with ``diverged=True`` on a non-finite risk.  The gradient route:
    dL/dtheta = dL/du · du/dr̂ · (r₊₊ − r₊₋) · sigmoid(theta), with
    du/dr̂ = 1/T'(u) by the inverse function theorem, and for Joint
    dr_j/dz_j = r_j on the unclamped set (the cross-entropy ratio is e^z).
    """
    variant = normalize_variant(variant if variant is not None else model.variant)
    model.variant = variant
    if cfg.loss.kind != REVERT:
        raise ConfigError("fit_rosmm optimizes the revert risk; cfg.loss must be revert")
    joint = variant == JOINT
    if joint and not (isinstance(model.r_pp, MlpModel) and isinstance(model.r_pm, MlpModel)):
        raise DataError("joint fitting requires network sub-ratios, not callables")
    _check_trainable(train_data, cfg.loss, "train")
    _check_trainable(val_data, cfg.loss, "validation")

    t = cfg.loss.transform
    n = len(train_data)
    samples_per_epoch = min(n, cfg.epoch_cap)
    rng = rng_for(cfg.seed, "rosmm-shuffle")
    theta = np.array([model.theta_c], dtype=float)
    params: list[np.ndarray] = [theta]
    if joint:
        params += model.r_pp.parameters() + model.r_pm.parameters()
    optimizer = Adam(lr=cfg.learning_rate)
    stopper = EarlyStopper(cfg.patience)

    train_curve: list[float] = []
    val_curve: list[float] = []
    clamp_count = 0
    diverged = False
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)[:samples_per_epoch]
        num = 0.0
        den = 0.0
        for start in range(0, samples_per_epoch, cfg.batch_size):
            batch = train_data.subset(order[start : start + cfg.batch_size])
            r_pp_v, cache_pp, inside_pp = _sub_forward(model.r_pp, batch.X)
            r_pm_v, cache_pm, inside_pm = _sub_forward(model.r_pm, batch.X)
            cval = 1.0 + _softplus(theta[0])
            rhat = cval * r_pp_v + (1.0 - cval) * r_pm_v
            u = inverse_transform(t, rhat)
            clamp_count += t.clamp_count(u)
            losses = cfg.loss.loss(u, batch.y)
            num += float(np.sum(batch.w * losses))
            den += float(np.sum(np.abs(batch.w)))

            denom = float(np.sum(np.abs(batch.w)))
            if denom > 0.0:
                coeff = batch.w / denom
                dl_du = cfg.loss.loss_grad(u, batch.y)
                du_dr = 1.0 / transform_derivative(t, u)
                dl_dr = coeff * dl_du * du_dr
                g_theta = float(np.sum(dl_dr * (r_pp_v - r_pm_v)) * _sigmoid_scalar(theta[0]))
                grads: list[np.ndarray] = [np.array([g_theta])]
                if joint:
                    zs_pp, acts_pp = cache_pp
                    grads += backprop_output_grad(
                        model.r_pp, zs_pp, acts_pp, dl_dr * cval * r_pp_v * inside_pp
                    )
                    zs_pm, acts_pm = cache_pm
                    grads += backprop_output_grad(
                        model.r_pm, zs_pm, acts_pm, dl_dr * (1.0 - cval) * r_pm_v * inside_pm
                    )
                optimizer.step(params, grads)

        epochs_run = epoch
        model.theta_c = float(theta[0])
        train_loss = num / den if den > 0 else math.nan
        val_loss = rosmm_risk(model, val_data, cfg.loss)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            diverged = True
            break
        train_curve.append(train_loss)
        val_curve.append(val_loss)
        if stopper.update(epoch, val_loss, params):
            break

    if stopper.snapshot is not None:
        for param, value in zip(params, stopper.snapshot):
            param[...] = value
    model.theta_c = float(theta[0])

    return TrainReport(
        epochs_run=epochs_run,
        best_val_loss=stopper.best if val_curve else math.inf,
        train_loss_curve=train_curve,
        val_loss_curve=val_curve,
        clamp_count=clamp_count,
        final_params_checksum=params_checksum(params),
        samples_per_epoch=samples_per_epoch,
        diverged=diverged,
    )


def rosmm_to_dict(model: RosmmModel) -> dict:
    if not (isinstance(model.r_pp, MlpModel) and isinstance(model.r_pm, MlpModel)):
        raise DataError("only network sub-ratios can be serialized")
    return {
        "format": "qdre-rosmm",
        "version": 1,
        "theta_c": model.theta_c,
        "c": model.c,
        "variant": model.variant,
        "r_pp": model_to_dict(model.r_pp, BCE_SPEC),
        "r_pm": model_to_dict(model.r_pm, BCE_SPEC),
    }


def rosmm_from_dict(obj: dict) -> RosmmModel:
    if obj.get("format") != "qdre-rosmm":
        raise DataError(f"not a rosmm model file (format={obj.get('format')!r})")
    if obj.get("version") != 1:
        raise DataError(f"unsupported rosmm model version {obj.get('version')!r}")
    r_pp, _ = model_from_dict(obj["r_pp"])
    r_pm, _ = model_from_dict(obj["r_pm"])
    return RosmmModel(
        r_pp=r_pp,
        r_pm=r_pm,
        theta_c=float(obj["theta_c"]),
        variant=obj.get("variant", COEFFICIENT_ONLY),
    )
