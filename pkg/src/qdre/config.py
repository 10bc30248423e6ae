"""Default architectures and training hyperparameters, plus config hashing.

The defaults follow the reference benchmark setup: one fully-connected
ratio network per model kind, ReLU hidden layers, sigmoid output.  Hidden
widths are independent of the input dimension, which comes from the data.
"""

from __future__ import annotations

import hashlib
import json

from .errors import ConfigError
from .losses import BCE, REVERT, LossSpec, RatioTrickTransform
from .nn import TrainConfig

# hidden layer widths; input and the single sigmoid output are implied
HIDDEN_DIMS = {
    "mlp": (128, 256, 128),
    "bce-mlp": (128, 256, 128),
    "subratio-pp": (128, 128, 128),
    "subratio-pm": (128, 128, 128),
    "rosmm-c": (128, 128, 128),
    "rosmm-r": (128, 128, 128),
}

# loss kind, learning rate, batch size, patience
TRAINING_DEFAULTS = {
    "mlp": (REVERT, 3e-4, 256, 20),
    "bce-mlp": (BCE, 3e-4, 256, 20),
    "subratio-pp": (BCE, 1e-3, 128, 15),
    "subratio-pm": (BCE, 1e-3, 64, 15),
    "rosmm-c": (REVERT, 3e-4, 512, 10),
    "rosmm-r": (REVERT, 3e-4, 512, 10),
}

MODEL_KINDS = tuple(TRAINING_DEFAULTS)


def default_hidden_dims(kind: str) -> tuple[int, ...]:
    try:
        return HIDDEN_DIMS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}") from None


def default_train_config(
    kind: str,
    seed: int = 0,
    max_epochs: int = 500,
    transform: RatioTrickTransform | None = None,
    **overrides,
) -> TrainConfig:
    """TrainConfig for a model kind with optional field overrides.

    ``transform`` only affects revert-style kinds; the cross-entropy kinds
    always use the (0, 1) output interval.
    """
    if kind not in TRAINING_DEFAULTS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    loss_kind, lr, batch, patience = TRAINING_DEFAULTS[kind]
    if loss_kind == BCE:
        loss = LossSpec(kind=BCE)
    else:
        loss = LossSpec(transform=transform or RatioTrickTransform(), kind=REVERT)
    fields = {
        "learning_rate": lr,
        "batch_size": batch,
        "patience": patience,
        "max_epochs": max_epochs,
        "seed": seed,
        "loss": loss,
    }
    unknown = set(overrides) - set(fields) - {"epoch_cap"}
    if unknown:
        raise ConfigError(f"unknown training option(s): {sorted(unknown)}")
    fields.update(overrides)
    return TrainConfig(**fields)


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "patience": cfg.patience,
        "max_epochs": cfg.max_epochs,
        "epoch_cap": cfg.epoch_cap,
        "seed": cfg.seed,
        "loss": {
            "kind": cfg.loss.kind,
            "a": cfg.loss.transform.a,
            "b": cfg.loss.transform.b,
            "orientation": cfg.loss.transform.orientation,
        },
    }


def config_hash(obj) -> str:
    """12 hex chars of the sha256 of the canonical JSON encoding.

    Canonical: sorted keys, no whitespace.  Used to stamp outputs so a rerun
    with identical settings produces byte-identical files.
    """
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
