"""Dense feed-forward networks with exact backprop, Adam, and early stopping.

Deliberately minimal and dependency-free: float64 numpy throughout, layers
are (weights, bias, activation) triples, and the training loop is
deterministic given the config seed.  The risk being optimized is the
weighted empirical risk

    R = sum_i w_i * L(s(x_i), y_i) / sum_i |w_i|,

where the event weights w_i may be negative; normalizing by the total
absolute weight keeps gradients bounded when the signed sum is small.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, is_balanced
from .errors import DataError
from .losses import BCE, REVERT, LossSpec, RatioTrickTransform, transform
from .seeding import rng_for

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activate_deriv(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation, given pre-activation z and output a."""
    if name == "relu":
        return (z > 0).astype(float)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    biases: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float).ravel()
        if self.weights.ndim != 2 or self.weights.shape[1] != self.biases.shape[0]:
            raise DataError(
                f"layer shape mismatch: weights {self.weights.shape}, "
                f"biases {self.biases.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")


@dataclass
class MlpModel:
    layers: list[Layer]

    def __post_init__(self):
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[1] != cur.weights.shape[0]:
                raise DataError(
                    f"layer dimensions do not chain: {prev.weights.shape} -> "
                    f"{cur.weights.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(l.weights.shape[1] for l in self.layers[:-1])

    @property
    def output_activation(self) -> str:
        return self.layers[-1].activation

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.biases)
        return params

    def set_parameters(self, values) -> None:
        for param, value in zip(self.parameters(), values):
            param[...] = value

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers]
        )


def init_mlp(
    input_dim: int,
    hidden_dims: tuple[int, ...],
    seed: int,
    output_activation: str = "sigmoid",
) -> MlpModel:
    """Seeded initialization: Kaiming-uniform fan-in for the ReLU hidden
    layers, Xavier-uniform for the output layer, zero biases."""
    rng = rng_for(seed, "mlp-init")
    dims = [int(input_dim)] + [int(h) for h in hidden_dims] + [1]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        if last:
            bound = math.sqrt(6.0 / (fan_in + fan_out))
        else:
            bound = math.sqrt(6.0 / fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(
            Layer(weights, np.zeros(fan_out), output_activation if last else "relu")
        )
    return MlpModel(layers)


def forward_cache(model: MlpModel, X: np.ndarray):
    """All pre-activations and activations, for backprop."""
    a = X
    zs, acts = [], [a]
    for layer in model.layers:
        z = a @ layer.weights + layer.biases
        a = _activate(layer.activation, z)
        zs.append(z)
        acts.append(a)
    return zs, acts


def backprop_output_grad(model: MlpModel, zs, acts, dl_dz: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients given per-sample risk gradients at the output
    pre-activation.  ``dl_dz`` must already carry any sample weighting."""
    delta = np.asarray(dl_dz, dtype=float)[:, None]
    grads: list[np.ndarray] = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        grads.append(delta.sum(axis=0))  # biases
        grads.append(acts[i].T @ delta)  # weights
        if i > 0:
            prev = model.layers[i - 1]
            delta = (delta @ layer.weights.T) * _activate_deriv(
                prev.activation, zs[i - 1], acts[i]
            )
    grads.reverse()
    return grads


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != model.input_dim:
        raise DataError(
            f"input has dimension {X.shape[1]}, model expects {model.input_dim}"
        )
    return X, scalar


def forward(model: MlpModel, x):
    """Returns (s, z): final output and final pre-activation logit."""
    X, scalar = _as_batch(model, x)
    zs, acts = forward_cache(model, X)
    s = acts[-1][:, 0]
    z = zs[-1][:, 0]
    if scalar:
        return float(s[0]), float(z[0])
    return s, z


def predict_ratio(model: MlpModel, x, output_map):
    """Density-ratio estimate from classifier outputs.

    ``output_map`` is either a RatioTrickTransform (applied to s) or a
    LossSpec (whose :meth:`ratio` also covers the cross-entropy baseline).
    """
    s, _ = forward(model, x)
    if isinstance(output_map, RatioTrickTransform):
        return transform(output_map, s)
    if isinstance(output_map, LossSpec):
        return output_map.ratio(s)
    raise TypeError(f"output_map must be RatioTrickTransform or LossSpec, got {output_map!r}")


def weighted_risk(model: MlpModel, batch: Dataset, loss: LossSpec) -> float:
    """Signed-weight empirical risk, normalized by total absolute weight."""
    if len(batch) == 0:
        raise DataError("empty batch")
    s, _ = forward(model, batch.X)
    denom = float(np.sum(np.abs(batch.w)))
    if denom == 0.0:
        raise DataError("zero total absolute weight")
    return float(np.sum(batch.w * loss.loss(s, batch.y)) / denom)


def backward(model: MlpModel, batch: Dataset, loss: LossSpec) -> list[np.ndarray]:
    """Exact gradient of :func:`weighted_risk` in model parameters.

    Returned in :meth:`MlpModel.parameters` order.  A batch with zero total
    absolute weight contributes no gradient (all zeros) rather than raising,
    so optimizer steps remain well-defined on degenerate batches.
    """
    zs, acts = forward_cache(model, batch.X)
    s = acts[-1][:, 0]
    denom = float(np.sum(np.abs(batch.w)))
    if denom == 0.0:
        return [np.zeros_like(p) for p in model.parameters()]
    coeff = batch.w / denom
    dl_ds = loss.loss_grad(s, batch.y)
    ds_dz = _activate_deriv(model.layers[-1].activation, zs[-1][:, 0], s)
    return backprop_output_grad(model, zs, acts, coeff * dl_ds * ds_dz)


@dataclass
class Adam:
    """Standard Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    state.step(params, grads)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 256
    patience: int = 20
    max_epochs: int = 500
    epoch_cap: int = 100_000
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise DataError("batch_size, patience and max_epochs must be >= 1")


@dataclass
class TrainReport:
    epochs_run: int
    best_val_loss: float
    train_loss_curve: list[float]
    val_loss_curve: list[float]
    clamp_count: int
    final_params_checksum: str
    samples_per_epoch: int
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_val_loss": self.best_val_loss,
            "train_loss_curve": list(self.train_loss_curve),
            "val_loss_curve": list(self.val_loss_curve),
            "clamp_count": self.clamp_count,
            "final_params_checksum": self.final_params_checksum,
            "samples_per_epoch": self.samples_per_epoch,
            "diverged": self.diverged,
        }


class EarlyStopper:
    """Patience on the lowest validation loss seen so far.

    Counts consecutive epochs whose validation loss exceeds the running best;
    hitting ``patience`` stops training, and the parameters snapshotted at
    the best epoch are restored.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0
        self.snapshot: list[np.ndarray] | None = None

    def update(self, epoch: int, val_loss: float, params: list[np.ndarray]) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.snapshot = [p.copy() for p in params]
            self.bad_epochs = 0
        elif val_loss > self.best:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                return True
        else:
            self.bad_epochs = 0
        return False


def params_checksum(params: list[np.ndarray]) -> str:
    hasher = hashlib.sha256()
    for p in params:
        hasher.update(np.ascontiguousarray(p, dtype=float).tobytes())
    return hasher.hexdigest()


def _check_trainable(data: Dataset, loss: LossSpec, name: str) -> None:
    if len(data) == 0:
        raise DataError(f"{name} dataset is empty")
    if not (np.any(data.y == 0) and np.any(data.y == 1)):
        raise DataError(f"{name} dataset must contain both classes")
    if not is_balanced(data):
        s0, s1 = data.class_weight_sums()
        raise DataError(
            f"{name} dataset unbalanced (class sums {s0:.6g} vs {s1:.6g}); "
            "apply balance_classes first"
        )
    if loss.kind == REVERT and np.any(data.w[data.y == 0] <= 0):
        raise DataError(f"{name} dataset has non-positive class-0 weights")


def train(model: MlpModel, train_data: Dataset, val_data: Dataset, cfg: TrainConfig) -> TrainReport:
    """Minibatch Adam with per-epoch reshuffling and validation patience.

    An epoch visits min(len(train_data), epoch_cap) samples of a fresh
    shuffle.  Training aborts (with ``diverged=True``) if either risk goes
    non-finite; otherwise it runs until the patience rule or max_epochs,
    restoring the best-validation parameters.  ``clamp_count`` totals the
    output clampings seen while evaluating training batches.
    """
    _check_trainable(train_data, cfg.loss, "train")
    _check_trainable(val_data, cfg.loss, "validation")

    n = len(train_data)
    samples_per_epoch = min(n, cfg.epoch_cap)
    rng = rng_for(cfg.seed, "train-shuffle")
    optimizer = Adam(lr=cfg.learning_rate)
    params = model.parameters()
    stopper = EarlyStopper(cfg.patience)
    bound = cfg.loss.transform

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
            idx = order[start : start + cfg.batch_size]
            batch = train_data.subset(idx)
            zs, acts = forward_cache(model, batch.X)
            s = acts[-1][:, 0]
            clamp_count += bound.clamp_count(s)
            losses = cfg.loss.loss(s, batch.y)
            num += float(np.sum(batch.w * losses))
            den += float(np.sum(np.abs(batch.w)))

            denom = float(np.sum(np.abs(batch.w)))
            if denom > 0.0:
                coeff = batch.w / denom
                dl_ds = cfg.loss.loss_grad(s, batch.y)
                ds_dz = _activate_deriv(model.layers[-1].activation, zs[-1][:, 0], s)
                grads = backprop_output_grad(model, zs, acts, coeff * dl_ds * ds_dz)
                optimizer.step(params, grads)

        epochs_run = epoch
        train_loss = num / den if den > 0 else math.nan
        val_loss = weighted_risk(model, val_data, cfg.loss)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            diverged = True
            break
        train_curve.append(train_loss)
        val_curve.append(val_loss)
        if stopper.update(epoch, val_loss, params):
            break

    if stopper.snapshot is not None:
        model.set_parameters(stopper.snapshot)

    return TrainReport(
        epochs_run=epochs_run,
        best_val_loss=stopper.best if val_curve else math.inf,
        train_loss_curve=train_curve,
        val_loss_curve=val_curve,
        clamp_count=clamp_count,
        final_params_checksum=params_checksum(model.parameters()),
        samples_per_epoch=samples_per_epoch,
        diverged=diverged,
    )


def model_to_dict(model: MlpModel, loss: LossSpec) -> dict:
    return {
        "format": "qdre-mlp",
        "version": 1,
        "loss": {
            "kind": loss.kind,
            "a": loss.transform.a,
            "b": loss.transform.b,
            "orientation": loss.transform.orientation,
        },
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "biases": layer.biases.tolist(),
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
    }


def model_from_dict(obj: dict) -> tuple[MlpModel, LossSpec]:
    if obj.get("format") != "qdre-mlp":
        raise DataError(f"not an mlp model file (format={obj.get('format')!r})")
    if obj.get("version") != 1:
        raise DataError(f"unsupported mlp model version {obj.get('version')!r}")
    loss_obj = obj["loss"]
    loss = LossSpec(
        transform=RatioTrickTransform(
            a=float(loss_obj["a"]),
            b=float(loss_obj["b"]),
            orientation=int(loss_obj["orientation"]),
        ),
        kind=loss_obj["kind"],
    )
    layers = [
        Layer(
            np.array(entry["weights"], dtype=float),
            np.array(entry["biases"], dtype=float),
            entry["activation"],
        )
        for entry in obj["layers"]
    ]
    return MlpModel(layers), loss
