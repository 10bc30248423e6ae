"""Weighted two-class datasets: containers, balancing, splitting, and I/O.

A sample is a feature vector, a signed event weight, and a class label in
{0, 1}.  Datasets are array-backed (one matrix, two vectors) and treated as
immutable after construction; zero-weight rows are dropped at ingest so a
stored weight is always finite and nonzero.

Text formats: CSV with header ``x0,...,x{d-1},weight,label`` and JSONL with
the same flat keys, floats written in shortest round-trip form so
save -> load is lossless for finite doubles.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .seeding import rng_for


@dataclass(frozen=True)
class WeightedSample:
    features: np.ndarray
    weight: float
    label: int


@dataclass
class Dataset:
    """Array-backed collection of weighted, labeled samples."""

    X: np.ndarray
    w: np.ndarray
    y: np.ndarray
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        w = np.asarray(self.w, dtype=float).ravel()
        y = np.asarray(self.y).ravel().astype(int)
        if not (X.shape[0] == w.shape[0] == y.shape[0]):
            raise DataError(
                f"inconsistent lengths: {X.shape[0]} rows, {w.shape[0]} weights, "
                f"{y.shape[0]} labels"
            )
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if not np.all(np.isfinite(w)):
            raise DataError("non-finite weights")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        keep = w != 0.0
        if not np.all(keep):
            self.n_dropped = int(np.sum(~keep))
            X, w, y = X[keep], w[keep], y[keep]
        for arr in (X, w, y):
            arr.setflags(write=False)
        self.X, self.w, self.y = X, w, y

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.w[mask], self.y[mask])

    def class_subset(self, label: int) -> "Dataset":
        return self.subset(self.y == label)

    def class_weight_sums(self) -> tuple[float, float]:
        return (
            float(np.sum(self.w[self.y == 0])),
            float(np.sum(self.w[self.y == 1])),
        )

    def samples(self):
        for i in range(len(self)):
            yield WeightedSample(self.X[i], float(self.w[i]), int(self.y[i]))

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            return cls.empty(0)
        X = np.stack([np.atleast_1d(np.asarray(s.features, dtype=float)) for s in samples])
        w = np.array([s.weight for s in samples], dtype=float)
        y = np.array([s.label for s in samples], dtype=int)
        return cls(X, w, y)

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def concatenate(cls, parts) -> "Dataset":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty(0)
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.w for p in parts]),
            np.concatenate([p.y for p in parts]),
        )


def balance_classes(data: Dataset) -> Dataset:
    """Rescale weights so each class has signed weight sum exactly 1.

    Training treats the event weights as standing in for q(x|y)p(y) with
    equal priors, so the per-class sums must match; unit sums also make risk
    values comparable across sample sizes.
    """
    sums = data.class_weight_sums()
    w = data.w.copy()
    for label, total in enumerate(sums):
        mask = data.y == label
        if not np.any(mask):
            continue
        if total <= 0:
            raise DataError(f"class {label} has non-positive signed weight sum {total}")
        w[mask] = w[mask] / total
    return Dataset(data.X, w, data.y)


def is_balanced(data: Dataset, rtol: float = 1e-6) -> bool:
    s0, s1 = data.class_weight_sums()
    scale = max(abs(s0), abs(s1), 1e-300)
    return abs(s0 - s1) / scale <= rtol


def split(
    data: Dataset,
    fractions: tuple[float, float, float] = (0.65, 0.15, 0.20),
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint train/validation/test partition, stratified by class.

    Within each class the (seeded) shuffled indices are cut at
    floor(f_train*n) and floor((f_train+f_val)*n), so fractions that divide
    the class sizes produce exact counts.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise DataError(f"need three nonnegative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {fractions}")

    rng = rng_for(seed, "split")
    idx_parts: list[list[np.ndarray]] = [[], [], []]
    for label in (0, 1):
        class_idx = np.flatnonzero(data.y == label)
        if class_idx.size == 0:
            continue
        perm = class_idx[rng.permutation(class_idx.size)]
        n = perm.size
        n_train = int(np.floor(fractions[0] * n))
        n_val = int(np.floor((fractions[0] + fractions[1]) * n)) - n_train
        idx_parts[0].append(perm[:n_train])
        idx_parts[1].append(perm[n_train : n_train + n_val])
        idx_parts[2].append(perm[n_train + n_val :])

    out = []
    for k, (name, frac) in enumerate(zip(("train", "val", "test"), fractions)):
        idx = np.sort(np.concatenate(idx_parts[k])) if idx_parts[k] else np.zeros(0, dtype=int)
        part = data.subset(idx)
        if frac > 0 and len(data) > 0:
            for label in (0, 1):
                if np.any(data.y == label) and not np.any(part.y == label):
                    raise DataError(
                        f"{name} split has no class-{label} samples; "
                        f"fractions {fractions} too small for class sizes"
                    )
        out.append(part)
    return tuple(out)


def _format_float(x: float) -> str:
    return repr(float(x))


def save_csv(data: Dataset, path) -> None:
    path = Path(path)
    header = ",".join([f"x{i}" for i in range(data.d)] + ["weight", "label"])
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(len(data)):
            cells = [_format_float(v) for v in data.X[i]]
            cells.append(_format_float(data.w[i]))
            cells.append(str(int(data.y[i])))
            fh.write(",".join(cells) + "\n")


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    lines = [line for line in lines if line.strip() != ""]
    if not lines:
        warnings.warn(f"{path}: empty file, returning empty dataset")
        return Dataset.empty(0)

    header = lines[0].split(",")
    expected = [f"x{i}" for i in range(len(header) - 2)] + ["weight", "label"]
    if header != expected:
        raise DataError(f"{path}:1: bad header {header!r}, expected {expected!r}")
    d = len(header) - 2

    rows_X, rows_w, rows_y = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != d + 2:
            raise DataError(f"{path}:{lineno}: expected {d + 2} columns, got {len(cells)}")
        try:
            rows_X.append([float(c) for c in cells[:d]])
            rows_w.append(float(cells[d]))
            rows_y.append(int(cells[d + 1]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not rows_X:
        return Dataset.empty(d)
    try:
        return Dataset(np.array(rows_X), np.array(rows_w), np.array(rows_y))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_jsonl(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(data)):
            record = {f"x{j}": float(data.X[i, j]) for j in range(data.d)}
            record["weight"] = float(data.w[i])
            record["label"] = int(data.y[i])
            fh.write(json.dumps(record) + "\n")


def load_jsonl(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh]
    lines = [line for line in lines if line]
    if not lines:
        warnings.warn(f"{path}: empty file, returning empty dataset")
        return Dataset.empty(0)

    rows_X, rows_w, rows_y = [], [], []
    d = None
    for lineno, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        keys = [k for k in record if k.startswith("x")]
        if d is None:
            d = len(keys)
        if len(keys) != d or "weight" not in record or "label" not in record:
            raise DataError(f"{path}:{lineno}: expected keys x0..x{d - 1}, weight, label")
        try:
            rows_X.append([float(record[f"x{j}"]) for j in range(d)])
            rows_w.append(float(record["weight"]))
            rows_y.append(int(record["label"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    try:
        return Dataset(np.array(rows_X), np.array(rows_w), np.array(rows_y))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save(data: Dataset, path, fmt: str | None = None) -> None:
    fmt = fmt or _infer_format(path)
    if fmt == "csv":
        save_csv(data, path)
    elif fmt == "jsonl":
        save_jsonl(data, path)
    else:
        raise DataError(f"unknown dataset format {fmt!r}")


def load(path, fmt: str | None = None) -> Dataset:
    fmt = fmt or _infer_format(path)
    if fmt == "csv":
        return load_csv(path)
    if fmt == "jsonl":
        return load_jsonl(path)
    raise DataError(f"unknown dataset format {fmt!r}")


def _infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise DataError(f"cannot infer dataset format from {path}")
