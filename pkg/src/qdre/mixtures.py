"""Signed Gaussian mixtures: synthetic generator with an analytic ratio oracle.

Each class-conditional quasiprobability density is a finite mixture of
diagonal-covariance Gaussians whose signed coefficients sum to one.  The
reference class (Y=0) must have all-positive coefficients, otherwise the
density ratio q(x|1)/q(x|0) is unbounded and ratio learning is ill-posed.

Sampling uses the standard unbiased signed-mixture scheme: draw component k
with probability |c_k| / sum|c_j| and assign weight sign(c_k) * sum|c_j|, so
the weighted empirical measure estimates the signed density with unit total
mass per class in expectation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, NumericsError
from .seeding import rng_for

_TINY_DENSITY = 1e-300


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture term: N(mean, diag(cov)) scaled by a signed coefficient."""

    mean: tuple[float, ...]
    cov: tuple[float, ...]
    coefficient: float

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in np.atleast_1d(self.mean)))
        object.__setattr__(self, "cov", tuple(float(v) for v in np.atleast_1d(self.cov)))
        if len(self.mean) != len(self.cov):
            raise ConfigError(
                f"mean has dimension {len(self.mean)} but cov has {len(self.cov)}"
            )
        if any(v <= 0 for v in self.cov):
            raise ConfigError(f"covariance diagonal must be positive, got {self.cov}")
        if not np.isfinite(self.coefficient) or self.coefficient == 0:
            raise ConfigError(f"coefficient must be finite and nonzero, got {self.coefficient}")


@dataclass(frozen=True)
class SignedMixtureSpec:
    """Class-conditional signed mixtures for the reference (Y=0) and target (Y=1)."""

    reference: tuple[GaussianComponent, ...]
    target: tuple[GaussianComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "target", tuple(self.target))
        for name, comps in (("reference", self.reference), ("target", self.target)):
            if not comps:
                raise ConfigError(f"{name} mixture has no components")
            total = sum(c.coefficient for c in comps)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"{name} coefficients sum to {total}, expected 1")
            dims = {len(c.mean) for c in comps}
            if len(dims) != 1:
                raise ConfigError(f"{name} components have mixed dimensions {sorted(dims)}")
        if any(c.coefficient <= 0 for c in self.reference):
            raise ConfigError("reference mixture must have all-positive coefficients")
        if len(self.reference[0].mean) != len(self.target[0].mean):
            raise ConfigError("reference and target dimensions differ")

    @property
    def d(self) -> int:
        return len(self.reference[0].mean)

    def components_for(self, y: int) -> tuple[GaussianComponent, ...]:
        if y == 0:
            return self.reference
        if y == 1:
            return self.target
        raise ValueError(f"class label must be 0 or 1, got {y}")

    def to_dict(self) -> dict:
        def comps(items):
            return [
                {"mean": list(c.mean), "cov": list(c.cov), "coefficient": c.coefficient}
                for c in items
            ]

        return {"reference": comps(self.reference), "target": comps(self.target)}

    @classmethod
    def from_dict(cls, obj: dict) -> "SignedMixtureSpec":
        if not isinstance(obj, dict):
            raise ConfigError(f"mixture spec must be an object, got {type(obj).__name__}")
        parts = {}
        for name in ("reference", "target"):
            if name not in obj:
                raise ConfigError(f"{name}: missing")
            comps = obj[name]
            if not isinstance(comps, list):
                raise ConfigError(f"{name}: expected a list of components")
            built = []
            for i, comp in enumerate(comps):
                where = f"{name}[{i}]"
                if not isinstance(comp, dict):
                    raise ConfigError(f"{where}: expected an object")
                for key in ("mean", "cov", "coefficient"):
                    if key not in comp:
                        raise ConfigError(f"{where}.{key}: missing")
                try:
                    built.append(
                        GaussianComponent(
                            mean=comp["mean"], cov=comp["cov"], coefficient=comp["coefficient"]
                        )
                    )
                except (ConfigError, TypeError, ValueError) as exc:
                    raise ConfigError(f"{where}: {exc}") from exc
            parts[name] = tuple(built)
        try:
            return cls(reference=parts["reference"], target=parts["target"])
        except ConfigError as exc:
            raise ConfigError(str(exc)) from exc


def load_spec(path) -> SignedMixtureSpec:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return SignedMixtureSpec.from_dict(obj)


def save_spec(spec: SignedMixtureSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def _gaussian_pdf(x: np.ndarray, mean, cov) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z2 = np.sum((x - mean) ** 2 / cov, axis=-1)
    norm = np.sqrt((2.0 * np.pi) ** mean.size * np.prod(cov))
    return np.exp(-0.5 * z2) / norm


def analytic_density(spec: SignedMixtureSpec, y: int, x) -> np.ndarray | float:
    """Signed class-conditional density sum_k c_k N(x; mean_k, cov_k)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.d:
        raise DataError(f"points have dimension {pts.shape[1]}, spec has {spec.d}")
    out = np.zeros(pts.shape[0])
    for comp in spec.components_for(y):
        out += comp.coefficient * _gaussian_pdf(pts, comp.mean, comp.cov)
    return float(out[0]) if scalar else out


def analytic_ratio(spec: SignedMixtureSpec, x) -> np.ndarray | float:
    """True density ratio q(x|1)/q(x|0); may be negative where the target dips."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim <= 1
    pts = np.atleast_2d(x)
    q0 = np.atleast_1d(analytic_density(spec, 0, pts))
    q1 = np.atleast_1d(analytic_density(spec, 1, pts))
    if np.any(np.abs(q0) < _TINY_DENSITY):
        raise NumericsError("reference density vanishes at a requested point")
    out = q1 / q0
    return float(out[0]) if scalar else out


def sample_mixture(spec: SignedMixtureSpec, n: int, seed: int) -> Dataset:
    """Draw n weighted samples per class; deterministic given the seed."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    parts_X, parts_w, parts_y = [], [], []
    for y in (0, 1):
        comps = spec.components_for(y)
        rng = rng_for(seed, f"sample-class{y}")
        abs_coeff = np.array([abs(c.coefficient) for c in comps])
        total_abs = float(abs_coeff.sum())
        probs = abs_coeff / total_abs
        choice = rng.choice(len(comps), size=n, p=probs)
        X = np.empty((n, spec.d))
        w = np.empty(n)
        for k, comp in enumerate(comps):
            mask = choice == k
            m = int(mask.sum())
            if m == 0:
                continue
            std = np.sqrt(np.asarray(comp.cov))
            X[mask] = np.asarray(comp.mean) + rng.standard_normal((m, spec.d)) * std
            w[mask] = np.sign(comp.coefficient) * total_abs
        parts_X.append(X)
        parts_w.append(w)
        parts_y.append(np.full(n, y, dtype=int))
    return Dataset(np.concatenate(parts_X), np.concatenate(parts_w), np.concatenate(parts_y))


def positive_negative_parts(
    spec: SignedMixtureSpec, y: int
) -> tuple[tuple[GaussianComponent, ...], tuple[GaussianComponent, ...], float]:
    """Split a class mixture into normalized positive/negative parts.

    Returns (positive components renormalized to mass 1, negative components
    renormalized to mass 1 with signs flipped, positive mass m+).  The signed
    density then decomposes as m+ * p_pos - (m+ - 1) * p_neg.
    """
    comps = spec.components_for(y)
    pos = [c for c in comps if c.coefficient > 0]
    neg = [c for c in comps if c.coefficient < 0]
    m_pos = sum(c.coefficient for c in pos)
    m_neg = -sum(c.coefficient for c in neg)
    pos_norm = tuple(
        GaussianComponent(c.mean, c.cov, c.coefficient / m_pos) for c in pos
    )
    neg_norm = tuple(
        GaussianComponent(c.mean, c.cov, -c.coefficient / m_neg) for c in neg
    ) if neg else ()
    assert abs(m_pos - m_neg - 1.0) < 1e-9
    return pos_norm, neg_norm, float(m_pos)


def oracle_subratios(spec: SignedMixtureSpec):
    """Exact sub-ratio functions (r_pp, r_pm) and the true mixture coefficient.

    r_pp(x) = p_pos(x|1) / q(x|0) and r_pm(x) = p_neg(x|1) / q(x|0) with both
    target parts normalized to probability densities; the true coefficient is
    the positive mass of the target.  Requires the target to contain
    negative-weight components.
    """
    pos_norm, neg_norm, c_true = positive_negative_parts(spec, 1)
    if not neg_norm:
        raise DataError("target mixture has no negative components")
    pos_spec = SignedMixtureSpec(reference=spec.reference, target=pos_norm)
    neg_spec = SignedMixtureSpec(reference=spec.reference, target=neg_norm)

    def r_pp(x):
        return analytic_ratio(pos_spec, x)

    def r_pm(x):
        return analytic_ratio(neg_spec, x)

    return r_pp, r_pm, c_true


def benchmark_spec() -> SignedMixtureSpec:
    """The 1-D signed benchmark used throughout the tests and scripts.

    Target 1.3*N(1, 0.8^2) - 0.3*N(-1, 0.8^2) against reference N(0, 2^2);
    the target density is negative left of roughly x = -0.47, so the true
    ratio takes values down to about -0.79.
    """
    return SignedMixtureSpec(
        reference=(GaussianComponent(mean=(0.0,), cov=(4.0,), coefficient=1.0),),
        target=(
            GaussianComponent(mean=(1.0,), cov=(0.64,), coefficient=1.3),
            GaussianComponent(mean=(-1.0,), cov=(0.64,), coefficient=-0.3),
        ),
    )
