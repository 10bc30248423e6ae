"""Bounded-output ratio-trick transforms and the loss family they induce.

A classifier s(x) with outputs in a finite interval (a, b) can represent an
arbitrary real-valued density ratio through the transformation

    T(s) = 1/(s - a) + 1/(s - b),

a strictly decreasing homeomorphism (a, b) -> R.  Its anti-derivative yields
the loss

    L(s, y) = y*s - (1 - y) * log((s - a)(b - s)),

whose population minimizer satisfies T(s*(x)) = q(x|Y=1)/q(x|Y=0) on balanced
classes, including where that ratio is negative.  Standard binary
cross-entropy is kept alongside as the baseline whose implied map s/(1-s)
only reaches positive ratios.

Everything here is pure and vectorized over numpy arrays; scalars in, scalars
out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS_CLAMP = 1e-7
TOL_CONVEX = 1e-9


@dataclass(frozen=True)
class RatioTrickTransform:
    """The map between classifier outputs in (a, b) and real-valued ratios.

    ``orientation`` flips T -> -T.  With +1 the transform is strictly
    decreasing and the induced g(s) = -int T is convex, which is the
    orientation used for training; -1 exists so the concave branch is
    testable.
    """

    a: float = 0.0
    b: float = 1.0
    orientation: int = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"require a < b, got a={self.a}, b={self.b}")
        if self.orientation not in (-1, 1):
            raise ValueError(f"orientation must be +1 or -1, got {self.orientation}")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a + self.b)

    def clamp(self, s):
        """Clip s into [a + EPS_CLAMP, b - EPS_CLAMP]."""
        return np.clip(s, self.a + EPS_CLAMP, self.b - EPS_CLAMP)

    def clamp_count(self, s) -> int:
        """Number of entries that clipping would move."""
        s = np.asarray(s)
        return int(np.sum(s < self.a + EPS_CLAMP) + np.sum(s > self.b - EPS_CLAMP))

    def __call__(self, s):
        return transform(self, s)

    def inverse(self, r):
        return inverse_transform(self, r)


def transform(t: RatioTrickTransform, s):
    """T(s) = orientation * (1/(s - a) + 1/(s - b)) after clamping s.

    Raises ValueError for s outside [a, b]; values merely inside the clamp
    margin are clipped, which bounds |T| by about 1/EPS_CLAMP.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < t.a) or np.any(s > t.b):
        raise ValueError(f"classifier output outside [{t.a}, {t.b}]")
    sc = t.clamp(s)
    out = t.orientation * (1.0 / (sc - t.a) + 1.0 / (sc - t.b))
    return float(out) if out.ndim == 0 else out


def inverse_transform(t: RatioTrickTransform, r):
    """The unique s in (a, b) with transform(t, s) = r.

    Solving r = 1/(s-a) + 1/(s-b) gives the quadratic root

        s = (r*(a+b) + 2 - sqrt(r^2*(b-a)^2 + 4)) / (2r),

    which is rewritten by rationalizing the numerator as

        s = (a+b)/2 - r*(b-a)^2 / (2*(2 + sqrt(r^2*(b-a)^2 + 4))).

    The rationalized form is exact at r = 0 (the removable singularity,
    s = midpoint) and suffers no cancellation for small |r|.
    """
    r = np.asarray(r, dtype=float) * t.orientation
    width = t.b - t.a
    root = np.sqrt((r * width) ** 2 + 4.0)
    s = t.midpoint - r * width**2 / (2.0 * (2.0 + root))
    return float(s) if s.ndim == 0 else s


def transform_derivative(t: RatioTrickTransform, s):
    """dT/ds, needed for chain rules through the inverse map."""
    sc = t.clamp(np.asarray(s, dtype=float))
    out = t.orientation * (-1.0 / (sc - t.a) ** 2 - 1.0 / (sc - t.b) ** 2)
    return float(out) if out.ndim == 0 else out


def logit_to_ratio(z):
    """Ratio implied by a sigmoid-output logit under the (0, 1) transform.

    T(sigmoid(z)) simplifies to -2*sinh(z); this form stays exact where the
    sigmoid saturates.
    """
    z = np.asarray(z, dtype=float)
    out = -2.0 * np.sinh(z)
    return float(out) if out.ndim == 0 else out


REVERT = "revert"
BCE = "bce"


@dataclass(frozen=True)
class LossSpec:
    """A binary-classification loss plus the transform tying s to the ratio.

    kind "revert": L(s, y) = y*s - (1-y)*log((s-a)(b-s)); ratio T(s).
    kind "bce":    standard cross-entropy on (0, 1); implied ratio s/(1-s),
                   positive by construction.
    """

    transform: RatioTrickTransform = field(default_factory=RatioTrickTransform)
    kind: str = REVERT

    def __post_init__(self):
        if self.kind not in (REVERT, BCE):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == BCE and (self.transform.a, self.transform.b) != (0.0, 1.0):
            raise ValueError("bce loss requires outputs in (0, 1)")

    def loss(self, s, y):
        if self.kind == REVERT:
            return revert_loss(self, s, y)
        return bce_loss(self, s, y)

    def loss_grad(self, s, y):
        if self.kind == REVERT:
            return revert_loss_grad(self, s, y)
        return bce_loss_grad(self, s, y)

    def ratio(self, s):
        """Map classifier outputs to density-ratio estimates."""
        if self.kind == REVERT:
            return transform(self.transform, s)
        sc = self.transform.clamp(np.asarray(s, dtype=float))
        out = sc / (1.0 - sc)
        return float(out) if out.ndim == 0 else out

    def ratio_to_output(self, r):
        """Inverse of :meth:`ratio`; only defined for the revert kind."""
        if self.kind != REVERT:
            raise ValueError("bce ratio map is not invertible over all of R")
        return inverse_transform(self.transform, r)


def revert_loss(spec: LossSpec, s, y):
    """y*s - (1-y)*(log(s - a) + log(b - s)) with s clamped away from a, b."""
    t = spec.transform
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sc = t.clamp(s)
    out = y * sc - (1.0 - y) * t.orientation * (np.log(sc - t.a) + np.log(t.b - sc))
    return float(out) if out.ndim == 0 else out


def revert_loss_grad(spec: LossSpec, s, y):
    """dL/ds of :func:`revert_loss`: y - (1-y)*T(s) inside the clamp window.

    Outside the window the clamped loss is locally constant, so the gradient
    is zero there; this keeps the analytic gradient equal to finite
    differences of the loss actually evaluated.
    """
    t = spec.transform
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sc = t.clamp(s)
    inside = (s > t.a + EPS_CLAMP) & (s < t.b - EPS_CLAMP)
    grad = (y - (1.0 - y) * t.orientation * (1.0 / (sc - t.a) + 1.0 / (sc - t.b))) * inside
    return float(grad) if grad.ndim == 0 else grad


def bce_loss(spec: LossSpec, s, y):
    """-(y*log(s) + (1-y)*log(1-s)) with the same clamping policy."""
    sc = spec.transform.clamp(np.asarray(s, dtype=float))
    y = np.asarray(y, dtype=float)
    out = -(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc))
    return float(out) if out.ndim == 0 else out


def bce_loss_grad(spec: LossSpec, s, y):
    t = spec.transform
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sc = t.clamp(s)
    inside = (s > t.a + EPS_CLAMP) & (s < t.b - EPS_CLAMP)
    grad = (-y / sc + (1.0 - y) / (1.0 - sc)) * inside
    return float(grad) if grad.ndim == 0 else grad


@dataclass(frozen=True)
class LagrangianProbe:
    """Pointwise class-conditional density values at a single probe point.

    q0 and q1 may be negative (quasiprobability densities); the priors are
    the class probabilities, equal by default.
    """

    q1: float
    q0: float
    prior0: float = 0.5
    prior1: float = 0.5

    def __post_init__(self):
        if not math.isclose(self.prior0 + self.prior1, 1.0, abs_tol=1e-12):
            raise ValueError("priors must sum to 1")


def lagrangian_value(probe: LagrangianProbe, spec: LossSpec, s):
    """Pointwise risk integrand g(s)*q0*p0 + s*q1*p1 for the revert family.

    g(s) = -orientation * (log(s-a) + log(b-s)) is the anti-derivative of
    -T; convex in s exactly when orientation +1 and q0 >= 0.
    """
    t = spec.transform
    sc = t.clamp(np.asarray(s, dtype=float))
    g = -t.orientation * (np.log(sc - t.a) + np.log(t.b - sc))
    out = g * probe.q0 * probe.prior0 + sc * probe.q1 * probe.prior1
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConvexityReport:
    min_second_derivative: float
    is_convex: bool


def convexity_scan(
    probe: LagrangianProbe,
    spec: LossSpec,
    grid,
    tol: float = TOL_CONVEX,
) -> ConvexityReport:
    """Numerical convexity check of the Lagrangian along a grid in s.

    Uses divided-difference second derivatives (valid for non-uniform,
    strictly increasing grids of length >= 3); convex iff the minimum is
    above -tol.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise ValueError("grid must be one-dimensional with at least 3 points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    t = spec.transform
    if grid[0] <= t.a + EPS_CLAMP or grid[-1] >= t.b - EPS_CLAMP:
        raise ValueError("grid must lie strictly inside the clamped domain")

    values = lagrangian_value(probe, spec, grid)
    h_lo = grid[1:-1] - grid[:-2]
    h_hi = grid[2:] - grid[1:-1]
    second = 2.0 * (
        (values[2:] - values[1:-1]) / (h_hi * (h_lo + h_hi))
        - (values[1:-1] - values[:-2]) / (h_lo * (h_lo + h_hi))
    )
    min_second = float(np.min(second))
    return ConvexityReport(min_second_derivative=min_second, is_convex=min_second >= -tol)
