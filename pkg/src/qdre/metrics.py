"""Evaluation metrics that stay well-defined for signed weights.

Three families:

* distances: exact weighted 1-D Wasserstein-1 and the extended sliced
  Wasserstein-1 between signed measures, 𝕊𝕎₁(μ, ν) = SW₁(μ⁺+ν⁻, ν⁺+μ⁻),
  which reduces to the usual sliced distance when all weights are positive;
* per-feature histogram scores: a variance-normalized χ² and the order-2
  Tsallis relative entropy;
* the reweighting closure: multiply reference weights by an estimated
  ratio and compare against the target sample, feature by feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError, NumericsError
from .seeding import rng_for


@dataclass(frozen=True)
class SignedEmpiricalMeasure:
    """Weighted point cloud; the weight sign carries the decomposition.

    μ = μ⁺ − μ⁻ where μ⁺ lives on the w > 0 rows and μ⁻ on the w < 0 rows
    with weights −w.  Zero-weight rows belong to neither side.
    """

    X: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        w = np.asarray(self.w, dtype=float).ravel()
        if X.shape[0] != w.shape[0]:
            raise DataError(f"{X.shape[0]} points but {w.shape[0]} weights")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(w))):
            raise DataError("non-finite entries in signed measure")
        X.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def positive_part(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.w > 0
        return self.X[mask], self.w[mask]

    def negative_part(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and (positive) weights of μ⁻."""
        mask = self.w < 0
        return self.X[mask], -self.w[mask]

    def total_mass(self) -> float:
        return float(np.sum(self.w))

    @classmethod
    def from_dataset(cls, data: Dataset, label: int | None = None) -> "SignedEmpiricalMeasure":
        if label is not None:
            data = data.class_subset(label)
        return cls(data.X, data.w)


@dataclass(frozen=True)
class SwConfig:
    n_projections: int = 50
    n_repeats: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_projections < 1 or self.n_repeats < 1:
            raise DataError("n_projections and n_repeats must be >= 1")


def w1_1d(x_u, w_u, x_v, w_v) -> float:
    """Exact 1-D Wasserstein-1 between two nonnegative weighted samples.

    Each side is normalized to unit mass, then the area between the two
    step CDFs is accumulated over the merged breakpoints.  Weights must be
    nonnegative with positive totals.
    """
    xu = np.asarray(x_u, dtype=float).ravel()
    wu = np.asarray(w_u, dtype=float).ravel()
    xv = np.asarray(x_v, dtype=float).ravel()
    wv = np.asarray(w_v, dtype=float).ravel()
    for x, w, name in ((xu, wu, "u"), (xv, wv, "v")):
        if x.shape != w.shape or x.size == 0:
            raise DataError(f"side {name}: empty or mismatched points/weights")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise DataError(f"side {name}: non-finite entries")
        if np.any(w < 0):
            raise DataError(f"side {name}: negative weights")
        if np.sum(w) <= 0:
            raise DataError(f"side {name}: zero total weight")

    order_u = np.argsort(xu, kind="stable")
    order_v = np.argsort(xv, kind="stable")
    xu, wu = xu[order_u], wu[order_u]
    xv, wv = xv[order_v], wv[order_v]
    cdf_u = np.concatenate(([0.0], np.cumsum(wu) / np.sum(wu)))
    cdf_v = np.concatenate(([0.0], np.cumsum(wv) / np.sum(wv)))
    if abs(cdf_u[-1] - cdf_v[-1]) > 1e-9:
        raise DataError("weight sums differ after normalization")

    grid = np.sort(np.concatenate([xu, xv]))
    deltas = np.diff(grid)
    f_u = cdf_u[np.searchsorted(xu, grid[:-1], side="right")]
    f_v = cdf_v[np.searchsorted(xv, grid[:-1], side="right")]
    return float(np.sum(np.abs(f_u - f_v) * deltas))


def draw_directions(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform directions on the (d-1)-sphere via normalized Gaussians."""
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0.0):
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(np.sum(bad)), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def merge_sides(
    mu: SignedEmpiricalMeasure, nu: SignedEmpiricalMeasure
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """The two nonnegative clouds μ⁺+ν⁻ and ν⁺+μ⁻, each normalized to unit
    weight.  Raises DataError when a merged side has no mass."""
    if mu.d != nu.d:
        raise DataError(f"dimension mismatch: {mu.d} vs {nu.d}")
    mu_pos, mu_neg = mu.positive_part(), mu.negative_part()
    nu_pos, nu_neg = nu.positive_part(), nu.negative_part()
    side_a = (
        np.concatenate([mu_pos[0], nu_neg[0]]),
        np.concatenate([mu_pos[1], nu_neg[1]]),
    )
    side_b = (
        np.concatenate([nu_pos[0], mu_neg[0]]),
        np.concatenate([nu_pos[1], mu_neg[1]]),
    )
    out = []
    for name, (X, w) in (("mu+ + nu-", side_a), ("nu+ + mu-", side_b)):
        total = float(np.sum(w))
        if total <= 0:
            raise DataError(f"merged side {name} has zero total weight")
        out.append((X, w / total))
    return out[0], out[1]


def extended_sw1(
    mu: SignedEmpiricalMeasure, nu: SignedEmpiricalMeasure, cfg: SwConfig
) -> tuple[float, float]:
    """Extended sliced W₁ between signed measures: mean and std over repeats.

    Each repeat draws cfg.n_projections directions with a repeat-derived
    seed and averages the exact 1-D distance of the projected merged
    clouds; repeats are independent, so evaluation order cannot change the
    result.  Swapping mu and nu swaps the two merged clouds and returns the
    bit-identical value.
    """
    (xa, wa), (xb, wb) = merge_sides(mu, nu)
    d = mu.d
    values = np.empty(cfg.n_repeats)
    for k in range(cfg.n_repeats):
        rng = rng_for(cfg.seed, f"sw-repeat-{k}")
        directions = draw_directions(cfg.n_projections, d, rng)
        acc = 0.0
        for direction in directions:
            acc += w1_1d(xa @ direction, wa, xb @ direction, wb)
        values[k] = acc / cfg.n_projections
    return float(np.mean(values)), float(np.std(values))


@dataclass(frozen=True)
class Histogram:
    """Per-bin weight sums of one weighted sample on fixed edges.

    sum_w2 carries the squared weights for variance estimates; underflow
    and overflow are discarded.
    """

    edges: np.ndarray
    sum_w: np.ndarray
    sum_w2: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float).ravel()
        sum_w = np.asarray(self.sum_w, dtype=float).ravel()
        sum_w2 = np.asarray(self.sum_w2, dtype=float).ravel()
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise DataError("edges must be strictly increasing with >= 2 entries")
        if sum_w.shape != (edges.size - 1,) or sum_w2.shape != sum_w.shape:
            raise DataError("bin arrays must have len(edges) - 1 entries")
        for arr in (edges, sum_w, sum_w2):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "sum_w", sum_w)
        object.__setattr__(self, "sum_w2", sum_w2)

    @property
    def n_bins(self) -> int:
        return self.sum_w.shape[0]

    def total(self) -> float:
        return float(np.sum(self.sum_w))

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "sum_w": self.sum_w.tolist(),
            "sum_w2": self.sum_w2.tolist(),
        }


def percentile_edges(values, n_bins: int = 50, lower: float = 0.5, upper: float = 99.5) -> np.ndarray:
    """Uniform bin edges over the pooled percentile range of the inputs."""
    pooled = np.concatenate([np.asarray(v, dtype=float).ravel() for v in values])
    if pooled.size == 0:
        raise DataError("no values to bin")
    if not np.all(np.isfinite(pooled)):
        raise DataError("non-finite values in binning input")
    lo, hi = np.percentile(pooled, [lower, upper])
    if not hi > lo:
        lo, hi = lo - 0.5, lo + 0.5
    return np.linspace(lo, hi, n_bins + 1)


def weighted_histogram(x, w, edges) -> Histogram:
    x = np.asarray(x, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if x.shape != w.shape:
        raise DataError(f"{x.size} values but {w.size} weights")
    sum_w, _ = np.histogram(x, bins=edges, weights=w)
    sum_w2, _ = np.histogram(x, bins=edges, weights=w * w)
    return Histogram(np.asarray(edges, dtype=float), sum_w, sum_w2)


def _check_same_binning(a: Histogram, b: Histogram) -> None:
    if not np.array_equal(a.edges, b.edges):
        raise DataError("histograms use different binnings")


def chi2_score(target: Histogram, reweighted: Histogram) -> float:
    """Mean over bins of (T_b − R_b)² / (σ²_T + σ²_R), σ² the per-bin Σw².

    Bins where both variances vanish (no entries on either side) carry no
    information and are skipped; the mean runs over the remaining bins.
    """
    _check_same_binning(target, reweighted)
    variance = target.sum_w2 + reweighted.sum_w2
    used = variance > 0
    n_used = int(np.sum(used))
    if n_used == 0:
        raise DataError("all bins empty on both sides")
    diff = target.sum_w[used] - reweighted.sum_w[used]
    return float(np.sum(diff * diff / variance[used]) / n_used)


def tsallis_d2_parts(target: Histogram, reweighted: Histogram) -> tuple[float, int]:
    """Order-2 Tsallis relative entropy and the excluded-bin count.

    Both histograms are normalized to unit (signed) total; the sum
    Σ (p_b − q_b)²/q_b runs over bins with q_b > 0, and bins with
    q_b ≤ 0 are excluded and counted.
    """
    _check_same_binning(target, reweighted)
    t_total = target.total()
    r_total = reweighted.total()
    if t_total == 0 or r_total == 0:
        raise DataError("cannot normalize a zero-total histogram")
    p = target.sum_w / t_total
    q = reweighted.sum_w / r_total
    admissible = q > 0
    excluded = int(np.sum(~admissible))
    if not np.any(admissible):
        raise DataError("all bins excluded (no positive denominator bins)")
    diff = p[admissible] - q[admissible]
    return float(np.sum(diff * diff / q[admissible])), excluded


def tsallis_d2(target: Histogram, reweighted: Histogram) -> float:
    return tsallis_d2_parts(target, reweighted)[0]


@dataclass(frozen=True)
class FeatureClosure:
    feature: int
    target: Histogram
    reference: Histogram
    reweighted: Histogram
    chi2: float
    tsallis: float
    tsallis_excluded_bins: int


@dataclass(frozen=True)
class ClosureReport:
    features: tuple[FeatureClosure, ...]
    sw: tuple[float, float] | None

    def score_rows(self, model: str) -> list[dict]:
        """Flat (model, feature, metric, value) rows for score tables."""
        rows = []
        for fc in self.features:
            rows.append({"model": model, "feature": fc.feature, "metric": "chi2", "value": fc.chi2})
            rows.append(
                {"model": model, "feature": fc.feature, "metric": "tsallis_d2", "value": fc.tsallis}
            )
        if self.sw is not None:
            rows.append(
                {
                    "model": model,
                    "feature": "all",
                    "metric": "extended_sw1",
                    "value": self.sw[0],
                    "std": self.sw[1],
                }
            )
        return rows


def reweight_closure(
    reference: Dataset,
    model_ratio,
    target: Dataset,
    features=None,
    n_bins: int = 50,
    sw_cfg: SwConfig | None = None,
) -> ClosureReport:
    """Importance-reweight the reference by model_ratio and score the match.

    For each requested feature, builds the (target, raw reference,
    reweighted reference) histogram triple on shared percentile edges and
    computes χ² and Tsallis scores of target vs reweighted.  When sw_cfg is
    given, also computes the extended sliced W₁ between the target measure
    and the reweighted reference measure over all features.  Non-finite
    ratio values abort with the offending row indices.
    """
    if reference.d != target.d:
        raise DataError(f"dimension mismatch: reference {reference.d}, target {target.d}")
    if len(reference) == 0 or len(target) == 0:
        raise DataError("reference and target must be nonempty")
    ratios = np.asarray(model_ratio(reference.X), dtype=float).ravel()
    if ratios.shape[0] != len(reference):
        raise DataError(
            f"ratio function returned {ratios.shape[0]} values for {len(reference)} rows"
        )
    bad = ~np.isfinite(ratios)
    if np.any(bad):
        idx = np.nonzero(bad)[0]
        shown = ", ".join(str(i) for i in idx[:10])
        raise NumericsError(
            f"non-finite ratio at {idx.size} reference row(s), first indices: {shown}"
        )
    rw = reference.w * ratios

    if features is None:
        features = range(reference.d)
    closures = []
    for j in features:
        j = int(j)
        if not 0 <= j < reference.d:
            raise DataError(f"feature index {j} out of range for d={reference.d}")
        edges = percentile_edges([target.X[:, j], reference.X[:, j]], n_bins)
        hist_t = weighted_histogram(target.X[:, j], target.w, edges)
        hist_ref = weighted_histogram(reference.X[:, j], reference.w, edges)
        hist_rw = weighted_histogram(reference.X[:, j], rw, edges)
        chi2 = chi2_score(hist_t, hist_rw)
        try:
            tsallis, excluded = tsallis_d2_parts(hist_t, hist_rw)
        except DataError:
            # degenerate reweighting (no admissible bins): report the score
            # as undefined instead of aborting the whole closure
            tsallis, excluded = float("nan"), hist_t.n_bins
        closures.append(
            FeatureClosure(
                feature=j,
                target=hist_t,
                reference=hist_ref,
                reweighted=hist_rw,
                chi2=chi2,
                tsallis=tsallis,
                tsallis_excluded_bins=excluded,
            )
        )

    sw = None
    if sw_cfg is not None:
        sw = extended_sw1(
            SignedEmpiricalMeasure(target.X, target.w),
            SignedEmpiricalMeasure(reference.X, rw),
            sw_cfg,
        )
    return ClosureReport(features=tuple(closures), sw=sw)
