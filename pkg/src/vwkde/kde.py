"""Weighted kernel density evaluation and bandwidth selection.

Density arithmetic happens in log space throughout: high-dimensional kernel
values underflow double precision long before log densities do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .core import Dataset, as_points, as_seed
from .errors import InsufficientDataError, InvalidConfigError, InvalidDataError

__all__ = [
    "KernelSpec",
    "WeightedKde",
    "kernel_eval",
    "kde_eval",
    "kde_loo_eval",
    "loo_log_likelihood",
    "loo_log_likelihood_grid",
    "select_bandwidth",
    "default_bandwidth_grid",
]


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel of bandwidth h.

    The kernel is normalized (integrates to 1), has zero first moment, and
    identity second moment after standardization; those moment conditions are
    what the bias expansion of the weighted KDE relies on.
    """

    bandwidth: float

    def __post_init__(self):
        h = float(self.bandwidth)
        if not math.isfinite(h) or h <= 0:
            raise InvalidConfigError(f"bandwidth must be positive, got {self.bandwidth!r}")
        object.__setattr__(self, "bandwidth", h)

    def log_normalizer(self, dim: int) -> float:
        """log of (2 pi h^2)^(-D/2)."""
        return -0.5 * dim * math.log(2.0 * math.pi * self.bandwidth**2)


def sq_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (len(x), len(y))."""
    return cdist(np.atleast_2d(x), np.atleast_2d(y), "sqeuclidean")


def log_kernel_matrix(spec: KernelSpec, x, y, sqd: np.ndarray | None = None) -> np.ndarray:
    """log k_h(x_i, y_j) for all pairs; ``sqd`` may carry precomputed squared distances."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise InvalidConfigError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if sqd is None:
        sqd = sq_distances(x, y)
    h = spec.bandwidth
    return spec.log_normalizer(x.shape[1]) - sqd / (2.0 * h * h)


def kernel_eval(spec: KernelSpec, x, x_prime) -> float:
    """(2 pi h^2)^(-D/2) exp(-||x - x'||^2 / (2 h^2)); symmetric in its arguments."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise InvalidConfigError(f"shape mismatch: {x.shape} vs {x_prime.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_prime))):
        raise InvalidDataError("non-finite kernel arguments")
    return float(np.exp(log_kernel_matrix(spec, x[None, :], x_prime[None, :])[0, 0]))


@dataclass(frozen=True)
class WeightedKde:
    """KDE with per-support-point weights: p(x) = (1/N) sum_j w_j k_h(x, x_j).

    Weights must be strictly positive; they are stored as logs so that very
    large or small weight scales survive.
    """

    support: Dataset
    weights: np.ndarray
    kernel: KernelSpec
    log_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.support, Dataset):
            object.__setattr__(self, "support", Dataset(np.asarray(self.support)))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self.support):
            raise InvalidConfigError(
                f"{w.shape[0]} weights for {len(self.support)} support points"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidConfigError("weights must be finite and strictly positive")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        lw = np.log(w)
        lw.flags.writeable = False
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_log_weights(cls, support, log_weights, kernel: KernelSpec) -> "WeightedKde":
        """Construct directly from log-space weights (skips the exp/log round trip)."""
        obj = cls.__new__(cls)
        sup = support if isinstance(support, Dataset) else Dataset(np.asarray(support))
        lw = np.asarray(log_weights, dtype=float).reshape(-1).copy()
        if lw.shape[0] != len(sup):
            raise InvalidConfigError(f"{lw.shape[0]} log-weights for {len(sup)} support points")
        if not np.all(np.isfinite(lw)):
            raise InvalidConfigError("log-weights must be finite (weights strictly positive)")
        lw.flags.writeable = False
        w = np.exp(lw)
        w.flags.writeable = False
        object.__setattr__(obj, "support", sup)
        object.__setattr__(obj, "weights", w)
        object.__setattr__(obj, "kernel", kernel)
        object.__setattr__(obj, "log_weights", lw)
        return obj

    def log_eval(self, x) -> np.ndarray | float:
        """log p(x) at one point (D,) or many (m, D)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        logk = log_kernel_matrix(self.kernel, np.atleast_2d(x), self.support.points)
        vals = logsumexp(logk + self.log_weights[None, :], axis=1) - math.log(len(self.support))
        return float(vals[0]) if single else vals

    def log_loo_eval(self, i: int) -> float:
        """log p(x_i) with support point i excluded; needs N >= 2."""
        n = len(self.support)
        if n < 2:
            raise InsufficientDataError("leave-one-out needs at least 2 support points")
        if not 0 <= i < n:
            raise InvalidConfigError(f"support index {i} out of range for N={n}")
        logk = log_kernel_matrix(
            self.kernel, self.support.points[i][None, :], self.support.points
        )[0]
        logk = logk + self.log_weights
        logk[i] = -np.inf
        return float(logsumexp(logk) - math.log(n - 1))


def kde_eval(kde: WeightedKde, x) -> float | np.ndarray:
    """Density value; strictly positive in exact arithmetic, may underflow to 0."""
    out = kde.log_eval(x)
    return np.exp(out) if isinstance(out, np.ndarray) else math.exp(out) if out > -745 else 0.0


def kde_loo_eval(kde: WeightedKde, i: int) -> float:
    """Leave-one-out density at support point i."""
    v = kde.log_loo_eval(i)
    return math.exp(v) if v > -745 else 0.0


def _loo_log_terms(sqd: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    logk = spec.log_normalizer(dim) - sqd / (2.0 * spec.bandwidth**2)
    np.fill_diagonal(logk, -np.inf)
    n = sqd.shape[0]
    return logsumexp(logk, axis=1) - math.log(n - 1)


def loo_log_likelihood(data, h: float) -> float:
    """Sum over i of log p_{-i}(x_i) with unit weights.

    Returns -inf when any leave-one-out density underflows; that sentinel
    still orders correctly under a bandwidth search.
    """
    return loo_log_likelihood_grid(data, [h])[0]


def loo_log_likelihood_grid(data, hs) -> list[float]:
    """LOO log-likelihood at several bandwidths, reusing one distance matrix."""
    pts = as_points(data)
    n, d = pts.shape
    if n < 2:
        raise InsufficientDataError(f"LOO likelihood needs N >= 2, got {n}")
    sqd = sq_distances(pts, pts)
    out = []
    for h in hs:
        spec = KernelSpec(h)
        with np.errstate(divide="ignore"):
            terms = _loo_log_terms(sqd, spec, d)
        out.append(float(np.sum(terms)))
    return out


def select_bandwidth(data, grid, subsample_fraction: float = 1.0, seed=0) -> float:
    """Grid bandwidth maximizing the LOO log-likelihood on a random subsample.

    ``subsample_fraction`` below 1 deliberately inflates the selected
    bandwidth (fewer points favor wider kernels), which suits the
    bias-corrected estimators; ties break toward larger h.
    """
    grid = sorted(float(h) for h in np.atleast_1d(grid))
    if not grid:
        raise InvalidConfigError("bandwidth grid is empty")
    if any(h <= 0 for h in grid):
        raise InvalidConfigError("bandwidth grid entries must be positive")
    if not 0 < subsample_fraction <= 1:
        raise InvalidConfigError(
            f"subsample fraction must lie in (0, 1], got {subsample_fraction}"
        )
    pts = as_points(data)
    n = pts.shape[0]
    m = math.ceil(subsample_fraction * n)
    if m < 2:
        raise InsufficientDataError(f"subsample of {m} points cannot support LOO selection")
    rng = as_seed(seed).rng()
    idx = rng.choice(n, size=m, replace=False) if m < n else np.arange(n)
    lls = loo_log_likelihood_grid(pts[idx], grid)
    best_h, best_ll = grid[0], -np.inf
    for h, ll in zip(grid, lls):
        if ll >= best_ll:
            best_h, best_ll = h, ll
    return best_h


def default_bandwidth_grid(data, size: int = 30, span: tuple[float, float] = (0.05, 5.0)):
    """30 log-spaced bandwidths spanning [0.05, 5] x (mean pairwise distance / sqrt(D)).

    For N above 1500 the mean pairwise distance is taken over a deterministic
    stride subset; the grid is a heuristic scale, not a fitted quantity.
    """
    pts = as_points(data)
    n, d = pts.shape
    if n > 1500:
        pts = pts[:: math.ceil(n / 1500)]
    dist = np.sqrt(sq_distances(pts, pts))
    m = dist.shape[0]
    mean_dist = float(dist.sum() / (m * (m - 1))) if m > 1 else 1.0
    scale = mean_dist / math.sqrt(d)
    if scale <= 0:
        raise InvalidDataError("degenerate data: zero mean pairwise distance")
    return np.geomspace(span[0] * scale, span[1] * scale, size)
