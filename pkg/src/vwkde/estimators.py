"""Plug-in posterior, log-density-ratio, and KL divergence estimators.

Both class estimates share a single bandwidth and a single weight function;
the shared weight is what makes its scale cancel from every output. All sums
run in log space (log-sum-exp), so the estimators survive the tiny kernel
values that high-dimensional data produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .core import Dataset, as_points
from .errors import InsufficientDataError, InvalidConfigError, UndefinedPosteriorError
from .kde import KernelSpec, WeightedKde, sq_distances
from .weight import AlphaFunction

__all__ = [
    "RatioEstimator",
    "KlResult",
    "posterior_at",
    "lpdr_at",
    "kl_estimate",
    "kl_estimate_grid",
    "posterior_grid",
    "lpdr_grid",
]


def _log_density(support: np.ndarray, log_w: np.ndarray, spec: KernelSpec,
                 sqd: np.ndarray, loo: bool = False) -> np.ndarray:
    """Row-wise log[(1/N) sum_j w_j k_h(x_i, s_j)], optionally leaving row i out."""
    n = support.shape[0]
    d = support.shape[1]
    logk = spec.log_normalizer(d) - sqd / (2.0 * spec.bandwidth**2) + log_w[None, :]
    if loo:
        if n < 2:
            raise InsufficientDataError("leave-one-out needs at least 2 support points")
        np.fill_diagonal(logk, -np.inf)
        denom = math.log(n - 1)
    else:
        denom = math.log(n)
    return logsumexp(logk, axis=1) - denom


@dataclass(frozen=True)
class RatioEstimator:
    """Weighted-KDE pair for one bandwidth, one weight function, one prior ratio.

    ``gamma`` defaults to the empirical prior ratio N2/N1.
    """

    data1: Dataset
    data2: Dataset
    alpha: AlphaFunction
    h: float
    gamma: float | None = None
    kde1: WeightedKde = field(init=False, repr=False)
    kde2: WeightedKde = field(init=False, repr=False)

    def __post_init__(self):
        d1 = self.data1 if isinstance(self.data1, Dataset) else Dataset(np.asarray(self.data1))
        d2 = self.data2 if isinstance(self.data2, Dataset) else Dataset(np.asarray(self.data2))
        if d1.dim != d2.dim:
            raise InvalidConfigError(f"dimension mismatch: {d1.dim} vs {d2.dim}")
        object.__setattr__(self, "data1", d1)
        object.__setattr__(self, "data2", d2)
        spec = KernelSpec(self.h)
        object.__setattr__(self, "h", spec.bandwidth)
        gamma = len(d2) / len(d1) if self.gamma is None else float(self.gamma)
        if not (math.isfinite(gamma) and gamma > 0):
            raise InvalidConfigError(f"class-prior ratio must be positive, got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(
            self, "kde1",
            WeightedKde.from_log_weights(d1, self.alpha.log_eval(d1.points), spec),
        )
        object.__setattr__(
            self, "kde2",
            WeightedKde.from_log_weights(d2, self.alpha.log_eval(d2.points), spec),
        )

    def log_densities(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(log p1_hat, log p2_hat) at one point or a batch."""
        return self.kde1.log_eval(x), self.kde2.log_eval(x)

    def lpdr(self, x):
        lp1, lp2 = self.log_densities(x)
        return lp1 - lp2

    def posterior(self, x):
        lp1, lp2 = self.log_densities(x)
        t = np.asarray(lp1) - np.asarray(lp2) - math.log(self.gamma)
        bad = np.isnan(t)
        if np.any(bad):
            raise UndefinedPosteriorError(
                f"both class densities underflowed at {int(np.sum(bad))} point(s)"
            )
        out = expit(t)
        return float(out) if np.ndim(out) == 0 else out


def posterior_at(est: RatioEstimator, x) -> float:
    """p1_hat / (p1_hat + gamma p2_hat) in (0, 1)."""
    return float(est.posterior(np.asarray(x, dtype=float)))


def lpdr_at(est: RatioEstimator, x) -> float:
    """log p1_hat - log p2_hat; +-inf when one side underflows outright."""
    return float(est.lpdr(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class KlResult:
    """KL estimate plus the count of non-finite per-sample terms excluded from it."""

    value: float
    n_flagged: int
    n_terms: int

    def __float__(self) -> float:
        return self.value


def kl_estimate(data1, data2, alpha: AlphaFunction, h: float) -> KlResult:
    """Plug-in KL(p1 || p2): mean over x in D1 of log[p1_loo(x) / p2(x)].

    The numerator leaves the evaluated point out of its own KDE; the
    denominator uses all of D2 (evaluation points are not members of it).
    Non-finite terms are flagged, excluded, and counted.
    """
    return kl_estimate_grid(data1, data2, alpha, [h])[0]


def kl_estimate_grid(data1, data2, alpha: AlphaFunction, hs) -> list[KlResult]:
    """KL estimates for several bandwidths, reusing one distance computation."""
    x1 = as_points(data1)
    x2 = as_points(data2)
    if x1.shape[1] != x2.shape[1]:
        raise InvalidConfigError(f"dimension mismatch: {x1.shape[1]} vs {x2.shape[1]}")
    if x1.shape[0] < 2:
        raise InsufficientDataError("KL estimate needs N1 >= 2 for leave-one-out")
    lw1 = alpha.log_eval(x1)
    lw2 = alpha.log_eval(x2)
    sq11 = sq_distances(x1, x1)
    sq12 = sq_distances(x1, x2)
    out = []
    for h in hs:
        spec = KernelSpec(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp1 = _log_density(x1, lw1, spec, sq11, loo=True)
            lp2 = _log_density(x2, lw2, spec, sq12, loo=False)
            terms = lp1 - lp2
        finite = np.isfinite(terms)
        n_flagged = int(terms.shape[0] - finite.sum())
        value = float(np.mean(terms[finite])) if finite.any() else math.nan
        out.append(KlResult(value, n_flagged, int(terms.shape[0])))
    return out


def _log_density_grid(support: np.ndarray, log_w: np.ndarray, hs,
                      sqd: np.ndarray) -> np.ndarray:
    """(len(hs), m) log densities of eval points against a fixed support."""
    rows = []
    d = support.shape[1]
    n = support.shape[0]
    for h in hs:
        spec = KernelSpec(h)
        logk = spec.log_normalizer(d) - sqd / (2.0 * spec.bandwidth**2) + log_w[None, :]
        rows.append(logsumexp(logk, axis=1) - math.log(n))
    return np.stack(rows, axis=0)


def lpdr_grid(data1, data2, alpha: AlphaFunction, hs, eval_points) -> np.ndarray:
    """(len(hs), m) LPDR values at ``eval_points`` for each bandwidth."""
    x1 = as_points(data1)
    x2 = as_points(data2)
    xe = np.atleast_2d(np.asarray(eval_points, dtype=float))
    lw1 = alpha.log_eval(x1)
    lw2 = alpha.log_eval(x2)
    lp1 = _log_density_grid(x1, lw1, hs, sq_distances(xe, x1))
    lp2 = _log_density_grid(x2, lw2, hs, sq_distances(xe, x2))
    return lp1 - lp2


def posterior_grid(data1, data2, alpha: AlphaFunction, hs, eval_points,
                   gamma: float | None = None) -> np.ndarray:
    """(len(hs), m) posterior estimates at ``eval_points`` for each bandwidth."""
    x1 = as_points(data1)
    x2 = as_points(data2)
    if gamma is None:
        gamma = x2.shape[0] / x1.shape[0]
    t = lpdr_grid(data1, data2, alpha, hs, eval_points) - math.log(gamma)
    if np.any(np.isnan(t)):
        raise UndefinedPosteriorError("both class densities underflowed at some eval point")
    return expit(t)
