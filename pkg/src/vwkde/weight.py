"""Weight functions alpha(x) for bias-reduced density-ratio estimation.

A ratio of two weighted KDEs sharing one positive weight function alpha has
leading-order bias proportional to

    B(x) = grad(log alpha)(x) . h(x) + g(x),

with h and g assembled from the two score fields (see ``scores``). Any alpha
driving B to zero removes that leading term. Three representations live here:

* ``ConstantAlpha``      -- reproduces the conventional KDE ratio;
* ``AnalyticHomoscedasticAlpha`` -- closed-form zero-bias family for two
  Gaussians sharing a covariance, one member per value of a free constant b;
* ``RkhsLogAlpha``       -- log alpha expanded in Gaussian basis kernels and
  fitted by a regularized quadratic program on pooled samples.

``pointwise_bias`` and ``el_residual`` are the matching diagnostics.
"""

from __future__ import annotations

import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._determinism import deterministic_blas
from .core import as_points, as_seed
from .errors import (
    DegenerateDirectionError,
    InsufficientDataError,
    InvalidConfigError,
    NumericFailureError,
)
from .kde import sq_distances
from .scores import PairScores

__all__ = [
    "AlphaFunction",
    "ConstantAlpha",
    "AnalyticHomoscedasticAlpha",
    "RkhsLogAlpha",
    "analytic_alpha",
    "fit_rkhs_alpha",
    "rkhs_system",
    "rkhs_objective",
    "alpha_grad_log",
    "pointwise_bias",
    "el_residual",
    "median_pairwise_distance",
    "save_rkhs_alpha",
    "load_rkhs_alpha",
]


class AlphaFunction(ABC):
    """Positive weight function with an evaluable log-gradient.

    Methods take (n, D) arrays; ``log_eval`` returns (n,) log alpha values
    (positivity holds by construction), ``grad_log`` returns (n, D).
    """

    @abstractmethod
    def log_eval(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def grad_log(self, x: np.ndarray) -> np.ndarray: ...

    def eval(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.log_eval(x))


@dataclass(frozen=True)
class ConstantAlpha(AlphaFunction):
    """alpha(x) = c; the conventional unweighted KDE ratio."""

    c: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise InvalidConfigError(f"constant weight must be positive, got {self.c!r}")

    def log_eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[0], math.log(self.c))

    def grad_log(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.zeros_like(x)


@dataclass(frozen=True)
class AnalyticHomoscedasticAlpha(AlphaFunction):
    """alpha(x) = exp(-1/2 (x - mu')^T A (x - mu')) for the shared-covariance pair.

    mu' is the midpoint of the two class means and A couples a free constant
    b with the projector orthogonal to the precision-weighted mean difference;
    every b yields zero pointwise bias for the matching Gaussian pair.
    """

    mu_prime: np.ndarray
    A: np.ndarray
    b: float

    def log_eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        delta = x - self.mu_prime
        return -0.5 * np.einsum("ij,jk,ik->i", delta, self.A, delta)

    def grad_log(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -(x - self.mu_prime) @ self.A


def analytic_alpha(mu1, mu2, sigma_mat, b: float = 0.0) -> AnalyticHomoscedasticAlpha:
    """Closed-form zero-bias weight for two Gaussians sharing covariance ``sigma_mat``.

    With a = S^-1 (mu1 - mu2):

        A = b (I - a a^T / ||a||^2) - S^-1,   mu' = (mu1 + mu2) / 2.

    b = 0 gives the simplest member, alpha = exp(+1/2 (x-mu')^T S^-1 (x-mu')).
    Raises DegenerateDirectionError when the means coincide (the projector is
    undefined).
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
    d = mu1.shape[0]
    if mu2.shape != (d,) or sigma.shape != (d, d):
        raise InvalidConfigError("mean / covariance shapes disagree")
    diff = mu1 - mu2
    if np.allclose(diff, 0.0):
        raise DegenerateDirectionError("equal means leave the weight direction undefined")
    sigma = 0.5 * (sigma + sigma.T)
    try:
        chol = scipy.linalg.cholesky(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise InvalidConfigError(f"shared covariance is not positive definite: {exc}") from exc
    precision = scipy.linalg.cho_solve((chol, True), np.eye(d))
    a = precision @ diff
    proj = np.eye(d) - np.outer(a, a) / float(a @ a)
    A = b * proj - precision
    A = 0.5 * (A + A.T)
    mu_prime = 0.5 * (mu1 + mu2)
    mu_prime.flags.writeable = False
    A.flags.writeable = False
    return AnalyticHomoscedasticAlpha(mu_prime, A, float(b))


@dataclass(frozen=True)
class RkhsLogAlpha(AlphaFunction):
    """log alpha(x) = sum_k theta_k kappa_sigma(x, basis_k) with a Gaussian basis kernel."""

    basis: np.ndarray
    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if basis.shape[0] != theta.shape[0] or basis.shape[0] < 1:
            raise InvalidConfigError(
                f"{theta.shape[0]} coefficients for {basis.shape[0]} basis points"
            )
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidConfigError(f"basis kernel width must be positive, got {self.sigma!r}")
        basis = basis.copy()
        theta = theta.copy()
        basis.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", float(self.sigma))

    def _kappa(self, x: np.ndarray) -> np.ndarray:
        return np.exp(-sq_distances(x, self.basis) / (2.0 * self.sigma**2))

    def log_eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._kappa(x) @ self.theta

    def grad_log(self, x):
        # d/dx kappa(x, b) = kappa(x, b) (b - x) / sigma^2
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = self._kappa(x)
        inv = 1.0 / self.sigma**2
        return ((k * self.theta) @ self.basis - (k @ self.theta)[:, None] * x) * inv


def median_pairwise_distance(points) -> float:
    """Median heuristic for the basis kernel width.

    For more than 2000 points the median is taken over a deterministic stride
    subset, keeping the fit reproducible without extra randomness.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if n > 2000:
        pts = pts[:: math.ceil(n / 2000)]
        n = pts.shape[0]
    if n < 2:
        raise InsufficientDataError("median heuristic needs at least 2 points")
    d = np.sqrt(sq_distances(pts, pts))
    vals = d[np.triu_indices(n, k=1)]
    med = float(np.median(vals))
    if med <= 0:
        raise InvalidConfigError("median pairwise distance is zero; data degenerate")
    return med


def rkhs_system(
    data1,
    data2,
    pair: PairScores,
    sigma: float | None = None,
    max_basis: int = 3000,
    seed=0,
    sample_weights=None,
):
    """Linear pieces of the quadratic weight fit.

    Returns ``(basis, sigma, S, g)`` where row i of S holds the per-basis
    projections grad kappa(x_i, .)^T h(x_i), and g the per-sample curvature
    targets. The fitted objective is

        sum_i w_i [ 1/2 (S theta)_i^2 + (S theta)_i g_i ] + lambda ||theta||^2

    with w uniform unless ``sample_weights`` supplies the optional per-sample
    weighting hook.
    """
    x1 = as_points(data1)
    x2 = as_points(data2)
    if x1.shape[1] != x2.shape[1]:
        raise InvalidConfigError(f"dimension mismatch: {x1.shape[1]} vs {x2.shape[1]}")
    pooled = np.vstack([x1, x2])
    n = pooled.shape[0]
    if n < 2:
        raise InsufficientDataError("weight fit needs at least 2 pooled samples")
    if max_basis < 1:
        raise InvalidConfigError(f"max_basis must be >= 1, got {max_basis}")

    if n <= max_basis:
        basis = pooled
    else:
        rng = as_seed(seed).rng()
        basis = pooled[np.sort(rng.choice(n, size=max_basis, replace=False))]
    if sigma is None:
        sigma = median_pairwise_distance(pooled)
    if sigma <= 0:
        raise InvalidConfigError(f"basis kernel width must be positive, got {sigma}")

    hvec = pair.h(pooled)
    gvec = pair.g(pooled)
    kappa = np.exp(-sq_distances(pooled, basis) / (2.0 * sigma**2))
    # S[i, k] = kappa(x_i, b_k) * h_i . (b_k - x_i) / sigma^2
    proj = hvec @ basis.T - np.einsum("ij,ij->i", hvec, pooled)[:, None]
    S = kappa * proj / sigma**2
    if sample_weights is not None:
        w = np.asarray(sample_weights, dtype=float).reshape(-1)
        if w.shape[0] != n or np.any(w < 0):
            raise InvalidConfigError("sample weights must be nonnegative, one per pooled sample")
        sw = np.sqrt(w)
        S = S * sw[:, None]
        gvec = gvec * sw
    return basis, float(sigma), S, gvec


def rkhs_objective(S: np.ndarray, g: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Value of the regularized quadratic objective at theta."""
    st = S @ theta
    return float(0.5 * st @ st + st @ g + lam * theta @ theta)


def fit_rkhs_alpha(
    data1,
    data2,
    pair: PairScores,
    sigma: float | None = None,
    lam: float | None = None,
    max_basis: int = 3000,
    seed=0,
    sample_weights=None,
) -> RkhsLogAlpha:
    """Fit the RKHS log-weight by the regularized quadratic program.

    Stationarity gives the symmetric positive-definite system

        (G + 2 lambda I) theta = -c,   G = S^T S,   c = S^T g,

    solved exactly by Cholesky. Defaults: ``sigma`` from the median
    heuristic, ``lam = 1e-3 * N`` (N pooled samples) so the regularizer's
    relative strength is sample-size stable, basis capped at 3000 points
    subsampled with ``seed``.
    """
    basis, sigma, S, gvec = rkhs_system(
        data1, data2, pair, sigma=sigma, max_basis=max_basis, seed=seed,
        sample_weights=sample_weights,
    )
    n = S.shape[0]
    if lam is None:
        lam = 1e-3 * n
    if lam <= 0:
        raise InvalidConfigError(f"regularization constant must be positive, got {lam}")
    with deterministic_blas():  # pool-size-invariant normal equations and solve
        G = S.T @ S
        c = S.T @ gvec
        system = G + 2.0 * lam * np.eye(G.shape[0])
        try:
            chol = scipy.linalg.cho_factor(system, lower=True)
            theta = scipy.linalg.cho_solve(chol, -c)
        except scipy.linalg.LinAlgError as exc:
            _raise_solve_failure(exc, n, lam, system)
    return RkhsLogAlpha(basis, theta, sigma)


def _raise_solve_failure(exc, n, lam, system):
    diag = np.diag(system)
    raise NumericFailureError(
        "weight-fit solve failed: "
        f"{exc}; n={n}, basis={system.shape[0]}, lambda={lam:.3e}, "
        f"diag range [{diag.min():.3e}, {diag.max():.3e}]"
    ) from exc


def alpha_grad_log(alpha: AlphaFunction, x):
    """Analytic gradient of log alpha; single (D,) point or (n, D) batch."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    out = alpha.grad_log(np.atleast_2d(arr))
    return out[0] if single else out


def pointwise_bias(alpha: AlphaFunction, pair: PairScores, x):
    """Leading-order ratio bias B(x) = grad(log alpha)^T h + g."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    out = np.einsum("ij,ij->i", alpha.grad_log(pts), pair.h(pts)) + pair.g(pts)
    return float(out[0]) if single else out


def _eval_r(r, pts: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(r(pts), dtype=float)
        if out.shape == (pts.shape[0],):
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(r(p)) for p in pts])


def el_residual(alpha: AlphaFunction, pair: PairScores, r, x, step: float) -> float:
    """Stationarity residual div[ r(x) B(x) h(x) ] by central differences.

    The optimal weight makes this vanish; it is a diagnostic, not a fitting
    target. ``r`` maps points to scalars (vectorized (n, D) -> (n,) callables
    are used directly; plain scalar callables are looped).
    """
    if step <= 0:
        raise InvalidConfigError(f"finite-difference step must be positive, got {step}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]
    probes = np.repeat(x[None, :], 2 * d, axis=0)
    for i in range(d):
        probes[2 * i, i] += step
        probes[2 * i + 1, i] -= step
    field = (
        _eval_r(r, probes)
        * pointwise_bias(alpha, pair, probes)
    )[:, None] * pair.h(probes)
    total = 0.0
    for i in range(d):
        total += (field[2 * i, i] - field[2 * i + 1, i]) / (2.0 * step)
    return float(total)


def save_rkhs_alpha(alpha: RkhsLogAlpha, path) -> None:
    """CSV with the kernel width on a comment line, then basis rows + theta column."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# sigma={alpha.sigma!r}\n")
        for row, t in zip(alpha.basis, alpha.theta):
            cols = [format(v, ".17g") for v in row] + [format(t, ".17g")]
            fh.write(",".join(cols) + "\n")


def load_rkhs_alpha(path) -> RkhsLogAlpha:
    """Read a weight written by :func:`save_rkhs_alpha`."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        m = re.match(r"#\s*sigma=([-+0-9.eE]+)", header)
        if not m:
            raise InvalidConfigError(f"{path}: missing '# sigma=...' header line")
        sigma = float(m.group(1))
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    if body.shape[1] < 2:
        raise InvalidConfigError(f"{path}: need at least one basis coordinate plus theta")
    return RkhsLogAlpha(body[:, :-1], body[:, -1], sigma)
