"""Core data types: sample sets, Gaussian models, seeding, and the Gaussian KL oracle.

Everything here is immutable after construction and pure given the seed, so
objects can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.special

from ._determinism import deterministic_blas
from .errors import (
    DegenerateModelError,
    InsufficientDataError,
    InvalidConfigError,
    InvalidDataError,
)

__all__ = [
    "SeedSpec",
    "Dataset",
    "GaussianModel",
    "as_seed",
    "make_gaussian",
    "fit_gaussian",
    "sample_gaussian",
    "sample_mixture",
    "mixture_log_density",
    "gaussian_kl_closed_form",
    "save_dataset_csv",
    "load_dataset_csv",
]


@dataclass(frozen=True)
class SeedSpec:
    """Reproducible random-number source.

    A master seed plus a derivation key. ``child(i)`` derives an independent,
    deterministic substream for trial ``i``; identical specs always yield
    bit-identical draws. Derivation uses ``numpy.random.SeedSequence`` spawn
    keys, so substreams are statistically independent and parallel-safe.
    """

    master_seed: int
    key: tuple[int, ...] = field(default=())

    def child(self, *key: int) -> "SeedSpec":
        """Sub-seed for e.g. trial indices; keys concatenate hierarchically."""
        return SeedSpec(self.master_seed, self.key + key)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master_seed, spawn_key=self.key)
        )


def as_seed(seed: "SeedSpec | int") -> SeedSpec:
    """Accept a bare integer wherever a SeedSpec is expected."""
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of D-dimensional points from one distribution.

    ``points`` is an N x D float array; ``label`` is an optional class tag
    (1 or 2). Coordinates must be finite. The array is frozen after
    construction.
    """

    points: np.ndarray
    label: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidDataError(f"expected an N x D point array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidDataError("dataset contains non-finite coordinates")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if self.label is not None and self.label not in (1, 2):
            raise InvalidDataError(f"class label must be 1 or 2, got {self.label!r}")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def as_points(data) -> np.ndarray:
    """Return the N x D array behind a Dataset or array-like."""
    if isinstance(data, Dataset):
        return data.points
    return Dataset(np.asarray(data)).points


@dataclass(frozen=True)
class GaussianModel:
    """A fitted Gaussian with cached precision and log-determinant.

    Invariants: covariance symmetric positive definite;
    ``precision @ covariance`` is the identity to 1e-8 relative.
    Use :func:`make_gaussian` or :func:`fit_gaussian` to construct.
    """

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    log_det: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_density(self, x) -> np.ndarray | float:
        """Gaussian log-density at one point (D,) or many (n, D)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        delta = pts - self.mean
        quad = np.einsum("ij,jk,ik->i", delta, self.precision, delta)
        out = -0.5 * (self.dim * np.log(2.0 * np.pi) + self.log_det + quad)
        return float(out[0]) if single else out

    def density(self, x):
        return np.exp(self.log_density(x))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def make_gaussian(mean, covariance) -> GaussianModel:
    """Build a GaussianModel from mean and covariance, validating definiteness."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise InvalidConfigError(f"covariance shape {cov.shape} does not match mean dimension {d}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise InvalidDataError("non-finite model parameters")
    cov = 0.5 * (cov + cov.T)
    try:
        chol = scipy.linalg.cholesky(cov, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateModelError(f"covariance is not positive definite: {exc}") from exc
    precision = scipy.linalg.cho_solve((chol, True), np.eye(d))
    precision = 0.5 * (precision + precision.T)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    resid = np.max(np.abs(precision @ cov - np.eye(d)))
    if resid > 1e-8:
        raise DegenerateModelError(
            f"precision * covariance deviates from identity by {resid:.3e}; "
            "matrix too ill-conditioned"
        )
    return GaussianModel(_freeze(mean), _freeze(cov), _freeze(precision), log_det)


def fit_gaussian(data, shrinkage: float | None = None) -> GaussianModel:
    """Fit mean and unbiased sample covariance, with diagonal shrinkage.

    ``shrinkage`` adds ``eps * I`` to the sample covariance. The default
    (None) uses ``1e-6 * trace(cov) / D``, which keeps the precision
    well-conditioned for small-N high-D fits; pass 0 to disable.

    Raises InsufficientDataError for N < 2, InvalidDataError on non-finite
    input, and DegenerateModelError if the shrunk covariance is still not
    positive definite.
    """
    pts = as_points(data)
    n, d = pts.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points to fit, got {n}")
    mean = pts.mean(axis=0)
    centered = pts - mean
    with deterministic_blas():  # large-k gemm must not depend on pool size
        cov = centered.T @ centered / (n - 1)
    if shrinkage is None:
        shrinkage = 1e-6 * float(np.trace(cov)) / d
    if shrinkage < 0:
        raise InvalidConfigError(f"shrinkage must be >= 0, got {shrinkage}")
    cov = cov + shrinkage * np.eye(d)
    return make_gaussian(mean, cov)


def sample_gaussian(model: GaussianModel, n: int, seed) -> Dataset:
    """Draw n i.i.d. points as mean + L z with L the lower Cholesky factor."""
    if n < 1:
        raise InvalidConfigError(f"sample count must be >= 1, got {n}")
    try:
        chol = scipy.linalg.cholesky(model.covariance, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateModelError(f"covariance factorization failed: {exc}") from exc
    rng = as_seed(seed).rng()
    z = rng.standard_normal((n, model.dim))
    return Dataset(model.mean + z @ chol.T)


def sample_mixture(components, n: int, seed) -> Dataset:
    """Draw from a finite Gaussian mixture given as (weight, model) pairs.

    Each draw selects a component by weight and then samples it. A
    single-component mixture delegates to :func:`sample_gaussian` exactly,
    so the two agree bit for bit at the same seed.
    """
    components = list(components)
    if not components:
        raise InvalidConfigError("mixture needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    models = [m for _, m in components]
    if np.any(weights <= 0):
        raise InvalidConfigError("mixture weights must be positive")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidConfigError(f"mixture weights sum to {weights.sum()!r}, expected 1")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise InvalidConfigError(f"mixture components disagree on dimension: {sorted(dims)}")
    if len(components) == 1:
        return sample_gaussian(models[0], n, seed)
    if n < 1:
        raise InvalidConfigError(f"sample count must be >= 1, got {n}")

    rng = as_seed(seed).rng()
    idx = rng.choice(len(components), size=n, p=weights)
    out = np.empty((n, models[0].dim))
    for c, model in enumerate(models):
        rows = np.flatnonzero(idx == c)
        if rows.size == 0:
            continue
        chol = scipy.linalg.cholesky(model.covariance, lower=True)
        z = rng.standard_normal((rows.size, model.dim))
        out[rows] = model.mean + z @ chol.T
    return Dataset(out)


def mixture_log_density(components, x) -> np.ndarray | float:
    """Exact log-density of a (weight, GaussianModel) mixture at x."""
    components = list(components)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    logs = np.stack(
        [np.log(w) + m.log_density(pts) for w, m in components], axis=0
    )
    out = scipy.special.logsumexp(logs, axis=0)
    return float(out[0]) if single else out


def gaussian_kl_closed_form(p1: GaussianModel, p2: GaussianModel) -> float:
    """KL(p1 || p2) between two Gaussians.

    0.5 * [tr(S2^-1 S1) + (m2-m1)^T S2^-1 (m2-m1) - D + ln det S2 - ln det S1]
    """
    if p1.dim != p2.dim:
        raise InvalidConfigError(f"dimension mismatch: {p1.dim} vs {p2.dim}")
    d = p1.dim
    delta = p2.mean - p1.mean
    trace_term = float(np.trace(p2.precision @ p1.covariance))
    quad = float(delta @ p2.precision @ delta)
    return 0.5 * (trace_term + quad - d + p2.log_det - p1.log_det)


def save_dataset_csv(data: Dataset, path) -> None:
    """One point per row, plain decimal, no header; label appended as a final
    integer column when the dataset carries one."""
    pts = data.points
    with open(path, "w", encoding="ascii") as fh:
        for row in pts:
            cols = [format(v, ".17g") for v in row]
            if data.label is not None:
                cols.append(str(int(data.label)))
            fh.write(",".join(cols) + "\n")


def load_dataset_csv(path, labeled: bool = False) -> Dataset:
    """Read a points CSV written by :func:`save_dataset_csv`.

    With ``labeled=True`` the final column is interpreted as the class tag
    (constant across rows) rather than a coordinate.
    """
    path = Path(path)
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InvalidDataError(f"cannot read dataset CSV {path}: {exc}") from exc
    if raw.shape[0] < 1:
        raise InsufficientDataError(f"{path} holds no rows")
    if not labeled:
        return Dataset(raw)
    if raw.shape[1] < 2:
        raise InvalidDataError(f"{path}: labeled CSV needs at least 2 columns")
    labels = raw[:, -1]
    if not np.all(labels == labels[0]):
        raise InvalidDataError(f"{path}: label column is not constant")
    return Dataset(raw[:, :-1], label=int(labels[0]))
