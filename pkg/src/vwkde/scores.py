"""Per-distribution score fields: grad log p and the Laplacian ratio lap(p)/p.

The Gaussian provider computes both analytically; any object with the same
two methods (a score-matching network, say) plugs into the downstream weight
fit unchanged.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import GaussianModel
from .errors import InvalidConfigError

__all__ = [
    "ScoreField",
    "GaussianScoreField",
    "PairScores",
    "gaussian_score",
    "gaussian_laplacian_ratio",
    "pair_h",
    "pair_g",
]


class ScoreField(ABC):
    """Provider of grad log p and lap(p)/p at arbitrary points.

    Implementations take (n, D) arrays and return (n, D) / (n,) arrays.
    Whenever an implementation also knows lap(log p), the identity
    lap(p)/p = lap(log p) + ||grad log p||^2 must hold.
    """

    @abstractmethod
    def score(self, x: np.ndarray) -> np.ndarray:
        """grad log p at each row of x; shape (n, D)."""

    @abstractmethod
    def laplacian_ratio(self, x: np.ndarray) -> np.ndarray:
        """lap(p)/p at each row of x; shape (n,)."""


@dataclass(frozen=True)
class GaussianScoreField(ScoreField):
    """Analytic score field of a fitted Gaussian model."""

    model: GaussianModel

    def score(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_dim(x)
        return -(x - self.model.mean) @ self.model.precision

    def laplacian_ratio(self, x: np.ndarray) -> np.ndarray:
        # lap(p)/p = ||S^-1 (x - mu)||^2 - tr(S^-1)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_dim(x)
        s = self.score(x)
        return np.einsum("ij,ij->i", s, s) - float(np.trace(self.model.precision))

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[1] != self.model.dim:
            raise InvalidConfigError(
                f"point dimension {x.shape[1]} does not match model dimension {self.model.dim}"
            )


@dataclass(frozen=True)
class PairScores:
    """Score fields for the two class densities, combined pointwise.

    h(x) = grad log p1 - grad log p2 and g(x) = (lap p1 / p1 - lap p2 / p2)/2
    are the two ingredients of the pointwise ratio-bias functional.
    """

    field1: ScoreField
    field2: ScoreField

    def h(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.field1.score(x) - self.field2.score(x)

    def g(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return 0.5 * (self.field1.laplacian_ratio(x) - self.field2.laplacian_ratio(x))


def _single(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def gaussian_score(field: GaussianScoreField, x):
    """-S^-1 (x - mu); accepts a single (D,) point or an (n, D) batch."""
    pts, single = _single(x)
    out = field.score(pts)
    return out[0] if single else out


def gaussian_laplacian_ratio(field: GaussianScoreField, x):
    """(x-mu)^T S^-1 S^-1 (x-mu) - tr(S^-1); single point or batch."""
    pts, single = _single(x)
    out = field.laplacian_ratio(pts)
    return float(out[0]) if single else out


def pair_h(pair: PairScores, x):
    """Difference of the two score fields at x."""
    pts, single = _single(x)
    out = pair.h(pts)
    return out[0] if single else out


def pair_g(pair: PairScores, x):
    """Half the difference of the two Laplacian ratios at x."""
    pts, single = _single(x)
    out = pair.g(pts)
    return float(out[0]) if single else out
