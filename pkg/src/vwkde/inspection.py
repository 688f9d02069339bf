"""Unsupervised optical surface inspection.

Pipeline: slide 32x32 patches at stride 16 over a grayscale image, reduce
each patch to four moments of its gradient-magnitude distribution, whiten the
features per surface type, then score a query image against a corpus of
normal images by the minimum estimated KL divergence between patch-feature
densities. Detection is two-pass: plain-KDE KL ranks all normals cheaply,
the weighted estimator re-scores the k best. Localization thresholds the
per-patch log density ratio against the best-matching normal image.

No real dataset ships with the package; ``synthetic_texture`` and
``inject_square`` generate test corpora, and PGM (binary P5) files are the
input format for real runs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import as_seed, fit_gaussian
from .errors import (
    DegenerateFeaturesError,
    InsufficientDataError,
    InvalidConfigError,
    InvalidDataError,
    PgmParseError,
    VwkdeError,
)
from .estimators import kl_estimate, lpdr_grid
from .kde import default_bandwidth_grid, select_bandwidth
from .scores import GaussianScoreField, PairScores
from .weight import AlphaFunction, ConstantAlpha, fit_rkhs_alpha

__all__ = [
    "GrayImage",
    "PatchSet",
    "ImageFeatures",
    "Whitener",
    "DetectionResult",
    "LocalizationResult",
    "load_pgm",
    "save_pgm",
    "extract_patches",
    "patch_features",
    "image_features",
    "fit_whitener",
    "detect_defect",
    "localize_defect",
    "synthetic_texture",
    "inject_square",
    "iou",
    "rank_auc",
    "write_inspection_csv",
    "score_detections",
]

PATCH_SIZE = 32
PATCH_STRIDE = 16

_SCHARR_X = np.array([[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]])
_SCHARR_Y = _SCHARR_X.T


def _gaussian_kernel_3x3(sigma: float = 1.0) -> np.ndarray:
    ax = np.array([-1.0, 0.0, 1.0])
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()

_BLUR = _gaussian_kernel_3x3()


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale image, 8- or 16-bit."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise InvalidDataError(f"expected a 2-D pixel array, got shape {px.shape}")
        if px.dtype not in (np.uint8, np.uint16):
            if not np.issubdtype(px.dtype, np.integer):
                raise InvalidDataError(f"pixel dtype {px.dtype} is not an integer type")
            hi = int(px.max()) if px.size else 0
            lo = int(px.min()) if px.size else 0
            if lo < 0 or hi > 65535:
                raise InvalidDataError(f"intensities [{lo}, {hi}] outside 16-bit range")
            px = px.astype(np.uint16 if hi > 255 else np.uint8)
        px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_pgm(path) -> GrayImage:
    """Parse a binary PGM (P5) file bit-exactly; maxval up to 65535."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def _token() -> bytes:
        nonlocal pos
        while True:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if pos < len(data) and data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmParseError(f"{path}: truncated header at byte {start}")
        return data[start:pos]

    magic = _token()
    if magic != b"P5":
        raise PgmParseError(
            f"{path}: unsupported magic {magic!r} at byte 0 (only binary P5)"
        )
    try:
        width = int(_token())
        height = int(_token())
        maxval = int(_token())
    except ValueError as exc:
        raise PgmParseError(f"{path}: malformed header near byte {pos}: {exc}") from exc
    if width < 1 or height < 1:
        raise PgmParseError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PgmParseError(f"{path}: maxval {maxval} outside (0, 65535]")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    need = count * dtype.itemsize
    if len(data) - pos < need:
        raise PgmParseError(
            f"{path}: payload truncated at byte {len(data)} (need {pos + need})"
        )
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    pixels = raw.reshape(height, width).astype(
        np.uint16 if maxval > 255 else np.uint8
    )
    return GrayImage(pixels)


def save_pgm(img: GrayImage, path) -> None:
    """Write binary P5; maxval 255 or 65535 by dtype."""
    px = img.pixels
    wide = px.dtype == np.uint16
    maxval = 65535 if wide else 255
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii"))
        fh.write(px.astype(">u2" if wide else "u1").tobytes())


@dataclass(frozen=True)
class PatchSet:
    """All fully contained windows on the stride grid, with their origins."""

    patches: np.ndarray   # (n, size, size) float64
    origins: np.ndarray   # (n, 2) int, (row, col)
    size: int

    def __len__(self) -> int:
        return self.patches.shape[0]


def extract_patches(img: GrayImage, size: int = PATCH_SIZE,
                    stride: int = PATCH_STRIDE) -> PatchSet:
    """Sliding-window patches; a 496x496 image yields the canonical 30x30 grid."""
    if size < 3 or stride < 1:
        raise InvalidConfigError(f"bad patch geometry size={size} stride={stride}")
    h, w = img.height, img.width
    if h < size or w < size:
        raise InvalidDataError(f"image {h}x{w} smaller than patch size {size}")
    rows = range(0, h - size + 1, stride)
    cols = range(0, w - size + 1, stride)
    px = img.pixels.astype(np.float64)
    patches = np.stack([px[r : r + size, c : c + size] for r in rows for c in cols])
    origins = np.array([(r, c) for r in rows for c in cols], dtype=int)
    return PatchSet(patches, origins, size)


def patch_features(patch: np.ndarray) -> np.ndarray:
    """Four moments of the patch's gradient-magnitude distribution.

    3x3 Gaussian smoothing (sigma 1) then Scharr x/y; magnitudes are taken on
    the interior (2-pixel crop, where both stencils see only real data) and
    summarized by mean, standard deviation, skewness, and non-excess kurtosis.
    Zero-variance distributions give (mean, 0, 0, 0).
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.ndim != 2 or min(p.shape) < 7:
        raise InvalidDataError(f"patch shape {p.shape} too small for gradient moments")
    smooth = ndimage.convolve(p, _BLUR, mode="nearest")
    gx = ndimage.convolve(smooth, _SCHARR_X, mode="nearest")
    gy = ndimage.convolve(smooth, _SCHARR_Y, mode="nearest")
    mag = np.hypot(gx, gy)[2:-2, 2:-2].ravel()
    mean = float(mag.mean())
    centered = mag - mean
    var = float(np.mean(centered**2))
    std = math.sqrt(var)
    if std < 1e-12 * max(1.0, abs(mean)):
        return np.array([mean, 0.0, 0.0, 0.0])
    skew = float(np.mean(centered**3)) / std**3
    kurt = float(np.mean(centered**4)) / std**4
    return np.array([mean, std, skew, kurt])


@dataclass(frozen=True)
class ImageFeatures:
    """Per-patch feature rows plus the patch origins they came from."""

    features: np.ndarray  # (n, 4)
    origins: np.ndarray   # (n, 2)
    patch_size: int

    def __len__(self) -> int:
        return self.features.shape[0]


def image_features(img: GrayImage, size: int = PATCH_SIZE,
                   stride: int = PATCH_STRIDE) -> ImageFeatures:
    """Patch extraction plus per-patch gradient moments for one image."""
    ps = extract_patches(img, size, stride)
    feats = np.stack([patch_features(p) for p in ps.patches])
    return ImageFeatures(feats, ps.origins, ps.size)


@dataclass(frozen=True)
class Whitener:
    """Affine transform mapping the fitted corpus to zero mean, identity covariance."""

    mean: np.ndarray
    transform: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        return (f - self.mean) @ self.transform.T

    def apply_image(self, feats: ImageFeatures) -> ImageFeatures:
        return ImageFeatures(self.apply(feats.features), feats.origins, feats.patch_size)


def fit_whitener(corpus) -> Whitener:
    """Symmetric (ZCA) whitening fitted on the aggregated feature rows.

    ``corpus`` is an iterable of (n_i, d) feature matrices, aggregated before
    fitting. Raises DegenerateFeaturesError when the pooled covariance is
    rank deficient.
    """
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in corpus]
    if not mats:
        raise InsufficientDataError("empty feature corpus")
    agg = np.vstack(mats)
    n, d = agg.shape
    if n < 5:
        raise InsufficientDataError(f"whitening needs at least 5 aggregate rows, got {n}")
    mean = agg.mean(axis=0)
    centered = agg - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= 1e-12 * max(evals.max(), 1.0):
        raise DegenerateFeaturesError(
            f"feature covariance is rank deficient (eigenvalues {evals})"
        )
    transform = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T
    return Whitener(mean, transform)


def _pair_alpha(query: np.ndarray, normal: np.ndarray) -> AlphaFunction:
    """Model-based weight between two whitened patch-feature sets."""
    g1 = fit_gaussian(query)
    g2 = fit_gaussian(normal)
    pair = PairScores(GaussianScoreField(g1), GaussianScoreField(g2))
    return fit_rkhs_alpha(query, normal, pair, seed=0)


@dataclass(frozen=True)
class DetectionResult:
    score: float
    best_match: int
    pass1: tuple[tuple[int, float], ...]
    pass2: tuple[tuple[int, float], ...]
    skipped: tuple[int, ...]


def detect_defect(query, normals, k: int = 5, h: float = 0.5) -> DetectionResult:
    """Two-pass minimum-KL detection score for one query image.

    Pass 1 ranks every normal by the plain-KDE KL estimate from the query's
    patch features to the normal's; pass 2 re-scores the k lowest with the
    weighted estimator. Returns the minimum weighted score and the index of
    the matching normal. Normals whose estimate fails numerically are skipped
    and reported in ``skipped``.
    """
    qf = np.atleast_2d(np.asarray(
        query.features if isinstance(query, ImageFeatures) else query, dtype=float))
    mats = [
        np.atleast_2d(np.asarray(
            m.features if isinstance(m, ImageFeatures) else m, dtype=float))
        for m in normals
    ]
    if not mats:
        raise InvalidConfigError("need at least one normal image")
    if not 1 <= k <= len(mats):
        raise InvalidConfigError(f"k={k} outside [1, {len(mats)}]")

    pass1: list[tuple[int, float]] = []
    skipped: list[int] = []
    plain = ConstantAlpha(1.0)
    for i, mat in enumerate(mats):
        try:
            pass1.append((i, kl_estimate(qf, mat, plain, h).value))
        except VwkdeError:
            skipped.append(i)
    if not pass1:
        raise InsufficientDataError("every normal image failed pass-1 estimation")
    ranked = sorted(pass1, key=lambda iv: iv[1])[: min(k, len(pass1))]

    pass2: list[tuple[int, float]] = []
    for i, _ in ranked:
        try:
            alpha = _pair_alpha(qf, mats[i])
            pass2.append((i, kl_estimate(qf, mats[i], alpha, h).value))
        except VwkdeError:
            skipped.append(i)
    if not pass2:
        raise InsufficientDataError("every pass-1 candidate failed pass-2 estimation")
    best_match, score = min(pass2, key=lambda iv: iv[1])
    return DetectionResult(float(score), int(best_match), tuple(pass1),
                           tuple(pass2), tuple(skipped))


@dataclass(frozen=True)
class LocalizationResult:
    found: bool
    lpdr_map: np.ndarray
    mask: np.ndarray
    box: tuple[int, int, int, int] | None  # (row, col, height, width)
    confidence: float


def localize_defect(query: ImageFeatures, match, h: float = 0.5,
                    alpha: AlphaFunction | None = None,
                    factor: float = 0.9) -> LocalizationResult:
    """Bounding box of patches whose LPDR reaches ``factor`` of the maximum.

    ``query`` must carry patch origins; ``match`` is the best normal's feature
    matrix. A flat LPDR map (no contrast between patches) yields a
    no-localization result.
    """
    mf = np.atleast_2d(np.asarray(
        match.features if isinstance(match, ImageFeatures) else match, dtype=float))
    if alpha is None:
        alpha = _pair_alpha(query.features, mf)
    lpdr = lpdr_grid(query.features, mf, alpha, [h], query.features)[0]
    finite = np.isfinite(lpdr)
    if not finite.all() or lpdr.max() - lpdr.min() < 1e-9:
        return LocalizationResult(False, lpdr, np.zeros(len(lpdr), dtype=bool),
                                  None, float(np.max(lpdr[finite], initial=-np.inf)))
    top = float(lpdr.max())
    mask = lpdr >= factor * top
    rows = query.origins[mask, 0]
    cols = query.origins[mask, 1]
    r0, c0 = int(rows.min()), int(cols.min())
    r1 = int(rows.max()) + query.patch_size
    c1 = int(cols.max()) + query.patch_size
    return LocalizationResult(True, lpdr, mask, (r0, c0, r1 - r0, c1 - c0), top)


def synthetic_texture(height: int, width: int, seed,
                      blur_sigma: float = 2.0, mean: float = 128.0,
                      spread: float = 24.0) -> GrayImage:
    """Smooth random noise texture standing in for a normal surface image."""
    rng = as_seed(seed).rng()
    field = rng.standard_normal((height, width))
    field = ndimage.gaussian_filter(field, blur_sigma)
    field = (field - field.mean()) / max(field.std(), 1e-12)
    px = np.clip(mean + spread * field, 0, 255).astype(np.uint8)
    return GrayImage(px)


def inject_square(img: GrayImage, row: int, col: int, size: int = 32,
                  value: int = 235) -> GrayImage:
    """Copy of the image with a bright square defect stamped in."""
    if row < 0 or col < 0 or row + size > img.height or col + size > img.width:
        raise InvalidConfigError("injected square leaves the image bounds")
    px = img.pixels.copy()
    px[row : row + size, col : col + size] = value
    return GrayImage(px)


def iou(box_a: tuple[int, int, int, int], box_b: tuple[int, int, int, int]) -> float:
    """Intersection over union of two (row, col, height, width) boxes."""
    ra, ca, ha, wa = box_a
    rb, cb, hb, wb = box_b
    inter_h = max(0, min(ra + ha, rb + hb) - max(ra, rb))
    inter_w = max(0, min(ca + wa, cb + wb) - max(ca, cb))
    inter = inter_h * inter_w
    union = ha * wa + hb * wb - inter
    return inter / union if union > 0 else 0.0


def rank_auc(positive_scores, negative_scores) -> float:
    """Probability a positive outranks a negative (ties count half)."""
    pos = np.asarray(positive_scores, dtype=float)
    neg = np.asarray(negative_scores, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise InsufficientDataError("AUC needs both positive and negative scores")
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (pos.size * neg.size))


def select_inspection_bandwidth(normal_features, seed=0,
                                subsample_fraction: float = 0.25) -> float:
    """Bandwidth heuristic for the detector: max LOO likelihood on a 25% subsample
    of the pooled normal features."""
    pooled = np.vstack([
        np.atleast_2d(np.asarray(
            m.features if isinstance(m, ImageFeatures) else m, dtype=float))
        for m in normal_features
    ])
    grid = default_bandwidth_grid(pooled, size=20)
    return select_bandwidth(pooled, grid, subsample_fraction, seed)


def write_inspection_csv(rows, path) -> None:
    """One row per query: image, score, best_match, box (empty cells if absent)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "score", "best_match",
                         "box_row", "box_col", "box_h", "box_w"])
        for name, score, best, box in rows:
            cells = [name, format(score, ".17g"), best]
            cells += list(box) if box is not None else ["", "", "", ""]
            writer.writerow(cells)


def score_detections(results_path, labels_path) -> dict:
    """Score a results CSV against a label file.

    The label file has a header and rows ``image,is_defect[,box_row,box_col,
    box_h,box_w]`` with ``is_defect`` 0 or 1; ground-truth boxes are only
    needed for defective images. Returns the detection AUC plus the fraction
    of defective images whose predicted box reaches IOU > 0.1. Meant for
    user-supplied corpora; it has only been exercised on synthetic data.
    """
    with open(results_path, "r", encoding="utf-8", newline="") as fh:
        results = {r["image"]: r for r in csv.DictReader(fh)}
    with open(labels_path, "r", encoding="utf-8", newline="") as fh:
        labels = list(csv.DictReader(fh))
    if not labels:
        raise InvalidDataError(f"{labels_path} holds no label rows")

    pos, neg = [], []
    localized = 0
    n_defects = 0
    for row in labels:
        name = row["image"]
        if name not in results:
            raise InvalidDataError(f"{results_path} has no row for labeled image {name!r}")
        score = float(results[name]["score"])
        if int(row["is_defect"]):
            pos.append(score)
            n_defects += 1
            cells = [results[name].get(k, "") for k in
                     ("box_row", "box_col", "box_h", "box_w")]
            truth = [row.get(k, "") for k in ("box_row", "box_col", "box_h", "box_w")]
            if all(cells) and all(truth):
                pred = tuple(int(v) for v in cells)
                true_box = tuple(int(v) for v in truth)
                if iou(pred, true_box) > 0.1:
                    localized += 1
        else:
            neg.append(score)
    out = {"n_images": len(labels), "n_defects": n_defects}
    out["auc"] = rank_auc(pos, neg) if pos and neg else math.nan
    out["localization_rate"] = localized / n_defects if n_defects else math.nan
    return out
