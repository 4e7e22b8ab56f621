"""Sky/non-sky segmentation with a per-image Gaussian mixture over RGB.

Each image gets its own K-component mixture with diagonal covariances fitted
by expectation-maximisation. The component that looks most like sky (blue
and bright) becomes the mask; a 3x3 majority filter removes speckle.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientData
from .imaging import BinaryMask, RasterImage

VARIANCE_FLOOR = 1.0
MAX_FIT_PIXELS = 50_000
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SegmentationConfig:
    K: int = 2
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0
    cleanup_passes: int = 1
    degenerate_separation_threshold: float = 20.0
    # global-mean sky-likeness needed to call a featureless image all-sky
    sky_score_threshold: float = 0.4
    blue_weight: float = 0.5
    luma_weight: float = 0.5
    max_fit_pixels: int = MAX_FIT_PIXELS

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def K(self) -> int:
        return len(self.weights)

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """``log w_k + log N(x | mu_k, diag var_k)`` as an ``(n, K)`` array."""
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((len(x), self.K))
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        for k in range(self.K):
            var = self.variances[k]
            diff = x - self.means[k]
            out[:, k] = (logw[k] - 0.5 * (3 * _LOG_2PI + np.log(var).sum())
                         - 0.5 * (diff * diff / var).sum(axis=1))
        return out

    def responsibilities(self, x: np.ndarray) -> tuple:
        lj = self.log_joint(x)
        mx = lj.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(lj - mx).sum(axis=1))
        return np.exp(lj - lse[:, None]), math.fsum(lse)

    def predict(self, x: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
        labels = np.empty(len(x), dtype=np.int64)
        for start in range(0, len(x), chunk):
            labels[start:start + chunk] = self.log_joint(x[start:start + chunk]).argmax(axis=1)
        return labels


@dataclass(frozen=True)
class SkyScore:
    point_id: int
    percent: float
    sky_pixels: int
    total_pixels: int


@dataclass
class FitResult:
    model: GmmModel
    trace: list = field(default_factory=list)
    converged: bool = False


def _kmeanspp(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over distinct colours."""
    distinct = np.unique(x, axis=0)
    centers = [distinct[rng.integers(len(distinct))]]
    d2 = ((distinct - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            break
        idx = rng.choice(len(distinct), p=d2 / total)
        centers.append(distinct[idx])
        d2 = np.minimum(d2, ((distinct - distinct[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def fit_gmm(pixels, cfg: SegmentationConfig = SegmentationConfig()) -> FitResult:
    """Fit a diagonal-covariance mixture to RGB pixels by EM.

    ``trace[0]`` is the log-likelihood at initialisation and ``trace[-1]``
    that of the returned model.
    """
    x = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    K = cfg.K
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if len(x) > cfg.max_fit_pixels:
        x = x[np.sort(rng.choice(len(x), cfg.max_fit_pixels, replace=False))]
    if len(np.unique(x, axis=0)) < K:
        raise InsufficientData(f"need at least {K} distinct colours to fit {K} components")

    means = _kmeanspp(x, K, rng)
    spread = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    model = GmmModel(np.full(K, 1.0 / K), means, np.tile(spread, (K, 1)))

    resp, ll = model.responsibilities(x)
    trace = [ll]
    converged = False
    n = len(x)
    for _ in range(cfg.max_iter):
        nk = resp.sum(axis=0)
        weights = nk / n
        means = model.means.copy()
        variances = model.variances.copy()
        for k in range(K):
            # an empty component keeps its shape and gets zero weight
            if nk[k] <= 0:
                continue
            r = resp[:, k]
            means[k] = r @ x / nk[k]
            diff = x - means[k]
            variances[k] = np.maximum(r @ (diff * diff) / nk[k], VARIANCE_FLOOR)
        model = GmmModel(weights / weights.sum(), means, variances)
        resp, ll = model.responsibilities(x)
        prev = trace[-1]
        trace.append(ll)
        if abs(ll - prev) <= cfg.tol * abs(prev):
            converged = True
            break
    return FitResult(model, trace, converged)


def sky_likeness(rgb, cfg: SegmentationConfig = SegmentationConfig()) -> float:
    r, g, b = (float(c) for c in rgb)
    luma = 0.299 * r + 0.587 * g + 0.114 * b
    return cfg.blue_weight * (b - r) / 255.0 + cfg.luma_weight * luma / 255.0


def select_sky_component(model: GmmModel, cfg: SegmentationConfig = SegmentationConfig()) -> int:
    """Index of the bluest/brightest component; ties go to the lower index."""
    scores = [sky_likeness(m, cfg) for m in model.means]
    return int(np.argmax(scores))


def majority_filter(bits: np.ndarray) -> np.ndarray:
    """One pass of a 3x3 majority vote over in-bounds neighbours.

    A pixel takes the majority value of its neighbourhood (itself included);
    an exact tie, possible only at the border, keeps the current value.
    """
    b = np.asarray(bits, dtype=bool)
    padded_on = np.pad(b.astype(np.int32), 1)
    padded_valid = np.pad(np.ones(b.shape, dtype=np.int32), 1)
    h, w = b.shape
    on = np.zeros((h, w), dtype=np.int32)
    valid = np.zeros((h, w), dtype=np.int32)
    for dy in range(3):
        for dx in range(3):
            on += padded_on[dy:dy + h, dx:dx + w]
            valid += padded_valid[dy:dy + h, dx:dx + w]
    twice = 2 * on
    return np.where(twice > valid, True, np.where(twice < valid, False, b))


def segment_sky(img: RasterImage, cfg: SegmentationConfig = SegmentationConfig()) -> BinaryMask:
    x = img.flat().astype(np.float64)
    distinct = len(np.unique(img.flat(), axis=0))
    # an image with fewer colours than components is fitted with fewer components
    k_eff = min(cfg.K, distinct)
    while True:
        try:
            model = fit_gmm(x, replace(cfg, K=k_eff)).model
            break
        except InsufficientData:
            # the fitting subsample can hold fewer colours than the full image
            if k_eff == 1:
                raise
            k_eff -= 1

    if model.K > 1:
        diffs = model.means[:, None, :] - model.means[None, :, :]
        separation = float(np.sqrt((diffs ** 2).sum(axis=2)).max())
    else:
        separation = 0.0

    if separation < cfg.degenerate_separation_threshold:
        is_sky = sky_likeness(x.mean(axis=0), cfg) >= cfg.sky_score_threshold
        bits = np.full((img.height, img.width), is_sky)
        return BinaryMask(bits)

    sky = select_sky_component(model, cfg)
    bits = (model.predict(x) == sky).reshape(img.height, img.width)
    for _ in range(cfg.cleanup_passes):
        bits = majority_filter(bits)
    return BinaryMask(bits)


def sky_visibility_score(mask: BinaryMask, point_id: int = -1) -> SkyScore:
    total = int(mask.bits.size)
    sky = int(mask.bits.sum())
    return SkyScore(point_id, 100.0 * sky / total, sky, total)
