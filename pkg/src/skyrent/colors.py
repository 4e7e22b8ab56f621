"""Dominant colours of sidewalk images via k-medoids (PAM).

PAM runs on the distinct colours of the (subsampled) pixel list, each
weighted by its multiplicity. Duplicates sit at distance zero from each
other, so the weighted problem has exactly the same costs as the raw one and
is far cheaper on real 8-bit images.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewPoints
from .imaging import HsbColor, RasterImage, rgb_to_hsb

_CHUNK = 512
_DENSE_LIMIT = 5000
_TIE = 1e-12


@dataclass(frozen=True)
class KMedoidsConfig:
    k: int = 3
    max_pixels: int = 10_000
    seed: int = 0
    max_swap_iters: int = 200

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class KMedoidsResult:
    medoids: np.ndarray
    assignment: np.ndarray
    total_cost: float
    medoid_indices: np.ndarray
    build_cost: float
    n_swaps: int = 0
    costs: list = field(default_factory=list)


@dataclass(frozen=True)
class ColorEntry:
    rgb: tuple
    hsb: HsbColor
    proportion: float


@dataclass(frozen=True)
class DominantColorSet:
    point_id: int
    camera_label: str
    entries: tuple


class _Distances:
    """Row access to the Euclidean distance matrix of a point set.

    Small sets keep the full matrix; larger ones recompute row blocks on
    demand. Integer RGB inputs make the expanded form exact in float64.
    """

    def __init__(self, pts: np.ndarray):
        self.pts = pts
        self.sq = (pts * pts).sum(axis=1)
        self.n = len(pts)
        self.full = self.block(0, self.n) if self.n <= _DENSE_LIMIT else None

    def block(self, start: int, stop: int) -> np.ndarray:
        if getattr(self, "full", None) is not None:
            return self.full[start:stop]
        p = self.pts[start:stop]
        d2 = self.sq[start:stop, None] + self.sq[None, :] - 2.0 * (p @ self.pts.T)
        return np.sqrt(np.maximum(d2, 0.0))

    def rows(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        if self.full is not None:
            return self.full[idx]
        p = self.pts[idx]
        d2 = self.sq[idx, None] + self.sq[None, :] - 2.0 * (p @ self.pts.T)
        return np.sqrt(np.maximum(d2, 0.0))

    def chunks(self):
        for start in range(0, self.n, _CHUNK):
            stop = min(start + _CHUNK, self.n)
            yield start, stop, self.block(start, stop)


def _nearest_two(dm: np.ndarray) -> tuple:
    """Nearest and second-nearest medoid slot per point.

    ``dm`` is ``(k, n)`` with medoid slots ordered by point index, so
    ``argmin`` resolves ties towards the lowest medoid index.
    """
    near = dm.argmin(axis=0)
    cols = np.arange(dm.shape[1])
    dn = dm[near, cols]
    if dm.shape[0] == 1:
        return near, dn, np.full_like(dn, np.inf)
    masked = dm.copy()
    masked[near, cols] = np.inf
    return near, dn, masked.min(axis=0)


def _pam(pts: np.ndarray, w: np.ndarray, k: int, max_swap_iters: int) -> tuple:
    dist = _Distances(pts)
    n = len(pts)

    # BUILD
    td = np.zeros(n)
    for start, stop, blk in dist.chunks():
        td[start:stop] = blk @ w
    # near-equal candidates (rounding noise on exact ties) go to the lowest index
    medoids = [int(np.flatnonzero(td <= td.min() + _TIE * max(td.min(), 1.0))[0])]
    dn = dist.rows([medoids[0]])[0]
    for _ in range(1, k):
        gain = np.empty(n)
        for start, stop, blk in dist.chunks():
            gain[start:stop] = np.maximum(dn[None, :] - blk, 0.0) @ w
        gain[medoids] = -np.inf
        top = gain.max()
        c = int(np.flatnonzero(gain >= top - _TIE * max(float(dn @ w), 1.0))[0])
        medoids.append(c)
        dn = np.minimum(dn, dist.rows([c])[0])
    medoids.sort()
    build_cost = float(dn @ w)

    # SWAP: exact change in cost for every (medoid slot, candidate) pair
    costs = [build_cost]
    swaps = 0
    while swaps < max_swap_iters:
        dm = dist.rows(medoids)
        near, dn, ds = _nearest_two(dm)
        current = float(dn @ w)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), near] = w
        best = (0.0, None, None)
        tol = _TIE * max(current, 1.0)
        for start, stop, blk in dist.chunks():
            # points that move closer to c gain regardless of which medoid leaves;
            # members of the leaving medoid's cluster otherwise fall back to
            # min(d(o, c), second-nearest)
            gain = np.minimum(blk - dn[None, :], 0.0)
            loss = np.clip(blk, dn[None, :], ds[None, :]) - dn[None, :]
            delta = (gain @ w)[:, None] + loss @ onehot
            delta[np.isin(np.arange(start, stop), medoids)] = np.inf
            flat = int(np.argmin(delta))
            ci, mi = divmod(flat, k)
            if delta[ci, mi] < best[0] - tol:
                best = (float(delta[ci, mi]), start + ci, mi)
        if best[1] is None:
            break
        medoids[best[2]] = best[1]
        medoids.sort()
        swaps += 1
        costs.append(current + best[0])

    dm = dist.rows(medoids)
    near, dn, _ = _nearest_two(dm)
    return np.array(medoids), near, float(dn @ w), build_cost, swaps, costs


def kmedoids(points, cfg: KMedoidsConfig = KMedoidsConfig()) -> KMedoidsResult:
    """Partitioning Around Medoids with BUILD initialisation and best-swap SWAP.

    Ties resolve to the lowest point index throughout. ``medoid_indices``
    refer to the first occurrence of each medoid colour in ``points``.
    """
    x = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(x) < cfg.k:
        raise TooFewPoints(f"{len(x)} points cannot support {cfg.k} medoids")

    uniq, first, inverse, counts = np.unique(
        x, axis=0, return_index=True, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    pts, w, first = uniq[order], counts[order].astype(np.float64), first[order]
    inverse = rank[inverse]

    k_eff = min(cfg.k, len(pts))
    med, near, cost, build_cost, swaps, costs = _pam(pts, w, k_eff, cfg.max_swap_iters)
    if k_eff < cfg.k:
        # fewer distinct colours than k: pad with duplicate members, cost is already 0
        extra = [i for i in range(len(x)) if i not in set(first[med])][: cfg.k - k_eff]
        med_idx = np.concatenate([first[med], np.array(extra, dtype=np.int64)])
    else:
        med_idx = first[med]
    return KMedoidsResult(
        medoids=x[med_idx].astype(np.int64) if np.all(x == np.round(x)) else x[med_idx],
        assignment=near[inverse],
        total_cost=cost,
        medoid_indices=med_idx,
        build_cost=build_cost,
        n_swaps=swaps,
        costs=costs,
    )


def dominant_colors(img: RasterImage, cfg: KMedoidsConfig = KMedoidsConfig(),
                    point_id: int = -1, camera_label: str = "") -> DominantColorSet:
    """Top-k medoid colours of an image, ordered by cluster share."""
    px = img.flat()
    if len(px) > cfg.max_pixels:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        px = px[np.sort(rng.choice(len(px), cfg.max_pixels, replace=False))]
    k = min(cfg.k, len(px))
    res = kmedoids(px, KMedoidsConfig(k, cfg.max_pixels, cfg.seed, cfg.max_swap_iters))
    sizes = np.bincount(res.assignment, minlength=k)
    entries = []
    for slot in range(k):
        rgb = tuple(int(c) for c in res.medoids[slot])
        entries.append(ColorEntry(rgb, rgb_to_hsb(rgb), float(sizes[slot] / len(px))))
    entries.sort(key=lambda e: (-e.proportion, e.hsb.h))
    return DominantColorSet(point_id, camera_label, tuple(entries))


COLORS_HEADER = ["point_id", "camera_label", "rank", "r", "g", "b", "h", "s", "b_val",
                 "proportion"]


def color_rows(cs: DominantColorSet) -> list:
    return [
        [cs.point_id, cs.camera_label, rank, *e.rgb, repr(e.hsb.h), repr(e.hsb.s),
         repr(e.hsb.b), repr(float(e.proportion))]
        for rank, e in enumerate(cs.entries, start=1)
    ]
