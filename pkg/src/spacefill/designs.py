"""Design containers and dispersion criteria.

The quantity everything revolves around is the separation distance of a
design (the smallest pairwise Euclidean distance), maximized by maximin
designs, with ties broken by the number of pairs achieving it. The covering
radius (largest distance from a domain point to the design) is estimated by
Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .domains import BoundingBox, Domain, sample_uniform_many
from .errors import ConfigurationError, ValidationError

DEFAULT_TIE_TOL = 1e-9


@dataclass(frozen=True)
class Design:
    """Ordered set of points tied to a domain by label.

    Points are stored read-only; no two rows may be bit-identical.
    """

    points: np.ndarray
    domain_label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ConfigurationError("design needs an (N, d) array with N >= 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ConfigurationError("design contains bit-identical duplicate points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class MaximinScore:
    """Separation distance plus the number of pairs achieving it."""

    delta: float
    critical_pairs: int

    def beats(self, other: "MaximinScore", tie_tol: float = DEFAULT_TIE_TOL) -> bool:
        """Strictly better: larger delta, or equal delta with fewer critical pairs."""
        return compare_scores(self, other, tie_tol) > 0


def compare_scores(a: MaximinScore, b: MaximinScore, tie_tol: float = DEFAULT_TIE_TOL) -> int:
    """Total-preorder comparison: +1 if a beats b, -1 if b beats a, 0 if tied."""
    scale = max(a.delta, b.delta, 1e-300)
    if abs(a.delta - b.delta) <= tie_tol * scale:
        if a.critical_pairs < b.critical_pairs:
            return 1
        if a.critical_pairs > b.critical_pairs:
            return -1
        return 0
    return 1 if a.delta > b.delta else -1


def maximin_distance(design: Design) -> float:
    """Smallest pairwise Euclidean distance of the design."""
    if design.n < 2:
        raise ConfigurationError("separation distance needs at least two points")
    return float(pdist(design.points).min())


def maximin_score(design: Design, tie_tol: float = DEFAULT_TIE_TOL) -> MaximinScore:
    if design.n < 2:
        raise ConfigurationError("maximin score needs at least two points")
    d = pdist(design.points)
    delta = float(d.min())
    critical = int((d <= delta * (1.0 + tie_tol)).sum())
    return MaximinScore(delta=delta, critical_pairs=critical)


def covering_radius_estimate(
    design: Design,
    domain: Domain,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 20_000,
) -> float:
    """Monte Carlo lower estimate of the covering radius.

    Maximum, over uniform domain draws, of the distance to the nearest design
    point. Converges to the true covering radius from below as samples grow.
    """
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    worst = 0.0
    remaining = samples
    while remaining > 0:
        m = min(chunk, remaining)
        ys = sample_uniform_many(domain, m, rng)
        nearest = cdist(ys, design.points).min(axis=1)
        worst = max(worst, float(nearest.max()))
        remaining -= m
    return worst


def energy_difference(score_prop: MaximinScore, score_cur: MaximinScore) -> float:
    """U(prop) - U(cur); the domain-diameter constant cancels exactly."""
    return score_cur.delta - score_prop.delta


def translate_to_unit_cube(design: Design, bbox: BoundingBox) -> Design:
    """Affine map of each axis onto [0, 1]."""
    pts = (design.points - bbox.lower) / bbox.widths
    return Design(points=pts, domain_label=design.domain_label)


def translate_from_unit_cube(design: Design, bbox: BoundingBox) -> Design:
    pts = bbox.lower + design.points * bbox.widths
    return Design(points=pts, domain_label=design.domain_label)


def validate_design(design: Design, domain: Domain) -> None:
    """Raise ValidationError listing the indices of out-of-domain points."""
    if design.dim != domain.dim:
        raise ValidationError(
            f"design dim {design.dim} does not match domain dim {domain.dim}"
        )
    ok = domain.contains_many(design.points)
    if not ok.all():
        bad = np.flatnonzero(~ok).tolist()
        raise ValidationError(f"points outside domain {domain.label!r} at indices {bad}")


# ---------------------------------------------------------------------------
# incremental distance/weight cache for annealing chains


def _full_distance_matrix(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return dist


class DistanceCache:
    """Pairwise distances of a mutable point set with O(N) single-point moves.

    Keeps the full distance matrix (infinite diagonal), per-point nearest
    distances, and, when ``gamma`` is given, the pair-selection weight matrix
    1/(dist+gamma) with its row sums. Single-owner mutable state: one cache
    per annealing chain, never shared.
    """

    def __init__(self, points: np.ndarray, gamma: float | None = None):
        self.points = np.array(points, dtype=float, copy=True)
        if self.points.ndim != 2 or self.points.shape[0] < 2:
            raise ConfigurationError("distance cache needs an (N >= 2, d) point array")
        self.gamma = gamma
        self._rebuild_arrays()

    def _rebuild_arrays(self) -> None:
        self.dist = _full_distance_matrix(self.points)
        self.row_min = self.dist.min(axis=1)
        self.row_argmin = self.dist.argmin(axis=1)
        self.global_row = int(self.row_min.argmin())
        if self.gamma is not None:
            self.weights = 1.0 / (self.dist + self.gamma)
            self.weight_row_sums = self.weights.sum(axis=1)
        else:
            self.weights = None
            self.weight_row_sums = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def global_min(self) -> float:
        return float(self.row_min[self.global_row])

    @property
    def argmin_pair(self) -> tuple[int, int]:
        i = self.global_row
        j = int(self.row_argmin[i])
        return (i, j) if i < j else (j, i)

    @property
    def weight_total(self) -> float:
        """Sum of 1/(dist+gamma) over unordered pairs (D in the selection law)."""
        if self.weight_row_sums is None:
            raise ConfigurationError("cache was built without gamma; no weights available")
        return float(self.weight_row_sums.sum()) / 2.0

    def distances_from(self, point: np.ndarray, skip: int) -> np.ndarray:
        """Distances from ``point`` to every cached point, +inf at ``skip``."""
        diff = self.points - point
        v = np.sqrt((diff * diff).sum(axis=1))
        v[skip] = np.inf
        return v

    def min_excluding(self, k: int) -> float:
        """Smallest pairwise distance among points other than k."""
        g = self.global_row
        if g != k and self.row_argmin[g] != k:
            # the globally closest pair survives removal of k
            return float(self.row_min[g])
        rm = self.row_min.copy()
        rm[k] = np.inf
        for h in np.flatnonzero(self.row_argmin == k):
            if h == k:
                continue
            save = self.dist[h, k]
            self.dist[h, k] = np.inf
            rm[h] = self.dist[h].min()
            self.dist[h, k] = save
        return float(rm.min())

    def delta_if_moved(self, k: int, v: np.ndarray) -> float:
        """Separation distance after replacing point k, given its new distance row v."""
        return min(self.min_excluding(k), float(v.min()))

    def update(self, k: int, new_point: np.ndarray, v: np.ndarray | None = None) -> None:
        """Move point k; O(N) except when stale nearest-neighbor rows need rescans."""
        if v is None:
            v = self.distances_from(np.asarray(new_point, dtype=float), k)
        self.points[k] = new_point
        if self.weights is not None:
            old_col = self.weights[:, k].copy()
            w = 1.0 / (v + self.gamma)
            self.weights[k, :] = w
            self.weights[:, k] = w
            self.weight_row_sums += w - old_col
            self.weight_row_sums[k] = w.sum()
        self.dist[k, :] = v
        self.dist[:, k] = v
        self.row_min[k] = v.min()
        self.row_argmin[k] = int(v.argmin())
        improved = v < self.row_min
        improved[k] = False
        self.row_min[improved] = v[improved]
        self.row_argmin[improved] = k
        maybe_stale = (self.row_argmin == k) & ~improved
        maybe_stale[k] = False
        if maybe_stale.any():
            for h in np.flatnonzero(maybe_stale):
                self.row_min[h] = self.dist[h].min()
                self.row_argmin[h] = int(self.dist[h].argmin())
        self.global_row = int(self.row_min.argmin())

    def rebuild(self) -> None:
        """Full O(N^2) recomputation from the stored points."""
        self._rebuild_arrays()

    def check_consistent(self) -> bool:
        """Debug check: incremental state equals a full recomputation, bit for bit."""
        fresh = DistanceCache(self.points, gamma=self.gamma)
        ok = np.array_equal(self.dist, fresh.dist) and np.array_equal(
            self.row_min, fresh.row_min
        )
        if ok and self.weights is not None:
            ok = np.array_equal(self.weights, fresh.weights) and bool(
                np.allclose(self.weight_row_sums, fresh.weight_row_sums, rtol=1e-12, atol=0.0)
            )
        return bool(ok)

    def score(self, tie_tol: float = DEFAULT_TIE_TOL) -> MaximinScore:
        """Maximin score of the current points, from the cached matrix."""
        delta = self.global_min
        tri = self.dist[np.triu_indices(self.n, k=1)]
        critical = int((tri <= delta * (1.0 + tie_tol)).sum())
        return MaximinScore(delta=delta, critical_pairs=critical)


def update_distance_cache(cache: DistanceCache, moved_index: int, new_point) -> DistanceCache:
    """Functional wrapper around :meth:`DistanceCache.update` (mutates and returns)."""
    cache.update(moved_index, np.asarray(new_point, dtype=float))
    return cache
