"""Comparison design generators: uniform, Latin hypercube (plain, annealed,
truncated) and Sobol sequences constrained to a domain."""

from __future__ import annotations

import math

import numpy as np

from .designs import Design, DistanceCache, maximin_distance
from .domains import Domain, sample_uniform_many
from .errors import ConfigurationError, SamplingError

# Primitive-polynomial parameters for dimensions 2..10: (degree, encoded
# inner coefficients, initial direction integers m_1..m_s). Dimension 1 is
# the plain van der Corput recursion (all m_k = 1).
_SOBOL_POLY = (
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
)

_SOBOL_BITS = 32
_SOBOL_MAX_DIM = len(_SOBOL_POLY) + 1


def _direction_integers(dim_index: int) -> np.ndarray:
    """32-bit direction integers for one coordinate (0-based dim index)."""
    v = np.zeros(_SOBOL_BITS, dtype=np.uint64)
    if dim_index == 0:
        for k in range(_SOBOL_BITS):
            v[k] = np.uint64(1 << (_SOBOL_BITS - 1 - k))
        return v
    s, a, m_init = _SOBOL_POLY[dim_index - 1]
    m = list(m_init)
    for k in range(s, _SOBOL_BITS):
        new = m[k - s] ^ (m[k - s] << s)
        for t in range(1, s):
            if (a >> (s - 1 - t)) & 1:
                new ^= m[k - t] << t
        m.append(new)
    for k in range(_SOBOL_BITS):
        v[k] = np.uint64(m[k] << (_SOBOL_BITS - 1 - k))
    return v


class SobolGenerator:
    """Gray-code Sobol sequence from embedded direction numbers (d <= 10).

    Dimension 1 reproduces the base-2 radical inverse (in Gray-code order);
    all outputs lie in [0, 1)^d. The generator is deterministic: the n-th
    point only depends on n.
    """

    def __init__(self, dim: int):
        if not (1 <= dim <= _SOBOL_MAX_DIM):
            raise ConfigurationError(f"Sobol generator supports 1 <= d <= {_SOBOL_MAX_DIM}")
        self.dim = dim
        self._v = np.stack([_direction_integers(j) for j in range(dim)])
        self._state = np.zeros(dim, dtype=np.uint64)
        self._index = 0  # points emitted so far; point 0 is the origin

    def next_points(self, count: int) -> np.ndarray:
        """The next ``count`` points of the sequence, shape (count, d)."""
        out = np.empty((count, self.dim))
        inv = 1.0 / float(1 << _SOBOL_BITS)
        for row in range(count):
            if self._index == 0:
                out[row] = 0.0
            else:
                n = self._index - 1
                c = 0
                while (n >> c) & 1:
                    c += 1
                self._state ^= self._v[:, c]
                out[row] = self._state.astype(np.float64) * inv
            self._index += 1
        return out

    def skip(self, count: int) -> None:
        self.next_points(count)


def uniform_design(domain: Domain, n: int, rng: np.random.Generator) -> Design:
    """n i.i.d. uniform points on the domain (exact rejection sampling)."""
    if n < 2:
        raise ConfigurationError("a design needs at least 2 points")
    return Design(points=sample_uniform_many(domain, n, rng), domain_label=domain.label)


def lhs(n: int, d: int, rng: np.random.Generator) -> Design:
    """Latin hypercube on [0,1]^d: one point per stratum in every projection."""
    if n < 2 or d < 1:
        raise ConfigurationError("lhs needs n >= 2 and d >= 1")
    pts = np.empty((n, d))
    for j in range(d):
        pts[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return Design(points=pts, domain_label=f"unit_cube{d}d")


def maximin_lhs(
    n: int,
    d: int,
    iterations: int,
    rng: np.random.Generator,
    t0: float | None = None,
) -> Design:
    """Anneal the separation distance within the Latin hypercube class.

    Proposals swap two entries of one random column, which preserves the
    stratum property; acceptance is Metropolis on the separation-distance
    difference with beta_n = sqrt(n)/T0. Returns the best design visited.
    """
    if iterations < 1:
        raise ConfigurationError("iterations must be >= 1")
    design = lhs(n, d, rng)
    if t0 is None:
        probes = [maximin_distance(lhs(n, d, rng)) for _ in range(10)]
        t0 = 0.5 * float(np.median(probes))
    cache = DistanceCache(design.points)
    delta_cur = cache.global_min
    best_pts = cache.points.copy()
    best_delta = delta_cur
    for it in range(1, iterations + 1):
        beta = math.sqrt(it) / t0
        col = int(rng.integers(d))
        i1 = int(rng.integers(n))
        i2 = int(rng.integers(n - 1))
        if i2 >= i1:
            i2 += 1
        p1_old = cache.points[i1].copy()
        p2_old = cache.points[i2].copy()
        p1_new = p1_old.copy()
        p2_new = p2_old.copy()
        p1_new[col], p2_new[col] = p2_old[col], p1_old[col]
        cache.update(i1, p1_new)
        cache.update(i2, p2_new)
        delta_prop = cache.global_min
        log_ratio = beta * (delta_prop - delta_cur)
        if log_ratio >= 0.0 or math.log(rng.random()) < log_ratio:
            delta_cur = delta_prop
            if delta_cur > best_delta:
                best_delta = delta_cur
                best_pts = cache.points.copy()
        else:
            cache.update(i1, p1_old)
            cache.update(i2, p2_old)
    return Design(points=best_pts, domain_label=f"unit_cube{d}d")


def truncated_lhs(
    domain: Domain,
    m_hypercube: int,
    rng: np.random.Generator,
    maximin: bool = False,
    maximin_iterations: int = 20_000,
) -> Design:
    """LHS (optionally maximin-annealed) on the bbox, restricted to the domain.

    The realized size is random; fewer than two survivors is an error.
    """
    base = maximin_lhs(m_hypercube, domain.dim, maximin_iterations, rng) if maximin \
        else lhs(m_hypercube, domain.dim, rng)
    pts = domain.bbox.lower + base.points * domain.bbox.widths
    keep = domain.contains_many(pts)
    if int(keep.sum()) < 2:
        raise SamplingError(
            f"only {int(keep.sum())} of {m_hypercube} LHS points fall in {domain.label!r}"
        )
    return Design(points=pts[keep], domain_label=domain.label)


def sobol_design(
    domain: Domain,
    n_target: int,
    skip: int = 0,
    max_draws: int | None = None,
) -> Design:
    """First n_target Sobol points (bbox-mapped) that belong to the domain.

    The all-zeros initial point is dropped (degenerate for maximin);
    deterministic given ``skip``.
    """
    if n_target < 2:
        raise ConfigurationError("a design needs at least 2 points")
    if max_draws is None:
        max_draws = max(100_000, 1000 * n_target)
    gen = SobolGenerator(domain.dim)
    gen.skip(1 + skip)
    lo, widths = domain.bbox.lower, domain.bbox.widths
    collected: list[np.ndarray] = []
    drawn = 0
    while len(collected) < n_target:
        batch = min(max(256, n_target), max_draws - drawn)
        if batch <= 0:
            raise SamplingError(
                f"exhausted {max_draws} Sobol draws with only {len(collected)} "
                f"of {n_target} points in {domain.label!r}"
            )
        pts = lo + widths * gen.next_points(batch)
        drawn += batch
        inside = domain.contains_many(pts)
        for p in pts[inside]:
            collected.append(p)
            if len(collected) == n_target:
                break
    return Design(points=np.asarray(collected), domain_label=domain.label)
