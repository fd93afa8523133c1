"""Bounded input domains: built-in shapes, external indicator processes,
rejection sampling, empirical covariance, volume and Gaussian-mass utilities.

A domain is a bounded region of R^d given by an enclosing axis-aligned box
plus a membership predicate. The predicate may be an in-process function
(built-in shapes) or an external program speaking a line protocol.
"""

from __future__ import annotations

import math
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, MembershipError, SamplingError

DEFAULT_MAX_ATTEMPTS = 1_000_000
DEFAULT_MASS_SAMPLES = 4096


def _as_point(x, dim: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise ConfigurationError(f"expected a 1-D point, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise ConfigurationError(f"point has dim {p.shape[0]}, expected {dim}")
    return p


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box [lower, upper] enclosing a domain."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("bbox lower/upper must be 1-D vectors of equal length")
        if not np.all(lo < hi):
            raise ConfigurationError("bbox requires lower[k] < upper[k] on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.widths))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x) -> bool:
        p = _as_point(x, self.dim)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric positive-definite covariance with the jitter that made it so."""

    entries: np.ndarray
    jitter_applied: float = 0.0

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ConfigurationError("covariance must be square")
        m = (m + m.T) / 2.0
        if np.linalg.eigvalsh(m)[0] <= 0.0:
            raise ConfigurationError("covariance must be positive definite (after jitter)")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.entries)

    def is_diagonal(self, rel_tol: float = 0.0) -> bool:
        """True when off-diagonal correlations are within rel_tol of zero."""
        d = np.sqrt(np.diag(self.entries))
        off = self.entries - np.diag(np.diag(self.entries))
        return bool(np.all(np.abs(off) <= rel_tol * np.outer(d, d) + 1e-300))


@dataclass
class Domain:
    """Bounded region: enclosing box plus a membership predicate.

    ``predicate`` is only ever called on points inside the box; use
    :meth:`contains` / :meth:`contains_many`, which enforce the box first.
    ``batch_predicate``, when set, vectorizes membership over an (n, d) array.
    """

    dim: int
    bbox: BoundingBox
    predicate: Callable[[np.ndarray], bool]
    volume_upper_bound: float | None = None
    label: str = "domain"
    is_hypercube: bool = False
    batch_predicate: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    spec: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigurationError("domain dim must be positive")
        if self.bbox.dim != self.dim:
            raise ConfigurationError("bbox dim does not match domain dim")
        if self.volume_upper_bound is not None:
            if self.volume_upper_bound <= 0:
                raise ConfigurationError("volume_upper_bound must be positive")
            if self.volume_upper_bound > self.bbox.volume * (1 + 1e-12):
                raise ConfigurationError("volume_upper_bound exceeds bbox volume")

    def contains(self, x) -> bool:
        p = _as_point(x, self.dim)
        if not (np.all(p >= self.bbox.lower) and np.all(p <= self.bbox.upper)):
            return False
        return bool(self.predicate(p))

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        inside = self.bbox.contains_many(pts)
        if not inside.any():
            return inside
        if self.batch_predicate is not None:
            out = inside.copy()
            out[inside] = np.asarray(self.batch_predicate(pts[inside]), dtype=bool)
            return out
        out = inside.copy()
        for idx in np.flatnonzero(inside):
            out[idx] = bool(self.predicate(pts[idx]))
        return out


# ---------------------------------------------------------------------------
# built-in domains


def _ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0) * radius**dim


def make_builtin_domain(kind: str, **params) -> Domain:
    """Construct one of the built-in domains.

    Supported kinds and parameters:

    * ``hypercube``: ``lower``, ``upper`` vectors.
    * ``triangle2d``: the half square {(x1, x2) in [0,1]^2 : x1 > x2}.
    * ``ball``: ``center`` vector, ``radius``.
    * ``annulus``: ``center`` vector, ``inner_radius``, ``outer_radius``.
    """
    if kind == "hypercube":
        bbox = BoundingBox(np.asarray(params["lower"], float), np.asarray(params["upper"], float))
        return Domain(
            dim=bbox.dim,
            bbox=bbox,
            predicate=lambda x: True,
            volume_upper_bound=bbox.volume,
            label=params.get("label", f"hypercube{bbox.dim}d"),
            is_hypercube=True,
            batch_predicate=lambda pts: np.ones(len(pts), dtype=bool),
            spec={
                "kind": "hypercube",
                "dim": bbox.dim,
                "bbox": {"lower": bbox.lower.tolist(), "upper": bbox.upper.tolist()},
                "params": {"lower": bbox.lower.tolist(), "upper": bbox.upper.tolist()},
            },
        )
    if kind == "triangle2d":
        bbox = BoundingBox(np.zeros(2), np.ones(2))
        return Domain(
            dim=2,
            bbox=bbox,
            predicate=lambda x: x[0] > x[1],
            volume_upper_bound=0.5,
            label="triangle2d",
            batch_predicate=lambda pts: pts[:, 0] > pts[:, 1],
            spec={"kind": "triangle2d", "dim": 2,
                  "bbox": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]}, "params": {}},
        )
    if kind == "ball":
        center = np.atleast_1d(np.asarray(params["center"], float))
        radius = float(params["radius"])
        if radius <= 0:
            raise ConfigurationError("ball radius must be positive")
        if center.ndim != 1 or center.size == 0:
            raise ConfigurationError("ball center must be a nonempty vector")
        bbox = BoundingBox(center - radius, center + radius)
        return Domain(
            dim=center.size,
            bbox=bbox,
            predicate=lambda x: float(np.dot(x - center, x - center)) <= radius * radius,
            volume_upper_bound=_ball_volume(center.size, radius),
            label=f"ball{center.size}d",
            batch_predicate=lambda pts: ((pts - center) ** 2).sum(axis=1) <= radius * radius,
            spec={
                "kind": "ball",
                "dim": center.size,
                "bbox": {"lower": bbox.lower.tolist(), "upper": bbox.upper.tolist()},
                "params": {"center": center.tolist(), "radius": radius},
            },
        )
    if kind == "annulus":
        center = np.atleast_1d(np.asarray(params["center"], float))
        inner = float(params["inner_radius"])
        outer = float(params["outer_radius"])
        if not (0 <= inner < outer):
            raise ConfigurationError("annulus requires 0 <= inner_radius < outer_radius")
        bbox = BoundingBox(center - outer, center + outer)

        def _in_annulus(x, c=center, lo2=inner * inner, hi2=outer * outer):
            r2 = float(np.dot(x - c, x - c))
            return lo2 <= r2 <= hi2

        def _in_annulus_many(pts, c=center, lo2=inner * inner, hi2=outer * outer):
            r2 = ((pts - c) ** 2).sum(axis=1)
            return (r2 >= lo2) & (r2 <= hi2)

        return Domain(
            dim=center.size,
            bbox=bbox,
            predicate=_in_annulus,
            volume_upper_bound=_ball_volume(center.size, outer) - _ball_volume(center.size, inner),
            label=f"annulus{center.size}d",
            batch_predicate=_in_annulus_many,
            spec={
                "kind": "annulus",
                "dim": center.size,
                "bbox": {"lower": bbox.lower.tolist(), "upper": bbox.upper.tolist()},
                "params": {"center": center.tolist(), "inner_radius": inner, "outer_radius": outer},
            },
        )
    raise ConfigurationError(f"unknown builtin domain kind {kind!r}")


# ---------------------------------------------------------------------------
# external indicator protocol


class ExternalIndicator:
    """Membership oracle backed by a child process.

    Line protocol, bit-exact: we write one point per line as space-separated
    decimals (round-trippable ``repr``), the child answers ``1`` or ``0`` per
    line, in order, unbuffered. Responses are cached by the exact float bytes
    of the queried point; access to the child is serialized with a lock.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ConfigurationError(f"cannot spawn indicator {self.command!r}: {exc}") from exc
        self._lock = threading.Lock()
        self._cache: dict[bytes, bool] = {}

    def __call__(self, x: np.ndarray) -> bool:
        key = x.tobytes()
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            line = " ".join(repr(float(v)) for v in x)
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                answer = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise MembershipError(f"indicator process {self.command!r} died: {exc}") from exc
            if answer == "":
                code = self._proc.poll()
                raise MembershipError(
                    f"indicator process {self.command!r} closed its output (exit code {code})"
                )
            answer = answer.strip()
            if answer == "1":
                value = True
            elif answer == "0":
                value = False
            else:
                raise MembershipError(
                    f"indicator protocol violation: expected '0' or '1', got {answer!r}"
                )
            self._cache[key] = value
            return value

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            self._proc.wait(timeout=5)

    def __del__(self):  # pragma: no cover - best effort cleanup
        try:
            self.close()
        except Exception:
            pass


def make_external_domain(
    dim: int,
    bbox: BoundingBox,
    command: Sequence[str],
    volume_upper_bound: float | None = None,
    label: str = "external",
) -> Domain:
    """Domain whose membership is decided by an external program."""
    indicator = ExternalIndicator(command)
    return Domain(
        dim=dim,
        bbox=bbox,
        predicate=indicator,
        volume_upper_bound=volume_upper_bound,
        label=label,
    )


# ---------------------------------------------------------------------------
# sampling and integration utilities


def sample_uniform(
    domain: Domain, rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS
) -> np.ndarray:
    """One exact uniform draw on the domain by rejection from the bbox."""
    if max_attempts < 1:
        raise ConfigurationError("max_attempts must be >= 1")
    lo, widths = domain.bbox.lower, domain.bbox.widths
    attempts = 0
    while attempts < max_attempts:
        batch = min(max_attempts - attempts, 64)
        cand = lo + widths * rng.random((batch, domain.dim))
        ok = domain.contains_many(cand)
        attempts += batch
        hit = np.flatnonzero(ok)
        if hit.size:
            # discard draws after the first hit so attempt accounting stays exact
            return cand[hit[0]]
    raise SamplingError(
        f"no point of {domain.label!r} found in {attempts} rejection attempts"
    )


def sample_uniform_many(
    domain: Domain,
    n: int,
    rng: np.random.Generator,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> np.ndarray:
    """n i.i.d. uniform draws on the domain, shape (n, d).

    Batched rejection sampling; the attempt budget is max_attempts per point
    on aggregate.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    lo, widths = domain.bbox.lower, domain.bbox.widths
    out = np.empty((n, domain.dim))
    got = 0
    attempts = 0
    limit = max_attempts * n
    while got < n:
        if attempts >= limit:
            raise SamplingError(
                f"{got}/{n} points of {domain.label!r} found in {attempts} rejection attempts"
            )
        batch = min(max(256, 2 * (n - got)), 65_536, limit - attempts)
        cand = lo + widths * rng.random((batch, domain.dim))
        attempts += batch
        hits = cand[domain.contains_many(cand)]
        take = min(len(hits), n - got)
        out[got : got + take] = hits[:take]
        got += take
    return out


def empirical_covariance(
    domain: Domain,
    rng: np.random.Generator,
    samples: int,
    jitter_rel: float = 1e-8,
) -> CovarianceMatrix:
    """Unbiased sample covariance of uniform draws, jittered to be PD.

    Jitter is added to the diagonal whenever the smallest eigenvalue falls
    below ``jitter_rel * trace / d`` (thin domains produce near-singular
    covariances); the total amount added is recorded.
    """
    d = domain.dim
    if samples < d + 1:
        raise ConfigurationError(f"need at least d+1={d + 1} samples, got {samples}")
    pts = sample_uniform_many(domain, samples, rng)
    if np.all(np.ptp(pts, axis=0) == 0.0):
        raise SamplingError("degenerate sample: all draws identical")
    cov = np.atleast_2d(np.cov(pts, rowvar=False, ddof=1))
    cov = (cov + cov.T) / 2.0
    floor = jitter_rel * np.trace(cov) / d
    jitter = 0.0
    bump = floor
    while np.linalg.eigvalsh(cov)[0] < floor:
        cov += bump * np.eye(d)
        jitter += bump
        bump *= 10.0
    return CovarianceMatrix(entries=cov, jitter_applied=jitter)


def estimate_volume(
    domain: Domain,
    rng: np.random.Generator | None = None,
    samples: int = 100_000,
    force_monte_carlo: bool = False,
) -> float:
    """Volume of the domain: the analytic value when known, else hit-or-miss MC."""
    if domain.volume_upper_bound is not None and not force_monte_carlo:
        return domain.volume_upper_bound
    if rng is None:
        raise ConfigurationError("Monte Carlo volume estimation needs an rng")
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    lo, widths = domain.bbox.lower, domain.bbox.widths
    cand = lo + widths * rng.random((samples, domain.dim))
    hits = int(domain.contains_many(cand).sum())
    if hits == 0:
        raise SamplingError(
            f"no hits in {samples} volume samples; domain too small or indicator broken"
        )
    return domain.bbox.volume * hits / samples


_SQRT2 = math.sqrt(2.0)


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def gaussian_mass(
    domain: Domain,
    mean: np.ndarray,
    cov: np.ndarray | CovarianceMatrix,
    method: str = "closed_form",
    mc_samples: int = DEFAULT_MASS_SAMPLES,
    rng: np.random.Generator | None = None,
) -> float:
    """Probability mass of N(mean, cov) on the domain, in (0, 1].

    ``closed_form`` is exact and only legal for an axis-aligned hypercube
    with diagonal covariance (product of 1-D interval probabilities).
    ``monte_carlo`` averages membership over draws from the Gaussian and is
    clamped below at 1/(mc_samples+1) so the result is never zero.
    """
    mean = _as_point(mean, domain.dim)
    entries = cov.entries if isinstance(cov, CovarianceMatrix) else np.atleast_2d(np.asarray(cov, float))
    if method == "closed_form":
        if not domain.is_hypercube:
            raise ConfigurationError("closed_form mass requires an axis-aligned hypercube domain")
        off = entries - np.diag(np.diag(entries))
        if np.any(np.abs(off) > 1e-9 * np.max(np.diag(entries))):
            raise ConfigurationError("closed_form mass requires a diagonal covariance")
        mass = 1.0
        for k in range(domain.dim):
            s = math.sqrt(entries[k, k])
            lo = (domain.bbox.lower[k] - mean[k]) / s
            hi = (domain.bbox.upper[k] - mean[k]) / s
            mass *= _normal_cdf(hi) - _normal_cdf(lo)
        return max(mass, 5e-324)
    if method == "monte_carlo":
        if rng is None:
            raise ConfigurationError("monte_carlo mass needs an rng")
        chol = np.linalg.cholesky(entries)
        draws = mean + rng.standard_normal((mc_samples, domain.dim)) @ chol.T
        frac = float(domain.contains_many(draws).mean())
        return max(frac, 1.0 / (mc_samples + 1))
    raise ConfigurationError(f"unknown gaussian_mass method {method!r}")


# ---------------------------------------------------------------------------
# JSON domain specs


def domain_from_spec(spec: dict) -> Domain:
    """Build a Domain from its JSON spec dict (see README for the schema)."""
    kind = spec.get("kind")
    if kind is None:
        raise ConfigurationError("domain spec needs a 'kind'")
    params = dict(spec.get("params", {}))
    if kind == "external":
        try:
            bbox = BoundingBox(np.asarray(spec["bbox"]["lower"], float),
                               np.asarray(spec["bbox"]["upper"], float))
            command = params["command"]
        except KeyError as exc:
            raise ConfigurationError(f"external domain spec missing {exc}") from exc
        dim = int(spec.get("dim", bbox.dim))
        dom = make_external_domain(
            dim,
            bbox,
            command,
            volume_upper_bound=params.get("volume_upper_bound"),
            label=spec.get("label", "external"),
        )
        dom.spec = {
            "kind": "external",
            "dim": dim,
            "bbox": {"lower": bbox.lower.tolist(), "upper": bbox.upper.tolist()},
            "params": dict(params),
        }
        return dom
    if kind == "hypercube" and "bbox" in spec and "lower" not in params:
        params["lower"] = spec["bbox"]["lower"]
        params["upper"] = spec["bbox"]["upper"]
    return make_builtin_domain(kind, **params)


def domain_to_spec(domain: Domain) -> dict:
    """Serializable spec for a domain built by this module."""
    if domain.spec is None:
        raise ConfigurationError(f"domain {domain.label!r} has no serializable spec")
    return domain.spec
