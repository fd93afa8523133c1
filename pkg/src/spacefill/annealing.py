"""Simulated-annealing generators for maximin designs.

Three Metropolis-within-Gibbs variants share the same move structure: a pair
of points is drawn with probability proportional to 1/(distance+gamma), one
of the two is picked by a coin flip and perturbed by a Gaussian random walk.
They differ in the proposal constraint and the acceptance rule:

* ``A1``: proposal truncated to the domain; acceptance corrects for both the
  truncation masses and the state-dependent selection weights.
* ``A2``: unconstrained proposal; out-of-domain proposals are rejected, the
  acceptance ratio carries the selection weights only.
* ``A3``: truncated proposal with a plain Metropolis rule on the energy.

The energy is the negated separation distance (the domain-diameter offset
cancels in all differences), so chains maximize the maximin criterion. The
best design ever visited is tracked and returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .designs import (
    DEFAULT_TIE_TOL,
    Design,
    DistanceCache,
    MaximinScore,
    maximin_distance,
)
from .domains import (
    CovarianceMatrix,
    Domain,
    empirical_covariance,
    estimate_volume,
    gaussian_mass,
    sample_uniform_many,
)
from .errors import ConfigurationError

_SQRT2 = math.sqrt(2.0)
_E = math.e

ALGORITHMS = ("A1", "A2", "A3")


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class CoolingSchedule:
    """Inverse temperature sequence beta_n.

    Kinds: ``log_theorem`` (beta_n = log(n+e)/T0, the schedule with a
    convergence guarantee), ``sqrt_heuristic`` (beta_n = sqrt(n)/T0, robust
    to a bad T0 and the practical default), ``constant`` (beta = 1/T0), and
    ``table`` (piecewise-constant user table of (iteration, beta) pairs).
    """

    kind: str
    t0: float = 1.0
    table: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("log_theorem", "sqrt_heuristic", "constant", "table"):
            raise ConfigurationError(f"unknown cooling kind {self.kind!r}")
        if self.kind != "table" and self.t0 <= 0:
            raise ConfigurationError("cooling T0 must be positive")
        if self.kind == "table":
            if not self.table:
                raise ConfigurationError("table cooling needs at least one (iteration, beta) row")
            its = [row[0] for row in self.table]
            betas = [row[1] for row in self.table]
            if its != sorted(its) or betas != sorted(betas) or betas[0] <= 0:
                raise ConfigurationError("cooling table must be non-decreasing with beta > 0")

    def beta(self, n: int) -> float:
        if self.kind == "log_theorem":
            return math.log(n + _E) / self.t0
        if self.kind == "sqrt_heuristic":
            return math.sqrt(n) / self.t0
        if self.kind == "constant":
            return 1.0 / self.t0
        out = self.table[0][1]
        for start, value in self.table:
            if n >= start:
                out = value
        return out


@dataclass(frozen=True)
class VarianceSchedule:
    """Random-walk scale sequence tau_n, clamped to [tau_min, tau0].

    ``inv_sqrt`` decays as tau0/sqrt(n); ``frozen_then_inv_sqrt`` holds tau0
    for the first ``freeze_fraction`` of the run before decaying; ``constant``
    never decays.
    """

    tau0: float
    tau_min: float
    kind: str = "frozen_then_inv_sqrt"
    freeze_fraction: float = 0.25

    def __post_init__(self):
        if self.kind not in ("inv_sqrt", "frozen_then_inv_sqrt", "constant"):
            raise ConfigurationError(f"unknown variance kind {self.kind!r}")
        if not (0 < self.tau_min <= self.tau0):
            raise ConfigurationError("need 0 < tau_min <= tau0")
        if not (0 <= self.freeze_fraction < 1):
            raise ConfigurationError("freeze_fraction must lie in [0, 1)")

    def tau(self, n: int, iterations: int) -> float:
        if self.kind == "constant":
            return self.tau0
        if self.kind == "inv_sqrt":
            return max(self.tau_min, self.tau0 / math.sqrt(n))
        freeze_until = int(self.freeze_fraction * iterations)
        if n <= freeze_until:
            return self.tau0
        return max(self.tau_min, self.tau0 / math.sqrt(n - freeze_until))


@dataclass(frozen=True)
class AnnealerConfig:
    """Everything one chain needs besides the domain itself."""

    algorithm: str
    n_points: int
    iterations: int
    cooling: CoolingSchedule
    variance: VarianceSchedule
    gamma: float | None = None  # None: 1e-6 x bbox diagonal
    sigma: CovarianceMatrix | None = None  # None: empirical covariance of the domain
    seed: int = 0
    mass_mc_samples: int = 4096
    proposal_max_rejects: int = 1000
    trace_thin: int = 1000
    tie_tol: float = DEFAULT_TIE_TOL
    sigma_samples: int = 4096
    mass_diag_rel_tol: float = 0.05

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}")
        if self.n_points < 2:
            raise ConfigurationError("need at least 2 design points")
        if self.iterations < 1:
            raise ConfigurationError("need at least 1 iteration")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigurationError("gamma must be positive")
        if self.proposal_max_rejects < 1 or self.trace_thin < 1:
            raise ConfigurationError("proposal_max_rejects and trace_thin must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    delta_current: float
    delta_best: float
    beta: float
    tau: float
    accepted: bool
    moved_index: int
    proposal_rejections: int

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "delta_current": self.delta_current,
            "delta_best": self.delta_best,
            "beta": self.beta,
            "tau": self.tau,
            "accepted": self.accepted,
            "moved_index": self.moved_index,
            "proposal_rejections": self.proposal_rejections,
        }


# ---------------------------------------------------------------------------
# elementary moves (also used standalone in tests and diagnostics)


def resolve_gamma(config_gamma: float | None, domain: Domain) -> float:
    return config_gamma if config_gamma is not None else 1e-6 * domain.bbox.diagonal


def select_pair(cache: DistanceCache, rng: np.random.Generator) -> tuple[int, int]:
    """Draw an unordered pair with probability proportional to 1/(dist+gamma).

    Two-stage draw over the cached symmetric weight matrix: a row by its
    total weight, then a column within the row. Every unordered pair appears
    twice with the same weight, so this is the exact multinomial over pairs.
    """
    if cache.weights is None:
        raise ConfigurationError("pair selection needs a cache built with gamma")
    r = cache.weight_row_sums
    c = np.cumsum(r)
    i = int(np.searchsorted(c, rng.random() * c[-1]))
    row = np.cumsum(cache.weights[i])
    j = int(np.searchsorted(row, rng.random() * row[-1]))
    return (i, j) if i < j else (j, i)


def select_point(pair: tuple[int, int], rng: np.random.Generator) -> int:
    """Pick one endpoint of the pair with probability 1/2."""
    return pair[0] if rng.random() < 0.5 else pair[1]


def propose_constrained(
    x_k: np.ndarray,
    tau: float,
    sigma: CovarianceMatrix,
    domain: Domain,
    max_rejects: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray | None, int]:
    """Exact draw from N(x_k, tau*Sigma) truncated to the domain.

    Returns (point, rejections); point is None when the rejection budget is
    exhausted, which callers treat as a rejected iteration.
    """
    scale = math.sqrt(tau) * sigma.cholesky()
    rejects = 0
    while rejects <= max_rejects:
        cand = x_k + scale @ rng.standard_normal(x_k.shape[0])
        if domain.contains(cand):
            return cand, rejects
        rejects += 1
    return None, rejects


def propose_unconstrained(
    x_k: np.ndarray, tau: float, sigma: CovarianceMatrix, rng: np.random.Generator
) -> np.ndarray:
    """One unconstrained draw from N(x_k, tau*Sigma)."""
    scale = math.sqrt(tau) * sigma.cholesky()
    return x_k + scale @ rng.standard_normal(x_k.shape[0])


def _points_of(design) -> np.ndarray:
    return design.points if isinstance(design, Design) else np.asarray(design, dtype=float)


def _weight_term(points: np.ndarray, k: int, gamma: float) -> tuple[float, float]:
    """(R_k, D): weight row sum at k and total unordered pair weight."""
    diff = points - points[k]
    dist = np.sqrt((diff * diff).sum(axis=1))
    dist[k] = np.inf
    w_k = 1.0 / (dist + gamma)
    # total over pairs: recompute fully; fine for the standalone (small-N) path
    full = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(full, np.inf)
    total = float((1.0 / (full + gamma)).sum()) / 2.0
    return float(w_k.sum()), total


def log_accept_ratio_a3(delta_cur: float, delta_prop: float, beta: float) -> float:
    """log min(1, exp(-beta (delta_cur - delta_prop)))."""
    return min(0.0, beta * (delta_prop - delta_cur))


def log_accept_ratio_a2(
    cur, prop, k: int, beta: float, gamma: float, domain: Domain
) -> float | None:
    """Acceptance log-ratio of the unconstrained variant.

    None signals immediate rejection (proposal outside the domain). The
    Gaussian factors cancel by symmetry; only the selection weights remain.
    """
    cur_pts = _points_of(cur)
    prop_pts = _points_of(prop)
    if not domain.contains(prop_pts[k]):
        return None
    d_cur = maximin_distance(Design(cur_pts))
    d_prop = maximin_distance(Design(prop_pts))
    rk_cur, dtot_cur = _weight_term(cur_pts, k, gamma)
    rk_prop, dtot_prop = _weight_term(prop_pts, k, gamma)
    log_ratio = beta * (d_prop - d_cur) + math.log(rk_prop) - math.log(rk_cur)
    log_ratio += math.log(dtot_cur) - math.log(dtot_prop)
    return min(0.0, log_ratio)


def log_accept_ratio_a1(
    cur,
    prop,
    k: int,
    beta: float,
    tau: float,
    sigma: CovarianceMatrix,
    domain: Domain,
    gamma: float,
    mass_method: str = "closed_form",
    mass_mc_samples: int = 4096,
    rng: np.random.Generator | None = None,
) -> float:
    """Acceptance log-ratio of the truncated variant.

    The Gaussian densities cancel by symmetry, leaving the ratio of the
    truncation masses at the current and proposed positions times the ratio
    of selection weights; everything is assembled in log space.
    """
    cur_pts = _points_of(cur)
    prop_pts = _points_of(prop)
    cov = tau * sigma.entries
    mass_cur = gaussian_mass(domain, cur_pts[k], cov, method=mass_method,
                             mc_samples=mass_mc_samples, rng=rng)
    mass_prop = gaussian_mass(domain, prop_pts[k], cov, method=mass_method,
                              mc_samples=mass_mc_samples, rng=rng)
    d_cur = maximin_distance(Design(cur_pts))
    d_prop = maximin_distance(Design(prop_pts))
    rk_cur, dtot_cur = _weight_term(cur_pts, k, gamma)
    rk_prop, dtot_prop = _weight_term(prop_pts, k, gamma)
    log_ratio = beta * (d_prop - d_cur)
    log_ratio += math.log(mass_cur) - math.log(mass_prop)
    log_ratio += math.log(rk_prop) - math.log(rk_cur)
    log_ratio += math.log(dtot_cur) - math.log(dtot_prop)
    return min(0.0, log_ratio)


# ---------------------------------------------------------------------------
# parameter heuristics


def default_T0(
    domain: Domain,
    n_points: int,
    rng: np.random.Generator,
    replicates: int = 100,
    fraction: float = 0.5,
) -> float:
    """Fraction of the median separation distance of uniform designs."""
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    if not (0 < fraction <= 1):
        raise ConfigurationError("fraction must lie in (0, 1]")
    deltas = np.empty(replicates)
    for r in range(replicates):
        pts = sample_uniform_many(domain, n_points, rng)
        deltas[r] = maximin_distance(Design(pts))
    return fraction * float(np.median(deltas))


def default_tau0(
    domain: Domain,
    n_points: int,
    rng: np.random.Generator | None = None,
    volume_samples: int = 100_000,
) -> float:
    """Vol(E) / N^(1/d), the grid-analogy walk scale."""
    if n_points < 1:
        raise ConfigurationError("n_points must be >= 1")
    vol = estimate_volume(domain, rng, volume_samples)
    return vol / n_points ** (1.0 / domain.dim)


def default_config(
    domain: Domain,
    n_points: int,
    iterations: int,
    algorithm: str = "A3",
    seed: int = 0,
    t0_fraction: float = 0.5,
    t0_replicates: int = 100,
    cooling_kind: str = "sqrt_heuristic",
    variance_kind: str = "frozen_then_inv_sqrt",
    **overrides,
) -> AnnealerConfig:
    """Config with T0 and tau0 filled in by the standard heuristics.

    The tuning draws come from a stream derived from ``seed`` but separate
    from the chain's own stream, so tuning does not perturb the trajectory.
    """
    tune_rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 0x7E57]))
    t0 = default_T0(domain, n_points, tune_rng, replicates=t0_replicates, fraction=t0_fraction)
    tau0 = default_tau0(domain, n_points, tune_rng)
    return AnnealerConfig(
        algorithm=algorithm,
        n_points=n_points,
        iterations=iterations,
        cooling=CoolingSchedule(kind=cooling_kind, t0=t0),
        variance=VarianceSchedule(tau0=tau0, tau_min=tau0 * 1e-3, kind=variance_kind),
        seed=seed,
        **overrides,
    )


# ---------------------------------------------------------------------------
# the chain


class ChainState:
    """Mutable state of one annealing chain (single-owner, not thread-safe)."""

    def __init__(self, config: AnnealerConfig, domain: Domain,
                 initial: Design | np.ndarray | None = None):
        self.config = config
        self.domain = domain
        self.rng = np.random.default_rng(config.seed)
        self.gamma = resolve_gamma(config.gamma, domain)

        sigma = config.sigma
        if sigma is None:
            sigma = empirical_covariance(domain, self.rng, config.sigma_samples)
        self.sigma = sigma
        self._chol = sigma.cholesky()

        if initial is None:
            pts = sample_uniform_many(domain, config.n_points, self.rng)
        else:
            pts = _points_of(initial)
            if pts.shape != (config.n_points, domain.dim):
                raise ConfigurationError(
                    f"initial design shape {pts.shape} does not match "
                    f"(n_points, dim)=({config.n_points}, {domain.dim})"
                )
            if not domain.contains_many(pts).all():
                raise ConfigurationError("initial design has points outside the domain")
        self.cache = DistanceCache(pts, gamma=self.gamma)

        self.iteration = 0
        self.accepted = 0
        self.exhausted = 0
        self.delta_current = self.cache.global_min
        tie = config.tie_tol
        self._tri = np.triu_indices(config.n_points, k=1)
        self.crit_current = int(
            (self.cache.dist[self._tri] <= self.delta_current * (1.0 + tie)).sum()
        )
        self.best_points = self.cache.points.copy()
        self.best_delta = self.delta_current
        self.best_crit = self.crit_current

        # A1 mass strategy: exact closed form on hypercubes when Sigma is
        # near-diagonal (off-diagonal correlations below mass_diag_rel_tol,
        # masses then use the diagonal); Monte Carlo otherwise.
        self.mass_mode = None
        if config.algorithm == "A1":
            if domain.is_hypercube and sigma.is_diagonal(rel_tol=config.mass_diag_rel_tol):
                self.mass_mode = "closed_form"
                self._sigma_diag = np.diag(sigma.entries).copy()
            else:
                self.mass_mode = "monte_carlo"

        # hot-loop plumbing: bound methods and a scalar membership shortcut
        self._rand = self.rng.random
        self._randn = self.rng.standard_normal
        self._bbox_lo = [float(b) for b in domain.bbox.lower]
        self._bbox_hi = [float(b) for b in domain.bbox.upper]
        self._pred = domain.predicate

    def _contains(self, cand: np.ndarray) -> bool:
        for a in range(self.domain.dim):
            value = cand[a]
            if value < self._bbox_lo[a] or value > self._bbox_hi[a]:
                return False
        return bool(self._pred(cand))

    # -- mass helpers ------------------------------------------------------

    def _log_mass(self, mean: np.ndarray, tau: float) -> float:
        if self.mass_mode == "closed_form":
            lo, hi = self.domain.bbox.lower, self.domain.bbox.upper
            total = 0.0
            for a in range(self.domain.dim):
                s = math.sqrt(tau * self._sigma_diag[a]) * _SQRT2
                m = 0.5 * (math.erf((hi[a] - mean[a]) / s) - math.erf((lo[a] - mean[a]) / s))
                total += math.log(max(m, 5e-324))
            return total
        draws = mean + math.sqrt(tau) * (
            self.rng.standard_normal((self.config.mass_mc_samples, self.domain.dim))
            @ self._chol.T
        )
        frac = float(self.domain.contains_many(draws).mean())
        return math.log(max(frac, 1.0 / (self.config.mass_mc_samples + 1)))

    # -- one full iteration -------------------------------------------------

    def _iterate(self, record: bool = True) -> TraceRecord | None:
        cfg = self.config
        n = self.iteration + 1
        beta = cfg.cooling.beta(n)
        tau = cfg.variance.tau(n, cfg.iterations)
        cache = self.cache
        rand = self._rand
        randn = self._randn
        alg = cfg.algorithm
        dim = self.domain.dim

        # 1-2: pair by inverse-distance weights, then a coin flip
        c = np.cumsum(cache.weight_row_sums)
        i = int(np.searchsorted(c, rand() * c[-1]))
        row = np.cumsum(cache.weights[i])
        j = int(np.searchsorted(row, rand() * row[-1]))
        k = i if rand() < 0.5 else j
        x_k = cache.points[k]

        # 3: Gaussian walk, truncated for A1/A3
        st = math.sqrt(tau)
        chol = self._chol
        contains = self._contains
        rejections = 0
        y = None
        if alg == "A2":
            cand = x_k + st * (chol @ randn(dim))
            if contains(cand):
                y = cand
        else:
            max_rejects = cfg.proposal_max_rejects
            while rejections <= max_rejects:
                cand = x_k + st * (chol @ randn(dim))
                if contains(cand):
                    y = cand
                    break
                rejections += 1
            if y is None:
                self.exhausted += 1

        self.iteration = n
        if y is None:
            if not record:
                return None
            return TraceRecord(n, self.delta_current, self.best_delta, beta, tau,
                               False, k, rejections)

        # 4: variant acceptance rule, assembled in log space
        v = cache.distances_from(y, k)
        delta_prop = min(cache.min_excluding(k), float(v.min()))
        log_ratio = beta * (delta_prop - self.delta_current)
        if alg != "A3":
            rk_cur = float(cache.weight_row_sums[k])
            rk_prop = float((1.0 / (v + self.gamma)).sum())
            dtot_cur = cache.weight_total
            dtot_prop = dtot_cur + (rk_prop - rk_cur)
            log_ratio += math.log(rk_prop) - math.log(rk_cur)
            log_ratio += math.log(dtot_cur) - math.log(dtot_prop)
            if alg == "A1":
                log_ratio += self._log_mass(x_k, tau) - self._log_mass(y, tau)

        accepted = log_ratio >= 0.0 or math.log(rand()) < log_ratio
        if accepted:
            self.accepted += 1
            tie = cfg.tie_tol
            thresh = delta_prop * (1.0 + tie)
            if delta_prop == self.delta_current:
                old_col = cache.dist[:, k]
                self.crit_current += int((v <= thresh).sum()) - int(
                    (old_col <= thresh).sum()
                )
            else:
                self.crit_current = -1  # recount after the cache moves
            cache.update(k, y, v)
            self.delta_current = delta_prop
            if self.crit_current < 0:
                self.crit_current = int((cache.dist[self._tri] <= thresh).sum())
            # best-so-far under the maximin ordering, restricted so that the
            # recorded best delta never decreases: strict improvement beyond
            # the tie band, or a delta at least as large with fewer critical
            # pairs inside the band
            if self.delta_current > self.best_delta * (1.0 + tie) or (
                self.delta_current >= self.best_delta
                and self.crit_current < self.best_crit
            ):
                self.best_points = cache.points.copy()
                self.best_delta = self.delta_current
                self.best_crit = self.crit_current

        if not record:
            return None
        return TraceRecord(n, self.delta_current, self.best_delta, beta, tau,
                           accepted, k, rejections)

    def best_score(self) -> MaximinScore:
        return MaximinScore(delta=self.best_delta, critical_pairs=self.best_crit)

    def best_design(self) -> Design:
        return Design(points=self.best_points, domain_label=self.domain.label)


def step(state: ChainState, config: AnnealerConfig | None = None,
         domain: Domain | None = None) -> TraceRecord:
    """Advance the chain by one iteration (config/domain live on the state)."""
    if config is not None and config is not state.config:
        raise ConfigurationError("step must use the config the state was built with")
    if domain is not None and domain is not state.domain:
        raise ConfigurationError("step must use the domain the state was built with")
    return state._iterate()


def run(
    config: AnnealerConfig,
    domain: Domain,
    initial: Design | np.ndarray | None = None,
    collect_trace: bool = True,
) -> tuple[Design, MaximinScore, list[TraceRecord]]:
    """Run a full chain and return the best design ever visited, with trace."""
    state = ChainState(config, domain, initial)
    trace: list[TraceRecord] = []
    thin = config.trace_thin
    total = config.iterations
    for n in range(1, total + 1):
        want = collect_trace and (n % thin == 0 or n == total)
        rec = state._iterate(record=want)
        if want:
            trace.append(rec)
    return state.best_design(), state.best_score(), trace
