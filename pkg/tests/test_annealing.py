import math

import numpy as np
import pytest

from spacefill.annealing import (
    AnnealerConfig,
    ChainState,
    CoolingSchedule,
    VarianceSchedule,
    default_T0,
    default_config,
    default_tau0,
    log_accept_ratio_a1,
    log_accept_ratio_a2,
    log_accept_ratio_a3,
    propose_constrained,
    propose_unconstrained,
    resolve_gamma,
    run,
    select_pair,
    select_point,
    step,
)
from spacefill.designs import Design, DistanceCache, maximin_distance
from spacefill.domains import CovarianceMatrix, make_builtin_domain
from spacefill.errors import ConfigurationError

from oracles import log_accept_ratio_a1_oracle, selection_weight


# --- schedules -------------------------------------------------------------------


def test_cooling_log_theorem():
    sched = CoolingSchedule(kind="log_theorem", t0=2.0)
    assert sched.beta(1) == pytest.approx(math.log(1 + math.e) / 2.0)
    betas = [sched.beta(n) for n in range(1, 2000)]
    assert all(b2 >= b1 for b1, b2 in zip(betas, betas[1:]))
    assert betas[0] > 0


def test_cooling_sqrt_and_constant():
    sq = CoolingSchedule(kind="sqrt_heuristic", t0=0.5)
    assert sq.beta(16) == pytest.approx(8.0)
    const = CoolingSchedule(kind="constant", t0=0.25)
    assert const.beta(1) == const.beta(10_000) == 4.0


def test_cooling_table():
    sched = CoolingSchedule(kind="table", t0=1.0, table=((1, 1.0), (100, 5.0), (1000, 9.0)))
    assert sched.beta(1) == 1.0
    assert sched.beta(99) == 1.0
    assert sched.beta(100) == 5.0
    assert sched.beta(5000) == 9.0
    with pytest.raises(ConfigurationError):
        CoolingSchedule(kind="table", t0=1.0, table=((1, 5.0), (10, 1.0)))


def test_variance_schedules():
    inv = VarianceSchedule(tau0=1.0, tau_min=0.01, kind="inv_sqrt")
    assert inv.tau(1, 100) == 1.0
    assert inv.tau(100, 100) == pytest.approx(0.1)
    assert inv.tau(10_000_000, 100) == 0.01  # clamped at the floor
    frozen = VarianceSchedule(tau0=1.0, tau_min=0.001, kind="frozen_then_inv_sqrt",
                              freeze_fraction=0.25)
    assert frozen.tau(250, 1000) == 1.0
    assert frozen.tau(251, 1000) == 1.0  # tau0/sqrt(1)
    assert frozen.tau(350, 1000) == pytest.approx(0.1)
    taus = [frozen.tau(n, 1000) for n in range(1, 1001)]
    assert all(t2 <= t1 for t1, t2 in zip(taus[250:], taus[251:]))
    assert all(0.001 <= t <= 1.0 for t in taus)


def test_config_validation():
    cool = CoolingSchedule(kind="constant", t0=1.0)
    var = VarianceSchedule(tau0=1.0, tau_min=0.1)
    with pytest.raises(ConfigurationError):
        AnnealerConfig(algorithm="A9", n_points=10, iterations=10, cooling=cool, variance=var)
    with pytest.raises(ConfigurationError):
        AnnealerConfig(algorithm="A3", n_points=1, iterations=10, cooling=cool, variance=var)
    with pytest.raises(ConfigurationError):
        AnnealerConfig(algorithm="A3", n_points=10, iterations=10, cooling=cool,
                       variance=var, gamma=-1.0)


# --- pair and point selection -------------------------------------------------------


def test_select_pair_n2():
    cache = DistanceCache(np.array([[0.0], [1.0]]), gamma=0.01)
    rng = np.random.default_rng(0)
    assert all(select_pair(cache, rng) == (0, 1) for _ in range(32))


def test_select_pair_equilateral_symmetry():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    cache = DistanceCache(pts, gamma=1e-6)
    rng = np.random.default_rng(1)
    counts = {}
    n = 100_000
    for _ in range(n):
        pair = select_pair(cache, rng)
        counts[pair] = counts.get(pair, 0) + 1
    for pair in ((0, 1), (0, 2), (1, 2)):
        assert abs(counts[pair] / n - 1.0 / 3.0) < 0.01


def test_select_pair_matches_direct_formula():
    # weights 1/(d+gamma) for {0, 0.1, 1}: the close pair dominates
    pts = np.array([[0.0], [0.1], [1.0]])
    gamma = 0.01
    w01 = 1.0 / 0.11
    w02 = 1.0 / 1.01
    w12 = 1.0 / 0.91
    expected = w01 / (w01 + w02 + w12)
    assert expected == pytest.approx(0.8131, abs=5e-4)
    cache = DistanceCache(pts, gamma=gamma)
    rng = np.random.default_rng(2)
    n = 100_000
    hits = sum(select_pair(cache, rng) == (0, 1) for _ in range(n))
    assert abs(hits / n - expected) < 0.01


def test_select_point_fair_coin():
    rng = np.random.default_rng(3)
    n = 100_000
    picks = sum(select_point((4, 9), rng) == 4 for _ in range(n))
    assert abs(picks / n - 0.5) < 0.01
    assert select_point((4, 9), np.random.default_rng(0)) in (4, 9)


def test_select_point_deterministic_under_seed():
    a = [select_point((1, 2), np.random.default_rng(42)) for _ in range(5)]
    b = [select_point((1, 2), np.random.default_rng(42)) for _ in range(5)]
    assert a == b


# --- proposals -----------------------------------------------------------------------


def test_propose_constrained_stays_inside(triangle):
    sigma = CovarianceMatrix(entries=np.eye(2))
    rng = np.random.default_rng(4)
    x = np.array([0.7, 0.2])
    for _ in range(200):
        y, _ = propose_constrained(x, 0.05, sigma, triangle, 1000, rng)
        assert triangle.contains(y)


def test_propose_constrained_small_tau_limit(triangle):
    sigma = CovarianceMatrix(entries=np.eye(2))
    rng = np.random.default_rng(5)
    x = np.array([0.7, 0.2])
    moves = [
        np.linalg.norm(propose_constrained(x, 1e-12, sigma, triangle, 1000, rng)[0] - x)
        for _ in range(100)
    ]
    assert np.mean(moves) < 1e-5


def test_propose_constrained_acceptance_fraction(unit_interval):
    # from x=0 with unit std, P(proposal in [0,1]) = Phi(1) - Phi(0)
    sigma = CovarianceMatrix(entries=np.eye(1))
    rng = np.random.default_rng(6)
    x = np.array([0.0])
    tries = 0
    calls = 100_000
    for _ in range(calls):
        _, rejects = propose_constrained(x, 1.0, sigma, unit_interval, 10_000, rng)
        tries += rejects + 1
    expected = 0.3413
    assert abs(calls / tries - expected) < 0.01


def test_propose_constrained_exhaustion():
    thin = make_builtin_domain("hypercube", lower=[0.0, 0.0], upper=[1.0, 1e-9])
    sigma = CovarianceMatrix(entries=np.eye(2))
    y, rejects = propose_constrained(
        np.array([0.5, 0.0]), 1.0, sigma, thin, 5, np.random.default_rng(7)
    )
    assert y is None
    assert rejects == 6


def test_propose_unconstrained_moments():
    sigma = CovarianceMatrix(entries=np.array([[0.04, 0.01], [0.01, 0.09]]))
    tau = 0.5
    rng = np.random.default_rng(8)
    x = np.array([2.0, -1.0])
    draws = np.array([propose_unconstrained(x, tau, sigma, rng) for _ in range(100_000)])
    se = np.sqrt(np.diag(tau * sigma.entries) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - x) < 4 * se)
    sample_cov = np.cov(draws, rowvar=False)
    target = tau * sigma.entries
    rel = np.linalg.norm(sample_cov - target) / np.linalg.norm(target)
    assert rel < 0.05


def test_propose_unconstrained_reproducible():
    sigma = CovarianceMatrix(entries=np.eye(2))
    a = propose_unconstrained(np.zeros(2), 1.0, sigma, np.random.default_rng(9))
    b = propose_unconstrained(np.zeros(2), 1.0, sigma, np.random.default_rng(9))
    assert np.array_equal(a, b)


# --- acceptance ratios ------------------------------------------------------------------


def test_log_accept_ratio_a3_cases():
    assert log_accept_ratio_a3(0.2, 0.3, 5.0) == 0.0
    assert log_accept_ratio_a3(0.3, 0.2, 1.0) == pytest.approx(-0.1)
    assert log_accept_ratio_a3(0.3, 0.2, 1e12) < -1e10


def test_log_accept_ratio_a2_outside_is_rejected(triangle):
    cur = np.array([[0.7, 0.2], [0.9, 0.4]])
    prop = cur.copy()
    prop[0] = [0.2, 0.7]  # outside the triangle
    assert log_accept_ratio_a2(cur, prop, 0, 1.0, 1e-6, triangle) is None


def test_log_accept_ratio_a2_n2_reduces_to_metropolis(unit_square):
    cur = np.array([[0.1, 0.1], [0.9, 0.9]])
    prop = cur.copy()
    prop[0] = [0.2, 0.2]
    beta = 3.0
    got = log_accept_ratio_a2(cur, prop, 0, beta, 1e-6, unit_square)
    d_cur = maximin_distance(Design(cur))
    d_prop = maximin_distance(Design(prop))
    assert got == pytest.approx(min(0.0, beta * (d_prop - d_cur)), abs=1e-9)


def test_log_accept_ratio_a2_n3_hand_weights(unit_square):
    cur = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.9]])
    prop = cur.copy()
    prop[1] = [0.4, 0.1]
    beta, gamma = 2.0, 1e-3
    got = log_accept_ratio_a2(cur, prop, 1, beta, gamma, unit_square)
    w_cur = selection_weight(cur, 1, gamma)
    w_prop = selection_weight(prop, 1, gamma)
    d_cur = maximin_distance(Design(cur))
    d_prop = maximin_distance(Design(prop))
    expected = min(0.0, beta * (d_prop - d_cur) + math.log(w_prop / w_cur))
    assert got == pytest.approx(expected, abs=1e-12)


def test_log_accept_ratio_a1_identity_proposal(unit_square):
    pts = np.array([[0.2, 0.2], [0.8, 0.7]])
    sigma = CovarianceMatrix(entries=np.diag([0.05, 0.08]))
    got = log_accept_ratio_a1(pts, pts.copy(), 0, 2.0, 0.3, sigma, unit_square, 1e-6)
    assert got == pytest.approx(0.0, abs=1e-12)


def test_log_accept_ratio_a1_matches_quadrature_oracle_1d(unit_interval):
    cur = np.array([[0.15], [0.7]])
    prop = cur.copy()
    prop[0] = [0.05]
    sigma = CovarianceMatrix(entries=np.array([[0.2]]))
    beta, tau, gamma = 4.0, 0.5, 1e-4
    got = log_accept_ratio_a1(cur, prop, 0, beta, tau, sigma, unit_interval, gamma)
    want = log_accept_ratio_a1_oracle(
        cur, prop, 0, beta, tau, sigma.entries,
        unit_interval.bbox.lower, unit_interval.bbox.upper, gamma, diam=1.0,
    )
    assert got == pytest.approx(want, abs=1e-3)


def test_log_accept_ratio_a1_randomized_against_oracle():
    rng = np.random.default_rng(123)
    for trial in range(20):
        d = int(rng.integers(1, 3))
        n = int(rng.integers(2, 5))
        lower = rng.uniform(-1.0, 0.0, d)
        upper = lower + rng.uniform(0.5, 2.0, d)
        dom = make_builtin_domain("hypercube", lower=lower, upper=upper)
        pts = lower + (upper - lower) * rng.random((n, d))
        k = int(rng.integers(n))
        prop = pts.copy()
        prop[k] = lower + (upper - lower) * rng.random(d)
        sigma = CovarianceMatrix(entries=np.diag(rng.uniform(0.05, 0.5, d)))
        beta = float(rng.uniform(0.1, 20.0))
        tau = float(rng.uniform(0.05, 2.0))
        gamma = float(rng.uniform(1e-6, 1e-2))
        got = log_accept_ratio_a1(pts, prop, k, beta, tau, sigma, dom, gamma)
        want = log_accept_ratio_a1_oracle(
            pts, prop, k, beta, tau, sigma.entries, lower, upper, gamma,
            diam=float(np.linalg.norm(upper - lower)),
        )
        assert got == pytest.approx(want, abs=1e-3), f"trial {trial}"


def test_exp_ratio_is_a_probability(unit_square):
    rng = np.random.default_rng(31)
    sigma = CovarianceMatrix(entries=np.diag([0.1, 0.2]))
    for _ in range(20):
        pts = rng.random((3, 2))
        prop = pts.copy()
        prop[1] = rng.random(2)
        val = log_accept_ratio_a1(pts, prop, 1, 5.0, 0.4, sigma, unit_square, 1e-5)
        assert 0.0 < math.exp(val) <= 1.0


# --- heuristics -------------------------------------------------------------------------


def test_default_tau0_values(triangle, unit_square):
    assert default_tau0(unit_square, 100) == pytest.approx(0.1)
    assert default_tau0(triangle, 100) == pytest.approx(0.05)
    assert default_tau0(unit_square, 1) == pytest.approx(1.0)


def test_default_T0_fraction_semantics(unit_square):
    rng = np.random.default_rng(1)
    full = default_T0(unit_square, 20, rng, replicates=50, fraction=1.0)
    rng = np.random.default_rng(1)
    half = default_T0(unit_square, 20, rng, replicates=50, fraction=0.5)
    assert half == pytest.approx(full / 2.0)
    rng = np.random.default_rng(2)
    single = default_T0(unit_square, 20, rng, replicates=1, fraction=0.25)
    assert single > 0


# --- chain behavior ------------------------------------------------------------------------


@pytest.mark.parametrize("algorithm", ["A1", "A2", "A3"])
def test_best_so_far_monotone(triangle, algorithm):
    cfg = default_config(triangle, 20, 2000, algorithm=algorithm, seed=11,
                         trace_thin=1)
    best, score, trace = run(cfg, triangle)
    bests = [rec.delta_best for rec in trace]
    assert all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    assert score.delta == bests[-1]


@pytest.mark.parametrize("algorithm", ["A1", "A2", "A3"])
def test_chain_reproducible(triangle, algorithm):
    cfg = default_config(triangle, 12, 1500, algorithm=algorithm, seed=3, trace_thin=1)
    b1, s1, t1 = run(cfg, triangle)
    b2, s2, t2 = run(cfg, triangle)
    assert np.array_equal(b1.points, b2.points)
    assert [r.delta_current for r in t1] == [r.delta_current for r in t2]


def test_a2_iterates_stay_in_domain(triangle):
    cfg = default_config(triangle, 15, 3000, algorithm="A2", seed=5, trace_thin=1)
    state = ChainState(cfg, triangle)
    for _ in range(cfg.iterations):
        step(state)
        assert triangle.contains_many(state.cache.points).all()


def test_stochastic_escape_happens(unit_square):
    # at finite beta some accepted moves lower the current delta
    cfg = default_config(unit_square, 10, 4000, algorithm="A3", seed=7, trace_thin=1,
                         cooling_kind="sqrt_heuristic")
    _, _, trace = run(cfg, unit_square)
    downhill = [
        (a, b) for a, b in zip(trace, trace[1:])
        if b.accepted and b.delta_current < a.delta_current
    ]
    assert downhill, "no downhill accepted move in 4000 iterations"


def test_translation_invariance(unit_square):
    shifted = make_builtin_domain("hypercube", lower=[5.0, 5.0], upper=[6.0, 6.0])
    sigma = CovarianceMatrix(entries=np.diag([1.0 / 12.0, 1.0 / 12.0]))
    rng = np.random.default_rng(17)
    base_pts = rng.random((20, 2))
    for algorithm in ("A1", "A3"):
        common = dict(
            n_points=20,
            iterations=2000,
            cooling=CoolingSchedule(kind="sqrt_heuristic", t0=0.05),
            variance=VarianceSchedule(tau0=0.05, tau_min=5e-5),
            sigma=sigma,
            seed=23,
            trace_thin=1,
        )
        cfg = AnnealerConfig(algorithm=algorithm, **common)
        _, s0, t0 = run(cfg, unit_square, initial=base_pts)
        _, s1, t1 = run(cfg, shifted, initial=base_pts + 5.0)
        d0 = np.array([r.delta_current for r in t0])
        d1 = np.array([r.delta_current for r in t1])
        assert np.allclose(d0, d1, rtol=0, atol=1e-10)
        assert abs(s0.delta - s1.delta) < 1e-10


def test_proposal_exhaustion_is_rejection():
    thin = make_builtin_domain("hypercube", lower=[0.0, 0.0], upper=[1.0, 1e-6])
    sigma = CovarianceMatrix(entries=np.eye(2))
    cfg = AnnealerConfig(
        algorithm="A3",
        n_points=4,
        iterations=50,
        cooling=CoolingSchedule(kind="constant", t0=1.0),
        variance=VarianceSchedule(tau0=1.0, tau_min=1.0, kind="constant"),
        sigma=sigma,
        seed=2,
        proposal_max_rejects=1,
        trace_thin=1,
    )
    initial = np.column_stack([np.linspace(0.1, 0.9, 4), np.zeros(4)])
    _, _, trace = run(cfg, thin, initial=initial)
    exhausted = [r for r in trace if not r.accepted and r.proposal_rejections >= 2]
    assert exhausted, "expected exhausted proposals on a sliver domain"
    state = ChainState(cfg, thin, initial=initial)
    for _ in range(50):
        step(state)
    assert state.exhausted > 0
    assert state.iteration == 50


def test_run_single_iteration(triangle):
    cfg = default_config(triangle, 8, 1, algorithm="A3", seed=1, trace_thin=1)
    best, score, trace = run(cfg, triangle)
    assert len(trace) == 1
    assert score.delta >= trace[0].delta_current or score.delta == trace[0].delta_best


def test_small_instance_two_points_reach_corners(unit_square):
    cfg = default_config(unit_square, 2, 20_000, algorithm="A3", seed=9)
    _, score, _ = run(cfg, unit_square)
    assert score.delta >= math.sqrt(2.0) - 0.08


def test_chain_vs_functional_ratio_agreement(unit_square):
    # the fast in-chain A1 ratio must equal the standalone operation
    sigma = CovarianceMatrix(entries=np.diag([1.0 / 12.0, 1.0 / 12.0]))
    cfg = AnnealerConfig(
        algorithm="A1",
        n_points=6,
        iterations=1,
        cooling=CoolingSchedule(kind="constant", t0=0.2),
        variance=VarianceSchedule(tau0=0.3, tau_min=0.3, kind="constant"),
        sigma=sigma,
        seed=31,
    )
    state = ChainState(cfg, unit_square)
    pts = state.cache.points.copy()
    k = 2
    prop = pts.copy()
    prop[k] = np.array([0.41, 0.77])
    beta = cfg.cooling.beta(1)
    tau = cfg.variance.tau(1, 1)
    want = log_accept_ratio_a1(
        pts, prop, k, beta, tau, sigma, unit_square, state.gamma
    )
    v = state.cache.distances_from(prop[k], k)
    delta_prop = state.cache.delta_if_moved(k, v)
    log_ratio = beta * (delta_prop - state.delta_current)
    rk_cur = float(state.cache.weight_row_sums[k])
    rk_prop = float((1.0 / (v + state.gamma)).sum())
    dtot_cur = state.cache.weight_total
    dtot_prop = dtot_cur + (rk_prop - rk_cur)
    log_ratio += math.log(rk_prop) - math.log(rk_cur)
    log_ratio += math.log(dtot_cur) - math.log(dtot_prop)
    log_ratio += state._log_mass(pts[k], tau) - state._log_mass(prop[k], tau)
    got = min(0.0, log_ratio)
    assert got == pytest.approx(want, abs=1e-12)


def test_resolve_gamma_default(triangle):
    assert resolve_gamma(None, triangle) == pytest.approx(1e-6 * math.sqrt(2.0))
    assert resolve_gamma(0.5, triangle) == 0.5
