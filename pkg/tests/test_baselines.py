import numpy as np
import pytest
from scipy.stats import qmc

from spacefill.baselines import (
    SobolGenerator,
    lhs,
    maximin_lhs,
    sobol_design,
    truncated_lhs,
    uniform_design,
)
from spacefill.designs import maximin_distance
from spacefill.domains import make_builtin_domain
from spacefill.errors import ConfigurationError, SamplingError

from oracles import gray_code, van_der_corput_base2


def stratum_indices(col: np.ndarray) -> list[int]:
    return sorted(int(np.floor(v * len(col))) for v in col)


# --- uniform ----------------------------------------------------------------------


def test_uniform_design_inside_and_reproducible(triangle):
    d1 = uniform_design(triangle, 60, np.random.default_rng(5))
    d2 = uniform_design(triangle, 60, np.random.default_rng(5))
    assert triangle.contains_many(d1.points).all()
    assert np.array_equal(d1.points, d2.points)


def test_uniform_triangle_delta_scale(triangle):
    rng = np.random.default_rng(0)
    deltas = [maximin_distance(uniform_design(triangle, 100, rng)) for _ in range(100)]
    mean = float(np.mean(deltas))
    assert 0.002 < mean < 0.010
    assert max(deltas) < 0.03


# --- latin hypercube -----------------------------------------------------------------


def test_lhs_stratum_property_n4():
    d = lhs(4, 2, np.random.default_rng(1))
    for j in range(2):
        assert stratum_indices(d.points[:, j]) == [0, 1, 2, 3]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
@pytest.mark.parametrize("n,dim", [(5, 1), (17, 2), (40, 3), (101, 5)])
def test_lhs_stratum_property_sweep(seed, n, dim):
    d = lhs(n, dim, np.random.default_rng(seed))
    for j in range(dim):
        assert stratum_indices(d.points[:, j]) == list(range(n))


def test_lhs_marginal_mean():
    rng = np.random.default_rng(2)
    reps, n = 50, 64
    means = [lhs(n, 2, rng).points.mean(axis=0) for _ in range(reps)]
    grand = np.mean(means, axis=0)
    tol = 3.0 / np.sqrt(12 * n * reps)
    assert np.all(np.abs(grand - 0.5) < tol)


def test_maximin_lhs_keeps_strata_and_improves():
    rng = np.random.default_rng(3)
    plain_delta = maximin_distance(lhs(30, 2, np.random.default_rng(3)))
    annealed = maximin_lhs(30, 2, 4000, rng)
    for j in range(2):
        assert stratum_indices(annealed.points[:, j]) == list(range(30))
    assert maximin_distance(annealed) >= plain_delta


def test_truncated_lhs_survivors(triangle):
    rng = np.random.default_rng(4)
    counts = [truncated_lhs(triangle, 200, rng).n for _ in range(40)]
    # survivor fraction tracks the volume ratio 1/2
    assert 85 <= min(counts) and max(counts) <= 115
    frac = np.mean(counts) / 200.0
    assert abs(frac - 0.5) < 3.0 * np.sqrt(0.25 / 200 / 40)


def test_truncated_lhs_hypercube_keeps_everything(unit_square):
    d = truncated_lhs(unit_square, 50, np.random.default_rng(5))
    assert d.n == 50


def test_truncated_lhs_too_few_survivors():
    sliver = make_builtin_domain("hypercube", lower=[0.0, 0.0], upper=[1.0, 1.0])
    sliver = type(sliver)(
        dim=2, bbox=sliver.bbox, predicate=lambda x: x[0] < 1e-9, label="sliver",
    )
    with pytest.raises(SamplingError):
        truncated_lhs(sliver, 20, np.random.default_rng(6))


# --- sobol -------------------------------------------------------------------------------


def test_sobol_dim1_is_gray_coded_radical_inverse():
    pts = SobolGenerator(1).next_points(64).ravel()
    expected = [0.0] + [van_der_corput_base2(gray_code(n)) for n in range(1, 64)]
    assert np.allclose(pts, expected, rtol=0, atol=0)
    assert pts[1:5].tolist() == [0.5, 0.75, 0.25, 0.375]


@pytest.mark.parametrize("dim", [1, 2, 3, 5, 8, 10])
def test_sobol_matches_scipy_reference(dim):
    ours = SobolGenerator(dim).next_points(256)
    ref = qmc.Sobol(d=dim, scramble=False).random(256)
    assert np.array_equal(ours, ref)


def test_sobol_outputs_in_unit_box():
    pts = SobolGenerator(10).next_points(512)
    assert np.all(pts >= 0.0) and np.all(pts < 1.0)


def test_sobol_dimension_limit():
    with pytest.raises(ConfigurationError):
        SobolGenerator(11)


def test_sobol_design_deterministic(triangle):
    d1 = sobol_design(triangle, 100)
    d2 = sobol_design(triangle, 100)
    assert np.array_equal(d1.points, d2.points)
    assert triangle.contains_many(d1.points).all()


def test_sobol_design_skip_changes_points(triangle):
    d1 = sobol_design(triangle, 50)
    d2 = sobol_design(triangle, 50, skip=7)
    assert not np.array_equal(d1.points, d2.points)


def test_sobol_design_exhaustion():
    sliver = make_builtin_domain("hypercube", lower=[0.0, 0.0], upper=[1.0, 1.0])
    sliver = type(sliver)(
        dim=2, bbox=sliver.bbox, predicate=lambda x: False, label="sliver",
    )
    with pytest.raises(SamplingError):
        sobol_design(sliver, 10, max_draws=2000)


def test_sobol_triangle_delta_reference_band(triangle):
    d = sobol_design(triangle, 100)
    assert 0.008 <= maximin_distance(d) <= 0.015


def test_sobol_discrepancy_beats_uniform():
    # box-count deviation over anchored boxes, d=2, N=256
    n = 256
    sob = SobolGenerator(2).next_points(n + 1)[1:]  # drop the origin point
    anchors = [(a, b) for a in np.linspace(0.1, 1.0, 10) for b in np.linspace(0.1, 1.0, 10)]

    def box_dev(pts):
        worst = 0.0
        for a, b in anchors:
            frac = np.mean((pts[:, 0] < a) & (pts[:, 1] < b))
            worst = max(worst, abs(frac - a * b))
        return worst

    sob_dev = box_dev(sob)
    uniform_devs = [
        box_dev(np.random.default_rng(seed).random((n, 2))) for seed in range(20)
    ]
    assert sob_dev < float(np.median(uniform_devs))
