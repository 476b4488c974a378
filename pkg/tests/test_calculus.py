import numpy as np
import pytest

from backend.calculus import (
    ContinuousProblem, block_symmetric_reduce, box_project, gradient, gradient_vector, multilinear_value, point_seed,
    project_halfspace_orthant, project_weighted_simplex,
)
from backend.oracle import ExplicitOracle
from shared.errors import EstimatorBudgetError
from shared.models import CustomKind, EstimatorConfig, EstimatorMode, FractionalPoint

EXACT = EstimatorConfig(mode=EstimatorMode.EXACT_ENUM)
BLOCKS = EstimatorConfig(mode=EstimatorMode.BLOCK_EXACT)


def _triangle():
    return ExplicitOracle(CustomKind.CUT, 3, edges=np.array([[0, 1, 1.0], [0, 2, 2.0], [1, 2, 4.0]]))


def _block_point(oracle, coords):
    return FractionalPoint(coords=np.asarray(coords, dtype=float), block_sizes=oracle.group_sizes)


@pytest.mark.parametrize("cfg", [EXACT, BLOCKS])
def test_directed_cut_multilinear_value(directed_cut_oracle, cfg):
    z = _block_point(directed_cut_oracle, [0.3, 0.6])
    # 0.4 * 0.3 * (1 - 0.6)
    assert multilinear_value(directed_cut_oracle, z, cfg).value == pytest.approx(0.048, abs=1e-12)


@pytest.mark.parametrize("cfg", [EXACT, BLOCKS])
def test_directed_cut_gradient_per_element(directed_cut_oracle, cfg):
    z = _block_point(directed_cut_oracle, [0.3, 0.6])
    size = directed_cut_oracle.group_sizes
    assert gradient(directed_cut_oracle, z, 0, cfg).value == pytest.approx(0.4 * 0.4 / size[0], abs=1e-12)
    assert gradient(directed_cut_oracle, z, 1, cfg).value == pytest.approx(-0.4 * 0.3 / size[1], abs=1e-12)


def test_block_exact_matches_element_enumeration(toy_log_oracle):
    rng = np.random.default_rng(2)
    for _ in range(5):
        z = _block_point(toy_log_oracle, rng.random(toy_log_oracle.num_groups))
        assert multilinear_value(toy_log_oracle, z, BLOCKS).value == pytest.approx(
            multilinear_value(toy_log_oracle, z, EXACT).value, abs=1e-12)
        assert np.allclose(gradient_vector(toy_log_oracle, z, BLOCKS)[0],
                           gradient_vector(toy_log_oracle, z, EXACT)[0], atol=1e-12)


def test_dense_point_matches_block_point(toy_log_oracle):
    z = _block_point(toy_log_oracle, [0.2, 0.7, 0.1, 0.5])
    dense = FractionalPoint(coords=z.dense(toy_log_oracle.partition.labels))
    assert multilinear_value(toy_log_oracle, dense, EXACT).value == pytest.approx(
        multilinear_value(toy_log_oracle, z, BLOCKS).value, abs=1e-12)


def test_explicit_multilinear_value_at_vertices():
    oracle = _triangle()
    for subset in ([], [0], [1, 2], [0, 1, 2]):
        coords = np.zeros(3)
        coords[subset] = 1.0
        assert multilinear_value(oracle, FractionalPoint(coords=coords), EXACT).value == pytest.approx(
            oracle.evaluate_set(subset))


def test_explicit_multilinear_value_at_half():
    oracle = _triangle()
    # every edge is cut with probability one half
    assert multilinear_value(oracle, FractionalPoint(coords=np.full(3, 0.5)), EXACT).value == pytest.approx(3.5)


def test_monte_carlo_within_error_and_deterministic(toy_log_oracle):
    z = _block_point(toy_log_oracle, [0.4, 0.3, 0.6, 0.2])
    cfg = EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=20_000, seed=9)
    exact = multilinear_value(toy_log_oracle, z, BLOCKS).value
    estimate = multilinear_value(toy_log_oracle, z, cfg)
    assert estimate.std_error > 0.0
    assert abs(estimate.value - exact) <= 4.0 * estimate.std_error + 1e-12
    assert multilinear_value(toy_log_oracle, z, cfg).value == estimate.value

    exact_grad = gradient(toy_log_oracle, z, 1, BLOCKS).value
    grad = gradient(toy_log_oracle, z, 1, cfg)
    assert abs(grad.value - exact_grad) <= 4.0 * grad.std_error + 1e-12


def test_monte_carlo_on_explicit_oracle():
    oracle = _triangle()
    cfg = EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=20_000, seed=1)
    estimate = multilinear_value(oracle, FractionalPoint(coords=np.full(3, 0.5)), cfg)
    assert abs(estimate.value - 3.5) <= 4.0 * estimate.std_error


def test_block_exact_needs_block_oracle():
    with pytest.raises(ValueError):
        multilinear_value(_triangle(), FractionalPoint(coords=np.full(3, 0.5)), BLOCKS)


def test_exact_enum_over_budget(desk_log_oracle):
    z = _block_point(desk_log_oracle, np.full(desk_log_oracle.num_groups, 0.1))
    with pytest.raises(EstimatorBudgetError):
        multilinear_value(desk_log_oracle, z, EXACT)


def test_block_point_must_match_partition(toy_log_oracle):
    z = FractionalPoint(coords=np.full(4, 0.5), block_sizes=np.array([1, 1, 1, 1]))
    with pytest.raises(ValueError):
        multilinear_value(toy_log_oracle, z, BLOCKS)


def test_gradient_rejects_bad_coordinate(directed_cut_oracle):
    with pytest.raises(ValueError):
        gradient(directed_cut_oracle, _block_point(directed_cut_oracle, [0.5, 0.5]), 2, BLOCKS)


def test_point_seed_is_stable():
    assert point_seed(np.array([0.1, 0.2])) == point_seed(np.array([0.1, 0.2]))
    assert point_seed(np.array([0.1, 0.2])) != point_seed(np.array([0.2, 0.1]))


def test_box_project():
    assert np.allclose(box_project(np.array([-0.5, 0.4, 2.0]), np.zeros(3), np.ones(3)), [0.0, 0.4, 1.0])
    point = box_project(FractionalPoint(coords=np.array([0.9])), np.array([0.0]), np.array([0.5]))
    assert isinstance(point, FractionalPoint)
    assert np.allclose(point.coords, [0.5])
    with pytest.raises(ValueError):
        box_project(np.zeros(2), np.ones(2), np.zeros(2))


def test_weighted_simplex_projection_hits_mass():
    w = np.array([1.0, 2.0, 3.0])
    z = project_weighted_simplex(np.array([0.9, -0.3, 0.8]), w, 1.5)
    assert np.all(z >= 0.0)
    assert w @ z == pytest.approx(1.5, abs=1e-9)


def test_halfspace_projection_keeps_feasible_points():
    w = np.array([1.0, 2.0])
    assert np.allclose(project_halfspace_orthant(np.array([1.0, -1.0]), w, 0.5), [1.0, 0.0])
    z = project_halfspace_orthant(np.array([0.1, 0.0]), w, 1.0)
    assert w @ z == pytest.approx(1.0, abs=1e-9)


def test_reduced_problem(directed_cut_oracle):
    problem = block_symmetric_reduce(directed_cut_oracle)
    assert problem.dimension == 2
    assert np.array_equal(problem.multiplicity, directed_cut_oracle.group_sizes)
    assert problem.value(np.array([1.0, 0.0])) == pytest.approx(0.4)
    assert problem.integral_value(np.array([1.0, 0.0])) == pytest.approx(0.4)
    assert problem.query_cost("gradient") == 4
    assert problem.query_cost("integral") == 1


def test_full_problem_rounds_at_half():
    problem = ContinuousProblem(_triangle(), EXACT)
    assert problem.integral_value(np.array([0.5, 0.2, 0.1])) == pytest.approx(3.0)
    cfg = EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=50)
    assert ContinuousProblem(_triangle(), cfg).query_cost("gradient") == 2 * 3 * 50


def test_reduce_needs_block_symmetry():
    with pytest.raises(ValueError):
        block_symmetric_reduce(_triangle())


def test_gradient_matches_finite_difference(toy_log_oracle):
    rng = np.random.default_rng(5)
    coords = rng.uniform(0.1, 0.9, toy_log_oracle.n)
    step = 1e-4
    for i in range(toy_log_oracle.n):
        up, down = coords.copy(), coords.copy()
        up[i] += step
        down[i] -= step
        slope = (multilinear_value(toy_log_oracle, FractionalPoint(coords=up), EXACT).value
                 - multilinear_value(toy_log_oracle, FractionalPoint(coords=down), EXACT).value) / (2.0 * step)
        assert gradient(toy_log_oracle, FractionalPoint(coords=coords), i, EXACT).value == pytest.approx(
            slope, abs=1e-8)


@pytest.mark.parametrize("oracle_name", ["toy", "triangle"])
def test_gradient_shrinks_as_the_point_grows(toy_log_oracle, oracle_name):
    oracle = toy_log_oracle if oracle_name == "toy" else _triangle()
    rng = np.random.default_rng(8)
    for _ in range(5):
        low = rng.random(oracle.n)
        high = low + rng.random(oracle.n) * (1.0 - low)
        grad_low = gradient_vector(oracle, FractionalPoint(coords=low), EXACT)[0]
        grad_high = gradient_vector(oracle, FractionalPoint(coords=high), EXACT)[0]
        assert np.all(grad_low >= grad_high - 1e-12)


def test_monte_carlo_error_shrinks_with_samples(toy_log_oracle):
    z = _block_point(toy_log_oracle, [0.4, 0.3, 0.6, 0.2])
    small = multilinear_value(toy_log_oracle, z, EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=2_000, seed=3))
    large = multilinear_value(toy_log_oracle, z, EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=8_000, seed=3))
    assert small.std_error / large.std_error == pytest.approx(2.0, rel=0.15)
