import numpy as np
import pytest

from backend.calculus import ContinuousProblem, block_symmetric_reduce
from backend.double_greedy import (
    checks_passed, diagnostics_check, directions, guess_opt, initial_eta, iteration_cap, opt_guesses,
    run_double_greedy, step_line_search,
)
from backend.oracle import build_oracle, random_small_spec
from shared.errors import OptEstimateError
from shared.models import EstimatorConfig, EstimatorMode, RoundLedger
from tests.conftest import make_oracle

GAMMA = 0.05
EXACT = EstimatorConfig(mode=EstimatorMode.EXACT_ENUM)
BLOCKS = EstimatorConfig(mode=EstimatorMode.BLOCK_EXACT)
RANDOM_INSTANCES = [(kind, 6 + seed % 9, seed) for seed in range(25) for kind in ("cut", "coverage")]


def _modular(weights):
    return make_oracle({"family": "custom_small", "params": {"kind": "modular", "n": len(weights),
                                                             "weights": weights}})


def test_iteration_cap():
    assert iteration_cap(0.05) == 41
    assert iteration_cap(0.2) == 11
    assert iteration_cap(0.3) == 8


def test_directions_sum_to_one():
    grad_x = np.array([0.5, -0.2, 0.0, 0.3])
    grad_y = np.array([-0.5, -0.4, 0.0, 0.1])
    dx, dy = directions(grad_x, grad_y)
    assert np.allclose(dx - dy, 1.0)
    assert np.allclose(dx, [0.5, 0.0, 1.0, 1.0])
    assert np.allclose(dy, [-0.5, -1.0, 0.0, 0.0])


def test_opt_guess_grid():
    assert len(opt_guesses(1.0, 0.05)) == 57
    grid = opt_guesses(2.0, 0.2)
    assert len(grid) == 15
    assert grid[0] == 2.0
    assert np.allclose(np.diff(np.log(grid)), -np.log(1.2))


def test_directed_cut_trace(directed_cut_oracle):
    ledger = RoundLedger()
    report = run_double_greedy(directed_cut_oracle, GAMMA, ledger=ledger)
    assert report.eta0 == 0.0
    assert not report.fallback
    assert report.iterations == 2
    assert report.dg_value == pytest.approx(0.4, abs=1e-12)
    assert report.rnd_value == pytest.approx(0.1, abs=1e-12)
    assert report.alpha_sum == pytest.approx(0.8, abs=1e-12)
    assert report.beta_sum == pytest.approx(0.8, abs=1e-12)
    assert report.horizon == pytest.approx(1.0)
    assert report.horizon_residual == pytest.approx(0.0, abs=1e-12)
    assert report.rounds_used == 3
    assert ledger.rounds_used == report.rounds_used


def test_directed_cut_diagnostics_pass(directed_cut_oracle):
    report = run_double_greedy(directed_cut_oracle, GAMMA)
    checks = diagnostics_check(report, directed_cut_oracle.opt_value)
    assert checks_passed(checks)
    assert report.checks is checks
    assert checks["value_lower_bound"]["slack"] == pytest.approx(0.005, abs=1e-12)


def test_directed_cut_building_blocks(directed_cut_oracle):
    assert initial_eta(directed_cut_oracle, GAMMA, 0.4) == 0.0
    eta = step_line_search(directed_cut_oracle, np.zeros(2), np.ones(2), np.array([1.0, 0.0]),
                           np.array([0.0, -1.0]), GAMMA, 0.4)
    assert eta == 1.0


def test_initial_eta_bisects_for_small_guess(directed_cut_oracle):
    # ⟨∇F(η1) - ∇F((1-η)1), 1⟩ = 0.8(1 - 2η) on the directed cut
    eta = initial_eta(directed_cut_oracle, GAMMA, 0.2)
    assert 0.25 <= eta <= 0.25 + GAMMA / 8.0


def test_line_search_rejects_collapsed_box(directed_cut_oracle):
    with pytest.raises(ValueError):
        step_line_search(directed_cut_oracle, np.full(2, 0.5), np.full(2, 0.5), np.ones(2), np.zeros(2), GAMMA, 0.4)


def test_modular_exits_at_once():
    oracle = _modular([0.2, 0.5, 0.3])
    report = run_double_greedy(oracle, GAMMA, cfg=EXACT)
    assert report.iterations == 1
    assert report.dg_value == pytest.approx(oracle.opt_value)
    assert report.dg_value == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1])
def test_gamma_range(directed_cut_oracle, gamma):
    with pytest.raises(ValueError):
        run_double_greedy(directed_cut_oracle, gamma)


def test_opt_estimate_must_be_positive(directed_cut_oracle):
    with pytest.raises(ValueError):
        run_double_greedy(directed_cut_oracle, GAMMA, opt_estimate=0.0)


@pytest.mark.parametrize("kind,n,seed", RANDOM_INSTANCES)
def test_random_small_instances(kind, n, seed):
    oracle = build_oracle(random_small_spec(kind, n, seed))
    opt = oracle.opt_value
    if opt <= 0:
        pytest.skip("empty instance")
    report = run_double_greedy(oracle, GAMMA, cfg=EXACT)
    assert report.iterations <= iteration_cap(GAMMA)
    assert report.dg_value >= (0.5 - 2.0 * GAMMA) * opt - 1e-9
    assert all(drop >= GAMMA * opt - 1e-9 for drop in report.potential_drops)


def test_guess_opt_shares_rounds(directed_cut_oracle):
    ledger = RoundLedger()
    result = guess_opt(directed_cut_oracle, 0.2, samples=2_000, ledger=ledger)
    assert len(result.guesses) == 15
    assert result.guesses[0] == pytest.approx(4.0 * result.base_estimate)
    assert result.rounds_used == ledger.rounds_used
    assert result.rounds_used == 1 + max(r.rounds_used for r in result.reports)
    assert result.best.dg_value == max(r.dg_value for r in result.reports)
    assert result.best.dg_value >= 0.51 * directed_cut_oracle.opt_value


def test_guess_runs_match_single_runs(directed_cut_oracle):
    result = guess_opt(directed_cut_oracle, 0.2, samples=2_000)
    singles = [run_double_greedy(directed_cut_oracle, 0.2, opt_estimate=guess) for guess in result.guesses]
    assert [r.rounds_used for r in result.reports] == [r.rounds_used for r in singles]
    assert result.rounds_used == 1 + max(r.rounds_used for r in singles)
    true_opt = run_double_greedy(directed_cut_oracle, 0.2)
    assert true_opt.rounds_used <= result.rounds_used - 1


def test_guess_opt_is_deterministic(directed_cut_oracle):
    first = guess_opt(directed_cut_oracle, 0.2, samples=500, max_guesses=4)
    again = guess_opt(directed_cut_oracle, 0.2, samples=500, max_guesses=4)
    assert len(first.guesses) == 4
    assert first.to_dict() == again.to_dict()


def test_guess_opt_on_zero_function():
    with pytest.raises(OptEstimateError):
        guess_opt(_modular([0.0, 0.0, 0.0]), GAMMA, cfg=EXACT, samples=10)


def test_reduced_problem_follows_the_full_run(toy_log_oracle):
    full = run_double_greedy(ContinuousProblem(toy_log_oracle, EXACT), 0.2)
    reduced = run_double_greedy(block_symmetric_reduce(toy_log_oracle, BLOCKS), 0.2)
    assert full.iterations == reduced.iterations
    assert full.dg_value == pytest.approx(reduced.dg_value, abs=1e-9)
    assert full.eta0 == pytest.approx(reduced.eta0, abs=1e-12)


def test_sampled_runs_have_no_diagnostics(directed_cut_oracle):
    cfg = EstimatorConfig(mode=EstimatorMode.MONTE_CARLO, samples=200, seed=1)
    report = run_double_greedy(directed_cut_oracle, 0.2, cfg=cfg)
    assert report.estimator_mode == "monte_carlo"
    with pytest.raises(ValueError):
        diagnostics_check(report, directed_cut_oracle.opt_value)


def test_run_is_deterministic(toy_log_oracle):
    first = run_double_greedy(toy_log_oracle, 0.2)
    again = run_double_greedy(toy_log_oracle, 0.2)
    assert first.to_dict() == again.to_dict()
    assert first.iterations <= iteration_cap(0.2)
