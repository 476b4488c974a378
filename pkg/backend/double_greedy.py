"""
Low-adaptivity continuous double greedy.

A run is written as a generator that yields the list of evaluations it
needs next (gradients, values or rounded-set values) and receives their
answers. Everything yielded at once is mutually independent, so a driver
charges one adaptive round per yield. Several runs advance in lockstep
under one driver, which is how the OPT guesses share rounds.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Any, Generator, List, Optional, Sequence, Tuple

import numpy as np

from backend.baselines import random_set_value
from backend.calculus import ContinuousProblem, box_project
from backend.oracle import SetFunctionOracle
from shared.config import get_config
from shared.errors import OptEstimateError
from shared.models import (
    CheckStatus, DGReport, EstimatorConfig, EstimatorMode, OptGuessResult, RoundLedger,
)

logger = logging.getLogger(__name__)

Request = Tuple[str, np.ndarray]
MEET_TOLERANCE = 1e-12


def iteration_cap(gamma: float) -> int:
    """⌈2/γ⌉ + 1."""
    return int(math.ceil(2.0 / gamma - 1e-9)) + 1


def as_problem(target, cfg: Optional[EstimatorConfig] = None) -> ContinuousProblem:
    """Wrap an oracle, using block coordinates whenever the oracle allows it."""
    if isinstance(target, ContinuousProblem):
        return target
    return ContinuousProblem(target, cfg, reduced=target.block_symmetric)


class LockstepDriver:
    """Advances request generators together, one ledger batch per step."""

    def __init__(self, problem: ContinuousProblem, ledger: RoundLedger, label: str = "dg",
                 workers: Optional[int] = None):
        self.problem = problem
        self.ledger = ledger
        self.label = label
        self.workers = max(1, workers if workers is not None else get_config().batch_workers)

    def _answer(self, request: Request) -> Any:
        kind, z = request
        if kind == "gradient":
            answer = self.problem.gradient(z)
            if not np.all(np.isfinite(answer)):
                raise ValueError(f"Non-finite gradient values at {z}")
            return answer
        if kind == "value":
            return self.problem.value(z)
        if kind == "integral":
            return self.problem.integral_value(z)
        raise ValueError(f"Unknown request kind '{kind}'")

    def _answer_all(self, requests: List[Request]) -> List[Any]:
        if self.workers == 1 or len(requests) < 2:
            return [self._answer(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(self._answer, requests))

    def run(self, runs: Sequence[Generator]) -> Tuple[List[Any], List[int]]:
        """Drive every generator to completion; returns results and per-run round counts."""
        results: List[Any] = [None] * len(runs)
        own_rounds = [0] * len(runs)
        pending = {}
        for idx, run in enumerate(runs):
            try:
                pending[idx] = next(run)
            except StopIteration as stop:
                results[idx] = stop.value

        while pending:
            order = sorted(pending)
            requests = [req for idx in order for req in pending[idx]]
            cost = sum(self.problem.query_cost(kind) for kind, _ in requests)
            self.ledger.record(max(cost, 1), self.label)
            answers = self._answer_all(requests)

            position = 0
            advanced = {}
            for idx in order:
                count = len(pending[idx])
                reply = answers[position:position + count]
                position += count
                own_rounds[idx] += 1
                try:
                    advanced[idx] = runs[idx].send(reply)
                except StopIteration as stop:
                    results[idx] = stop.value
            pending = advanced
        return results, own_rounds


def directions(grad_x: np.ndarray, grad_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Δx = ∇f(x)_+ / (∇f(x)_+ - ∇f(y)_-), Δy = ∇f(y)_- / (same).

    Coordinates where both clamped gradients vanish move x up: Δx = 1, Δy = 0.
    """
    a = np.maximum(np.asarray(grad_x, dtype=float), 0.0)
    b = np.minimum(np.asarray(grad_y, dtype=float), 0.0)
    den = a - b
    positive = den > 0
    safe = np.where(positive, den, 1.0)
    dx = np.where(positive, a / safe, 1.0)
    dy = np.where(positive, b / safe, 0.0)
    return dx, dy


def _penalty_terms(grad_x: np.ndarray, grad_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-coordinate α_i = (a+b)²/(a-b) and β_i = a-b with a = ∇f(x)_+, b = ∇f(y)_-."""
    a = np.maximum(grad_x, 0.0)
    b = np.minimum(grad_y, 0.0)
    beta = a - b
    alpha = np.where(beta > 0, (a + b) ** 2 / np.where(beta > 0, beta, 1.0), 0.0)
    return alpha, beta


def _initial_eta_search(w: np.ndarray, grad_zero: np.ndarray, grad_one: np.ndarray, gamma: float,
                        opt_estimate: float) -> Generator:
    """Smallest η0 in [0, ½) with ⟨∇f(η0·1) - ∇f((1-η0)·1), 1⟩ <= 2·OPT, by bisection."""
    def admissible(g_low, g_high):
        return float(w @ (g_low - g_high)) <= 2.0 * opt_estimate

    if admissible(grad_zero, grad_one):
        return 0.0, grad_zero, grad_one
    ones = np.ones_like(w)
    lo, hi = 0.0, 0.5
    best = None
    while hi - lo > gamma / 8.0:
        mid = 0.5 * (lo + hi)
        g_low, g_high = yield [("gradient", mid * ones), ("gradient", (1.0 - mid) * ones)]
        if admissible(g_low, g_high):
            hi, best = mid, (g_low, g_high)
        else:
            lo = mid
    if best is None:
        return None, None, None
    return hi, best[0], best[1]


def _step_search(w: np.ndarray, x: np.ndarray, y: np.ndarray, dx: np.ndarray, dy: np.ndarray,
                 grad_x: np.ndarray, grad_y: np.ndarray, gamma: float, opt_estimate: float) -> Generator:
    """Smallest η with ⟨∇f(x+ηΔx), Δx⟩ + ⟨∇f(y+ηΔy), Δy⟩ <= (same at η=0) - γ·OPT.

    Returns (η, ∇f at the new x, ∇f at the new y, triggered). When the
    predicate fails at η_max the box collapses and ``triggered`` is False.
    """
    eta_max = float(np.min(y - x))
    if eta_max <= 0:
        raise ValueError("Line search called with x = y")
    target = float(w @ (grad_x * dx) + w @ (grad_y * dy)) - gamma * opt_estimate

    def probe(eta):
        return [("gradient", np.clip(x + eta * dx, 0.0, 1.0)), ("gradient", np.clip(y + eta * dy, 0.0, 1.0))]

    def satisfied(g_low, g_high):
        return float(w @ (g_low * dx) + w @ (g_high * dy)) <= target

    g_low, g_high = yield probe(eta_max)
    if not satisfied(g_low, g_high):
        return eta_max, g_low, g_high, False

    lo, hi = 0.0, eta_max
    best = (g_low, g_high)
    while hi - lo > gamma / 8.0 * eta_max:
        mid = 0.5 * (lo + hi)
        g_low, g_high = yield probe(mid)
        if satisfied(g_low, g_high):
            hi, best = mid, (g_low, g_high)
        else:
            lo = mid
    return hi, best[0], best[1], True


def _double_greedy_run(problem: ContinuousProblem, gamma: float, opt_estimate: float) -> Generator:
    w = problem.multiplicity
    d = problem.dimension
    zeros, ones = np.zeros(d), np.ones(d)
    mode = problem.cfg.mode.value

    rnd_value, grad_zero, grad_one = yield [("value", np.full(d, 0.5)), ("gradient", zeros), ("gradient", ones)]
    eta0, grad_x, grad_y = yield from _initial_eta_search(w, grad_zero, grad_one, gamma, opt_estimate)
    if eta0 is None:
        logger.info("No admissible starting step; returning F(½·1)")
        return DGReport(dg_value=rnd_value, rnd_value=rnd_value, opt_estimate=opt_estimate, rounds_used=0,
                        iterations=1, gamma=gamma, fallback=True, value_x=rnd_value, value_y=rnd_value,
                        estimator_mode=mode)

    x, y = eta0 * ones, (1.0 - eta0) * ones
    iterations = 1
    cap = iteration_cap(gamma)
    alpha_sum = beta_sum = horizon = 0.0
    drops: List[float] = []
    capped = False

    while True:
        potential = float(w @ (grad_x - grad_y))
        gap = float(np.max(y - x))
        if potential < gamma * opt_estimate or gap <= MEET_TOLERANCE:
            break
        if iterations >= cap:
            capped = True
            logger.warning(f"Iteration cap {cap} reached with potential {potential:.6g}")
            break

        dx, dy = directions(grad_x, grad_y)
        alpha, beta = _penalty_terms(grad_x, grad_y)
        eta, new_gx, new_gy, triggered = yield from _step_search(
            w, x, y, dx, dy, grad_x, grad_y, gamma, opt_estimate)

        alpha_sum += eta * float(w @ alpha)
        beta_sum += eta * float(w @ beta)
        horizon += eta

        new_x = box_project(x + eta * dx, x, y)
        new_y = box_project(y + eta * dy, new_x, y)
        if not triggered:
            middle = 0.5 * (new_x + new_y)
            new_x, new_y = middle, middle.copy()
        else:
            drops.append(potential - float(w @ (new_gx - new_gy)))
        x, y, grad_x, grad_y = new_x, new_y, new_gx, new_gy
        iterations += 1
        logger.debug(f"Iteration {iterations}: η={eta:.6g}, potential {potential:.6g}")

    value_x, value_y, integral_x, integral_y = yield [
        ("value", x), ("value", y), ("integral", x), ("integral", y)]
    report = DGReport(
        dg_value=max(value_x, value_y),
        rnd_value=rnd_value,
        opt_estimate=opt_estimate,
        rounds_used=0,
        iterations=iterations,
        alpha_sum=alpha_sum,
        beta_sum=beta_sum,
        gamma=gamma,
        eta0=eta0,
        capped=capped,
        horizon=horizon,
        horizon_residual=max(0.0, (1.0 - 2.0 * eta0) - horizon),
        value_x=value_x,
        value_y=value_y,
        exit_potential=float(w @ (grad_x - grad_y)),
        final_gap=float(np.max(y - x)),
        potential_drops=drops,
        best_integral_value=max(integral_x, integral_y),
        estimator_mode=mode,
    )
    return report


def _check_gamma(gamma: float):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"γ must lie in (0, 1), got {gamma}")


def initial_eta(target, gamma: float, opt_estimate: float, cfg: Optional[EstimatorConfig] = None,
                ledger: Optional[RoundLedger] = None) -> Optional[float]:
    """Starting step of the double greedy, or None when no η0 < ½ qualifies."""
    _check_gamma(gamma)
    problem = as_problem(target, cfg)
    w = problem.multiplicity

    def run():
        grad_zero, grad_one = yield [("gradient", np.zeros(problem.dimension)),
                                     ("gradient", np.ones(problem.dimension))]
        eta, _, _ = yield from _initial_eta_search(w, grad_zero, grad_one, gamma, opt_estimate)
        return eta

    results, _ = LockstepDriver(problem, ledger or RoundLedger(), label="initial_eta").run([run()])
    return results[0]


def step_line_search(target, x: np.ndarray, y: np.ndarray, dx: np.ndarray, dy: np.ndarray, gamma: float,
                     opt_estimate: float, cfg: Optional[EstimatorConfig] = None,
                     ledger: Optional[RoundLedger] = None) -> float:
    """Step length of one double greedy iteration from (x, y) along (Δx, Δy)."""
    _check_gamma(gamma)
    problem = as_problem(target, cfg)
    w = problem.multiplicity

    def run():
        grad_x, grad_y = yield [("gradient", np.asarray(x, dtype=float)), ("gradient", np.asarray(y, dtype=float))]
        eta, _, _, _ = yield from _step_search(w, np.asarray(x, dtype=float), np.asarray(y, dtype=float),
                                               dx, dy, grad_x, grad_y, gamma, opt_estimate)
        return eta

    results, _ = LockstepDriver(problem, ledger or RoundLedger(), label="line_search").run([run()])
    return results[0]


def run_double_greedy(target, gamma: float, cfg: Optional[EstimatorConfig] = None, opt_estimate: float = None,
                      ledger: Optional[RoundLedger] = None) -> DGReport:
    """One run of the double greedy with a fixed OPT estimate."""
    _check_gamma(gamma)
    problem = as_problem(target, cfg)
    if opt_estimate is None:
        opt_estimate = problem.oracle.opt_value
    if not opt_estimate > 0:
        raise ValueError(f"opt_estimate must be positive, got {opt_estimate}")
    ledger = ledger if ledger is not None else RoundLedger()
    results, rounds = LockstepDriver(problem, ledger).run([_double_greedy_run(problem, gamma, opt_estimate)])
    report = results[0]
    report.rounds_used = rounds[0]
    logger.info(f"Double greedy finished: value {report.dg_value:.6g}, {report.iterations} iterations, "
                f"{report.rounds_used} rounds")
    return report


def opt_guesses(base: float, gamma: float) -> List[float]:
    """base·(1+γ)^-j for j = 0..⌈ln 16/γ⌉."""
    count = int(math.ceil(math.log(16.0) / gamma)) + 1
    return [base * (1.0 + gamma) ** (-j) for j in range(count)]


def guess_opt(oracle: SetFunctionOracle, gamma: float, cfg: Optional[EstimatorConfig] = None,
              samples: Optional[int] = None, ledger: Optional[RoundLedger] = None,
              max_guesses: Optional[int] = None) -> OptGuessResult:
    """Run the double greedy for a grid of OPT guesses in parallel and keep the best run.

    The base of the grid is four times a random-set estimate; all guesses
    share each round's batch, so the rounds used are those of the longest run
    plus the estimate's round(s).
    """
    _check_gamma(gamma)
    cfg = cfg or EstimatorConfig()
    ledger = ledger if ledger is not None else RoundLedger()
    m = samples or get_config().default_samples
    estimate = None
    for attempt in range(get_config().opt_estimate_escalations + 1):
        estimate = random_set_value(oracle, 0.5, m, cfg.seed + attempt, ledger)
        if estimate.value > 0:
            break
        logger.warning(f"Random-set estimate is zero with {m} samples; escalating")
        m *= 4
    else:
        raise OptEstimateError(f"Random-set estimate stayed at zero up to {m // 4} samples")

    guesses = opt_guesses(4.0 * estimate.value, gamma)
    if max_guesses is not None:
        guesses = guesses[:max_guesses]
    problem = as_problem(oracle, cfg)
    runs = [_double_greedy_run(problem, gamma, guess) for guess in guesses]
    reports, rounds = LockstepDriver(problem, ledger, label="dg_guesses").run(runs)
    for report, used in zip(reports, rounds):
        report.rounds_used = used
    best_index = int(np.argmax([r.dg_value for r in reports]))
    best = replace(reports[best_index], rounds_used=ledger.rounds_used)
    logger.info(f"Guessed OPT over {len(guesses)} values; best run value {best.dg_value:.6g}, "
                f"{ledger.rounds_used} rounds")
    return OptGuessResult(guesses=guesses, base_estimate=estimate.value, best=best, reports=reports,
                          rounds_used=ledger.rounds_used)


def diagnostics_check(report: DGReport, opt_reference: float, tolerance: Optional[float] = None) -> dict:
    """Evaluate the value inequalities of an exact run on its recorded sums.

    Fills ``report.checks`` and returns it; each entry holds a status and the slack.
    """
    if report.estimator_mode == EstimatorMode.MONTE_CARLO.value:
        raise ValueError("Diagnostics need exact gradients; sampled runs carry no error propagation")
    tol = 1e-6 * opt_reference ** 2 if tolerance is None else tolerance
    gamma = report.gamma
    dg = report.dg_value
    half_opt = (1.0 - gamma / 2.0) * opt_reference / 2.0

    def entry(slack: float) -> dict:
        status = CheckStatus.PASS if slack >= -tol else CheckStatus.FAIL
        return {"status": status.value, "slack": slack}

    checks = {
        "value_lower_bound": entry(dg - half_opt - 0.25 * report.alpha_sum),
        "quadratic": entry((4.0 + gamma) * (dg - half_opt) * opt_reference - (dg - report.rnd_value) ** 2),
        "penalty_sum": entry((4.0 + gamma) * dg - report.beta_sum),
        "iterations": entry(float(iteration_cap(gamma) - report.iterations)),
        "exit_gap": {"status": CheckStatus.PASS.value if not report.capped else CheckStatus.FAIL.value,
                     "slack": gamma * report.opt_estimate - report.exit_potential},
    }
    report.checks = checks
    return checks


def checks_passed(checks: dict) -> bool:
    return all(entry["status"] != CheckStatus.FAIL.value for entry in checks.values())
