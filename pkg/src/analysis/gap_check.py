# src/analysis/gap_check.py - Monte-Carlo check of the expected optimality-gap bounds

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from errors import UsageError
from optimizer import EtaRegime, Mechanism, RhoSchedule, Schedules, TrainingSettings, run_training
from .averaging import IterateAverager
from .bounds import BoundConstants, estimate_bound_constants, theorem_rhs, theorem_rhs_presum
from .toy_problems import ToyFederation

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["regime", "T", "E", "eps_bar", "lhs", "rhs", "pass", "rhs_presum"]
# Seeds of the gamma calibration runs are offset so they never coincide with evaluation seeds.
CALIBRATION_SEED_OFFSET = 1_000_003


@dataclass
class GapCheckResult:
    regime: EtaRegime
    T: int
    E: int
    eps_bar: float
    runs: int
    lhs: float
    rhs: float
    rhs_presum: float
    passed: bool
    gamma: float
    max_lambda_norm: float
    lambda_within_gamma: bool
    constants: BoundConstants
    lhs_runs: List[float] = field(default_factory=list)

    def to_row(self) -> dict:
        return {"regime": self.regime.value, "T": self.T, "E": self.E, "eps_bar": self.eps_bar,
                "lhs": self.lhs, "rhs": self.rhs, "pass": self.passed, "rhs_presum": self.rhs_presum}


def _schedules_for(federation: ToyFederation, regime: EtaRegime, T: int, E: int, eps_bar: float,
                   rho: Optional[RhoSchedule]) -> Schedules:
    if rho is None:
        # Constant over the run, which also satisfies rho^t <= t/(t-1) rho^{t-1}.
        rho = RhoSchedule(c1=2.0, c2=5.0, Tc=T + 1)
    return Schedules(rho=rho, eta_regime=regime, L=federation.L, alpha=federation.alpha,
                     eps_bar=eps_bar, E=E, T=T)


def _one_run(federation: ToyFederation, schedules: Schedules, seed: int, threads: int) -> IterateAverager:
    mechanism = Mechanism.NONPRIVATE if math.isinf(schedules.eps_bar) else Mechanism.OBJP
    settings = TrainingSettings(schedules=schedules, mechanism=mechanism, box=federation.box,
                                seed=seed, threads=threads)
    averager = IterateAverager(schedules.eta_regime, schedules.T, schedules.E,
                               federation.num_agents, federation.shape)
    run_training(federation.problems, settings, observers=[averager])
    return averager


def expectation_gap_check(federation: ToyFederation, runs: int, T: int, E: int = 1,
                          eps_bar: float = math.inf, regime: Optional[EtaRegime] = None,
                          seed: int = 0, calibration_runs: int = 3, trials: int = 200,
                          rho: Optional[RhoSchedule] = None, threads: int = 1) -> GapCheckResult:
    """Average F(z_avg) - F(z*) + gamma ||A w_avg - z_avg|| over seeded runs and compare to the bound.

    gamma is twice the largest ||lambda^t|| seen in separate calibration runs;
    the evaluation runs then report whether ||lambda^t|| <= gamma held throughout.
    """
    if federation.optimum is None:
        raise UsageError("the optimum of this problem is unavailable")
    if runs < 1 or calibration_runs < 1:
        raise UsageError("runs and calibration_runs must be positive")
    regime = federation.regime if regime is None else EtaRegime(regime)
    schedules = _schedules_for(federation, regime, T, E, eps_bar, rho)

    calibration_max = 0.0
    for c in range(calibration_runs):
        averager = _one_run(federation, schedules, seed + CALIBRATION_SEED_OFFSET + c, threads)
        calibration_max = max(calibration_max, averager.max_lambda_norm)
    gamma = 2.0 * calibration_max

    optimal_value = federation.optimal_value()
    lhs_runs = []
    max_lambda = 0.0
    for r in range(runs):
        averager = _one_run(federation, schedules, seed + r, threads)
        averaged = averager.result()
        gap = federation.global_objective(averaged.z_avg) - optimal_value
        lhs_runs.append(gap + gamma * averaged.consensus_gap())
        max_lambda = max(max_lambda, averager.max_lambda_norm)
    lhs = float(np.mean(lhs_runs))

    rhos = [schedules.rho_at(t) for t in range(1, T + 1)]
    constants = estimate_bound_constants(federation.problems, federation.box, trials=trials, seed=seed)
    constants = constants.with_run(gamma=gamma, rho1=rhos[0], rho_max=max(rhos),
                                   L=federation.L, alpha=federation.alpha)
    P = federation.num_agents
    rhs = theorem_rhs(regime, constants, T, E, eps_bar, P)
    rhs_presum = (theorem_rhs_presum(constants, T, E, eps_bar, P, eta_at=schedules.eta_at)
                    if regime is EtaRegime.SMOOTH else float('nan'))
    passed = lhs <= rhs
    logger.info("gap check %s T=%d E=%d eps=%r: lhs=%.4g rhs=%.4g (%s)",
                regime.value, T, E, eps_bar, lhs, rhs, "pass" if passed else "FAIL")
    return GapCheckResult(regime=regime, T=T, E=E, eps_bar=eps_bar, runs=runs, lhs=lhs, rhs=rhs,
                          rhs_presum=rhs_presum, passed=passed, gamma=gamma,
                          max_lambda_norm=max_lambda, lambda_within_gamma=max_lambda <= gamma,
                          constants=constants, lhs_runs=lhs_runs)


def write_bound_report(results: Sequence[GapCheckResult], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.to_row() for r in results], columns=REPORT_COLUMNS)
    frame.to_csv(path, index=False)
    return path
