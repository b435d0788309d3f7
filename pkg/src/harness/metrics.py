# src/harness/metrics.py - Test error, noise magnitude and per-run metric rows

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from data import RawDataset
from errors import UsageError
from optimizer import FederationState, LocalProblem, Mechanism, NoiseRecord, RoundRecord

RUN_COLUMNS = ["t", "test_error", "avg_noise_magnitude", "consensus_residual",
               "global_objective", "cumulative_epsilon"]


def evaluate_test_error(w: np.ndarray, test_set: Optional[RawDataset]) -> float:
    """Share of test samples whose arg-max logit (lowest class on ties) is not the true class."""
    if test_set is None or test_set.num_samples == 0:
        raise UsageError("test error needs a non-empty test set")
    if w.ndim != 2 or w.shape[0] != test_set.num_features:
        raise UsageError(f"model of shape {w.shape} does not fit {test_set.num_features} features")
    if test_set.num_classes > w.shape[1]:
        raise UsageError(f"model has {w.shape[1]} classes, test set uses {test_set.num_classes}")
    predictions = np.argmax(test_set.features @ w, axis=1)
    return float(np.mean(predictions != test_set.labels))


def avg_noise_magnitude(records: Sequence[NoiseRecord]) -> float:
    """(1/(PJK)) sum_p sum_jk |xi_pjk|, each agent's E draws averaged first."""
    if not records:
        raise UsageError("noise magnitude needs one record per agent")
    total = 0.0
    for record in records:
        total += record.mean_abs()
    return total / len(records)


def cumulative_epsilon(t: int, E: int, eps_bar: float, mechanism: Mechanism) -> float:
    """Linear composition over t rounds of E releases each."""
    if Mechanism(mechanism) is Mechanism.NONPRIVATE or math.isinf(eps_bar):
        return math.inf
    return t * E * eps_bar


@dataclass
class MetricsRow:
    t: int
    test_error: float
    avg_noise_magnitude: float
    consensus_residual: float
    global_objective: float
    cumulative_epsilon: float


@dataclass
class RunMetrics:
    seed: int
    rows: List[MetricsRow] = field(default_factory=list)

    @property
    def best_test_error(self) -> float:
        return min((r.test_error for r in self.rows), default=math.nan)

    @property
    def final_test_error(self) -> float:
        return self.rows[-1].test_error if self.rows else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=RUN_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


class MetricsRecorder:
    """Round observer producing one metrics row every `eval_every` rounds and at t = T."""

    def __init__(self, problems: Sequence[LocalProblem], test_set: RawDataset, T: int, E: int,
                 eps_bar: float, mechanism: Mechanism, eval_every: int = 100, seed: int = 0):
        if eval_every < 1:
            raise UsageError("eval_every must be >= 1")
        self.problems = list(problems)
        self.test_set = test_set
        self.T = T
        self.E = E
        self.eps_bar = eps_bar
        self.mechanism = Mechanism(mechanism)
        self.eval_every = eval_every
        self.metrics = RunMetrics(seed=seed)

    def __call__(self, record: RoundRecord, state: FederationState):
        t = record.t
        if t % self.eval_every != 0 and t != self.T:
            return
        objective = 0.0
        for problem in self.problems:
            objective += problem.objective(record.w)
        self.metrics.rows.append(MetricsRow(
            t=t,
            test_error=evaluate_test_error(record.w, self.test_set),
            avg_noise_magnitude=avg_noise_magnitude([r.noise for r in record.results]),
            consensus_residual=state.consensus_residual(),
            global_objective=objective,
            cumulative_epsilon=cumulative_epsilon(t, self.E, self.eps_bar, self.mechanism),
        ))
