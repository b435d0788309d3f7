# src/analysis/averaging.py - Regime-specific averaged iterates, collected as a round observer

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from errors import UsageError
from optimizer import EtaRegime, FederationState, RoundRecord


@dataclass
class AveragedIterates:
    w_avg: np.ndarray
    z_avg: List[np.ndarray]
    # Weight given to each outer round t = 1..T.
    round_weights: np.ndarray

    def consensus_gap(self) -> float:
        """||A w_avg - z_avg|| with A stacking P identity blocks."""
        total = 0.0
        for z_p in self.z_avg:
            total += float(np.sum((self.w_avg - z_p) ** 2))
        return float(np.sqrt(total))


class IterateAverager:
    """Accumulates the averaged iterates the convergence bounds are stated for.

    smooth:    w = (1/T) sum_t w^{t+1},  z = (1/TE) sum_{t,e} z^{t,e+1}
    nonsmooth: w = (1/T) sum_t w^{t+1},  z = (1/TE) sum_{t,e} z^{t,e}
    strong:    round t weighted 2t / (T(T+1)) on w^{t+1} and on (1/E) sum_e z^{t,e}
    """

    def __init__(self, regime: EtaRegime, T: int, E: int, num_agents: int, shape: Tuple[int, int]):
        if T < 1 or E < 1:
            raise UsageError("averaging needs T >= 1 and E >= 1")
        self.regime = EtaRegime(regime)
        self.T = T
        self.E = E
        self.w_sum = np.zeros(shape)
        self.z_sum = [np.zeros(shape) for _ in range(num_agents)]
        self.weights: List[float] = []
        # Largest ||lambda^t|| (all agents stacked) seen so far, lambda^1 included.
        self.max_lambda_norm = 0.0

    def round_weight(self, t: int) -> float:
        if self.regime is EtaRegime.STRONG:
            return 2.0 * t / (self.T * (self.T + 1))
        return 1.0 / self.T

    def __call__(self, record: RoundRecord, state: FederationState):
        if len(self.weights) >= self.T:
            raise UsageError(f"averager configured for T={self.T} received another round")
        weight = self.round_weight(record.t)
        self.weights.append(weight)
        self.w_sum += weight * record.w
        for p, result in enumerate(record.results):
            chain = result.inner[1:] if self.regime is EtaRegime.SMOOTH else result.inner[:-1]
            inner_sum = chain[0].copy()
            for z in chain[1:]:
                inner_sum += z
            self.z_sum[p] += (weight / self.E) * inner_sum
        norm = float(np.sqrt(sum(np.sum(lam * lam) for lam in state.lam)))
        self.max_lambda_norm = max(self.max_lambda_norm, norm)

    def result(self) -> AveragedIterates:
        if len(self.weights) != self.T:
            raise UsageError(f"averager saw {len(self.weights)} of {self.T} rounds")
        return AveragedIterates(w_avg=self.w_sum.copy(), z_avg=[z.copy() for z in self.z_sum],
                                round_weights=np.asarray(self.weights))
