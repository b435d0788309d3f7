# src/analysis/toy_problems.py - Small federations with analytically known optima
#
# Agent p holds points a_i in R^{J x K} and
#   f_p(z) = (1/(2I)) sum_i ||z - a_i||^2 + (mu/P) ||z||_1 + (beta/P) ||z||^2
# so the consensus optimum is soft_threshold(mean(a), mu) / (1 + 2 beta), clamped to the box.

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from errors import UsageError
from mechanisms import RngStream, TAG_SYNTHETIC
from optimizer import BoxConstraint, EtaRegime


class QuadraticToyProblem:
    """Local objective of one toy agent; implements the optimizer's local-problem protocol."""

    def __init__(self, points: np.ndarray, total_points: int, num_agents: int,
                 mu: float = 0.0, beta: float = 0.0):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 3 or points.shape[0] < 1:
            raise UsageError("toy points must be a non-empty (I_p, J, K) array")
        self.points = points
        self.shape: Tuple[int, int] = points.shape[1:]
        self.total_points = total_points
        self.num_agents = num_agents
        self.mu = mu
        self.beta = beta
        self._point_sum = points.sum(axis=0)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def smoothness(self) -> float:
        return self.num_points / self.total_points + 2.0 * self.beta / self.num_agents

    def objective(self, z: np.ndarray) -> float:
        diff = z[None, :, :] - self.points
        value = np.sum(diff * diff) / (2.0 * self.total_points)
        value += (self.mu / self.num_agents) * np.sum(np.abs(z))
        value += (self.beta / self.num_agents) * np.sum(z * z)
        return float(value)

    def gradient(self, z: np.ndarray) -> np.ndarray:
        """Gradient, or the subgradient with sign(0) = 0 when mu > 0."""
        grad = (self.num_points * z - self._point_sum) / self.total_points
        return grad + (self.mu / self.num_agents) * np.sign(z) + (2.0 * self.beta / self.num_agents) * z

    def sample_contributions(self, z: np.ndarray) -> np.ndarray:
        return (z[None, :, :] - self.points) / self.total_points

    def sensitivity(self, z: np.ndarray) -> float:
        return float(np.max(np.abs(self.sample_contributions(z)).sum(axis=(1, 2))))

    def gradient_and_sensitivity(self, z: np.ndarray) -> Tuple[np.ndarray, float]:
        return self.gradient(z), self.sensitivity(z)


@dataclass
class ToyFederation:
    """Toy problems for one convergence regime plus their exact optimum."""

    regime: EtaRegime
    problems: List[QuadraticToyProblem]
    box: BoxConstraint
    optimum: np.ndarray
    L: float
    alpha: float

    @property
    def num_agents(self) -> int:
        return len(self.problems)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.problems[0].shape

    def global_objective(self, z: Sequence[np.ndarray]) -> float:
        """F(z) = sum_p f_p(z_p)."""
        total = 0.0
        for problem, z_p in zip(self.problems, z):
            total += problem.objective(z_p)
        return total

    def optimal_value(self) -> float:
        return self.global_objective([self.optimum] * self.num_agents)


def consensus_optimum(points: np.ndarray, mu: float, beta: float, box: BoxConstraint) -> np.ndarray:
    mean = points.mean(axis=0)
    shrunk = np.sign(mean) * np.maximum(np.abs(mean) - mu, 0.0)
    return box.project(shrunk / (1.0 + 2.0 * beta))


def make_toy_federation(regime: EtaRegime, num_agents: int = 2, points_per_agent: int = 20,
                        shape: Tuple[int, int] = (1, 2), box_bound: float = 1.0, seed: int = 0,
                        mu: float = 0.05, beta: float = 0.25, spread: float = 0.5) -> ToyFederation:
    """smooth: plain quadratic; nonsmooth: plus an l1 term; strong: plus a ridge term."""
    regime = EtaRegime(regime)
    if num_agents < 1 or points_per_agent < 1:
        raise UsageError("toy federation needs at least one agent and one point per agent")
    gen = RngStream(seed, (TAG_SYNTHETIC, 9)).generator()
    centers = gen.uniform(-0.5, 0.5, size=(num_agents,) + tuple(shape))
    points = [c + gen.uniform(-spread, spread, size=(points_per_agent,) + tuple(shape)) for c in centers]
    total = num_agents * points_per_agent

    mu_used = mu if regime is EtaRegime.NONSMOOTH else 0.0
    beta_used = beta if regime is EtaRegime.STRONG else 0.0
    problems = [QuadraticToyProblem(a, total, num_agents, mu=mu_used, beta=beta_used) for a in points]
    box = BoxConstraint(box_bound)
    optimum = consensus_optimum(np.concatenate(points), mu_used, beta_used, box)
    moduli = [p.smoothness for p in problems]
    return ToyFederation(regime=regime, problems=problems, box=box, optimum=optimum,
                         L=max(moduli), alpha=min(moduli))
