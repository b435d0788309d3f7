# src/optimizer/federation.py - Inexact ADMM with perturbed local updates

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from errors import DivergenceError, DPIADMMError, UsageError
from mechanisms import (
    GaussianSpec,
    LaplaceSpec,
    RngStream,
    TAG_GAUSSIAN,
    TAG_LAPLACE,
    sample_gaussian_output_noise,
    sample_laplace_matrix,
)
from .schedules import Schedules

logger = logging.getLogger(__name__)


class Mechanism(str, Enum):
    """How each agent protects the iterate it sends to the server."""

    OBJP = "ObjP"
    OUTP = "OutP"
    NONPRIVATE = "NonPrivate"


class LocalProblem(Protocol):
    """Agent-side view of f_p needed by the local updates."""

    shape: Tuple[int, int]

    def objective(self, z: np.ndarray) -> float: ...

    def gradient(self, z: np.ndarray) -> np.ndarray: ...

    def sensitivity(self, z: np.ndarray) -> float: ...

    def gradient_and_sensitivity(self, z: np.ndarray) -> Tuple[np.ndarray, float]: ...


@dataclass(frozen=True)
class BoxConstraint:
    """W = [-B, B]^{J x K}; B = inf disables projection."""

    bound: float = 100.0

    def __post_init__(self):
        if not self.bound > 0:
            raise UsageError(f"box bound must be positive, got {self.bound}")

    @property
    def finite(self) -> bool:
        return not math.isinf(self.bound)

    def project(self, z: np.ndarray) -> np.ndarray:
        if not self.finite:
            return z
        return np.clip(z, -self.bound, self.bound)


@dataclass
class AgentState:
    """What agent p carries between rounds."""

    agent_id: int
    z: np.ndarray
    lam: np.ndarray
    # Last inner iterate z_p^{t-1,E+1}; the next inner chain starts here.
    z_inner: np.ndarray
    gaussian: Optional[GaussianSpec] = None

    def copy(self) -> 'AgentState':
        return AgentState(self.agent_id, self.z.copy(), self.lam.copy(), self.z_inner.copy(), self.gaussian)


@dataclass
class FederationState:
    """Global model, agent states and the server's copies of z_p and lambda_p."""

    w: np.ndarray
    agents: List[AgentState]
    server_lam: List[np.ndarray]
    mechanism: Mechanism
    t: int = 1
    e: int = 0

    @classmethod
    def initial(cls, shape: Tuple[int, int], num_agents: int, mechanism: Mechanism) -> 'FederationState':
        """w^1, z_p^1 and lambda_p^1 are all zero."""
        agents = [AgentState(p, np.zeros(shape), np.zeros(shape), np.zeros(shape)) for p in range(num_agents)]
        return cls(w=np.zeros(shape), agents=agents,
                   server_lam=[np.zeros(shape) for _ in range(num_agents)],
                   mechanism=Mechanism(mechanism))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.w.shape

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def z(self) -> List[np.ndarray]:
        return [a.z for a in self.agents]

    @property
    def lam(self) -> List[np.ndarray]:
        return [a.lam for a in self.agents]

    def consensus_residual(self) -> float:
        """||Aw - z|| = sqrt(sum_p ||w - z_p||^2)."""
        total = 0.0
        for agent in self.agents:
            total += float(np.sum((self.w - agent.z) ** 2))
        return math.sqrt(total)

    def snapshot(self) -> 'FederationState':
        return FederationState(w=self.w.copy(), agents=[a.copy() for a in self.agents],
                               server_lam=[lam.copy() for lam in self.server_lam],
                               mechanism=self.mechanism, t=self.t, e=self.e)


@dataclass
class NoiseRecord:
    """Signed noise draws an agent used during one round, one matrix per draw."""

    agent_id: int
    draws: List[np.ndarray] = field(default_factory=list)
    scales: List[float] = field(default_factory=list)

    def mean_abs(self) -> float:
        if not self.draws:
            return 0.0
        return float(np.mean([np.mean(np.abs(d)) for d in self.draws]))


@dataclass
class LocalRoundResult:
    agent_id: int
    z: np.ndarray
    lam: np.ndarray
    noise: NoiseRecord
    # [z^{t,1}, z^{t,2}, ..., z^{t,E+1}]
    inner: List[np.ndarray]


@dataclass
class RoundRecord:
    """Everything produced by outer iteration t, handed to observers."""

    t: int
    rho: float
    eta: float
    w: np.ndarray
    results: List[LocalRoundResult]


RoundObserver = Callable[[RoundRecord, FederationState], None]


def server_global_update(z: Sequence[np.ndarray], lam: Sequence[np.ndarray], rho: float) -> np.ndarray:
    """w^{t+1} = (1/P) sum_p (z_p - lambda_p / rho), summed in agent order."""
    if not rho > 0:
        raise UsageError(f"rho must be positive, got {rho}")
    if len(z) != len(lam) or not z:
        raise UsageError("server update needs one z and one lambda per agent")
    total = np.zeros_like(z[0], dtype=np.float64)
    for z_p, lam_p in zip(z, lam):
        total += z_p - lam_p / rho
    return total / len(z)


def dual_update(lam: np.ndarray, rho: float, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """lambda + rho (w - z); the server and the agents both call this."""
    return lam + rho * (w - z)


def local_subproblem_step(z_prev: np.ndarray, grad: np.ndarray, w: np.ndarray, lam: np.ndarray,
                          xi: np.ndarray, rho: float, eta: float, box: BoxConstraint) -> np.ndarray:
    """Exact minimizer over the box of the linearized, perturbed augmented Lagrangian.

    (z_prev / eta + rho w + lambda - xi - grad) / (1 / eta + rho), clamped entrywise.
    eta = inf drops the proximal term.
    """
    if not rho > 0 or not eta > 0:
        raise UsageError(f"rho and eta must be positive, got rho={rho}, eta={eta}")
    inv_eta = 1.0 / eta
    numerator = rho * w + lam - xi - grad
    if inv_eta != 0.0:
        numerator = z_prev * inv_eta + numerator
    return box.project(numerator / (inv_eta + rho))


def _check_finite(z: np.ndarray, t: int, e: Optional[int], p: Optional[int], what: str = "iterate"):
    if not np.all(np.isfinite(z)):
        raise DivergenceError(f"non-finite {what}", t=t, e=e, p=p)


def local_round(agent: AgentState, problem: LocalProblem, w: np.ndarray, t: int,
                schedules: Schedules, mechanism: Mechanism, rng: RngStream,
                box: BoxConstraint) -> LocalRoundResult:
    """E perturbed local updates from z_p^{t-1,E+1}, averaged, then the dual update."""
    mechanism = Mechanism(mechanism)
    if mechanism is Mechanism.OUTP and schedules.E != 1:
        raise UsageError(f"output perturbation uses a single local update, got E={schedules.E}")
    p = agent.agent_id
    rho = schedules.rho_at(t)
    eta = schedules.eta_at(t)
    record = NoiseRecord(agent_id=p)
    zero = np.zeros(problem.shape)

    z_cur = agent.z_inner
    inner = [z_cur]
    for e in range(1, schedules.E + 1):
        grad, delta = problem.gradient_and_sensitivity(z_cur)
        xi = zero
        if mechanism is Mechanism.OBJP:
            spec = LaplaceSpec.for_budget(delta, schedules.eps_bar, problem.shape)
            xi = sample_laplace_matrix(spec, rng.child(TAG_LAPLACE, p, t, e))
            record.draws.append(xi)
            record.scales.append(spec.scale)
        z_next = local_subproblem_step(z_cur, grad, w, agent.lam, xi, rho, eta, box)
        if mechanism is Mechanism.OUTP:
            noise = sample_gaussian_output_noise(agent.gaussian, t, rng.child(TAG_GAUSSIAN, p, t))
            z_next = z_next + noise
            record.draws.append(noise)
            record.scales.append(agent.gaussian.sigma_at(t))
        _check_finite(z_next, t, e, p)
        inner.append(z_next)
        z_cur = z_next

    z_sum = inner[1].copy()
    for z_e in inner[2:]:
        z_sum += z_e
    z_avg = z_sum / schedules.E
    lam_next = dual_update(agent.lam, rho, w, z_avg)
    _check_finite(lam_next, t, schedules.E, p, what="dual variable")
    return LocalRoundResult(agent_id=p, z=z_avg, lam=lam_next, noise=record, inner=inner)


@dataclass
class TrainingSettings:
    """Everything run_training needs beyond the local problems."""

    schedules: Schedules
    mechanism: Mechanism = Mechanism.NONPRIVATE
    box: BoxConstraint = field(default_factory=BoxConstraint)
    seed: int = 0
    threads: int = 1
    delta_bar: float = 1e-6
    # Explicit Gaussian base deviation; None calibrates it from each agent's sensitivity at z^1.
    outp_sigma0: Optional[float] = None
    outp_decay: float = 0.5
    outp_l2_scale: float = 1.0
    snapshot_every: int = 0

    def __post_init__(self):
        self.mechanism = Mechanism(self.mechanism)
        if self.threads < 1:
            raise UsageError(f"threads must be >= 1, got {self.threads}")
        if self.mechanism is Mechanism.OUTP and self.schedules.E != 1:
            raise UsageError(f"output perturbation uses a single local update, got E={self.schedules.E}")
        if self.outp_sigma0 is not None and self.outp_sigma0 < 0:
            raise UsageError(f"outp_sigma0 must be >= 0, got {self.outp_sigma0}")


@dataclass
class TrainingResult:
    state: FederationState
    snapshots: List[FederationState]
    rho_history: List[float]
    rounds: int


def _gaussian_for(problem: LocalProblem, settings: TrainingSettings) -> GaussianSpec:
    s = settings.schedules
    if settings.outp_sigma0 is not None:
        return GaussianSpec(settings.outp_sigma0, settings.outp_decay, settings.delta_bar, problem.shape)
    l2_sensitivity = settings.outp_l2_scale * problem.sensitivity(np.zeros(problem.shape))
    return GaussianSpec.calibrated(l2_sensitivity, s.eps_bar, settings.delta_bar, problem.shape,
                                   decay=settings.outp_decay)


class FederatedTrainer:
    """Drives T outer rounds over a fixed set of local problems."""

    def __init__(self, problems: Sequence[LocalProblem], settings: TrainingSettings,
                 observers: Sequence[RoundObserver] = ()):
        if not problems:
            raise UsageError("at least one agent is required")
        shapes = {tuple(pr.shape) for pr in problems}
        if len(shapes) != 1:
            raise UsageError(f"all agents must share one parameter shape, got {sorted(shapes)}")
        self.problems = list(problems)
        self.settings = settings
        self.observers = list(observers)
        self.rng = RngStream(settings.seed)
        self.state = FederationState.initial(self.problems[0].shape, len(self.problems), settings.mechanism)
        if settings.mechanism is Mechanism.OUTP:
            for agent, problem in zip(self.state.agents, self.problems):
                agent.gaussian = _gaussian_for(problem, settings)
                logger.debug("agent %d output noise sigma0=%r", agent.agent_id, agent.gaussian.sigma0)

    def step(self, pool: Optional[ThreadPoolExecutor] = None) -> RoundRecord:
        """One outer iteration: server average, parallel local rounds, dual bookkeeping."""
        state = self.state
        s = self.settings.schedules
        t = state.t
        rho = s.rho_at(t)
        w = server_global_update([a.z for a in state.agents], state.server_lam, rho)
        _check_finite(w, t, None, None, what="global model")

        def run_agent(index: int) -> LocalRoundResult:
            return local_round(state.agents[index], self.problems[index], w, t, s,
                               self.settings.mechanism, self.rng, self.settings.box)

        indices = range(state.num_agents)
        results = list(pool.map(run_agent, indices)) if pool is not None else [run_agent(i) for i in indices]

        for p, result in enumerate(results):
            agent = state.agents[p]
            server_lam = dual_update(state.server_lam[p], rho, w, result.z)
            if not np.array_equal(server_lam, result.lam):
                raise DPIADMMError(f"dual variables diverged between server and agent {p} at t={t}")
            state.server_lam[p] = server_lam
            agent.z = result.z
            agent.lam = result.lam
            agent.z_inner = result.inner[-1]
        state.w = w
        state.e = s.E
        record = RoundRecord(t=t, rho=rho, eta=s.eta_at(t), w=w, results=results)
        for observer in self.observers:
            observer(record, state)
        state.t = t + 1
        state.e = 0
        return record

    def run(self) -> TrainingResult:
        s = self.settings.schedules
        snapshots = [self.state.snapshot()]
        rho_history = []
        every = self.settings.snapshot_every
        logger.info("training %d agents for T=%d (mechanism=%s, E=%d, eps_bar=%r)",
                    self.state.num_agents, s.T, self.settings.mechanism.value, s.E, s.eps_bar)
        with ThreadPoolExecutor(max_workers=self.settings.threads) as pool:
            executor = pool if self.settings.threads > 1 else None
            for _ in range(s.T):
                record = self.step(executor)
                rho_history.append(record.rho)
                if every and record.t % every == 0:
                    snapshots.append(self.state.snapshot())
                logger.debug("t=%d rho=%r residual=%r", record.t, record.rho, self.state.consensus_residual())
        return TrainingResult(state=self.state, snapshots=snapshots, rho_history=rho_history, rounds=s.T)


def run_training(problems: Sequence[LocalProblem], settings: TrainingSettings,
                 observers: Sequence[RoundObserver] = ()) -> TrainingResult:
    """Execute T outer rounds; T = 0 returns the initial state unchanged."""
    return FederatedTrainer(problems, settings, observers).run()
