# src/analysis/bounds.py - Gradient/diameter/sensitivity constants and convergence bounds

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from errors import UsageError
from mechanisms import RngStream, TAG_SYNTHETIC
from optimizer import BoxConstraint, EtaRegime, LocalProblem

logger = logging.getLogger(__name__)

# Enumerate every box vertex up to this many entries; sample vertices beyond it.
MAX_EXHAUSTIVE_VERTEX_DIM = 12
# Shards up to this size also get every single-sample replacement neighbor.
MAX_EXHAUSTIVE_SHARD = 50


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the convergence bounds.

    U1, U3 and H are sampled maxima (lower-bound estimates of the true maxima
    over W); U2 is exact for a box. The bounds are evaluated with the upper
    ends of the bracket, U1 -> H and U3 -> 2 H sqrt(JK).
    """

    U1: float
    U2: float
    U3: float
    H: float
    J: int
    K: int
    gamma: float = 0.0
    L: float = 0.0
    alpha: float = 0.0
    rho_max: float = 0.0
    rho1: float = 0.0
    lambda1_norm: float = 0.0
    estimated: bool = True

    def __post_init__(self):
        for name in ("U1", "U2", "U3", "H", "gamma", "L", "alpha", "rho_max", "rho1", "lambda1_norm"):
            if getattr(self, name) < 0:
                raise UsageError(f"bound constant {name} must be nonnegative")

    @property
    def U1_upper(self) -> float:
        return max(self.U1, self.H)

    @property
    def U3_upper(self) -> float:
        return 2.0 * self.H * math.sqrt(self.J * self.K)

    def with_run(self, gamma: float, rho1: float, rho_max: float, L: float = None,
                 alpha: float = None, lambda1_norm: float = 0.0) -> 'BoundConstants':
        return replace(self, gamma=gamma, rho1=rho1, rho_max=rho_max, lambda1_norm=lambda1_norm,
                       L=self.L if L is None else L, alpha=self.alpha if alpha is None else alpha)


def box_diameter(box: BoxConstraint, J: int, K: int) -> float:
    """max ||u - v|| over [-B, B]^{J x K} = 2 B sqrt(JK)."""
    if not box.finite:
        raise UsageError("the diameter of an unbounded parameter set is undefined")
    return 2.0 * box.bound * math.sqrt(J * K)


def _sample_points(box: BoxConstraint, shape, trials: int, gen: np.random.Generator):
    dim = shape[0] * shape[1]
    yield np.zeros(shape)
    for _ in range(trials):
        yield gen.uniform(-box.bound, box.bound, size=shape)
    if dim <= MAX_EXHAUSTIVE_VERTEX_DIM:
        for signs in itertools.product((-1.0, 1.0), repeat=dim):
            yield box.bound * np.reshape(signs, shape)
    else:
        for _ in range(trials):
            yield box.bound * gen.choice((-1.0, 1.0), size=shape)


def _neighbor_gaps(grad: np.ndarray, contributions: np.ndarray):
    """l1 gradient gaps and neighbor gradient norms for removal and replacement neighbors."""
    n = contributions.shape[0]
    flat = contributions.reshape(n, -1)
    g = grad.reshape(-1)
    removal = g[None, :] - flat
    gaps = [np.abs(flat).sum(axis=1)]
    norms = [np.linalg.norm(removal, axis=1)]
    if n <= MAX_EXHAUSTIVE_SHARD:
        # Replace sample i by sample j of the same shard.
        diff = flat[:, None, :] - flat[None, :, :]
        gaps.append(np.abs(diff).sum(axis=2).reshape(-1))
        norms.append(np.linalg.norm(g[None, None, :] - diff, axis=2).reshape(-1))
    return float(max(a.max() for a in gaps)), float(max(a.max() for a in norms))


def estimate_bound_constants(problems: Sequence[LocalProblem], box: BoxConstraint,
                             trials: int = 200, seed: int = 0) -> BoundConstants:
    """Sample W to estimate U1, U3 and H; U2 is exact.

    Problems must expose `sample_contributions(z)` (per-sample data gradient
    terms). H covers the gradients on every neighboring dataset considered,
    so U3 <= 2 H sqrt(JK) holds for the sampled values.
    """
    if not problems:
        raise UsageError("no local problems given")
    shape = tuple(problems[0].shape)
    J, K = shape
    U2 = box_diameter(box, J, K)
    gen = RngStream(seed, (TAG_SYNTHETIC, 7)).generator()

    U1 = U3 = H = 0.0
    for u in _sample_points(box, shape, trials, gen):
        for problem in problems:
            grad = problem.gradient(u)
            norm = float(np.linalg.norm(grad))
            U1 = max(U1, norm)
            gap, neighbor_norm = _neighbor_gaps(grad, problem.sample_contributions(u))
            U3 = max(U3, gap)
            H = max(H, norm, neighbor_norm)
    logger.info("bound constants: U1=%.4g U2=%.4g U3=%.4g H=%.4g (sampled)", U1, U2, U3, H)
    return BoundConstants(U1=U1, U2=U2, U3=U3, H=H, J=J, K=K)


def _privacy_factor(eps_bar: float, power: int) -> float:
    return 0.0 if math.isinf(eps_bar) else 1.0 / eps_bar ** power


def theorem_rhs(regime: EtaRegime, constants: BoundConstants, T: int, E: int, eps_bar: float,
                P: int, J: Optional[int] = None, K: Optional[int] = None, use_upper: bool = True) -> float:
    """Right-hand side of the expected-gap bound for the given regime."""
    if T < 1 or E < 1 or P < 1:
        raise UsageError("T, E and P must be positive")
    if not eps_bar > 0:
        raise UsageError(f"eps_bar must be positive, got {eps_bar}")
    regime = EtaRegime(regime)
    c = constants
    J = c.J if J is None else J
    K = c.K if K is None else K
    U1 = c.U1_upper if use_upper else c.U1
    U3 = c.U3_upper if use_upper else c.U3
    U2 = c.U2
    dual_start = (c.gamma + c.lambda1_norm) ** 2 / c.rho1 if c.rho1 > 0 else math.inf

    if regime is EtaRegime.SMOOTH:
        rate = (2.0 * P * J * K * U3 ** 2 + U2 ** 2 / (2.0 * E)) * _privacy_factor(eps_bar, 1) / math.sqrt(T)
        return rate + (U2 ** 2 * (c.rho_max + c.L / E) + dual_start) / (2.0 * T)
    if regime is EtaRegime.NONSMOOTH:
        numerator = 2.0 * P * J * K * U3 ** 2 * _privacy_factor(eps_bar, 2) + P * U1 ** 2 + U2 ** 2 / (2.0 * E)
        return numerator / math.sqrt(T) + (U2 ** 2 * c.rho_max + dual_start + 2.0 * c.gamma * U2) / (2.0 * T)
    if not c.alpha > 0:
        raise UsageError("the strongly convex bound needs alpha > 0")
    bracket = (2.0 * U2 * c.gamma + U2 ** 2 * c.rho_max
               + (4.0 * c.gamma ** 2 / c.rho1 if c.rho1 > 0 else math.inf)
               + c.alpha * U2 ** 2 / (2.0 * E)
               + 2.0 * P * (U1 ** 2 + 2.0 * J * K * U3 ** 2 * _privacy_factor(eps_bar, 2)) / c.alpha)
    return bracket / (T + 1)


def theorem_rhs_presum(constants: BoundConstants, T: int, E: int, eps_bar: float, P: int,
                         eta_at: Optional[Callable[[int], float]] = None, use_upper: bool = True) -> float:
    """Smooth-regime bound before the final sqrt(T) relaxation.

    (U2^2 rho_max + (gamma + ||lambda^1||)^2 / rho^1) / (2T) + U2^2 / (2 T E eta^T)
      + P (2 J K U3^2 / eps^2) (1/T) sum_t 1 / (2 (1/eta^t - L))
    """
    if T < 1 or E < 1:
        raise UsageError("T and E must be positive")
    c = constants
    U3 = c.U3_upper if use_upper else c.U3
    if eta_at is None:
        def eta_at(t: int) -> float:
            inverse = c.L + (0.0 if math.isinf(eps_bar) else math.sqrt(t) / eps_bar)
            return math.inf if inverse == 0.0 else 1.0 / inverse
    dual_start = (c.gamma + c.lambda1_norm) ** 2 / c.rho1 if c.rho1 > 0 else math.inf
    value = (c.U2 ** 2 * c.rho_max + dual_start) / (2.0 * T)
    value += c.U2 ** 2 / (2.0 * T * E * eta_at(T))
    if not math.isinf(eps_bar):
        noise_energy = 2.0 * c.J * c.K * U3 ** 2 / eps_bar ** 2
        steps = sum(1.0 / (2.0 * (1.0 / eta_at(t) - c.L)) for t in range(1, T + 1))
        value += P * noise_energy * steps / T
    return value
