# src/mechanisms/noise.py - Laplace objective perturbation and Gaussian output perturbation
#
# All randomness flows through RngStream: a (seed, stream_id) pair mapped to an
# independent numpy SeedSequence substream, so draws never depend on call order
# or on how many threads run the agents.

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from errors import UsageError

logger = logging.getLogger(__name__)

_MANTISSA = 2 ** 53

# Stream tags keep the different consumers of one seed apart.
TAG_LAPLACE = 0
TAG_GAUSSIAN = 1
TAG_AUDIT = 2
TAG_PARTITION = 3
TAG_SYNTHETIC = 4


@dataclass(frozen=True)
class RngStream:
    """Reproducible random substream identified by (seed, stream_id).

    stream_id is a tuple of non-negative ints, typically (tag, p, t, e).
    """

    seed: int
    stream_id: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(int(s) < 0 for s in self.stream_id):
            raise UsageError(f"stream_id entries must be non-negative, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this substream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(s) for s in self.stream_id))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *ids: int) -> 'RngStream':
        return RngStream(self.seed, self.stream_id + tuple(int(i) for i in ids))


@dataclass(frozen=True)
class LaplaceSpec:
    """Per-entry Laplace(0, scale) noise over a (J, K) matrix; scale = sensitivity / eps_bar."""

    scale: float
    shape: Tuple[int, int]

    def __post_init__(self):
        if not self.scale >= 0:
            raise UsageError(f"Laplace scale must be >= 0, got {self.scale}")

    @classmethod
    def for_budget(cls, sensitivity: float, eps_bar: float, shape: Tuple[int, int]) -> 'LaplaceSpec':
        # eps_bar = inf is the nonprivate limit: zero scale.
        if math.isinf(eps_bar):
            return cls(0.0, shape)
        if eps_bar <= 0:
            raise UsageError(f"eps_bar must be positive, got {eps_bar}")
        return cls(sensitivity / eps_bar, shape)


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian output noise with decreasing standard deviation sigma0 / t**decay."""

    sigma0: float
    decay: float
    delta_bar: float
    shape: Tuple[int, int]

    def __post_init__(self):
        if not self.sigma0 >= 0:
            raise UsageError(f"sigma0 must be >= 0, got {self.sigma0}")
        if self.decay < 0:
            raise UsageError(f"decay must be >= 0, got {self.decay}")
        if not 0 < self.delta_bar < 1:
            raise UsageError(f"delta_bar must be in (0, 1), got {self.delta_bar}")

    @classmethod
    def calibrated(cls, l2_sensitivity: float, eps_bar: float, delta_bar: float,
                   shape: Tuple[int, int], decay: float = 0.5) -> 'GaussianSpec':
        """Classic (eps, delta) Gaussian mechanism base scale sqrt(2 ln(1.25/delta)) * sens / eps."""
        if math.isinf(eps_bar):
            return cls(0.0, decay, delta_bar, shape)
        if eps_bar <= 0:
            raise UsageError(f"eps_bar must be positive, got {eps_bar}")
        sigma0 = math.sqrt(2.0 * math.log(1.25 / delta_bar)) * l2_sensitivity / eps_bar
        return cls(sigma0, decay, delta_bar, shape)

    def sigma_at(self, t: int) -> float:
        if t < 1:
            raise UsageError(f"iteration must be >= 1, got {t}")
        return self.sigma0 / t ** self.decay


def _open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    # Uniform on the open interval (0, 1): midpoints of a 2**53 grid.
    k = gen.integers(0, _MANTISSA, size=size, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) / _MANTISSA


def laplace_inverse_cdf(u: np.ndarray, scale: float) -> np.ndarray:
    """Laplace(0, scale) quantile function applied to uniforms in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    lower = u < 0.5
    out = np.empty_like(u)
    out[lower] = scale * np.log(2.0 * u[lower])
    out[~lower] = -scale * np.log(2.0 - 2.0 * u[~lower])
    return out


def sample_laplace_matrix(spec: LaplaceSpec, rng: RngStream) -> np.ndarray:
    """Draw xi with density proportional to exp(-||xi||_1 / scale)."""
    if spec.scale == 0.0:
        return np.zeros(spec.shape)
    return laplace_inverse_cdf(_open_uniform(rng.generator(), spec.shape), spec.scale)


def sample_gaussian_output_noise(spec: GaussianSpec, t: int, rng: RngStream) -> np.ndarray:
    sigma = spec.sigma_at(t)
    if sigma == 0.0:
        return np.zeros(spec.shape)
    return sigma * rng.generator().standard_normal(spec.shape)


@dataclass
class AuditResult:
    """Outcome of a histogram likelihood-ratio audit."""

    max_log_ratio: float
    bins_used: int
    inconclusive: bool

    def passes(self, bound: float, slack: float = 0.1) -> bool:
        return not self.inconclusive and self.max_log_ratio <= bound + slack


def laplace_ratio_audit(b: float, shift: float, samples: int,
                        bins: Union[int, Sequence[float]] = 30,
                        seed: int = 0, min_count: int = 1000,
                        chunk: int = 1_000_000) -> AuditResult:
    """Empirical max |ln(count_1 / count_2)| between Laplace(0, b) and Laplace(shift, b).

    Only bins holding at least `min_count` draws from both populations are
    compared. With no such bin the result is flagged inconclusive.
    """
    if not b > 0:
        raise UsageError(f"audit scale must be positive, got {b}")
    if samples < 1:
        raise UsageError(f"samples must be positive, got {samples}")
    if isinstance(bins, int):
        low, high = min(0.0, shift) - 3.0 * b, max(0.0, shift) + 3.0 * b
        edges = np.linspace(low, high, bins + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)

    counts = []
    for population, center in enumerate((0.0, shift)):
        hist = np.zeros(len(edges) - 1, dtype=np.int64)
        drawn = 0
        block = 0
        while drawn < samples:
            n = min(chunk, samples - drawn)
            gen = RngStream(seed, (TAG_AUDIT, population, block)).generator()
            draws = center + laplace_inverse_cdf(_open_uniform(gen, n), b)
            hist += np.histogram(draws, bins=edges)[0]
            drawn += n
            block += 1
        counts.append(hist)

    usable = (counts[0] >= min_count) & (counts[1] >= min_count)
    if not np.any(usable):
        logger.warning("Laplace audit inconclusive: no bin reached %d draws per population", min_count)
        return AuditResult(max_log_ratio=float('nan'), bins_used=0, inconclusive=True)
    ratios = np.abs(np.log(counts[0][usable] / counts[1][usable]))
    return AuditResult(max_log_ratio=float(np.max(ratios)), bins_used=int(usable.sum()), inconclusive=False)

