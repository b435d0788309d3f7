# src/optimizer/schedules.py - Penalty (rho) and proximity (eta) schedules

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from errors import UsageError

RHO_CAP = 1e9
RHO_GROWTH = 1.2


class EtaRegime(str, Enum):
    SMOOTH = "smooth"
    NONSMOOTH = "nonsmooth"
    STRONG = "strong"


def rho_schedule(t: int, eps_bar: float, c1: float, c2: float, Tc: int, cap: float = RHO_CAP) -> float:
    """min(cap, c1 * 1.2**floor(t / Tc) + c2 / eps_bar)."""
    if t < 1:
        raise UsageError(f"iteration must be >= 1, got {t}")
    try:
        growth = c1 * RHO_GROWTH ** (t // Tc)
    except OverflowError:
        growth = math.inf
    privacy_term = 0.0 if math.isinf(eps_bar) else c2 / eps_bar
    return min(cap, growth + privacy_term)


def eta_schedule(t: int, regime: EtaRegime, L: float = 0.0, alpha: float = 1.0,
                 eps_bar: float = math.inf) -> float:
    """Proximity parameter for the given convergence regime.

    smooth: 1 / (L + sqrt(t) / eps_bar); nonsmooth: 1 / sqrt(t); strong: 2 / (alpha (t + 2)).
    The smooth form is infinite when L = 0 and eps_bar = inf (no proximal term).
    """
    if t < 1:
        raise UsageError(f"iteration must be >= 1, got {t}")
    regime = EtaRegime(regime)
    if regime is EtaRegime.SMOOTH:
        if L < 0 or not eps_bar > 0:
            raise UsageError(f"smooth eta needs L >= 0 and eps_bar > 0, got L={L}, eps_bar={eps_bar}")
        inverse = L + (0.0 if math.isinf(eps_bar) else math.sqrt(t) / eps_bar)
        return math.inf if inverse == 0.0 else 1.0 / inverse
    if regime is EtaRegime.NONSMOOTH:
        return 1.0 / math.sqrt(t)
    if not alpha > 0:
        raise UsageError(f"strong eta needs alpha > 0, got {alpha}")
    return 2.0 / (alpha * (t + 2))


@dataclass(frozen=True)
class RhoSchedule:
    """rho^t: the dynamic schedule times `scale`, or a constant when `static` is set."""

    c1: float = 2.0
    c2: float = 5.0
    Tc: int = 10000
    cap: float = RHO_CAP
    scale: float = 1.0
    static: Optional[float] = None

    def __post_init__(self):
        if self.static is not None and not self.static > 0:
            raise UsageError(f"static rho must be positive, got {self.static}")
        if self.Tc < 1:
            raise UsageError(f"Tc must be >= 1, got {self.Tc}")
        if not self.scale > 0:
            raise UsageError(f"rho scale must be positive, got {self.scale}")

    def at(self, t: int, eps_bar: float) -> float:
        if self.static is not None:
            return self.static
        return self.scale * rho_schedule(t, eps_bar, self.c1, self.c2, self.Tc, self.cap)


@dataclass(frozen=True)
class Schedules:
    """Per-iteration hyperparameters plus the privacy budget, E and T."""

    rho: RhoSchedule = field(default_factory=RhoSchedule)
    eta_regime: EtaRegime = EtaRegime.NONSMOOTH
    L: float = 0.0
    alpha: float = 1.0
    eps_bar: float = math.inf
    E: int = 1
    T: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'eta_regime', EtaRegime(self.eta_regime))
        if not self.eps_bar > 0:
            raise UsageError(f"eps_bar must be positive or inf, got {self.eps_bar}")
        if self.E < 1:
            raise UsageError(f"E must be >= 1, got {self.E}")
        if self.T < 0:
            raise UsageError(f"T must be >= 0, got {self.T}")

    @property
    def private(self) -> bool:
        return not math.isinf(self.eps_bar)

    def rho_at(self, t: int) -> float:
        return self.rho.at(t, self.eps_bar)

    def eta_at(self, t: int) -> float:
        return eta_schedule(t, self.eta_regime, L=self.L, alpha=self.alpha, eps_bar=self.eps_bar)
