# src/analysis/privacy.py - Numerical witnesses for the objective-perturbation privacy argument

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from errors import SolverError, UsageError
from optimizer import BoxConstraint, local_subproblem_step

logger = logging.getLogger(__name__)


@dataclass
class SubproblemParams:
    """Data of one perturbed local subproblem at (t, e, p)."""

    z_prev: np.ndarray
    grad: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    rho: float
    eta: float

    def __post_init__(self):
        if not self.rho > 0 or not self.eta > 0:
            raise UsageError("rho and eta must be positive")

    def coefficients(self) -> Tuple[float, np.ndarray]:
        """Per-entry objective a z^2 / 2 - c z (up to a constant)."""
        inv_eta = 1.0 / self.eta
        a = inv_eta + self.rho
        c = self.z_prev * inv_eta + self.rho * self.w + self.lam - self.xi - self.grad
        return a, c

    def closed_form(self, box: BoxConstraint) -> np.ndarray:
        return local_subproblem_step(self.z_prev, self.grad, self.w, self.lam, self.xi,
                                     self.rho, self.eta, box)


def _penalty_slope(z: np.ndarray, bound: float, ell: float) -> Tuple[np.ndarray, np.ndarray]:
    """First and second derivative of ln(1 + e^{ell(z - B)}) + ln(1 + e^{ell(-z - B)})."""
    upper = expit(ell * (z - bound))
    lower = expit(ell * (-z - bound))
    slope = ell * (upper - lower)
    curvature = ell * ell * (upper * (1.0 - upper) + lower * (1.0 - lower))
    return slope, curvature


def penalized_subproblem_solve(params: SubproblemParams, box: BoxConstraint, ell: float,
                               tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """Minimize the subproblem with the box replaced by the smooth log penalty of steepness ell.

    The objective separates per entry into a z^2/2 - c z + softplus(ell(z - B)) + softplus(ell(-z - B)),
    whose derivative is increasing with its root inside [(c - ell)/a, (c + ell)/a]. Each entry is
    solved by Newton steps safeguarded by bisection on that bracket.
    """
    if not ell > 0:
        raise UsageError(f"penalty steepness must be positive, got {ell}")
    if not box.finite:
        raise UsageError("the log penalty needs a finite box")
    a, c = params.coefficients()
    bound = box.bound
    lo = (c - ell) / a
    hi = (c + ell) / a
    z = np.clip(c / a, lo, hi)

    residual = np.inf
    for _ in range(max_iter):
        slope, curvature = _penalty_slope(z, bound, ell)
        derivative = a * z - c + slope
        residual = float(np.max(np.abs(derivative)))
        width = hi - lo
        if residual <= tol or np.all(width <= 4.0 * np.spacing(np.maximum(np.abs(z), 1.0))):
            return z
        lo = np.where(derivative < 0, z, lo)
        hi = np.where(derivative > 0, z, hi)
        newton = z - derivative / (a + curvature)
        inside = (newton > lo) & (newton < hi)
        z = np.where(derivative == 0, z, np.where(inside, newton, 0.5 * (lo + hi)))
    raise SolverError(f"penalized subproblem did not converge in {max_iter} iterations", residual=residual)


def noise_recovery(z_solution: np.ndarray, z_prev: np.ndarray, grad: np.ndarray, w: np.ndarray,
                   lam: np.ndarray, rho: float, eta: float,
                   box: Optional[BoxConstraint] = None) -> np.ndarray:
    """Noise that makes z_solution optimal: -grad + rho(w - z) + lambda - (z - z_prev)/eta.

    Entries clamped to the box boundary carry an unknown normal-cone term; they
    come back as NaN.
    """
    if not rho > 0 or not eta > 0:
        raise UsageError("rho and eta must be positive")
    xi = -grad + rho * (w - z_solution) + lam - (z_solution - z_prev) / eta
    if box is not None and box.finite:
        clamped = np.abs(z_solution) >= box.bound
        if np.any(clamped):
            logger.warning("noise recovery: excluding %d clamped coordinates", int(clamped.sum()))
            xi = np.where(clamped, np.nan, xi)
    return xi
