"""Extremal dependence kernels.

Closed-form pieces of the dependence model: the non-separable space-time
variogram with a deterministic advection shift, the exceedance probability
(extremogram) it induces, its inverse, and the velocity-magnitude transform
used to map empirical advection vectors to effective ones.

Internal units are meters for space and one dataset time-step for time;
velocities are meters per step. Conversions to km/h live at the reporting
boundary (see :mod:`stormgen.config`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri


@dataclass(frozen=True)
class VariogramParams:
    """Parameters of the power-law space-time variogram.

    beta1, beta2 are the spatial and temporal sill rates (> 0); alpha1,
    alpha2 the corresponding exponents, each in (0, 2].
    """

    beta1: float
    beta2: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError(f"beta1, beta2 must be > 0, got ({self.beta1}, {self.beta2})")
        if not (0 < self.alpha1 <= 2 and 0 < self.alpha2 <= 2):
            raise ValueError(f"alpha1, alpha2 must lie in (0, 2], got ({self.alpha1}, {self.alpha2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.alpha1, self.alpha2])


@dataclass(frozen=True)
class AdvectionTransform:
    """Magnitude-only transform of empirical velocity vectors.

    Maps a velocity of magnitude m to magnitude eta1 * m**eta2, keeping the
    direction. eta1 must be positive; eta2 >= 0.
    """

    eta1: float
    eta2: float

    def __post_init__(self):
        if not self.eta1 > 0:
            raise ValueError(f"eta1 must be > 0, got {self.eta1}")
        if self.eta2 < 0:
            raise ValueError(f"eta2 must be >= 0, got {self.eta2}")

    def as_array(self) -> np.ndarray:
        return np.array([self.eta1, self.eta2])


@dataclass(frozen=True)
class Velocity:
    """Planar velocity in space units per time step."""

    vx: float
    vy: float

    def __post_init__(self):
        if not (np.isfinite(self.vx) and np.isfinite(self.vy)):
            raise ValueError(f"velocity components must be finite, got ({self.vx}, {self.vy})")

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


ZERO_VELOCITY = Velocity(0.0, 0.0)


def variogram(h, tau, theta: VariogramParams, v: Velocity = ZERO_VELOCITY):
    """Evaluate the advection-sheared variogram at lag (h, tau).

    gamma = 2 * (beta1 * ||h - tau*v||**alpha1 + beta2 * |tau|**alpha2).

    Parameters
    ----------
    h : array_like, shape (..., 2)
        Spatial lag vector(s).
    tau : array_like
        Temporal lag(s), broadcastable against the leading shape of ``h``.

    Returns
    -------
    Nonnegative variogram value(s); 0 at (h, tau) = (0, 0).
    """
    h = np.asarray(h, dtype=float)
    tau = np.asarray(tau, dtype=float)
    dx = h[..., 0] - tau * v.vx
    dy = h[..., 1] - tau * v.vy
    sdist = np.hypot(dx, dy)
    return 2.0 * (theta.beta1 * sdist**theta.alpha1
                  + theta.beta2 * np.abs(tau)**theta.alpha2)


def chi_from_gamma(gamma):
    """Exceedance probability implied by a variogram value.

    chi = 2 * (1 - Phi(sqrt(gamma / 2))); equals 1 iff gamma = 0 and decays
    to 0 as gamma grows.
    """
    gamma = np.asarray(gamma, dtype=float)
    return 2.0 * (1.0 - ndtr(np.sqrt(0.5 * gamma)))


def chi_r(h, tau, theta: VariogramParams, v: Velocity = ZERO_VELOCITY):
    """Extremogram of the dependence model at lag (h, tau) under velocity v."""
    return chi_from_gamma(variogram(h, tau, theta, v))


def inverse_chi(chi):
    """Variogram value whose extremogram equals ``chi``.

    Inverse of :func:`chi_from_gamma` on (0, 1]: gamma = 2 * Phi^{-1}(1 - chi/2)**2.
    """
    chi = np.asarray(chi, dtype=float)
    if np.any(chi <= 0) or np.any(chi > 1):
        raise ValueError("chi must lie in (0, 1]")
    q = ndtri(1.0 - 0.5 * chi)
    return 2.0 * q * q


def transform_advection(v_emp: Velocity, a: AdvectionTransform) -> Velocity:
    """Apply the magnitude transform to an empirical velocity.

    Direction is preserved exactly; a zero vector maps to zero (the formula
    is undefined there, and its limit along any fixed direction is 0 for
    eta2 > 0).
    """
    speed = v_emp.speed
    if speed == 0.0:
        return ZERO_VELOCITY
    scale = a.eta1 * speed**a.eta2 / speed
    return Velocity(scale * v_emp.vx, scale * v_emp.vy)


def cap_speed(v: Velocity, cap: float) -> tuple[Velocity, bool]:
    """Check a velocity against an upper speed bound (inclusive).

    Returns ``(v, True)`` when ||v|| <= cap and ``(v, False)`` when the
    episode should be excluded.
    """
    if not cap > 0:
        raise ValueError(f"cap must be > 0, got {cap}")
    return v, v.speed <= cap
