"""Physical model of the subcarrier-wave (SCW) signal.

Photons are moved between the optical carrier (which doubles as the phase
reference) and the modulation sidebands according to the Wigner function
``d^S_00``. This module turns system parameters into per-window mode
occupancies, Poisson detection probabilities and photon-rate/power
conversions used by the link-budget and attack modules.

All functions are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import h as PLANCK

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]

# Four phase states used by both Alice and Bob.
PHASES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of an SCW QKD link.

    Attributes:
        mu0: Mean photon number of the carrier/reference per transmission window.
        m: Modulation index.
        S: Order of the d-function.
        beta: Modulation angle in radians.
        eta_line: Channel transmittance, in (0, 1].
        eta_bob: Transmittance of Bob's module, in (0, 1].
        rep_rate: Repetition (phase-change) frequency in Hz.
        wavelength: Optical wavelength in meters.
        sift_factor: Probability that Alice and Bob bases match.
    """

    mu0: float
    m: float
    S: int
    beta: float
    eta_line: float = 1.0
    eta_bob: float = 1.0
    rep_rate: float = 100e6
    wavelength: float = 1550e-9
    sift_factor: float = 0.5

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu0) and self.mu0 >= 0):
            raise DomainError(f"mu0 must be >= 0, got {self.mu0}")
        if not 0 <= self.m <= 1:
            raise DomainError(f"modulation index must lie in [0, 1], got {self.m}")
        if isinstance(self.S, bool) or int(self.S) != self.S or self.S < 0:
            raise DomainError(f"S must be a non-negative integer, got {self.S}")
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")
        if not 0 < self.eta_line <= 1:
            raise DomainError(f"eta_line must lie in (0, 1], got {self.eta_line}")
        if not 0 < self.eta_bob <= 1:
            raise DomainError(f"eta_bob must lie in (0, 1], got {self.eta_bob}")
        if not self.rep_rate > 0:
            raise DomainError("rep_rate must be positive")
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if not 0 <= self.sift_factor <= 1:
            raise DomainError(f"sift_factor must lie in [0, 1], got {self.sift_factor}")
        object.__setattr__(self, "S", int(self.S))


@dataclass(frozen=True)
class ModeOccupancy:
    n_sb: float
    n_ref: float

    @property
    def total(self) -> float:
        return self.n_sb + self.n_ref


def wigner_d00(S: int, beta: ArrayLike) -> ArrayLike:
    """Wigner d-function element ``d^S_00(beta)``.

    Uses the identity ``d^S_00(beta) = P_S(cos beta)`` and evaluates the
    Legendre polynomial with the three-term recurrence
    ``(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}``, which is stable on [-1, 1].

    Args:
        S: Non-negative integer order.
        beta: Angle in radians; scalar or numpy array.

    Returns:
        Value(s) in [-1, 1], same shape as ``beta``.
    """
    if isinstance(S, bool) or int(S) != S or S < 0:
        raise DomainError(f"S must be a non-negative integer, got {S}")
    b = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(b)):
        raise DomainError("beta must be finite")
    x = np.cos(b)
    p_prev, p = np.ones_like(x), x
    if S == 0:
        p = p_prev
    for k in range(1, int(S)):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    p = np.clip(p, -1.0, 1.0)
    return float(p) if p.ndim == 0 else p


def default_beta_prime(params: SystemParams, delta_phi: float) -> float:
    """Effective d-function argument after Bob's modulation.

    ``2 beta |cos(delta_phi / 2)|``: matched phases double the modulation
    angle, opposite phases cancel it.
    """
    return 2.0 * params.beta * abs(math.cos(delta_phi / 2.0))


BetaMap = Callable[[SystemParams, float], float]

# Named beta' maps; register a corrected formula here or pass a callable.
BETA_PRIME_MAPS: dict[str, BetaMap] = {"default": default_beta_prime}


def beta_from_modulation_index(m: float) -> float:
    """Small-modulation placeholder ``beta = m``."""
    if not 0 <= m <= 1:
        raise DomainError(f"modulation index must lie in [0, 1], got {m}")
    return float(m)


def _resolve_beta_map(beta_map: Union[str, BetaMap]) -> BetaMap:
    if callable(beta_map):
        return beta_map
    try:
        return BETA_PRIME_MAPS[beta_map]
    except KeyError:
        raise DomainError(f"unknown beta' map {beta_map!r}") from None


def occupancies(
    params: SystemParams,
    alpha: float = 1.0,
    delta_phi: float = 0.0,
    beta_map: Union[str, BetaMap] = "default",
) -> ModeOccupancy:
    """Mean photon numbers on the sidebands and on the carrier at Bob's detectors.

    Args:
        params: System parameters.
        alpha: Extra transmittance imposed by an eavesdropper, in (0, 1].
        delta_phi: Phase difference between Alice and Bob, radians.
        beta_map: Name in ``BETA_PRIME_MAPS`` or a callable
            ``(params, delta_phi) -> beta'``.
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not math.isfinite(delta_phi):
        raise DomainError("delta_phi must be finite")
    total = alpha * params.mu0 * params.eta_line * params.eta_bob
    d = wigner_d00(params.S, _resolve_beta_map(beta_map)(params, delta_phi))
    d2 = d * d
    return ModeOccupancy(n_sb=total * (1.0 - d2), n_ref=total * d2)


def sideband_fraction(
    params: SystemParams, delta_phi: float = 0.0, beta_map: Union[str, BetaMap] = "default"
) -> float:
    """Fraction ``1 - d^2`` of the photons found on the sidebands at Bob."""
    if not math.isfinite(delta_phi):
        raise DomainError("delta_phi must be finite")
    d = wigner_d00(params.S, _resolve_beta_map(beta_map)(params, delta_phi))
    return 1.0 - d * d


def alice_sideband_mean(params: SystemParams) -> float:
    """Mean sideband photon number leaving Alice (single modulation by ``beta``)."""
    d = wigner_d00(params.S, params.beta)
    return params.mu0 * (1.0 - d * d)


def detection_prob(n_ph: ArrayLike) -> ArrayLike:
    """Click probability ``1 - exp(-n)`` of a unit-efficiency threshold detector."""
    n = np.asarray(n_ph, dtype=float)
    if np.any(np.isnan(n)) or np.any(n < 0):
        raise DomainError("mean photon number must be >= 0")
    p = -np.expm1(-n)
    return float(p) if p.ndim == 0 else p


def photon_energy(wavelength: float) -> float:
    if not wavelength > 0:
        raise DomainError("wavelength must be positive")
    return PLANCK * SPEED_OF_LIGHT / wavelength


def photons_to_cw_power(photons_per_pulse: float, rep_rate: float, wavelength: float) -> float:
    """Continuous-wave power (W) carrying ``photons_per_pulse`` at ``rep_rate``."""
    if not (photons_per_pulse > 0 and rep_rate > 0 and wavelength > 0):
        raise DomainError("photons, rep_rate and wavelength must be positive")
    return photons_per_pulse * rep_rate * photon_energy(wavelength)


def power_to_photons(power: float, rep_rate: float, wavelength: float) -> float:
    """Photons per pulse in a c.w. beam of ``power`` watts sliced at ``rep_rate``."""
    if not (power > 0 and rep_rate > 0 and wavelength > 0):
        raise DomainError("power, rep_rate and wavelength must be positive")
    return power / (rep_rate * photon_energy(wavelength))
