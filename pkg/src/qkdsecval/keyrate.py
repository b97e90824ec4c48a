"""Secure-key-rate calculators.

Binary entropy, the Holevo bound on Eve's information for SCW states, the
asymptotic Devetak-Winter rate and the finite-key secret length with its
epsilon budget. Logarithms are base 2 throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import DomainError
from .scw import SystemParams, detection_prob, occupancies, wigner_d00

DEFAULT_F_EC = 1.15
DEFAULT_EPS = 1e-9

_LOG2_2_PLUS_SQRT2 = math.log2(2.0 + math.sqrt(2.0))


@dataclass(frozen=True)
class EpsilonBudget:
    eps_s: float = DEFAULT_EPS
    eps_EC: float = DEFAULT_EPS
    eps_PA: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        for name in ("eps_s", "eps_EC", "eps_PA"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
        if self.eps_s + self.eps_PA >= 1 or self.eps_s + self.eps_PA + self.eps_EC >= 1:
            raise DomainError("epsilon budget must sum to less than 1")


@dataclass(frozen=True)
class RateInputs:
    """Inputs of the asymptotic rate.

    Attributes:
        nu_S: Repetition rate (Hz).
        P_B: Probability of accepting a bit per window.
        Q: Quantum bit error rate.
        f_EC: Error-correction inefficiency (leak = f_EC * h(Q)).
        chi: Holevo bound on Eve's information, bits.
    """

    nu_S: float
    P_B: float
    Q: float
    chi: float
    f_EC: float = DEFAULT_F_EC

    def __post_init__(self) -> None:
        if not self.nu_S > 0:
            raise DomainError("nu_S must be positive")
        if not 0 <= self.P_B <= 1:
            raise DomainError(f"P_B must lie in [0, 1], got {self.P_B}")
        if not 0 <= self.Q <= 0.5:
            raise DomainError(f"Q must lie in [0, 0.5], got {self.Q}")
        if not self.f_EC >= 1:
            raise DomainError(f"f_EC must be >= 1, got {self.f_EC}")
        if not 0 <= self.chi <= 1:
            raise DomainError(f"chi must lie in [0, 1], got {self.chi}")


@dataclass(frozen=True)
class RateResult:
    K: float
    bracket: float
    abort: bool


@dataclass(frozen=True)
class FiniteKeyInputs:
    n: int
    k: int
    Q: float
    chi: float
    f_EC: float = DEFAULT_F_EC
    budget: EpsilonBudget = field(default_factory=EpsilonBudget)

    def __post_init__(self) -> None:
        if int(self.n) != self.n or int(self.k) != self.k:
            raise DomainError("n and k must be integers")
        if not self.n > self.k >= 0:
            raise DomainError(f"need n > k >= 0, got n={self.n}, k={self.k}")
        if not 0 <= self.Q <= 0.5:
            raise DomainError(f"Q must lie in [0, 0.5], got {self.Q}")
        if not 0 <= self.chi <= 1:
            raise DomainError(f"chi must lie in [0, 1], got {self.chi}")
        if not self.f_EC >= 1:
            raise DomainError(f"f_EC must be >= 1, got {self.f_EC}")


def binary_entropy(q: float) -> float:
    """Binary Shannon entropy in bits, with ``h(0) = h(1) = 0``."""
    if not 0 <= q <= 1:
        raise DomainError(f"probability must lie in [0, 1], got {q}")
    if q == 0 or q == 1:
        return 0.0
    h = -(q * math.log(q) + (1.0 - q) * math.log1p(-q)) / math.log(2.0)
    # rounding can overshoot 1 by an ulp near q = 1/2
    return min(h, 1.0)


def holevo_capacity(params: SystemParams) -> float:
    """Holevo bound on Eve's information per signal, in bits.

    ``h((1 - exp(-mu0 (1 - d^S_00(2 beta)))) / 2)``
    """
    d = wigner_d00(params.S, 2.0 * params.beta)
    arg = -0.5 * math.expm1(-params.mu0 * (1.0 - d))
    return binary_entropy(min(max(arg, 0.0), 0.5))


def accepted_bit_prob(params: SystemParams, override: Optional[float] = None) -> float:
    """Probability of accepting a bit per window.

    Sift factor times the sideband detection probability at matched phases.
    An explicit ``override`` is returned unchanged (after range check).
    """
    if override is not None:
        if not 0 <= override <= 1:
            raise DomainError(f"P_B override must lie in [0, 1], got {override}")
        return float(override)
    n_sb = occupancies(params, alpha=1.0, delta_phi=0.0).n_sb
    return params.sift_factor * detection_prob(n_sb)


def asymptotic_rate(r: RateInputs) -> RateResult:
    """Devetak-Winter rate ``nu_S P_B [1 - f_EC h(Q) - chi]``, clamped at zero."""
    bracket = 1.0 - r.f_EC * binary_entropy(r.Q) - r.chi
    abort = bracket <= 0
    K = 0.0 if abort else r.nu_S * r.P_B * bracket
    return RateResult(K=K, bracket=bracket, abort=abort)


def finite_key_terms(fk: FiniteKeyInputs) -> dict[str, float]:
    """Individual terms of the finite-key length, as signed bit contributions.

    ``error_correction`` is ``f_EC h(Q) (n - k)``: the leak over the bits left
    after parameter estimation.
    """
    n, k = fk.n, fk.k
    b = fk.budget
    return {
        "privacy": n * (1.0 - fk.chi),
        "smoothing": -4.0 * math.sqrt(n) * _LOG2_2_PLUS_SQRT2
        * math.sqrt(math.log2(2.0 / b.eps_s**2)),
        "parameter_estimation": -float(k),
        "error_correction": -fk.f_EC * binary_entropy(fk.Q) * (n - k),
        "correctness": -math.log2(1.0 / b.eps_EC),
        "privacy_amplification": -math.log2(1.0 / b.eps_PA),
        "constant": 2.0,
    }


def finite_key_length(fk: FiniteKeyInputs) -> int:
    """Extractable secret length in bits; a value <= 0 means abort."""
    return math.floor(math.fsum(finite_key_terms(fk).values()))


def epsilon_total(budget: EpsilonBudget) -> tuple[float, float]:
    """Return ``(eps_sec, eps_QKD)`` for a budget."""
    eps_sec = budget.eps_s + budget.eps_PA
    return eps_sec, budget.eps_EC + eps_sec
