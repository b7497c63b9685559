"""Coefficients of the generalised Ait-Sahalia interest-rate model.

The model is the scalar Ito SDE on (0, inf)

    dX = (a_m1 / X - a_0 + a_1 X - a_2 X**r) dt + sigma X**rho dW,   X(0) = x0,

with a_m1, a_0, a_1, a_2, sigma > 0, r, rho > 1 and r + 1 >= 2 rho.

All coefficient functions accept scalars or numpy arrays and evaluate powers
as ``exp(p * log(x))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

CRITICAL_ATOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    alpha_m1: float
    alpha_0: float
    alpha_1: float
    alpha_2: float
    sigma: float
    r: float
    rho: float
    x0: float

    def as_dict(self) -> dict[str, float]:
        return {
            "alpha_m1": self.alpha_m1,
            "alpha_0": self.alpha_0,
            "alpha_1": self.alpha_1,
            "alpha_2": self.alpha_2,
            "sigma": self.sigma,
            "r": self.r,
            "rho": self.rho,
            "x0": self.x0,
        }


class Regime(enum.Enum):
    """Which convergence guarantee applies to a parameter set.

    NON_CRITICAL        r + 1 > 2 rho; order one holds.
    CRITICAL_ORDER_ONE  r + 1 = 2 rho and a_2/sigma^2 >= 4r + 1/2.
    CRITICAL_HALF_ONLY  r + 1 = 2 rho and (r + 2 + 1/r)/8 < a_2/sigma^2 < 4r + 1/2;
                        the coefficients are monotone but order one is not
                        guaranteed.
    INADMISSIBLE        anything else.
    """

    NON_CRITICAL = "NonCritical"
    CRITICAL_ORDER_ONE = "CriticalOrderOne"
    CRITICAL_HALF_ONLY = "CriticalHalfOnly"
    INADMISSIBLE = "Inadmissible"


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if admissible, else raise DomainError.

    Constraints are checked in field order so the message names the first
    violation.
    """
    for name in ("alpha_m1", "alpha_0", "alpha_1", "alpha_2", "sigma"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    for name in ("r", "rho"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 1):
            raise DomainError(f"{name} must be > 1, got {value!r}")
    if not (math.isfinite(params.x0) and params.x0 > 0):
        raise DomainError(f"x0 must be a positive finite number, got {params.x0!r}")
    if params.r + 1 < 2 * params.rho - CRITICAL_ATOL:
        raise DomainError(
            f"r + 1 >= 2 rho is required, got r + 1 = {params.r + 1!r} < "
            f"2 rho = {2 * params.rho!r}"
        )
    return params


def is_critical(params: ModelParams) -> bool:
    return abs(params.r + 1 - 2 * params.rho) <= CRITICAL_ATOL


def classify_regime(params: ModelParams) -> Regime:
    r, rho = params.r, params.rho
    if r + 1 > 2 * rho + CRITICAL_ATOL:
        return Regime.NON_CRITICAL
    if not is_critical(params):
        return Regime.INADMISSIBLE
    ratio = params.alpha_2 / params.sigma**2
    if ratio >= 4 * r + 0.5:
        return Regime.CRITICAL_ORDER_ONE
    if ratio > (r + 2 + 1 / r) / 8:
        return Regime.CRITICAL_HALF_ONLY
    return Regime.INADMISSIBLE


def _check_positive(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(x > 0):
        raise DomainError("state must be strictly positive")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def power(x, p):
    """x**p for x > 0, computed as exp(p log x). No domain check."""
    return np.exp(p * np.log(x))


def f(params: ModelParams, x):
    """Superlinear part of the drift, -a_2 x^r."""
    x = _check_positive(x)
    return _out(-params.alpha_2 * power(x, params.r))


def g(params: ModelParams, x):
    """Diffusion coefficient sigma x^rho."""
    x = _check_positive(x)
    return _out(params.sigma * power(x, params.rho))


def g_prime(params: ModelParams, x):
    x = _check_positive(x)
    return _out(params.rho * params.sigma * power(x, params.rho - 1))


def g_hat(params: ModelParams, x):
    """Milstein coefficient g'(x) g(x) = rho sigma^2 x^(2 rho - 1)."""
    x = _check_positive(x)
    return _out(params.rho * params.sigma**2 * power(x, 2 * params.rho - 1))


def drift(params: ModelParams, x):
    x = _check_positive(x)
    return _out(
        params.alpha_m1 / x
        - params.alpha_0
        + params.alpha_1 * x
        - params.alpha_2 * power(x, params.r)
    )


EXAMPLE_1 = ModelParams(1.5, 2.0, 1.0, 13.0, 1.0, 4.0, 1.5, 0.5)
EXAMPLE_2 = ModelParams(1.5, 2.0, 1.0, 13.0, 1.0, 3.0, 2.0, 0.5)
EXAMPLE_3 = ModelParams(1.5, 2.0, 1.0, 13.0, 1.0, 2.0, 1.5, 0.5)
