import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from sipmm.errors import DomainError
from sipmm.model import (
    EXAMPLE_1,
    EXAMPLE_2,
    EXAMPLE_3,
    ModelParams,
    Regime,
    classify_regime,
    drift,
    f,
    g,
    g_hat,
    g_prime,
    validate,
)

EXAMPLES = [EXAMPLE_1, EXAMPLE_2, EXAMPLE_3]


def test_validate_accepts_example_1():
    p = ModelParams(1.5, 2, 1, 13, 1, 4, 1.5, 0.5)
    assert validate(p) is p


def test_validate_rejects_inadmissible_exponents():
    with pytest.raises(DomainError, match="r \\+ 1 >= 2 rho"):
        validate(ModelParams(1.5, 2, 1, 13, 1, 1.5, 2, 0.5))


def test_validate_names_first_violation():
    with pytest.raises(DomainError, match="alpha_m1"):
        validate(ModelParams(0, 2, 1, 13, 1, 4, 1.5, 0.5))
    with pytest.raises(DomainError, match="sigma"):
        validate(ModelParams(1, 2, 1, 13, -1, 4, 1.5, 0.5))
    with pytest.raises(DomainError, match="rho"):
        validate(ModelParams(1, 2, 1, 13, 1, 4, 1.0, 0.5))
    with pytest.raises(DomainError, match="x0"):
        validate(ModelParams(1, 2, 1, 13, 1, 4, 1.5, 0.0))


@pytest.mark.parametrize(
    "params, expected",
    [
        (EXAMPLE_1, Regime.NON_CRITICAL),
        (EXAMPLE_2, Regime.CRITICAL_ORDER_ONE),
        (EXAMPLE_3, Regime.CRITICAL_ORDER_ONE),
        (ModelParams(1.5, 2, 1, 10, 1, 3, 2, 0.5), Regime.CRITICAL_HALF_ONLY),
        (ModelParams(1.5, 2, 1, 0.5, 1, 3, 2, 0.5), Regime.INADMISSIBLE),
        (ModelParams(1.5, 2, 1, 13, 1, 1.5, 2, 0.5), Regime.INADMISSIBLE),
    ],
)
def test_classify_regime(params, expected):
    assert classify_regime(params) is expected


def test_half_only_thresholds_by_arithmetic():
    # r = 3: lower threshold (3 + 2 + 1/3)/8, upper 4*3 + 1/2
    assert (3 + 2 + 1 / 3) / 8 == pytest.approx(0.6667, abs=1e-4)
    assert 4 * 3 + 0.5 == 12.5
    assert classify_regime(ModelParams(1.5, 2, 1, 12.5, 1, 3, 2, 0.5)) is Regime.CRITICAL_ORDER_ONE
    assert classify_regime(ModelParams(1.5, 2, 1, 12.49, 1, 3, 2, 0.5)) is Regime.CRITICAL_HALF_ONLY


def test_critical_equality_tolerates_decimal_rounding():
    p = ModelParams(1.5, 2, 1, 13, 1, 0.1 * 30, 0.2 * 10, 0.5)
    assert classify_regime(p) is Regime.CRITICAL_ORDER_ONE


@given(
    c=st.floats(1e-3, 1e3),
    alpha_2=st.floats(0.1, 100),
    sigma=st.floats(0.1, 10),
    case=st.sampled_from([(4.0, 1.5), (3.0, 2.0), (2.0, 1.5), (5.0, 2.0)]),
)
def test_regime_invariant_under_joint_rescaling(c, alpha_2, sigma, case):
    r, rho = case
    ratio = alpha_2 / sigma**2
    for threshold in (4 * r + 0.5, (r + 2 + 1 / r) / 8):
        assume(abs(ratio - threshold) > 1e-9 * threshold)
    p = ModelParams(1.5, 2, 1, alpha_2, sigma, r, rho, 0.5)
    q = ModelParams(1.5, 2, 1, c * alpha_2, sigma * math.sqrt(c), r, rho, 0.5)
    assert classify_regime(p) is classify_regime(q)


def _mp_drift(params, x):
    x = mp.mpf(x)
    return (
        mp.mpf(params.alpha_m1) / x
        - params.alpha_0
        + params.alpha_1 * x
        - params.alpha_2 * mp.power(x, params.r)
    )


def test_drift_values():
    assert float(_mp_drift(EXAMPLE_1, 1)) == -12.5
    assert drift(EXAMPLE_1, 1.0) == pytest.approx(-12.5, rel=1e-15)
    assert float(_mp_drift(EXAMPLE_3, 0.5)) == -1.75
    assert drift(EXAMPLE_3, 0.5) == pytest.approx(-1.75, rel=1e-14)


def test_drift_rearrangement_identity():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.01, 3.0, 1000)
    for p in EXAMPLES:
        d = drift(p, x)
        rest = p.alpha_m1 / x + p.alpha_1 * x - p.alpha_2 * np.exp(p.r * np.log(x))
        np.testing.assert_allclose(rest, p.alpha_0 + d, rtol=1e-14, atol=1e-14 * np.abs(rest).max())


@pytest.mark.parametrize("params", EXAMPLES)
def test_drift_sign_at_extremes(params):
    assert drift(params, 1e-8) > 0
    assert drift(params, 1e8) < 0


def test_coefficient_values():
    p = ModelParams(1.5, 2, 1, 13, 1, 4, 1.5, 0.5)
    assert g(p, 4.0) == pytest.approx(8.0, rel=1e-15)
    assert g_hat(p, 4.0) == pytest.approx(24.0, rel=1e-15)
    assert f(p, 1.0) == -13.0
    assert g(p, 1.0) == 1.0
    assert g_hat(p, 1.0) == 1.5


def test_coefficients_reject_nonpositive_state():
    for fn in (f, g, g_hat, drift):
        with pytest.raises(DomainError):
            fn(EXAMPLE_1, 0.0)
        with pytest.raises(DomainError):
            fn(EXAMPLE_1, np.array([1.0, -1.0]))


@pytest.mark.parametrize("params", EXAMPLES + [ModelParams(1, 1, 1, 2, 0.7, 2.5, 1.3, 1)])
def test_g_hat_is_g_prime_times_g(params):
    x = np.exp(np.random.default_rng(0).uniform(np.log(1e-3), np.log(1e3), 1000))
    np.testing.assert_allclose(g_hat(params, x), g_prime(params, x) * g(params, x), rtol=1e-13)


@pytest.mark.parametrize("params", EXAMPLES)
def test_g_hat_is_derivative_of_half_g_squared(params):
    x = np.linspace(0.1, 10, 200)
    d = 1e-5 * x
    fd = (0.5 * g(params, x + d) ** 2 - 0.5 * g(params, x - d) ** 2) / (2 * d)
    np.testing.assert_allclose(fd, g_hat(params, x), rtol=1e-6)
