import math

import mpmath as mp
import numpy as np
import pytest

import oracles
from sipmm import harness
from sipmm.errors import ConvergenceError, DomainError, StepSizeError
from sipmm.model import EXAMPLE_1, EXAMPLE_2, EXAMPLE_3
from sipmm.projection import default_exponent
from sipmm.schemes import SchemeKind, integrate

SIPMM, SIPEM, BEM = SchemeKind.SIPMM, SchemeKind.SIPEM, SchemeKind.BEM
Q1 = default_exponent(EXAMPLE_1.r)


def small_config(**kw):
    base = dict(
        params=EXAMPLE_1, q=Q1, levels=(4, 5, 6), ref_level=9,
        ref_scheme=SIPMM, schemes=(SIPMM, BEM), num_paths=64, seed=3,
    )
    base.update(kw)
    return harness.ExperimentConfig(**base)


# fit_rate


def test_fit_rate_exact_line():
    c = 3.7
    q, res = harness.fit_rate([(2.0**-k, c * 2.0**-k) for k in (6, 7, 8)])
    assert q == pytest.approx(1.0, abs=1e-14)
    assert res == pytest.approx(0.0, abs=1e-13)


def test_fit_rate_two_points():
    q, res = harness.fit_rate([(2.0**-6, 2.0**-3), (2.0**-8, 2.0**-4)])
    assert q == 0.5
    assert res == 0.0


def test_fit_rate_matches_normal_equations_oracle():
    ks = [6, 7, 8, 9, 10]
    pert = [0.1, -0.1, 0.0, 0.1, -0.1]
    pts = [(2.0**-k, 2.0 ** (-0.75 * k + 1.3 + d)) for k, d in zip(ks, pert)]
    xs = [mp.log(mp.mpf(h), 2) for h, _ in pts]
    ys = [mp.log(mp.mpf(e), 2) for _, e in pts]
    slope, resid = oracles.ols(xs, ys)
    q, res = harness.fit_rate(pts)
    assert q == pytest.approx(float(slope), abs=1e-12)
    assert res == pytest.approx(float(resid), abs=1e-12)


@pytest.mark.parametrize(
    "points",
    [
        [(0.1, 0.01)],
        [(0.1, 0.01), (0.0, 0.01)],
        [(0.1, 0.01), (0.05, -1.0)],
        [(0.1, 0.01), (0.1, 0.02)],
    ],
)
def test_fit_rate_rejects_bad_points(points):
    with pytest.raises(DomainError):
        harness.fit_rate(points)


# configuration


def test_config_invariants():
    with pytest.raises(DomainError):
        small_config(levels=(4, 9), ref_level=9)
    with pytest.raises(DomainError):
        small_config(num_paths=1)
    with pytest.raises(DomainError):
        small_config(levels=())
    with pytest.raises(DomainError):
        small_config(error_norm="mean")
    with pytest.raises(DomainError):
        small_config(q=0.5)


def test_config_rejects_bem_step_at_or_above_inverse_alpha_1():
    with pytest.raises(StepSizeError):
        small_config(levels=(0, 2), schemes=(BEM,))
    # SIPMM alone is fine at h = 1
    small_config(levels=(0, 2), schemes=(SIPMM,))


def test_config_echo():
    d = small_config().as_dict()
    assert d["levels"] == "4,5,6" and d["ref_scheme"] == "SIPMM" and d["paths"] == 64


# strong error


def test_self_check_is_exactly_zero():
    for ref in (SIPMM, BEM):
        cfg = small_config(ref_scheme=ref, num_paths=16)
        report = harness.run_self_check(cfg)
        assert report.results[0].rmse == 0.0


def test_zero_noise_matches_deterministic_replay():
    cfg = small_config(levels=(3, 4), ref_level=6, schemes=(SIPMM,), num_paths=2)
    report = harness.run_strong_error(cfg, zero_noise=True)
    proj = cfg.projection
    ref = integrate(EXAMPLE_1, proj, SIPMM, np.zeros(2**6), 2.0**-6, 1.0).terminal
    ref_mp = oracles.replay(EXAMPLE_1, Q1, [0.0] * 2**6, 2.0**-6)[-1]
    for level in (3, 4):
        n = 2**level
        coarse = integrate(EXAMPLE_1, proj, SIPMM, np.zeros(n), 1.0 / n, 1.0).terminal
        # two identical paths: the RMSE is the single-path error
        assert report.rmse(SIPMM, level) == abs(coarse - ref)
        coarse_mp = oracles.replay(EXAMPLE_1, Q1, [0.0] * n, mp.mpf(1) / n)[-1]
        assert report.rmse(SIPMM, level) == pytest.approx(float(abs(coarse_mp - ref_mp)), rel=1e-8)


def test_results_cover_every_pair_and_are_nonnegative():
    report = harness.run_strong_error(small_config())
    assert len(report.results) == 6
    assert report.schemes == [SIPMM, BEM]
    assert all(r.rmse >= 0 for r in report.results)
    assert set(report.rates) == {SIPMM, BEM}
    with pytest.raises(KeyError):
        report.rmse(SIPEM, 4)


def test_single_level_has_no_rate():
    report = harness.run_strong_error(small_config(levels=(5,)))
    assert report.rates == {}


def test_rmse_is_independent_of_threads_and_blocking(monkeypatch):
    cfg = small_config(num_paths=50)
    serial = harness.run_strong_error(cfg, threads=1)
    monkeypatch.setattr(harness, "PATH_BLOCK", 7)
    threaded = harness.run_strong_error(cfg, threads=4)
    again = harness.run_strong_error(cfg, threads=3)
    for a, b, c in zip(serial.results, threaded.results, again.results):
        assert a.rmse == b.rmse == c.rmse
    assert serial.rates[SIPMM] == threaded.rates[SIPMM]


def test_max_norm_dominates_terminal():
    term = harness.run_strong_error(small_config())
    mx = harness.run_strong_error(small_config(error_norm="max"))
    for a, b in zip(term.results, mx.results):
        assert b.rmse >= a.rmse


def _monotone(seed):
    cfg = harness.ExperimentConfig(
        EXAMPLE_1, Q1, levels=(5, 6, 7, 8, 9), ref_level=12, ref_scheme=SIPMM,
        schemes=(SIPMM,), num_paths=1000, seed=seed,
    )
    errs = [r.rmse for r in harness.run_strong_error(cfg).results]
    return all(a > b for a, b in zip(errs, errs[1:]))


def test_sipmm_error_decreases_with_level():
    # statistical: one retry with a second seed
    assert _monotone(11) or _monotone(12)


def test_failures_carry_scheme_level_and_paths(monkeypatch):
    import functools

    from sipmm import schemes

    monkeypatch.setattr(schemes, "bem_step", functools.partial(schemes.bem_step, max_iter=0))
    cfg = small_config(schemes=(BEM,), num_paths=4)
    with pytest.raises(ConvergenceError) as info:
        harness.run_strong_error(cfg)
    assert "BEM at level 4" in str(info.value)
    assert info.value.path_indices == [0, 1, 2, 3]
    assert info.value.step_index == 0


# positivity


def test_positivity_example_1():
    rep = harness.positivity_stress(EXAMPLE_1, Q1, [0.25, 1.0, 10.0], 1000, seed=1)
    assert rep.passed and rep.min_state > 0
    assert rep.T == 160.0
    assert {(e.scheme, e.h) for e in rep.entries} == {(s, h) for s in (SIPMM, SIPEM) for h in (0.25, 1.0, 10.0)}


def test_positivity_zero_noise_huge_step():
    rep = harness.positivity_stress(EXAMPLE_1, Q1, [100.0], 1, seed=0, zero_noise=True)
    assert rep.passed and rep.min_state > 0


def test_positivity_critical_example():
    rep = harness.positivity_stress(EXAMPLE_2, default_exponent(3.0), [5.0], 1000, seed=2)
    assert rep.passed


def test_positivity_rejects_bad_steps():
    with pytest.raises(DomainError):
        harness.positivity_stress(EXAMPLE_3, 0.5, [0.0, 1.0], 10, seed=0)


# timing


def test_timing_scales_with_step_count():
    cfg = harness.ExperimentConfig(
        EXAMPLE_1, Q1, levels=(8, 9, 10), ref_level=11, schemes=(SIPMM, BEM), num_paths=1024, seed=0,
    )
    t = harness.time_schemes(cfg, repeats=3)
    for l in (8, 9):
        assert 1.5 <= t[SIPMM, l + 1] / t[SIPMM, l] <= 3.0
    for l in (8, 9, 10):
        assert t[BEM, l] > t[SIPMM, l]


def test_timing_empty_sweep():
    cfg = small_config()
    t = harness.time_schemes(cfg, num_paths=0)
    assert all(v < 1e-3 for v in t.values())
    assert math.isfinite(sum(t.values()))
