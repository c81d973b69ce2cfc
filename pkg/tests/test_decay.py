import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracwave.decay_analysis import (
    DecayFit,
    FitError,
    decay_regime,
    fit_decay_exponent,
    predicted_exponent,
    rational_form,
    small_b_bound,
    spectral_vs_energy_report,
)
from fracwave.params import SystemParams
from fracwave.spectrum import abscissa_scan, exceptional_eigenpair


def _trace(t, e, params=None):
    return SimpleNamespace(times=np.asarray(t, float), energy=np.asarray(e, float), params=params)


@pytest.mark.parametrize(
    "a, b, alpha, expected",
    [
        (1.0, 1.0, 0.5, 4.0),
        (1.0, 2 * math.pi, 0.5, 2 / 4.5),
        (4.0, 1.0, 0.3, 2 / 4.7),
        (1.0, 3 * math.pi, 0.2, 2 / 4.8),
        (math.pi, 1.0, 0.5, 2 / 4.5),
    ],
)
def test_predicted_examples(a, b, alpha, expected):
    assert predicted_exponent(SystemParams.make(a, b, alpha)) == pytest.approx(expected, rel=1e-14)


def test_no_prediction_cases():
    assert predicted_exponent(SystemParams.make(1.0, 1.0, 0.5, eta=0.0)) is None
    m = exceptional_eigenpair(1.0, 2, 1)
    p = SystemParams.make(1.0, m.b, 0.5)
    assert decay_regime(p) == "not_strongly_stable" and predicted_exponent(p) is None
    # a = 2: rational, sqrt irrational; the small-coupling bound is pi^2/6
    assert small_b_bound(2.0) == pytest.approx(math.pi**2 / 6, rel=1e-14)
    assert decay_regime(SystemParams.make(2.0, 1.0, 0.5)) == "rational_a_small_b"
    assert predicted_exponent(SystemParams.make(2.0, 1.5, 0.5)) is None


def test_rational_detection():
    assert rational_form(2.25).numerator == 9 and rational_form(2.25).denominator == 4
    assert decay_regime(SystemParams.make(2.25, 1.0, 0.5)) == "rational_sqrt_a"
    assert rational_form(math.sqrt(2)) is None
    assert rational_form(math.pi) is None
    assert rational_form(1 / 3) == rational_form(2 / 6) and rational_form(1 / 3).denominator == 3
    # a < 1 uses |a - 1| in the bound
    assert small_b_bound(0.5) > 0


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0.01, 0.99),
    a=st.sampled_from([1.0, 4.0, 0.25, 9.0, math.e]),
    b=st.floats(0.05, 0.3),
    k=st.integers(0, 3),
)
def test_two_over_s_is_abscissa_exponent(alpha, a, b, k):
    p = SystemParams.make(a, b + k * math.pi if k else b, alpha)
    s = predicted_exponent(p)
    if s is None:
        return
    ell = 1.0 - alpha if decay_regime(p) == "a1_generic_b" else 5.0 - alpha
    assert 2.0 / s == pytest.approx(ell, rel=1e-14)


def test_b_in_pi_z_detection():
    p = SystemParams.make(1.0, 2 * math.pi * (1 + 1e-12), 0.5)
    assert decay_regime(p) == "a1_b_in_piZ"
    p = SystemParams.make(1.0, 2 * math.pi * (1 + 1e-6), 0.5)
    assert decay_regime(p) == "a1_generic_b"


# ---------------------------------------------------------------------------
# fitting


def test_window_validation():
    t = np.linspace(1, 100, 200)
    tr = _trace(t, t**-2.0)
    with pytest.raises(FitError):
        fit_decay_exponent(tr, (30.0, 100.0))
    with pytest.raises(FitError):
        fit_decay_exponent(tr, (0.0, 100.0))
    with pytest.raises(FitError):
        DecayFit(1.0, 0.0, (10.0, 20.0), 1.0)
    fit_decay_exponent(tr, (25.0, 100.0))


def test_fit_rejects_nonpositive_energy():
    t = np.linspace(1, 100, 200)
    with pytest.raises(FitError):
        fit_decay_exponent(_trace(t, np.zeros_like(t)))
    with pytest.raises(FitError):
        fit_decay_exponent(_trace(t, t**-1.0), (100.5, 500.0))


def test_fit_exact_power_law():
    t = np.linspace(1, 100, 400)
    fit = fit_decay_exponent(_trace(t, t**-2.0))
    assert abs(fit.exponent - 2.0) < 1e-9
    assert fit.fit_window == (25.0, 100.0) and fit.r_squared == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.1, 20.0), c=st.floats(1e-6, 1e6))
def test_fit_exact_for_any_power(s, c):
    t = np.geomspace(1, 1e3, 300)
    fit = fit_decay_exponent(_trace(t, c * t**-s), (10.0, 1e3))
    assert abs(fit.exponent - s) < 1e-9


def test_fit_oscillating_power_law():
    t = np.linspace(1, 400, 4000)
    e = 5 * t**-0.44 * (1 + 0.01 * np.sin(t))
    assert fit_decay_exponent(_trace(t, e)).exponent == pytest.approx(0.44, abs=0.01)


def test_fit_exponential_flags_low_r2():
    t = np.linspace(1, 100, 1000)
    fit = fit_decay_exponent(_trace(t, np.exp(-t)), (10.0, 100.0))
    # far above s = 4 of the reference case
    assert fit.exponent > 10 * 4.0
    p = SystemParams.make(1.0, 1.0, 0.5)
    rep = spectral_vs_energy_report(p, abscissa_scan(p, 1, (20, 60)), fit)
    assert fit.r_squared < 0.98 and "pre-asymptotic window" in rep.flags


# ---------------------------------------------------------------------------
# reports


def _power_fit(s, p):
    t = np.linspace(1, 200, 400)
    return fit_decay_exponent(_trace(t, t**-s, p))


def test_report_generic_b():
    p = SystemParams.make(1.0, 1.0, 0.5)
    scan = abscissa_scan(p, 1, (20, 200))
    rep = spectral_vs_energy_report(p, scan, _power_fit(4.0, p))
    assert rep.consistent and rep.fit_matches_prediction and not rep.flags
    assert rep.abscissa_exponent == pytest.approx(0.5, abs=0.05)
    d = rep.to_dict()
    for key in ("params", "predicted", "abscissa_exponent", "fitted_exponent", "window", "r_squared", "consistent"):
        assert key in d


def test_report_degenerate_b():
    p = SystemParams.make(1.0, 2 * math.pi, 0.5)
    rep = spectral_vs_energy_report(p, abscissa_scan(p, 1, (20, 60)), _power_fit(2 / 4.5, p))
    assert rep.consistent
    assert rep.abscissa_exponent == pytest.approx(4.5, rel=0.1)


def test_report_flags_mismatched_inputs():
    p = SystemParams.make(1.0, 1.0, 0.5)
    q = SystemParams.make(1.0, 2 * math.pi, 0.5)
    rep = spectral_vs_energy_report(p, abscissa_scan(q, 1, (20, 60)), _power_fit(4.0, p))
    assert not rep.consistent
    assert any(f.startswith("params mismatch") for f in rep.flags)
    rep = spectral_vs_energy_report(p, abscissa_scan(p, 1, (20, 60)), _power_fit(4.0, q))
    assert not rep.consistent


def test_report_without_prediction():
    p = SystemParams.make(1.0, 1.0, 0.5, eta=0.0)
    rep = spectral_vs_energy_report(p, abscissa_scan(p, 1, (20, 60)), _power_fit(4.0, p))
    assert rep.predicted is None and not rep.consistent
    assert "no prediction (eta_zero)" in rep.flags


def test_report_fit_far_from_prediction():
    p = SystemParams.make(1.0, 1.0, 0.5)
    rep = spectral_vs_energy_report(p, abscissa_scan(p, 1, (20, 200)), _power_fit(8.0, p))
    assert rep.consistent and not rep.fit_matches_prediction
