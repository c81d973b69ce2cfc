import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma as G

from fracwave.frac_core import (
    SampledSignal,
    XiGridError,
    a_integrals,
    build_xi_grid,
    c1_c2,
    caputo_direct,
    diffusive_integral,
    diffusive_transfer,
    frac_integral_direct,
    mu,
    sampled_derivative,
    transfer_exact,
    transfer_sweep_error,
)
from fracwave.params import FracParams

from oracles import tempered_integral_quad, transfer_quad


@pytest.fixture(scope="module")
def grids():
    out = {}
    for alpha in (0.1, 0.3, 0.5, 0.9):
        for eta in (0.0, 1.0):
            p = FracParams(alpha, eta)
            out[alpha, eta] = (p, build_xi_grid(p, 100.0, 1e-8, lam_lo=1e-2, lam_hi=1e4))
    return out


# ---------------------------------------------------------------------------
# signals and direct convolution


def test_signal_validation():
    with pytest.raises(ValueError):
        SampledSignal(np.array([0.0, 0.1, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        SampledSignal(np.array([0.1, 0.2, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        SampledSignal(np.array([0.0, 0.1]), np.zeros(3))


def test_alpha_rejected():
    with pytest.raises(ValueError):
        FracParams(1.5)
    with pytest.raises(ValueError):
        mu(np.ones(3), 0.0)


def test_constant_has_zero_derivative():
    sig = SampledSignal.from_function(lambda t: np.full_like(t, 3.0), 2.0, 0.01)
    d = caputo_direct(sig, FracParams(0.4, eta=0.7))
    assert np.max(np.abs(d.values)) < 1e-12


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_caputo_monomials(alpha, m):
    dt = 1e-3
    sig = SampledSignal.from_function(lambda t: t**m, 3.0, dt)
    d = caputo_direct(sig, FracParams(alpha, eta=0.0))
    t = sig.times[10:]
    exact = G(m + 1) / G(m + 1 - alpha) * t ** (m - alpha)
    assert np.max(np.abs(d.values[10:] - exact) / exact) <= 1e-3


def test_caputo_t_squared_value():
    # 2 t^1.5 / Gamma(2.5) at alpha = 0.5
    sig = SampledSignal.from_function(lambda t: t**2, 1.0, 1e-3)
    d = caputo_direct(sig, FracParams(0.5, eta=0.0))
    assert d.values[-1] == pytest.approx(1.5045055561, rel=1e-6)


@pytest.mark.parametrize("alpha,eta", [(0.3, 1.0), (0.6, 2.5), (0.8, 0.5)])
def test_tempered_caputo_against_quadrature(alpha, eta):
    sig = SampledSignal.from_function(np.sin, 4.0, 1e-3)
    d = caputo_direct(sig, FracParams(alpha, eta=eta))
    for t in (0.5, 1.7, 4.0):
        k = int(round(t / 1e-3))
        ref = tempered_integral_quad(math.cos, t, 1.0 - alpha, eta)
        assert d.values[k] == pytest.approx(ref, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("alpha,eta", [(0.25, 0.0), (0.5, 1.0), (0.9, 3.0)])
def test_frac_integral_against_quadrature(alpha, eta):
    f = lambda s: np.exp(-s) * np.cos(3 * s)
    sig = SampledSignal.from_function(f, 3.0, 1e-3)
    out = frac_integral_direct(sig, FracParams(alpha, eta=eta))
    for t in (0.3, 1.0, 3.0):
        k = int(round(t / 1e-3))
        ref = tempered_integral_quad(lambda s: math.exp(-s) * math.cos(3 * s), t, alpha, eta)
        assert out.values[k] == pytest.approx(ref, rel=1e-5, abs=1e-8)


def test_frac_integral_of_one():
    sig = SampledSignal.from_function(np.ones_like, 2.0, 0.01)
    out = frac_integral_direct(sig, FracParams(0.4, eta=0.0))
    t = sig.times
    np.testing.assert_allclose(out.values, t**0.4 / G(1.4), rtol=1e-12, atol=1e-14)


def test_composition_matches_caputo():
    # the derivative is the integral of order 1 - alpha of the first derivative
    p = FracParams(0.35, eta=0.8)
    sig = SampledSignal.from_function(lambda t: np.sin(2 * t) + t**2, 3.0, 2e-3)
    d = caputo_direct(sig, p)
    deriv = SampledSignal(sig.times, sampled_derivative(sig))
    via = frac_integral_direct(deriv, FracParams(1.0 - p.alpha, eta=p.eta))
    np.testing.assert_allclose(d.values, via.values, rtol=0, atol=1e-12)


def test_caputo_converges_second_order():
    p = FracParams(0.5, eta=1.0)
    ref = tempered_integral_quad(lambda s: math.exp(s), 1.0, 0.5, 1.0)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        sig = SampledSignal.from_function(np.exp, 1.0, dt)
        errs.append(abs(caputo_direct(sig, p).values[-1] - ref))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


# ---------------------------------------------------------------------------
# xi-grid and the transfer identity


def test_transfer_examples(grids):
    p, g = grids[0.5, 1.0]
    assert diffusive_transfer(3.0, g, p) == pytest.approx(0.5, rel=1e-8)
    for alpha in (0.1, 0.5, 0.9):
        p, g = grids[alpha, 0.0]
        assert diffusive_transfer(1.0, g, p) == pytest.approx(1.0, rel=1e-8)
    p = FracParams(0.3, eta=1.0)
    g = build_xi_grid(p, 100.0, 1e-8)
    assert abs(diffusive_transfer(100j, g, p) - (1 + 100j) ** -0.7) <= 1e-8 * abs((1 + 100j) ** -0.7)


@pytest.mark.parametrize("lam", [0.5, 3.0, 40.0j, 2.0 + 7.0j])
@pytest.mark.parametrize("alpha", [0.2, 0.7])
def test_closed_form_against_quadrature(lam, alpha):
    # the identity itself, checked independently of any xi-grid
    ref = transfer_quad(lam, alpha, 1.0)
    exact = transfer_exact(lam, FracParams(alpha, 1.0))
    assert abs(ref - exact) <= 1e-7 * abs(exact)


def test_grid_meets_sweep(grids):
    lam = np.geomspace(1e-2, 1e4, 40)
    lam = np.concatenate([lam, 1j * lam])
    for (alpha, eta), (p, g) in grids.items():
        assert transfer_sweep_error(g, p, lam=lam) <= 1e-8, (alpha, eta)


def test_small_alpha_needs_more_nodes():
    g1 = build_xi_grid(FracParams(0.1, 1.0), 1.0, 1e-6)
    g5 = build_xi_grid(FracParams(0.5, 1.0), 1.0, 1e-6)
    assert len(g1) > len(g5)
    assert g1.max_rel_error <= 1e-6 and g5.max_rel_error <= 1e-6


def test_grid_tolerance_errors():
    p = FracParams(0.5)
    with pytest.raises(XiGridError):
        build_xi_grid(p, 1.0, 1e-15)
    with pytest.raises(ValueError):
        build_xi_grid(p, 1.0, 0.5)
    with pytest.raises(XiGridError):
        build_xi_grid(p, 1.0, 1e-11, max_nodes=64)
    with pytest.raises(ValueError):
        build_xi_grid(p, -1.0, 1e-6)


def test_transfer_rejects_pole(grids):
    p, g = grids[0.5, 1.0]
    with pytest.raises(ValueError):
        diffusive_transfer(-(g.nodes[3] ** 2 + 1.0), g, p)


@settings(max_examples=60, deadline=None)
@given(
    mag=st.floats(1e-2, 1e4),
    phase=st.floats(-math.pi / 2, math.pi / 2),
    key=st.sampled_from([(0.1, 0.0), (0.5, 1.0), (0.9, 1.0), (0.3, 0.0)]),
)
def test_transfer_identity_property(grids, mag, phase, key):
    # right half-plane, off the design sweep rays
    p, g = grids[key]
    lam = mag * complex(math.cos(phase), math.sin(phase))
    exact = transfer_exact(lam, p)
    assert abs(diffusive_transfer(lam, g, p) - exact) <= 2e-8 * abs(exact)


@settings(max_examples=40, deadline=None)
@given(re=st.floats(-0.5, 50.0), im=st.floats(-1e3, 1e3))
def test_conjugate_symmetry_exact(grids, re, im):
    p, g = grids[0.5, 1.0]
    lam = complex(re, im)
    assert diffusive_transfer(lam.conjugate(), g, p) == diffusive_transfer(lam, g, p).conjugate()


# ---------------------------------------------------------------------------
# c1, c2 and the A-integrals


def test_c1_c2_positive_and_identity(grids):
    p, g = grids[0.5, 1.0]
    for lam in (0.0, 1.0, 13.0, 900.0):
        c1, c2 = c1_c2(lam, p, g)
        assert c1 > 0 and c2 > 0
        t = diffusive_transfer(1j * lam, g, p)
        assert p.gamma * t.real == pytest.approx(c2, rel=1e-12)
        assert p.gamma * t.imag == pytest.approx(-lam * c1, rel=1e-12, abs=1e-15)


def test_c1_c2_with_gain():
    p = FracParams(0.4, eta=1.0, gamma=2.5)
    g = build_xi_grid(p, 10.0, 1e-9, lam_lo=1e-2, lam_hi=1e3)
    c1, c2 = c1_c2(5.0, p, g)
    ref = 2.5 * (5j + 1.0) ** (0.4 - 1.0)
    assert abs((c2 - 5j * c1) - ref) <= 1e-8 * abs(ref)


def test_c1_c2_eta_zero_at_zero(grids):
    p, g = grids[0.5, 0.0]
    with pytest.raises(ValueError):
        c1_c2(0.0, p, g)
    assert min(c1_c2(1.0, p, g)) > 0


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_c1_c2_large_lambda(alpha):
    # gamma (i lam)^(alpha-1) = gamma lam^(alpha-1) (sin(pi alpha/2) - i cos(pi alpha/2))
    p = FracParams(alpha, eta=1.0)
    lam = 1e6
    g = build_xi_grid(p, lam, 1e-9)
    c1, c2 = c1_c2(lam, p, g)
    scale = lam ** (1.0 - alpha)
    assert c2 * scale == pytest.approx(math.sin(math.pi * alpha / 2), rel=1e-3)
    assert lam * c1 * scale == pytest.approx(math.cos(math.pi * alpha / 2), rel=1e-3)


def test_a_integral_closed_forms():
    p = FracParams(0.5, eta=0.25)
    g = build_xi_grid(p, 1.0, 1e-8)
    _, a2, a3 = a_integrals(0.75, p, g)
    assert a2 == pytest.approx(1.253314137, rel=1e-9)
    assert a3 == pytest.approx(0.443113463, rel=1e-9)
    with pytest.raises(ValueError):
        a_integrals(0.0, p, g)


@pytest.mark.parametrize("alpha", [0.2, 0.6])
def test_a1_scaling(alpha):
    from scipy import integrate

    p = FracParams(alpha, eta=1.0)
    vals = []
    for lam in (10.0, 100.0, 1000.0):
        g = build_xi_grid(p, lam, 1e-9)
        a1 = a_integrals(lam, p, g)[0]
        cl = lam + p.eta
        f = lambda x: x ** (alpha + 0.5) / (cl + x * x) ** 2
        ref = 2 * (integrate.quad(f, 0, math.sqrt(cl))[0] + integrate.quad(f, math.sqrt(cl), np.inf)[0])
        assert a1 == pytest.approx(ref, rel=1e-6)
        vals.append(a1 * cl ** (1.25 - alpha / 2))
    assert max(vals) / min(vals) - 1 < 0.01
    # the constant is a Beta-function value
    assert vals[0] == pytest.approx(G(1.25 - alpha / 2) * G(0.75 + alpha / 2), rel=1e-6)


# ---------------------------------------------------------------------------
# the two routes agree


@pytest.mark.parametrize("alpha,eta", [(0.3, 1.0), (0.5, 0.0), (0.8, 2.0)])
def test_diffusive_route_matches_direct(alpha, eta):
    p = FracParams(alpha, eta)
    dt = 2e-3
    sig = SampledSignal.from_function(lambda t: t * np.sin(2 * t), 4.0, dt)
    g = build_xi_grid(p, 1.0 / dt, 1e-8, lam_lo=1e-2, lam_hi=1e4)
    via_xi = diffusive_integral(sig, g, p)
    direct = frac_integral_direct(sig, FracParams(1.0 - alpha, eta))
    # diffusive route realises the integral of order 1 - alpha
    assert np.max(np.abs(via_xi.values - direct.values)) <= 1e-5 * np.max(np.abs(direct.values))
