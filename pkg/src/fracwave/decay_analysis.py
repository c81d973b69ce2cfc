"""Predicted and fitted polynomial decay exponents of the energy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .params import SystemParams
from .spectrum import b_multiple_of_pi, sc_check

R2_PRE_ASYMPTOTIC = 0.98
FIT_REL_TOL = 0.30
MIN_WINDOW_RATIO = 4.0
RATIONAL_MAX_DEN = 10**6


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# predicted rates


def rational_form(a: float, max_den: int = RATIONAL_MAX_DEN) -> Fraction | None:
    """p0/q0 in lowest terms if ``a`` is the float nearest that fraction, else None.

    Fractions with q0 <= max_den are at least 1/max_den^2 apart, so a match to
    a few ulps identifies them uniquely; irrationals such as pi, whose
    convergents come within 1e-12, are not mistaken for fractions.
    """
    fr = Fraction(a).limit_denominator(max_den)
    if abs(float(fr) - a) <= 4.0 * np.finfo(float).eps * abs(a):
        return fr
    return None


def _is_square(k: int) -> bool:
    r = math.isqrt(k)
    return r * r == k


def small_b_bound(a: float) -> float | None:
    """Largest b^2 covered by the small-coupling result for rational a."""
    fr = rational_form(a)
    if fr is None:
        return None
    return math.pi**2 * abs(a - 1.0) / (2.0 * fr.denominator * (a + 1.0))


def decay_regime(p: SystemParams, k_max: int = 50) -> str:
    """Name of the case that fixes the decay rate, or why there is none."""
    if p.eta == 0.0:
        return "eta_zero"
    if sc_check(p, k_max).violated:
        return "not_strongly_stable"
    if p.a == 1.0:
        return "a1_b_in_piZ" if b_multiple_of_pi(p.b) is not None else "a1_generic_b"
    fr = rational_form(p.a)
    if fr is None:
        return "irrational_sqrt_a"
    if _is_square(fr.numerator) and _is_square(fr.denominator):
        return "rational_sqrt_a"
    if p.b**2 <= small_b_bound(p.a):
        return "rational_a_small_b"
    return "uncovered"


_RATE = {
    "a1_generic_b": lambda al: 2.0 / (1.0 - al),
    "a1_b_in_piZ": lambda al: 2.0 / (5.0 - al),
    "rational_sqrt_a": lambda al: 2.0 / (5.0 - al),
    "rational_a_small_b": lambda al: 2.0 / (5.0 - al),
    "irrational_sqrt_a": lambda al: 2.0 / (5.0 - al),
}


def predicted_exponent(p: SystemParams, k_max: int = 50) -> float | None:
    """Energy decay exponent s with E(t) ~ t^(-s); None when no rate is known."""
    rate = _RATE.get(decay_regime(p, k_max))
    return None if rate is None else rate(p.alpha)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class DecayFit:
    exponent: float
    stderr: float
    fit_window: tuple[float, float]
    r_squared: float
    params: SystemParams | None = None

    def __post_init__(self):
        t_lo, t_hi = self.fit_window
        check_window(t_lo, t_hi)

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "window": list(self.fit_window),
            "r_squared": self.r_squared,
        }


def check_window(t_lo: float, t_hi: float):
    if not (t_lo > 0.0 and t_hi > t_lo):
        raise FitError(f"window must satisfy 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")
    # [T/4, T] is the default, so exactly a factor 4 is accepted
    if t_hi < MIN_WINDOW_RATIO * t_lo * (1.0 - 1e-12):
        raise FitError(f"window [{t_lo}, {t_hi}] spans less than a factor {MIN_WINDOW_RATIO:g}")


def default_window(t_end: float) -> tuple[float, float]:
    return (t_end / 4.0, t_end)


def fit_decay_exponent(trace, window=None) -> DecayFit:
    """OLS fit of log E against log t; the exponent is the negated slope.

    ``trace`` needs ``times`` and ``energy`` arrays (an EnergyTrace works).
    """
    t = np.asarray(trace.times, dtype=float)
    e = np.asarray(trace.energy, dtype=float)
    if window is None:
        window = default_window(float(t[-1]))
    t_lo, t_hi = map(float, window)
    check_window(t_lo, t_hi)
    sel = (t >= t_lo * (1 - 1e-12)) & (t <= t_hi * (1 + 1e-12))
    if sel.sum() < 3:
        raise FitError(f"fewer than 3 samples in window [{t_lo}, {t_hi}]")
    es = e[sel]
    if not np.all(es > 0.0):
        raise FitError("energy is not strictly positive on the fit window")
    res = stats.linregress(np.log(t[sel]), np.log(es))
    return DecayFit(
        exponent=-float(res.slope),
        stderr=float(res.stderr),
        fit_window=(t_lo, t_hi),
        r_squared=float(res.rvalue**2),
        params=getattr(trace, "params", None),
    )


# ---------------------------------------------------------------------------
# spectral link


def identity_tolerance(expected: float) -> float:
    return max(0.05, 0.1 * expected)


@dataclass
class DecayReport:
    params: dict
    predicted: float | None
    regime: str
    abscissa_exponent: float
    expected_abscissa_exponent: float | None
    fitted_exponent: float
    window: tuple[float, float]
    r_squared: float
    consistent: bool
    fit_matches_prediction: bool
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "predicted": self.predicted,
            "regime": self.regime,
            "abscissa_exponent": self.abscissa_exponent,
            "expected_abscissa_exponent": self.expected_abscissa_exponent,
            "fitted_exponent": self.fitted_exponent,
            "window": list(self.window),
            "r_squared": self.r_squared,
            "consistent": self.consistent,
            "fit_matches_prediction": self.fit_matches_prediction,
            "flags": list(self.flags),
        }


def spectral_vs_energy_report(p: SystemParams, scan, fit: DecayFit) -> DecayReport:
    """Compare |Re lam_n| ~ n^(-k) with the predicted s via k = 2/s.

    A fitted energy exponent is judged against s separately; a poor power-law
    fit (r^2 below 0.98) is flagged as a pre-asymptotic window.
    """
    flags = []
    if scan.params != p:
        flags.append("params mismatch: spectral scan")
    if fit.params is not None and fit.params != p:
        flags.append("params mismatch: energy fit")
    regime = decay_regime(p)
    s = predicted_exponent(p)
    kappa = float(scan.abscissa_exponent)
    expected = None if s is None else 2.0 / s
    identity_ok = False
    if expected is None:
        flags.append(f"no prediction ({regime})")
    else:
        identity_ok = abs(kappa - expected) <= identity_tolerance(expected)
        if not identity_ok:
            flags.append("abscissa exponent does not match 2/s")
    fit_ok = s is not None and abs(fit.exponent - s) <= FIT_REL_TOL * s
    if fit.r_squared < R2_PRE_ASYMPTOTIC:
        flags.append("pre-asymptotic window")
    consistent = identity_ok and not any(f.startswith("params mismatch") for f in flags)
    return DecayReport(
        params=p.to_dict(),
        predicted=s,
        regime=regime,
        abscissa_exponent=kappa,
        expected_abscissa_exponent=expected,
        fitted_exponent=fit.exponent,
        window=fit.fit_window,
        r_squared=fit.r_squared,
        consistent=consistent,
        fit_matches_prediction=bool(fit_ok),
        flags=flags,
    )
