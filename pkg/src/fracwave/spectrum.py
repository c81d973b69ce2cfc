"""Characteristic functions, eigenvalue asymptotics and root refinement."""

from __future__ import annotations

import cmath
import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .params import SystemParams

PI = math.pi
DEFAULT_N0 = 10
CELL_RADIUS = PI / 2.0
SC_RTOL = 1e-9
PI_Z_TOL = 1e-9


class RefinementError(RuntimeError):
    """Raised when a scan cannot refine enough roots."""


class BCase(enum.Enum):
    GENERIC = "generic"
    B_IN_2PIZ = "b_in_2piZ"
    B_IN_PI_ODD = "b_in_pi_odd"


def b_multiple_of_pi(b: float, tol: float = PI_Z_TOL) -> int | None:
    """Return k if b = k*pi (k != 0) within ``tol`` on b/pi, else None."""
    q = b / PI
    k = round(q)
    if k != 0 and abs(q - k) <= tol:
        return int(k)
    return None


def classify_b(b: float) -> BCase:
    k = b_multiple_of_pi(b)
    if k is None:
        return BCase.GENERIC
    return BCase.B_IN_2PIZ if k % 2 == 0 else BCase.B_IN_PI_ODD


@dataclass(frozen=True)
class BranchId:
    branch: int
    n: int
    b_case: BCase = BCase.GENERIC

    def __post_init__(self):
        if self.branch not in (1, 2):
            raise ValueError("branch must be 1 or 2")

    @classmethod
    def for_params(cls, branch: int, n: int, p: SystemParams) -> "BranchId":
        return cls(branch, n, classify_b(p.b))


@dataclass
class EigenEstimate:
    lam: complex
    seed: complex
    residual: float
    iterations: int
    converged: bool
    branch: int | None = None
    n: int | None = None


# ---------------------------------------------------------------------------
# strong stability


@dataclass(frozen=True)
class ScWitness:
    """Outcome of the strong-stability scan.

    When not violated, ``k1, k2`` and ``b_exceptional`` describe the nearest
    exceptional coupling found (0, 0 and nan if none is positive).
    """

    violated: bool
    k1: int
    k2: int
    b_exceptional: float
    lambda_imag: float


def exceptional_b_squared(a: float, k1: int, k2: int) -> float:
    return (k1**2 - a * k2**2) * (a * k1**2 - k2**2) * PI**2 / ((a + 1.0) * (k1**2 + k2**2))


def exceptional_lambda(a: float, k1: int, k2: int) -> float:
    return PI * math.sqrt(a * (k1**2 + k2**2) / (a + 1.0))


def sc_check(p: SystemParams, k_max: int = 50) -> ScWitness:
    """Scan 1 <= k1, k2 <= k_max for an exceptional coupling equal to b."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    b2 = p.b**2
    best = (math.inf, 0, 0, math.nan)
    for k1 in range(1, k_max + 1):
        for k2 in range(1, k_max + 1):
            val = exceptional_b_squared(p.a, k1, k2)
            if val <= 0.0:
                continue
            gap = abs(val - b2)
            if gap <= SC_RTOL * b2:
                return ScWitness(True, k1, k2, math.sqrt(val), exceptional_lambda(p.a, k1, k2))
            if gap < best[0]:
                best = (gap, k1, k2, math.sqrt(val))
    _, k1, k2, bx = best
    lam = exceptional_lambda(p.a, k1, k2) if k1 else math.nan
    return ScWitness(False, k1, k2, bx, lam)


@dataclass(frozen=True)
class ExceptionalMode:
    """Purely imaginary eigenvalue i*lam of the undamped-mode family.

    The u-profile is ``sum(c * sin(k pi x) for c, k in u_terms)``.
    """

    a: float
    k1: int
    k2: int
    b: float
    lam: float
    u_terms: tuple

    def u(self, x):
        x = np.asarray(x, dtype=float)
        return sum(c * np.sin(k * PI * x) for c, k in self.u_terms)

    def u_xx(self, x):
        x = np.asarray(x, dtype=float)
        return sum(-c * (k * PI) ** 2 * np.sin(k * PI * x) for c, k in self.u_terms)

    def y(self, x):
        return -1j / (self.lam * self.b) * (self.lam**2 * self.u(x) + self.u_xx(x))


def exceptional_eigenpair(a: float, k1: int, k2: int) -> ExceptionalMode:
    """Undamped eigenpair for the coupling b(k1, k2).

    Both sine modes solve the dispersion relation at the same frequency; their
    amplitudes are tied by the no-flux condition u_x(1) = 0, which is what
    keeps the diffusive variable at rest.
    """
    if k1 < 1 or k2 < 1:
        raise ValueError("k1, k2 must be positive")
    val = exceptional_b_squared(a, k1, k2)
    if val <= 0.0:
        raise ValueError(f"(k1, k2) = ({k1}, {k2}) gives no positive exceptional b^2")
    c1 = -2j * k2 * (-1) ** (k1 + k2) / k1
    return ExceptionalMode(
        a, k1, k2, math.sqrt(val), exceptional_lambda(a, k1, k2), ((c1, k1), (2j, k2))
    )


# ---------------------------------------------------------------------------
# characteristic functions


def _scale(z):
    # smooth stand-in for |Re z|: keeps the scaled function differentiable
    # near the imaginary axis, where the roots live
    x = z.real
    return math.sqrt(x * x + 1.0) - 1.0


def _sh_ch(z, s):
    ep = cmath.exp(z - s)
    em = cmath.exp(-z - s)
    return 0.5 * (ep - em), 0.5 * (ep + em)


def _common(lam, p):
    lam = complex(lam)
    if lam == 0:
        raise ValueError("lam = 0 is excluded")
    return lam, (lam + p.eta) ** (p.alpha - 1.0)


def char_f(lam: complex, p: SystemParams) -> complex:
    """Characteristic function for equal wave speeds, scaled to avoid overflow.

    The returned value is f(lam) * exp(-(s1 + s2)) where s_i is a smooth
    approximation of |Re r_i|; the positive factor leaves roots unchanged.
    """
    if p.a != 1.0:
        raise ValueError("char_f requires a = 1; use char_F")
    lam, tr = _common(lam, p)
    ib = 1j * p.b
    r1 = lam * cmath.sqrt(1.0 + ib / lam)
    r2 = lam * cmath.sqrt(1.0 - ib / lam)
    s1, s2 = _scale(r1), _scale(r2)
    sh1, ch1 = _sh_ch(r1, s1)
    sh2, ch2 = _sh_ch(r2, s2)
    return 2.0 * p.gamma * tr * sh1 * sh2 + (r1 / lam) * ch1 * sh2 + (r2 / lam) * sh1 * ch2


def _roots_a(lam, a, b):
    inner = cmath.sqrt(1.0 - 4.0 * a * b * b / ((a - 1.0) ** 2 * lam * lam))
    r1 = lam * cmath.sqrt(((a + 1.0) + (a - 1.0) * inner) / (2.0 * a))
    r2 = lam * cmath.sqrt(((a + 1.0) - (a - 1.0) * inner) / (2.0 * a))
    return r1, r2


def char_F(lam: complex, p: SystemParams) -> complex:
    """Characteristic function det(M)/((a-1) lam^3) for unequal speeds (scaled)."""
    if p.a == 1.0:
        raise ValueError("char_F requires a != 1; use char_f")
    lam, tr = _common(lam, p)
    a = p.a
    r1, r2 = _roots_a(lam, a, p.b)
    s1, s2 = _scale(r1), _scale(r2)
    sh1, ch1 = _sh_ch(r1, s1)
    sh2, ch2 = _sh_ch(r2, s2)
    det = (
        -a * p.gamma * lam * tr * (r1 * r1 - r2 * r2) * sh1 * sh2
        - r1 * (a * r1 * r1 - lam * lam) * ch1 * sh2
        + r2 * (a * r2 * r2 - lam * lam) * sh1 * ch2
    )
    return det / ((a - 1.0) * lam**3)


def char_F_leading(lam: complex, p: SystemParams) -> complex:
    """Two-term large-|lam| model of :func:`char_F`, on the same scale.

    F ~ -(cosh(lam) sinh(lam/sqrt a) + gamma sinh(lam) sinh(lam/sqrt a) / lam^(1-alpha)).
    """
    lam = complex(lam)
    a = p.a
    r1, r2 = _roots_a(lam, a, p.b)
    s1, s2 = _scale(r1), _scale(r2)
    sh1, ch1 = _sh_ch(lam, s1)
    sh2, _ = _sh_ch(lam / math.sqrt(a), s2)
    return -(ch1 * sh2 + p.gamma * sh1 * sh2 / lam ** (1.0 - p.alpha))


def evaluator_for(p: SystemParams):
    f = char_f if p.a == 1.0 else char_F
    return lambda lam: f(lam, p)


# ---------------------------------------------------------------------------
# asymptotic eigenvalues


def _asym_positive(branch: int, n: int, p: SystemParams, case: BCase) -> complex:
    al, g, b = p.alpha, p.gamma, p.b
    rot = 1j * math.cos(PI * al / 2.0) - math.sin(PI * al / 2.0)
    npi = n * PI
    if p.a != 1.0:
        return 1j * npi * math.sqrt(p.a) if branch == 1 else 1j * (n + 0.5) * PI
    if branch == 1:
        if case is BCase.GENERIC:
            return 1j * npi + g * (1.0 - math.cos(b)) * rot / (2.0 * npi ** (1.0 - al))
        if case is BCase.B_IN_2PIZ:
            return (
                1j * npi
                + 1j * b**2 / (8.0 * npi)
                + 7j * b**4 / (128.0 * PI**3 * n**3)
                + g * b**6 * rot / (128.0 * PI ** (5.0 - al) * n ** (5.0 - al))
            )
        return 1j * npi + g * rot / npi ** (1.0 - al)
    base = 1j * npi + 0.5j * PI
    if case is BCase.GENERIC:
        return base + g * (1.0 + math.cos(b)) * rot / (2.0 * npi ** (1.0 - al))
    if case is BCase.B_IN_2PIZ:
        return base + g * rot / npi ** (1.0 - al)
    return (
        base
        + 1j * b**2 / (8.0 * npi)
        - 1j * b**2 / (16.0 * PI * n**2)
        + 1j * b**2 * (4.0 * PI**2 + 7.0 * b**2) / (128.0 * PI**3 * n**3)
        - 1j * b**2 * (4.0 * PI**2 + 21.0 * b**2) / (256.0 * PI**3 * n**4)
        + g * b**6 * rot / (256.0 * PI ** (5.0 - al) * n ** (5.0 - al))
    )


def asymptotic_root(bid: BranchId, p: SystemParams, n0: int = DEFAULT_N0) -> complex:
    """Closed-form large-|n| eigenvalue with all known correction terms.

    Negative indices are the complex conjugates of the positive family:
    branch 1 pairs n with -n, branch 2 pairs n with -n - 1.
    """
    n = bid.n
    if abs(n) < n0:
        raise ValueError(f"|n| = {abs(n)} below n0 = {n0}")
    case = bid.b_case if p.a == 1.0 else BCase.GENERIC
    if n > 0:
        return _asym_positive(bid.branch, n, p, case)
    m = -n if bid.branch == 1 else -n - 1
    if m < n0:
        raise ValueError(f"mirror index {m} below n0 = {n0}")
    return _asym_positive(bid.branch, m, p, case).conjugate()


# ---------------------------------------------------------------------------
# refinement


def refine_root(
    seed: complex,
    evaluator,
    tol: float = 1e-10,
    max_iter: int = 60,
    cell_radius: float = CELL_RADIUS,
) -> EigenEstimate:
    """Newton iteration with a central-difference derivative.

    Iterates to machine precision; the result is converged only if the final
    residual is within ``tol`` and the root stayed within ``cell_radius`` of
    the seed.
    """
    lam = complex(seed)
    fval = evaluator(lam)
    it = 0
    for it in range(1, max_iter + 1):
        h = 1e-6 * max(1.0, abs(lam))
        dfd = (evaluator(lam + h) - evaluator(lam - h)) / (2.0 * h)
        if dfd == 0 or not cmath.isfinite(dfd):
            break
        step = fval / dfd
        # keep a runaway step inside the seed's cell
        if abs(step) > cell_radius:
            step *= cell_radius / abs(step) / 2.0
        lam -= step
        fval = evaluator(lam)
        if abs(step) <= 4e-16 * max(1.0, abs(lam)) or fval == 0:
            break
    residual = abs(fval)
    converged = bool(
        cmath.isfinite(lam) and residual <= tol and abs(lam - seed) < cell_radius
    )
    return EigenEstimate(lam, complex(seed), residual, it, converged)


def refine_branch_root(branch: int, n: int, p: SystemParams, tol: float = 1e-10, n0: int = DEFAULT_N0):
    bid = BranchId.for_params(branch, n, p)
    seed = asymptotic_root(bid, p, n0=n0)
    est = refine_root(seed, evaluator_for(p), tol=tol)
    est.branch, est.n = branch, n
    return est


def loglog_slope(x, y) -> float:
    """Least-squares slope of log|y| against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class AbscissaScan:
    params: SystemParams
    branch: int
    roots: list = field(default_factory=list)
    fitted_exponent: float = math.nan  # slope of log|Re lam| vs log n

    @property
    def abscissa_exponent(self) -> float:
        """kappa with |Re lam_n| ~ n^(-kappa)."""
        return -self.fitted_exponent


def abscissa_scan(
    p: SystemParams,
    branch: int,
    n_range: tuple[int, int],
    tol: float = 1e-10,
    ns=None,
    n0: int = DEFAULT_N0,
) -> AbscissaScan:
    """Refine a branch over ``n_range`` and fit the decay of |Re lam_n|."""
    n_lo, n_hi = n_range
    if ns is None:
        ns = range(n_lo, n_hi + 1)
    roots = [refine_branch_root(branch, n, p, tol=tol, n0=n0) for n in ns]
    failed = [r for r in roots if not r.converged]
    if failed:
        detail = ", ".join(f"n={r.n} (residual {r.residual:.2e})" for r in failed)
        raise RefinementError(f"refinement failed for branch {branch}: {detail}")
    if len(roots) < 6:
        raise RefinementError(f"need at least 6 converged roots, got {len(roots)}")
    slope = loglog_slope([r.n for r in roots], [r.lam.real for r in roots])
    return AbscissaScan(p, branch, roots, slope)


ROOT_COLUMNS = ("branch", "n", "re_lambda", "im_lambda", "re_seed", "im_seed", "residual", "iterations")


def write_roots_csv(path, roots, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(ROOT_COLUMNS)
        for r in roots:
            w.writerow([
                r.branch, r.n,
                f"{r.lam.real:.17e}", f"{r.lam.imag:.17e}",
                f"{r.seed.real:.17e}", f"{r.seed.imag:.17e}",
                f"{r.residual:.17e}", r.iterations,
            ])
