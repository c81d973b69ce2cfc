"""Crank-Nicolson solver for the augmented wave system.

Unknowns on the nodes x_i = i h of (0, 1): displacements u, y and velocities
v = u_t, z = y_t; plus one relaxation variable omega_j per xi-grid node.  The
spatial operator is the lumped-mass / linear-stiffness one, so the discrete
energy

    E = 1/2 [v.M v + u.K u + z.M z + a y.K y + gamma kappa sum_j w_j omega_j^2]

satisfies E' = -gamma kappa sum_j w_j (xi_j^2 + eta) omega_j^2 exactly, and
the implicit midpoint (Crank-Nicolson) step inherits that balance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .frac_core import XiGrid, build_xi_grid, mu
from .params import SystemParams


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 16:
            raise ValueError(f"n_cells must be >= 16, got {self.n_cells}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_cells + 1)


@dataclass
class SimState:
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    z: np.ndarray
    omega: np.ndarray
    t: float = 0.0

    def scaled(self, c: float) -> "SimState":
        return SimState(c * self.u, c * self.v, c * self.y, c * self.z, c * self.omega, self.t)

    def enforce_constraints(self) -> "SimState":
        u, v, y, z = (np.array(w, dtype=float) for w in (self.u, self.v, self.y, self.z))
        u[0] = v[0] = 0.0
        y[0] = y[-1] = z[0] = z[-1] = 0.0
        return SimState(u, v, y, z, np.array(self.omega, dtype=float), self.t)


@dataclass
class EnergyTrace:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    balance_residual: np.ndarray
    params: SystemParams | None = None
    final_state: SimState | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class SemiDiscreteSystem:
    params: SystemParams
    grid: SpatialGrid
    xi: XiGrid
    A: sp.csr_matrix  # generator on (u, v, y, z) without the boundary flux
    d: np.ndarray  # xi^2 + eta
    mu: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.grid.n_cells + 1

    def block(self, k: int) -> slice:
        m = self.n_nodes
        return slice(k * m, (k + 1) * m)

    @property
    def vN(self) -> int:
        return 2 * self.n_nodes - 1

    @property
    def gk(self) -> float:
        return self.params.gamma * self.params.frac.kappa

    def mass(self) -> np.ndarray:
        m = np.full(self.n_nodes, self.grid.h)
        m[0] = m[-1] = self.grid.h / 2.0
        return m

    def stiffness(self) -> sp.csr_matrix:
        m, h = self.n_nodes, self.grid.h
        main = np.full(m, 2.0 / h)
        main[0] = main[-1] = 1.0 / h
        off = np.full(m - 1, -1.0 / h)
        return sp.diags([off, main, off], [-1, 0, 1], format="csr")

    def boundary_flux(self, omega) -> float:
        """u_x(1) as fixed by the fractional boundary condition."""
        return -self.gk * float(np.dot(self.xi.weights * self.mu, omega))

    def full_generator(self) -> sp.csr_matrix:
        """Generator on (u, v, y, z, omega), boundary coupling included."""
        m, nx, h = self.n_nodes, self.xi.nodes.size, self.grid.h
        coupling = sp.lil_matrix((4 * m, nx))
        coupling[self.vN, :] = -(2.0 / h) * self.gk * self.xi.weights * self.mu
        feed = sp.lil_matrix((nx, 4 * m))
        feed[:, self.vN] = self.mu[:, None]
        relax = sp.diags(-self.d)
        return sp.bmat([[self.A, coupling], [feed, relax]], format="csr")

    def energy_gram(self) -> sp.csr_matrix:
        """Diagonal-block Gram matrix of the discrete energy inner product."""
        K = self.stiffness()
        M = sp.diags(self.mass())
        W = sp.diags(self.gk * self.xi.weights)
        return sp.block_diag([K, M, self.params.a * K, M, W], format="csr")

    def free_mask(self) -> np.ndarray:
        m = self.n_nodes
        mask = np.ones(4 * m + self.xi.nodes.size, dtype=bool)
        for k, idx in ((0, 0), (1, 0), (2, 0), (2, m - 1), (3, 0), (3, m - 1)):
            mask[k * m + idx] = False
        return mask


def default_xi_grid(p: SystemParams, grid: SpatialGrid, tol: float = 1e-6) -> XiGrid:
    lam_ref = math.pi * grid.n_cells
    return build_xi_grid(p.frac, lam_ref, tol, lam_lo=1e-2, lam_hi=100.0 * lam_ref)


def assemble(p: SystemParams, grid: SpatialGrid, xi: XiGrid | None = None) -> SemiDiscreteSystem:
    """Second-order finite differences for the coupled waves.

    The Neumann-type row at x = 1 eliminates the ghost value with the centred
    boundary condition u_x(1) = -gamma kappa sum w mu omega, which contributes
    (2/h) u_x(1) to v_N'; that term is applied by the time stepper.
    """
    if xi is None:
        xi = default_xi_grid(p, grid)
    m, h, a, b = grid.n_cells + 1, grid.h, p.a, p.b
    U, V, Y, Z = (k * m for k in range(4))
    A = sp.lil_matrix((4 * m, 4 * m))
    for i in range(1, m):
        A[U + i, V + i] = 1.0
    for i in range(1, m - 1):
        A[V + i, U + i - 1] = 1.0 / h**2
        A[V + i, U + i] = -2.0 / h**2
        A[V + i, U + i + 1] = 1.0 / h**2
        A[Y + i, Z + i] = 1.0
        A[Z + i, Y + i - 1] = a / h**2
        A[Z + i, Y + i] = -2.0 * a / h**2
        A[Z + i, Y + i + 1] = a / h**2
        if b != 0.0:
            A[V + i, Z + i] = -b
            A[Z + i, V + i] = b
    N = m - 1
    A[V + N, U + N - 1] = 2.0 / h**2
    A[V + N, U + N] = -2.0 / h**2
    # z_N = 0, so the coupling term in the v_N row vanishes
    d = xi.nodes**2 + p.eta
    return SemiDiscreteSystem(p, grid, xi, A.tocsr(), d, mu(xi.nodes, p.alpha))


# ---------------------------------------------------------------------------
# time stepping


def _pack(state: SimState) -> np.ndarray:
    return np.concatenate([state.u, state.v, state.y, state.z])


class CrankNicolson:
    """Factorised Crank-Nicolson step for a fixed ``dt``.

    omega is eliminated exactly: each relaxation ODE is linear in v(1), so the
    midpoint boundary flux is affine in the new v_N and folds into one matrix
    entry.
    """

    def __init__(self, system: SemiDiscreteSystem, dt: float):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.system, self.dt = system, dt
        h, gk = system.grid.h, system.gk
        half = 0.5 * dt * system.d
        self.inv = 1.0 / (1.0 + half)
        self.P = (1.0 - half) * self.inv
        self.Q = 0.5 * dt * system.mu * self.inv
        self.flux_w = gk * system.xi.weights * system.mu * self.inv
        S = gk * float(np.sum(system.xi.weights * system.mu * self.Q))
        n = system.A.shape[0]
        I = sp.identity(n, format="csr")
        E = sp.csr_matrix(([1.0], ([system.vN], [system.vN])), shape=(n, n))
        coef = dt * (2.0 / h) * (S / 2.0)
        self.lhs = (I - 0.5 * dt * system.A + coef * E).tocsc()
        self.rhs = (I + 0.5 * dt * system.A - coef * E).tocsr()
        try:
            self.lu = splu(self.lhs)
        except RuntimeError as exc:  # singular factor
            raise SimulationError(f"Crank-Nicolson matrix is singular for dt={dt}") from exc

    def step(self, state: SimState) -> SimState:
        sys_ = self.system
        x = _pack(state)
        rhs = self.rhs @ x
        g_k = -float(np.dot(self.flux_w, state.omega))
        rhs[sys_.vN] += self.dt * (2.0 / sys_.grid.h) * g_k
        x1 = self.lu.solve(rhs)
        if not np.all(np.isfinite(x1)):
            raise SimulationError(f"non-finite state after step at t={state.t + self.dt}")
        vn_old, vn_new = state.v[-1], x1[sys_.vN]
        omega = self.P * state.omega + self.Q * (vn_old + vn_new)
        b = [x1[sys_.block(k)] for k in range(4)]
        new = SimState(b[0], b[1], b[2], b[3], omega, state.t + self.dt)
        return new.enforce_constraints()


def step_cn(system: SemiDiscreteSystem, state: SimState, dt: float) -> SimState:
    """One Crank-Nicolson step (factorises every call; use CrankNicolson in loops)."""
    return CrankNicolson(system, dt).step(state)


def energy(state: SimState, system: SemiDiscreteSystem) -> float:
    M = system.mass()
    h, a = system.grid.h, system.params.a
    du = np.diff(state.u) / h
    dy = np.diff(state.y) / h
    kin = np.dot(M, state.v**2) + np.dot(M, state.z**2)
    pot = h * (np.dot(du, du) + a * np.dot(dy, dy))
    mem = system.gk * np.dot(system.xi.weights, state.omega**2)
    return 0.5 * float(kin + pot + mem)


def dissipation(state: SimState, system: SemiDiscreteSystem) -> float:
    return system.gk * float(np.dot(system.xi.weights * system.d, state.omega**2))


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialData:
    """Closed-form initial profiles; omega starts at zero."""

    u0: Callable = lambda x: np.zeros_like(x)
    u1: Callable = lambda x: np.zeros_like(x)
    y0: Callable = lambda x: np.zeros_like(x)
    y1: Callable = lambda x: np.zeros_like(x)
    name: str = "custom"

    def state(self, system: SemiDiscreteSystem) -> SimState:
        x = system.grid.x
        f = [np.asarray(g(x), dtype=float) for g in (self.u0, self.u1, self.y0, self.y1)]
        s = SimState(*f, omega=np.zeros(system.xi.nodes.size))
        return s.enforce_constraints()


def _u_mode(k):
    # sin((k - 1/2) pi x): u(0) = 0 and u'(1) = 0
    return lambda x: np.sin((k - 0.5) * np.pi * x)


def _y_mode(k):
    return lambda x: np.sin(k * np.pi * x)


def zero_data() -> InitialData:
    return InitialData(name="zero")


def smooth_data() -> InitialData:
    return InitialData(u0=_u_mode(1), y0=_y_mode(1), name="smooth")


def mode_data(k: int = 1) -> InitialData:
    return InitialData(u0=_u_mode(k), name=f"mode{k}")


def _v_mode(k):
    # also v(1) = v'(1) = 0, so omega starts smoothly from rest
    return lambda x: np.sin(k * np.pi * x) ** 2


def random_data(seed: int, n_modes: int = 6) -> InitialData:
    """Random admissible combination of low modes, decaying amplitudes.

    The velocity profile vanishes to second order at x = 1, so the fractional
    boundary term starts smoothly and the scheme keeps its full order.
    """
    rng = np.random.default_rng(seed)
    amp = 1.0 / np.arange(1, n_modes + 1) ** 2
    c = rng.standard_normal((4, n_modes)) * amp

    def combo(coef, basis):
        return lambda x: sum(cj * basis(j + 1)(x) for j, cj in enumerate(coef))

    return InitialData(
        u0=combo(c[0], _u_mode), u1=combo(c[1], _v_mode),
        y0=combo(c[2], _y_mode), y1=combo(c[3], _y_mode), name=f"random{seed}",
    )


def exceptional_data(mode) -> InitialData:
    """Real part of -i exp(i lam t) (u, y) at t = 0 for an exceptional mode.

    u is purely imaginary and y is real on the eigenvector, so the data are
    u_0 = -i u, u_1 = 0, y_0 = 0 and y_1 = lam y.
    """
    def u0(x):
        return (-1j * mode.u(x)).real

    def y1(x):
        return (-1j * 1j * mode.lam * mode.y(x)).real

    def y0(x):
        return (-1j * mode.y(x)).real

    def u1(x):
        return (-1j * 1j * mode.lam * mode.u(x)).real

    return InitialData(u0=u0, u1=u1, y0=y0, y1=y1, name=f"exceptional{mode.k1}{mode.k2}")


# ---------------------------------------------------------------------------
# driver


@dataclass
class SimConfig:
    n_cells: int = 200
    dt: float | None = None  # defaults to h/2
    T: float = 100.0
    xi_tol: float = 1e-6
    initial: InitialData = field(default_factory=smooth_data)
    record_every: int = 1

    def time_step(self) -> float:
        return self.dt if self.dt is not None else 0.5 / self.n_cells


def run(p: SystemParams, config: SimConfig, system: SemiDiscreteSystem | None = None) -> EnergyTrace:
    """Integrate to ``config.T`` recording energy, dissipation and balance residual.

    The balance residual of step k is |E_{k+1} - E_k + dt (D_{k+1} + D_k)/2|.
    With ``record_every > 1`` the residual column holds the largest per-step
    value since the previous record.
    """
    grid = SpatialGrid(config.n_cells)
    if system is None:
        system = assemble(p, grid, default_xi_grid(p, grid, config.xi_tol))
    dt = config.time_step()
    n_steps = int(round(config.T / dt))
    cn = CrankNicolson(system, dt)
    state = config.initial.state(system)

    times, ens, dis, res = [0.0], [energy(state, system)], [dissipation(state, system)], [0.0]
    e_prev, d_prev, worst = ens[0], dis[0], 0.0
    for k in range(1, n_steps + 1):
        state = cn.step(state)
        e, dd = energy(state, system), dissipation(state, system)
        worst = max(worst, abs(e - e_prev + dt * 0.5 * (dd + d_prev)))
        e_prev, d_prev = e, dd
        if k % config.record_every == 0 or k == n_steps:
            times.append(k * dt)
            ens.append(e)
            dis.append(dd)
            res.append(worst)
            worst = 0.0
    return EnergyTrace(
        np.array(times), np.array(ens), np.array(dis), np.array(res), p, final_state=state
    )


TRACE_COLUMNS = ("t", "energy", "dissipation", "balance_residual")


def write_trace_csv(path, trace: EnergyTrace, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in zip(trace.times, trace.energy, trace.dissipation, trace.balance_residual):
            w.writerow([f"{v:.17e}" for v in row])
