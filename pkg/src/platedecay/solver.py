"""Finite-difference time stepping for the damped Mindlin-Timoshenko plate.

Spatial layout
--------------
Fields live on nodes (axis 0 = x, axis 1 = y) with a zero Dirichlet frame.
One-sided differences put ``w_x, psi_x, phi_x`` on x-edges and ``w_y, psi_y,
phi_y`` on y-edges; the coupling products ``psi_y phi_x`` and ``psi_x phi_y``
are taken at cell centres from edge values averaged across the cell. The
discrete potential is a sum of squares of those quantities, and the nodal
force is its exact negative gradient, which gives

* compact three-point second differences for ``w_xx, psi_xx, ...``,
* centred first differences for the shear couplings,
* the four-point cross stencil for ``psi_xy`` and ``phi_xy``.

Time stepping
-------------
Leapfrog in kick-drift-kick form. The rotational damping enters the closing
half kick implicitly, one monotone scalar equation per node, so the damping
sits at the synchronised velocity ``v_n = (v_{n-1/2} + v_{n+1/2}) / 2``.

The energy reported in traces is the leapfrog energy

    E_h = E(u_n, v_n) - dt^2/8 * |M^{-1} F(u_n)|_M^2

which the undamped scheme conserves exactly and which converges to the
continuous energy at second order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .damping import FeedbackLaw
from .errors import DivergenceError, InputError, ParameterError, SolverError
from .model import FIELDS, GridSpec, PlateParams, PlateState

MAX_NEWTON = 25


# ---------------------------------------------------------------------------
# difference operators on full (frame-included) arrays


def _dx(a, h):
    return (a[1:, :] - a[:-1, :]) / h


def _dy(a, h):
    return (a[:, 1:] - a[:, :-1]) / h


def _ax(a):
    return 0.5 * (a[1:, :] + a[:-1, :])


def _ay(a):
    return 0.5 * (a[:, 1:] + a[:, :-1])


# adjoints, restricted to interior nodes along the acted-on axis


def _dxT(e, h):
    return (e[:-1, :] - e[1:, :]) / h


def _dyT(e, h):
    return (e[:, :-1] - e[:, 1:]) / h


def _axT(e):
    return 0.5 * (e[:-1, :] + e[1:, :])


def _ayT(e):
    return 0.5 * (e[:, :-1] + e[:, 1:])


@dataclass
class _Strains:
    shear_x: np.ndarray  # psi + w_x on x-edges
    shear_y: np.ndarray  # phi + w_y on y-edges
    psi_x: np.ndarray
    phi_y: np.ndarray
    psi_y: np.ndarray
    phi_x: np.ndarray
    psi_x_c: np.ndarray
    phi_y_c: np.ndarray
    psi_y_c: np.ndarray
    phi_x_c: np.ndarray


def _strains(w, psi, phi, dx, dy) -> _Strains:
    psi_x = _dx(psi, dx)
    phi_y = _dy(phi, dy)
    psi_y = _dy(psi, dy)
    phi_x = _dx(phi, dx)
    return _Strains(
        shear_x=_ax(psi) + _dx(w, dx),
        shear_y=_ay(phi) + _dy(w, dy),
        psi_x=psi_x, phi_y=phi_y, psi_y=psi_y, phi_x=phi_x,
        psi_x_c=_ay(psi_x), phi_y_c=_ax(phi_y),
        psi_y_c=_ax(psi_y), phi_x_c=_ay(phi_x),
    )


def forces(w, psi, phi, params: PlateParams, grid: GridSpec):
    """Nodal force densities (f_w, f_psi, f_phi) on the interior, shape (nx, ny).

    Equal to minus the gradient of the discrete potential in ``energy``
    divided by the cell area; the adjoint difference/average operators are
    fused here to keep the number of array passes low.
    """
    dx, dy = grid.dx, grid.dy
    K, D, mu = params.K, params.D, params.mu
    Dt = 0.5 * D * (1.0 - mu)
    # edge differences (unscaled)
    dwx = w[1:, :] - w[:-1, :]
    dwy = w[:, 1:] - w[:, :-1]
    dpx = psi[1:, :] - psi[:-1, :]
    dpy = psi[:, 1:] - psi[:, :-1]
    dfx = phi[1:, :] - phi[:-1, :]
    dfy = phi[:, 1:] - phi[:, :-1]
    # shear forces K(psi + w_x) on x-edges, K(phi + w_y) on y-edges
    Sx = (0.5 * K) * (psi[1:, :] + psi[:-1, :]) + (K / dx) * dwx
    Sy = (0.5 * K) * (phi[:, 1:] + phi[:, :-1]) + (K / dy) * dwy
    # twice-averaged differences at cell centres
    cpx = dpx[:, 1:] + dpx[:, :-1]
    cfy = dfy[1:, :] + dfy[:-1, :]
    cpy = dpy[1:, :] + dpy[:-1, :]
    cfx = dfx[:, 1:] + dfx[:, :-1]
    cc = 0.25 / (dx * dy)

    f_w = ((Sx[1:, 1:-1] - Sx[:-1, 1:-1]) * (1.0 / dx)
           + (Sy[1:-1, 1:] - Sy[1:-1, :-1]) * (1.0 / dy))

    hS = 0.5 * Sx
    G = (D / dx**2) * dpx
    f_psi = (G[1:, 1:-1] - hS[1:, 1:-1]) - (G[:-1, 1:-1] + hS[:-1, 1:-1])
    H = (Dt / dy**2) * dpy
    f_psi += H[1:-1, 1:] - H[1:-1, :-1]
    q = (Dt * cc) * (cfx[:-1, :] + cfx[1:, :])
    f_psi += q[:, 1:] - q[:, :-1]
    q = (D * mu * cc) * (cfy[:, :-1] + cfy[:, 1:])
    f_psi += q[1:, :] - q[:-1, :]

    hS = 0.5 * Sy
    G = (D / dy**2) * dfy
    f_phi = (G[1:-1, 1:] - hS[1:-1, 1:]) - (G[1:-1, :-1] + hS[1:-1, :-1])
    H = (Dt / dx**2) * dfx
    f_phi += H[1:, 1:-1] - H[:-1, 1:-1]
    q = (Dt * cc) * (cpy[:, :-1] + cpy[:, 1:])
    f_phi += q[1:, :] - q[:-1, :]
    q = (D * mu * cc) * (cpx[:-1, :] + cpx[1:, :])
    f_phi += q[:, 1:] - q[:, :-1]
    return f_w, f_psi, f_phi


# ---------------------------------------------------------------------------
# energy and inner product


def energy(state: PlateState, params: PlateParams) -> float:
    """Discrete energy of a state: kinetic part by nodal quadrature, strain
    part from the edge/centre differences used by the stepping stencils."""
    g = state.grid
    K, D, mu = params.K, params.D, params.mu
    s = _strains(state.w, state.psi, state.phi, g.dx, g.dy)
    kin = (params.rho1 * np.sum(state.wt**2)
           + params.rho2 * (np.sum(state.psit**2) + np.sum(state.phit**2)))
    shear = K * (np.sum(s.shear_x**2) + np.sum(s.shear_y**2))
    bend = D * (np.sum(s.psi_x**2) + np.sum(s.phi_y**2))
    twist = 0.5 * D * (1.0 - mu) * (np.sum(s.psi_y**2) + np.sum(s.phi_x**2)
                                    + 2.0 * np.sum(s.psi_y_c * s.phi_x_c))
    coupling = 2.0 * D * mu * np.sum(s.psi_x_c * s.phi_y_c)
    return 0.5 * g.dx * g.dy * float(kin + shear + bend + twist + coupling)


def h_inner_product(U: PlateState, V: PlateState, params: PlateParams) -> float:
    """Discrete energy inner product; (U, U) equals twice ``energy(U)``."""
    if U.grid != V.grid:
        raise InputError("inner product of states on different grids", module="solver")
    g = U.grid
    K, D, mu = params.K, params.D, params.mu
    a = _strains(U.w, U.psi, U.phi, g.dx, g.dy)
    b = _strains(V.w, V.psi, V.phi, g.dx, g.dy)
    total = (params.rho1 * np.sum(U.wt * V.wt)
             + params.rho2 * np.sum(U.psit * V.psit)
             + params.rho2 * np.sum(U.phit * V.phit)
             + K * np.sum(a.shear_x * b.shear_x)
             + K * np.sum(a.shear_y * b.shear_y)
             + D * np.sum(a.psi_x * b.psi_x)
             + D * np.sum(a.phi_y * b.phi_y)
             + 0.5 * D * (1.0 - mu) * (np.sum(a.psi_y * b.psi_y) + np.sum(a.phi_x * b.phi_x)
                                       + np.sum(a.psi_y_c * b.phi_x_c)
                                       + np.sum(a.phi_x_c * b.psi_y_c))
             + D * mu * np.sum(a.psi_x_c * b.phi_y_c)
             + D * mu * np.sum(a.phi_y_c * b.psi_x_c))
    return g.dx * g.dy * float(total)


def acceleration_norm_sq(state: PlateState, params: PlateParams) -> float:
    """|M^{-1} F(u)|_M^2 for the conservative force, integrated over the plate."""
    g = state.grid
    f_w, f_psi, f_phi = forces(state.w, state.psi, state.phi, params, g)
    val = np.sum(f_w**2) / params.rho1 + (np.sum(f_psi**2) + np.sum(f_phi**2)) / params.rho2
    return g.dx * g.dy * float(val)


def discrete_energy(state: PlateState, params: PlateParams, dt: float) -> float:
    """Leapfrog energy: ``energy`` minus dt^2/8 times the squared acceleration norm."""
    return energy(state, params) - 0.125 * dt * dt * acceleration_norm_sq(state, params)


def dissipation_rate(state: PlateState, laws: Sequence[FeedbackLaw]) -> float:
    """-integral of (psi_t chi1(psi_t) + phi_t chi2(phi_t)); never positive."""
    law1, law2 = laws
    g = state.grid
    val = np.sum(state.psit * law1.chi(state.psit)) + np.sum(state.phit * law2.chi(state.phit))
    return -g.dx * g.dy * float(val)


# ---------------------------------------------------------------------------
# initial data


def assemble_initial(grid: GridSpec, mode_spec: dict) -> PlateState:
    """Build a state from sine modes.

    ``mode_spec`` maps a field name (w, psi, phi, wt, psit, phit) to a list of
    (m, n, amplitude); each contributes a sin(m pi x / L1) sin(n pi y / L2).
    """
    X, Y = grid.coords()
    L1, L2 = grid.geometry.L1, grid.geometry.L2
    state = PlateState.zeros(grid)
    for name, modes in mode_spec.items():
        if name not in FIELDS:
            raise ParameterError(f"unknown field {name!r} in mode spec", module="solver")
        arr = getattr(state, name)
        for m, n, amp in modes:
            if int(m) != m or int(n) != n or m < 1 or n < 1:
                raise ParameterError(f"mode numbers must be integers >= 1, got ({m}, {n})",
                                     module="solver")
            arr += amp * np.sin(m * math.pi * X / L1) * np.sin(n * math.pi * Y / L2)
    for arr in state.fields():
        arr[0, :] = arr[-1, :] = 0.0
        arr[:, 0] = arr[:, -1] = 0.0
    return state


# ---------------------------------------------------------------------------
# sparse assembly of the semi-discrete operator


def _interior_selector(n: int):
    return sp.identity(n + 2, format="csr")[:, 1:-1]


def _diff_1d(n: int, h: float):
    return sp.diags([-np.ones(n + 1), np.ones(n + 1)], [0, 1], shape=(n + 1, n + 2)) / h


def _avg_1d(n: int):
    return sp.diags([0.5 * np.ones(n + 1), 0.5 * np.ones(n + 1)], [0, 1], shape=(n + 1, n + 2))


def assemble_stiffness(params: PlateParams, grid: GridSpec):
    """Sparse stiffness S with F(u) = -S u for u = (w, psi, phi) on interior nodes
    (each block raveled in C order over (nx, ny)). Built from Kronecker products,
    independently of the slicing stencils in ``forces``."""
    nx, ny = grid.nx, grid.ny
    Ix = sp.identity(nx + 2)
    Iy = sp.identity(ny + 2)
    P = sp.kron(_interior_selector(nx), _interior_selector(ny))
    Dx = sp.kron(_diff_1d(nx, grid.dx), Iy) @ P
    Ax = sp.kron(_avg_1d(nx), Iy) @ P
    Dy = sp.kron(Ix, _diff_1d(ny, grid.dy)) @ P
    Ay = sp.kron(Ix, _avg_1d(ny)) @ P
    # edge -> centre averages
    Ay_e = sp.kron(sp.identity(nx + 1), _avg_1d(ny))
    Ax_e = sp.kron(_avg_1d(nx), sp.identity(ny + 1))
    K, D, mu = params.K, params.D, params.mu
    Dt = 0.5 * D * (1 - mu)
    n = nx * ny
    zx = sp.csr_matrix((Dx.shape[0], n))
    zy = sp.csr_matrix((Dy.shape[0], n))
    Bsx = sp.hstack([Dx, Ax, zx])
    Bsy = sp.hstack([Dy, zy, Ay])
    Bpsi_x = sp.hstack([zx, Dx, zx])
    Bphi_y = sp.hstack([zy, zy, Dy])
    Bpsi_y = sp.hstack([zy, Dy, zy])
    Bphi_x = sp.hstack([zx, zx, Dx])
    Cpsi_x = Ay_e @ Bpsi_x
    Cphi_y = Ax_e @ Bphi_y
    Cpsi_y = Ax_e @ Bpsi_y
    Cphi_x = Ay_e @ Bphi_x
    S = (K * (Bsx.T @ Bsx + Bsy.T @ Bsy)
         + D * (Bpsi_x.T @ Bpsi_x + Bphi_y.T @ Bphi_y)
         + Dt * (Bpsi_y.T @ Bpsi_y + Bphi_x.T @ Bphi_x + Cpsi_y.T @ Cphi_x + Cphi_x.T @ Cpsi_y)
         + D * mu * (Cpsi_x.T @ Cphi_y + Cphi_y.T @ Cpsi_x))
    return S.tocsr()


def mass_diagonal(params: PlateParams, grid: GridSpec) -> np.ndarray:
    n = grid.nx * grid.ny
    return np.concatenate([np.full(n, params.rho1), np.full(2 * n, params.rho2)])


def assemble_generator(params: PlateParams, grid: GridSpec, damping: Optional[np.ndarray] = None):
    """First-order generator A_h acting on U = (u, v), u = (w, psi, phi), v = u_t.

    ``damping`` optionally gives a linear damping coefficient per velocity
    unknown (zero for w entries); it is subtracted as -M^{-1} C v.
    """
    S = assemble_stiffness(params, grid)
    minv = sp.diags(1.0 / mass_diagonal(params, grid))
    N = S.shape[0]
    lower_right = sp.csr_matrix((N, N)) if damping is None else -(minv @ sp.diags(damping))
    return sp.bmat([[None, sp.identity(N)], [-(minv @ S), lower_right]]).tocsr()


def state_to_vector(state: PlateState) -> np.ndarray:
    inner = [a[1:-1, 1:-1].ravel() for a in state.fields()]
    return np.concatenate(inner)


def vector_to_state(vec: np.ndarray, grid: GridSpec, t: float = 0.0) -> PlateState:
    n = grid.nx * grid.ny
    state = PlateState.zeros(grid, t=t)
    for k, name in enumerate(FIELDS):
        getattr(state, name)[1:-1, 1:-1] = vec[k * n:(k + 1) * n].reshape(grid.nx, grid.ny)
    return state


def fundamental_frequency(params: PlateParams, grid: GridSpec) -> float:
    """Lowest angular frequency of the undamped semi-discrete plate.

    With w, psi and phi all clamped the problem does not separate into sine
    and cosine modes, so the frequency comes from the discrete eigenproblem
    S u = omega^2 M u (shift-invert around zero).
    """
    S = assemble_stiffness(params, grid)
    M = sp.diags(mass_diagonal(params, grid))
    if S.shape[0] < 200:
        lam = float(np.linalg.eigvalsh((sp.diags(1 / np.sqrt(M.diagonal())) @ S
                                        @ sp.diags(1 / np.sqrt(M.diagonal()))).toarray())[0])
    else:
        lam = float(spla.eigsh(S.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="LM",
                               return_eigenvectors=False)[0])
    return math.sqrt(lam)


def fundamental_period(params: PlateParams, grid: GridSpec) -> float:
    return 2.0 * math.pi / fundamental_frequency(params, grid)


def max_stable_dt(params: PlateParams, grid: GridSpec) -> float:
    """Leapfrog stability limit 2 / sqrt(lambda_max(M^{-1} S))."""
    S = assemble_stiffness(params, grid)
    m = np.sqrt(mass_diagonal(params, grid))
    Sm = sp.diags(1 / m) @ S @ sp.diags(1 / m)
    gersh = float(np.max(np.abs(Sm).sum(axis=1)))
    if Sm.shape[0] < 50:
        lam = float(np.linalg.eigvalsh(Sm.toarray())[-1])
    else:
        try:
            lam = float(spla.eigsh(Sm, k=1, which="LA", return_eigenvectors=False, tol=1e-6)[0])
            lam = min(lam * (1 + 1e-5), gersh)
        except spla.ArpackNoConvergence:
            lam = gersh
    return 2.0 / math.sqrt(lam)


# ---------------------------------------------------------------------------
# generator dissipativity


@dataclass
class DissipativityReport:
    holds: bool
    max_normalized: float
    tol: float
    n_trials: int


def generator_dissipativity_check(params: PlateParams, grid: GridSpec, n_trials: int = 100,
                                  tol: Optional[float] = None, seed: int = 0) -> DissipativityReport:
    """Check (A_h U, U)_H <= tol (U, U)_H on random states.

    A_h comes from the Kronecker assembly, the inner product from the slicing
    stencils, so the check also cross-validates the two code paths. The
    default tolerance is 10 machine epsilons times the spectral radius of A_h.
    """
    if n_trials < 10:
        raise ParameterError("need at least 10 trials", module="solver")
    A = assemble_generator(params, grid)
    if tol is None:
        tol = 10.0 * np.finfo(float).eps * 2.0 / max_stable_dt(params, grid)
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n_trials):
        vec = rng.standard_normal(A.shape[0])
        U = vector_to_state(vec, grid)
        AU = vector_to_state(A @ vec, grid)
        norm = h_inner_product(U, U, params)
        val = h_inner_product(AU, U, params) / norm if norm > 0 else 0.0
        worst = max(worst, val)
    return DissipativityReport(bool(worst <= tol), float(worst), float(tol), n_trials)


# ---------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: Optional[float] = None
    cfl_factor: float = 0.25
    damping_solver_tol: float = 1e-13
    output_stride: int = 1

    def __post_init__(self):
        if not self.t_end > 0:
            raise ParameterError("t_end must be positive", module="solver")
        if not (0 < self.cfl_factor <= 1):
            raise ParameterError("cfl_factor must lie in (0, 1]", module="solver")
        if self.output_stride < 1:
            raise ParameterError("output_stride must be >= 1", module="solver")

    def resolve_dt(self, params: PlateParams, grid: GridSpec) -> float:
        """Time step honouring the CFL bound; the default divides t_end evenly."""
        limit = self.cfl_factor * grid.cfl_limit(params)
        if self.dt is None:
            n = math.ceil(self.t_end / limit * (1 - 1e-12))
            dt = self.t_end / n
        else:
            dt = self.dt
            if not dt > 0:
                raise ParameterError("dt must be positive", module="solver")
            if dt > limit * (1 + 1e-12):
                raise ParameterError(f"dt={dt:.6g} violates the CFL bound {limit:.6g}",
                                     module="solver")
        return dt

    def n_steps(self, dt: float) -> int:
        return int(round(self.t_end / dt))


def _solve_implicit_velocity(law: FeedbackLaw, a: float, rhs: np.ndarray, tol: float,
                             chi_guess=None):
    """Solve a*y + chi(y) = rhs pointwise (a > 0, chi monotone); returns (y, chi(y)).

    ``chi_guess`` (typically chi at the previous velocity) shifts the Newton
    starting point to (rhs - chi_guess) / a.
    """
    if not law.active:
        return rhs / a, np.zeros_like(rhs)
    y = rhs / a if chi_guess is None else (rhs - chi_guess) * (1.0 / a)
    for _ in range(MAX_NEWTON):
        val, slope = law.chi_and_slope(y)
        step = (a * y + val - rhs) / (a + slope)
        y = y - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(y))):
            return y, law.chi(y)
    # bisection fallback: the root lies between 0 and rhs/a
    lo = np.minimum(0.0, rhs / a)
    hi = np.maximum(0.0, rhs / a)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = a * mid + law.chi(mid) < rhs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol * (1.0 + np.abs(hi))):
            y = 0.5 * (lo + hi)
            return y, law.chi(y)
    raise SolverError("implicit damping solve did not converge", module="solver")


class Integrator:
    """Leapfrog integrator that caches the force and damping at the current state.

    ``step`` mutates the state it is given; the caches are keyed on the last
    state object and refreshed whenever a different one is passed in.
    """

    def __init__(self, params: PlateParams, laws: Sequence[FeedbackLaw], dt: float,
                 tol: float = 1e-13):
        self.params = params
        self.law1, self.law2 = laws
        self.dt = dt
        self.tol = tol
        self._force = None
        self._chi = None
        self._key = None

    def _prime(self, state: PlateState):
        self._force = forces(state.w, state.psi, state.phi, self.params, state.grid)
        self._chi = (self.law1.chi(state.psit[1:-1, 1:-1]), self.law2.chi(state.phit[1:-1, 1:-1]))
        self._key = id(state)

    def dissipation_rate(self, state: PlateState) -> float:
        """Same value as the module-level ``dissipation_rate``, from cached damping."""
        if self._key != id(state):
            self._prime(state)
        cpsi, cphi = self._chi
        I = (slice(1, -1), slice(1, -1))
        val = np.vdot(state.psit[I], cpsi) + np.vdot(state.phit[I], cphi)
        return -state.grid.dx * state.grid.dy * float(val)

    def step(self, state: PlateState) -> PlateState:
        """Advance the state in place by one dt and return it."""
        if self._key != id(state):
            self._prime(state)
        p = self.params
        dt = self.dt
        h = 0.5 * dt
        fw, fpsi, fphi = self._force
        cpsi, cphi = self._chi
        I = (slice(1, -1), slice(1, -1))

        wt_half = state.wt[I] + (h / p.rho1) * fw
        psit_half = state.psit[I] + (h / p.rho2) * (fpsi - cpsi)
        phit_half = state.phit[I] + (h / p.rho2) * (fphi - cphi)
        state.w[I] += dt * wt_half
        state.psi[I] += dt * psit_half
        state.phi[I] += dt * phit_half

        fw, fpsi, fphi = forces(state.w, state.psi, state.phi, p, state.grid)
        a = p.rho2 / h
        state.wt[I] = wt_half + (h / p.rho1) * fw
        psit, cpsi = _solve_implicit_velocity(self.law1, a, a * psit_half + fpsi, self.tol, cpsi)
        phit, cphi = _solve_implicit_velocity(self.law2, a, a * phit_half + fphi, self.tol, cphi)
        state.psit[I] = psit
        state.phit[I] = phit
        state.t += dt
        self._force = (fw, fpsi, fphi)
        self._chi = (cpsi, cphi)
        return state


def step(state: PlateState, params: PlateParams, laws: Sequence[FeedbackLaw],
         config: SimConfig) -> PlateState:
    """Return a new state one time step ahead (the input is not modified)."""
    dt = config.resolve_dt(params, state.grid)
    new = Integrator(params, laws, dt, config.damping_solver_tol).step(state.copy())
    if not new.is_finite():
        raise DivergenceError(1, new.t)
    return new


@dataclass
class EnergyTrace:
    t: list = field(default_factory=list)
    E: list = field(default_factory=list)
    D_integral: list = field(default_factory=list)
    dt: float = 0.0

    def append(self, t: float, E: float, D: float):
        self.t.append(t)
        self.E.append(E)
        self.D_integral.append(D)

    def arrays(self):
        return np.asarray(self.t), np.asarray(self.E), np.asarray(self.D_integral)

    def __len__(self):
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("t,E,D_integral\n")
            for t, E, D in zip(self.t, self.E, self.D_integral):
                fh.write(f"{t!r},{E!r},{D!r}\n")

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        tr = cls()
        for row in data:
            tr.append(float(row[0]), float(row[1]), float(row[2]))
        return tr


def simulate(state0: PlateState, params: PlateParams, laws: Sequence[FeedbackLaw],
             config: SimConfig, callback: Optional[Callable[[PlateState], None]] = None):
    """Integrate to ``config.t_end``; returns (final state, EnergyTrace).

    The dissipation integral is accumulated every step with the trapezoid rule
    in time; the trace is sampled every ``output_stride`` steps and at the end.
    """
    grid = state0.grid
    if not state0.is_finite():
        raise InputError("initial state has non-finite values", module="solver")
    dt = config.resolve_dt(params, grid)
    stable = max_stable_dt(params, grid)
    if dt >= stable:
        raise ParameterError(f"dt={dt:.6g} exceeds the leapfrog stability limit {stable:.6g}",
                             module="solver")
    if params.K <= 1.0 and any(l.active for l in laws):
        warnings.warn("K <= 1: the decay estimate's multiplier bounds assume K > 1", stacklevel=2)
    n_steps = config.n_steps(dt)
    state = state0.copy()
    integ = Integrator(params, laws, dt, config.damping_solver_tol)
    trace = EnergyTrace(dt=dt)
    t0 = state.t
    D = 0.0
    rate = -integ.dissipation_rate(state)
    trace.append(t0, discrete_energy(state, params, dt), D)
    for k in range(1, n_steps + 1):
        integ.step(state)
        if not math.isfinite(float(state.w.sum() + state.psi.sum() + state.phi.sum())):
            raise DivergenceError(k, state.t)
        state.t = t0 + k * dt
        new_rate = -integ.dissipation_rate(state)
        D += 0.5 * dt * (rate + new_rate)
        rate = new_rate
        if k % config.output_stride == 0 or k == n_steps:
            trace.append(state.t, discrete_energy(state, params, dt), D)
            if callback is not None:
                callback(state)
    return state, trace


def dissipation_residual(trace: EnergyTrace) -> float:
    """max_n |E(t_n) - E(0) + D(t_n)| / max(E(0), tiny)."""
    if len(trace) < 2:
        raise InputError("trace needs at least two samples", module="solver")
    _, E, D = trace.arrays()
    scale = max(E[0], np.finfo(float).tiny)
    return float(np.max(np.abs(E - E[0] + D)) / scale)


def dump_snapshot(state: PlateState, path) -> None:
    """Write all six fields as little-endian float64 (row-major, field order as
    FIELDS) plus a sidecar text header ``<path>.hdr``."""
    path = Path(path)
    data = np.stack(state.fields()).astype("<f8")
    path.write_bytes(data.tobytes(order="C"))
    g = state.grid
    header = (f"nx {g.nx + 2}\nny {g.ny + 2}\nfields {' '.join(FIELDS)}\nt {state.t!r}\n"
              f"L1 {g.geometry.L1!r}\nL2 {g.geometry.L2!r}\n")
    Path(str(path) + ".hdr").write_text(header)


def load_snapshot(path) -> PlateState:
    from .model import Geometry

    path = Path(path)
    meta = {}
    for line in Path(str(path) + ".hdr").read_text().splitlines():
        key, _, val = line.partition(" ")
        meta[key] = val
    nx, ny = int(meta["nx"]), int(meta["ny"])
    grid = GridSpec(Geometry(float(meta["L1"]), float(meta["L2"])), nx - 2, ny - 2)
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(len(FIELDS), nx, ny)
    return PlateState(grid, *(data[k].copy() for k in range(len(FIELDS))), t=float(meta["t"]))
