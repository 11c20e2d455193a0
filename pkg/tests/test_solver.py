import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import energy_matrices, linear_damping_reference, pack
from platedecay.damping import FeedbackLaw
from platedecay.errors import DivergenceError, InputError, ParameterError
from platedecay.model import FIELDS, Geometry, GridSpec, PlateParams, PlateState
from platedecay.solver import (EnergyTrace, Integrator, SimConfig, assemble_generator,
                               assemble_initial, assemble_stiffness, discrete_energy,
                               dissipation_rate, dissipation_residual, dump_snapshot, energy,
                               forces, fundamental_period, generator_dissipativity_check,
                               h_inner_product, load_snapshot, mass_diagonal, max_stable_dt,
                               simulate, state_to_vector, step, vector_to_state)

UNIT = PlateParams(1.0, 1.0, 1.0, 1.0, 0.3)
NONE = FeedbackLaw.none()
CUBIC = FeedbackLaw.power(3.0)


def grid(n, L1=1.0, L2=1.0, ny=None):
    return GridSpec(Geometry(L1, L2), n, n if ny is None else ny)


def random_state(g, rng, scale=1.0):
    st_ = PlateState.zeros(g)
    for a in st_.fields():
        a[1:-1, 1:-1] = scale * rng.standard_normal((g.nx, g.ny))
    return st_


# --- spatial operator ------------------------------------------------------

def test_forces_match_energy_hessian():
    params = PlateParams(1.3, 0.7, 1.1, 2.0, 0.27)
    g = grid(4, 1.0, 1.4, ny=3)
    S, M = energy_matrices(params, g, energy)
    rng = np.random.default_rng(1)
    s = random_state(g, rng)
    u = pack(s)[: S.shape[0]]
    f = np.concatenate([a.ravel() for a in forces(s.w, s.psi, s.phi, params, g)])
    cell = g.dx * g.dy
    assert np.allclose(f * cell, -S @ u, rtol=1e-11, atol=1e-11)
    assert np.allclose(M[: g.nx * g.ny], params.rho1 * cell)
    assert np.allclose(M[g.nx * g.ny:], params.rho2 * cell)


def test_sparse_assembly_matches_stencils():
    params = PlateParams(1.0, 2.0, 1.5, 3.0, 0.2)
    g = grid(6, 1.0, 0.8, ny=5)
    S = assemble_stiffness(params, g)
    assert abs(S - S.T).max() < 1e-9 * abs(S).max()
    s = random_state(g, np.random.default_rng(2))
    u = state_to_vector(s)[: S.shape[0]]
    f = np.concatenate([a.ravel() for a in forces(s.w, s.psi, s.phi, params, g)])
    assert np.allclose(S @ u, -f, rtol=1e-11, atol=1e-10)
    assert mass_diagonal(params, g).shape == (S.shape[0],)


def test_vector_round_trip():
    g = grid(5)
    s = random_state(g, np.random.default_rng(3))
    back = vector_to_state(state_to_vector(s), g)
    for name in FIELDS:
        assert np.array_equal(getattr(back, name), getattr(s, name))


def test_truncation_error_second_order():
    params = PlateParams(1.0, 1.0, 1.3, 2.0, 0.3)
    pi = math.pi

    def err(n):
        g = grid(n, 1.0, 1.5)
        X, Y = g.coords()
        a, b = pi, pi / 1.5
        w = np.sin(a * X) * np.sin(b * Y)
        psi = 0.7 * np.sin(2 * a * X) * np.sin(b * Y)
        phi = -0.4 * np.sin(a * X) * np.sin(2 * b * Y)
        D, K, mu = params.D, params.K, params.mu
        w_x, w_y = a * np.cos(a * X) * np.sin(b * Y), b * np.sin(a * X) * np.cos(b * Y)
        psi_x = 1.4 * a * np.cos(2 * a * X) * np.sin(b * Y)
        phi_y = -0.8 * b * np.sin(a * X) * np.cos(2 * b * Y)
        psi_xy = 1.4 * a * b * np.cos(2 * a * X) * np.cos(b * Y)
        phi_xy = -0.8 * a * b * np.cos(a * X) * np.cos(2 * b * Y)
        fw = K * (-(a * a + b * b) * w + psi_x + phi_y)
        fpsi = (-D * 4 * a * a * psi - 0.5 * D * (1 - mu) * b * b * psi
                + 0.5 * D * (1 + mu) * phi_xy - K * (w_x + psi))
        fphi = (-D * 4 * b * b * phi - 0.5 * D * (1 - mu) * a * a * phi
                + 0.5 * D * (1 + mu) * psi_xy - K * (w_y + phi))
        I = (slice(1, -1), slice(1, -1))
        got = forces(w, psi, phi, params, g)
        return max(np.abs(x - y[I]).max() for x, y in zip(got, (fw, fpsi, fphi)))

    e = np.array([err(n) for n in (15, 31, 63)])
    assert np.all(np.log2(e[:-1] / e[1:]) > 1.95)


# --- energy and inner product ---------------------------------------------

def test_energy_examples():
    g = grid(9)
    assert energy(PlateState.zeros(g), UNIT) == 0.0
    params = PlateParams(2.0, 1.0, 1.0, 1.0, 0.3)
    vals = []
    for n in (9, 39, 159):
        s = PlateState.zeros(grid(n, 1.0, 2.0))
        s.wt[1:-1, 1:-1] = 1.0
        vals.append(energy(s, params))
    errs = np.abs(np.array(vals) - 0.5 * 2.0 * 2.0)
    assert errs[-1] < 0.03 and np.all(np.diff(errs) < 0)


@pytest.mark.parametrize("mu", [0.1, 0.25, 0.49])
def test_energy_positive(mu):
    params = PlateParams(1.0, 1.0, 1.0, 1.0, mu)
    g = grid(6)
    rng = np.random.default_rng(int(mu * 100))
    for _ in range(1000):
        s = random_state(g, rng, scale=rng.uniform(0.01, 10))
        assert energy(s, params) >= 0
    S, _ = energy_matrices(params, g, energy)
    assert np.linalg.eigvalsh(S).min() > 0


def test_inner_product():
    g = grid(7)
    rng = np.random.default_rng(5)
    U, V = random_state(g, rng), random_state(g, rng)
    assert h_inner_product(U, PlateState.zeros(g), UNIT) == 0.0
    assert h_inner_product(U, V, UNIT) == pytest.approx(h_inner_product(V, U, UNIT), rel=1e-13)
    assert h_inner_product(U, U, UNIT) == pytest.approx(2 * energy(U, UNIT), rel=1e-12)
    with pytest.raises(InputError):
        h_inner_product(U, PlateState.zeros(grid(8)), UNIT)


def test_dissipation_rate_examples():
    g = grid(9)
    s = PlateState.zeros(g)
    assert dissipation_rate(s, (CUBIC, CUBIC)) == 0.0
    s.psit[1:-1, 1:-1] = 1.0
    assert dissipation_rate(s, (NONE, NONE)) == 0.0
    vals = []
    for n in (9, 39, 159):
        s = PlateState.zeros(grid(n, 2.0, 1.0))
        s.psit[1:-1, 1:-1] = 1.0
        vals.append(dissipation_rate(s, (CUBIC, NONE)))
    errs = np.abs(np.array(vals) + 2.0)
    assert errs[-1] < 0.03 and np.all(np.diff(errs) < 0)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30)
def test_dissipation_rate_nonpositive(seed):
    s = random_state(grid(5), np.random.default_rng(seed), scale=3.0)
    assert dissipation_rate(s, (CUBIC, FeedbackLaw.linear(2.0))) <= 0


# --- generator -------------------------------------------------------------

def test_generator_dissipativity():
    rep = generator_dissipativity_check(UNIT, grid(9), n_trials=100)
    assert rep.holds and rep.n_trials == 100
    assert rep.max_normalized <= rep.tol
    with pytest.raises(ParameterError):
        generator_dissipativity_check(UNIT, grid(9), n_trials=5)


def test_generator_quadratic_form_sign_flip():
    g = grid(5)
    A = assemble_generator(UNIT, g)
    s = random_state(g, np.random.default_rng(7))
    AU = vector_to_state(A @ state_to_vector(s), g)
    AmU = vector_to_state(A @ state_to_vector(s.scaled(-1.0)), g)
    q1 = h_inner_product(AU, s, UNIT)
    q2 = h_inner_product(AmU, s.scaled(-1.0), UNIT)
    assert q1 == pytest.approx(q2, abs=1e-12)
    zero = PlateState.zeros(g)
    Az = vector_to_state(A @ state_to_vector(zero), g)
    assert h_inner_product(Az, zero, UNIT) == 0.0


def test_damped_generator_dissipates():
    g = grid(5)
    n = 3 * g.nx * g.ny
    damp = np.concatenate([np.zeros(g.nx * g.ny), np.full(2 * g.nx * g.ny, 0.5)])
    A = assemble_generator(UNIT, g, damping=damp)
    s = random_state(g, np.random.default_rng(8))
    AU = vector_to_state(A @ state_to_vector(s), g)
    assert h_inner_product(AU, s, UNIT) < 0
    assert A.shape == (2 * n, 2 * n)


# --- initial data ----------------------------------------------------------

def test_assemble_initial():
    g = grid(9)
    z = assemble_initial(g, {})
    assert energy(z, UNIT) == 0.0
    s = assemble_initial(g, {"w": [(1, 1, 1.0)]})
    assert s.boundary_is_zero() and s.w.max() > 0.9
    sym = assemble_initial(g, {"w": [(1, 2, 1.0), (2, 1, 1.0)], "psi": [(1, 1, 0.3)],
                               "phi": [(1, 1, 0.3)], "psit": [(2, 3, 0.1)],
                               "phit": [(3, 2, 0.1)]})
    sw = sym.swapped()
    for name in FIELDS:
        assert np.allclose(getattr(sw, name), getattr(sym, name), atol=1e-14)
    with pytest.raises(ParameterError):
        assemble_initial(g, {"w": [(0, 1, 1.0)]})
    with pytest.raises(ParameterError):
        assemble_initial(g, {"w": [(1.5, 1, 1.0)]})
    with pytest.raises(ParameterError):
        assemble_initial(g, {"theta": [(1, 1, 1.0)]})


# --- time stepping ---------------------------------------------------------

def test_zero_state_is_fixed_point():
    g = grid(7)
    out = step(PlateState.zeros(g), UNIT, (CUBIC, CUBIC), SimConfig(t_end=1.0))
    assert all(not a.any() for a in out.fields())


def test_step_does_not_modify_input():
    g = grid(7)
    s = assemble_initial(g, {"w": [(1, 1, 1.0)]})
    before = s.copy()
    out = step(s, UNIT, (CUBIC, CUBIC), SimConfig(t_end=1.0))
    assert np.array_equal(s.w, before.w) and not np.array_equal(out.wt, s.wt)
    assert out.boundary_is_zero()


def test_undamped_1000_steps():
    g = grid(17)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)]})
    cfg = SimConfig(t_end=1000 * 0.25 * g.cfl_limit(UNIT), cfl_factor=0.25)
    _, tr = simulate(s0, UNIT, (NONE, NONE), cfg)
    t, E, D = tr.arrays()
    assert len(tr) == 1001
    assert np.max(np.abs(E - E[0])) / E[0] <= 1e-6
    assert not D.any()
    assert dissipation_residual(tr) == pytest.approx(np.max(np.abs(E - E[0])) / E[0])


def test_leapfrog_energy_is_conserved_to_roundoff():
    g = grid(9)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)], "psit": [(1, 2, 0.5)]})
    cfg = SimConfig(t_end=2.0, cfl_factor=0.6)
    s, tr = simulate(s0, UNIT, (NONE, NONE), cfg)
    assert np.ptp(tr.E) / tr.E[0] < 1e-12
    assert discrete_energy(s, UNIT, tr.dt) == pytest.approx(tr.E[-1], rel=1e-15)


def test_zero_data_residual():
    g = grid(5)
    _, tr = simulate(PlateState.zeros(g), UNIT, (CUBIC, CUBIC), SimConfig(t_end=0.1))
    assert dissipation_residual(tr) == 0.0


def test_dissipation_residual_is_second_order():
    g = grid(9)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)], "psit": [(1, 1, 0.5)]})
    res = []
    for dt in (0.01, 0.005):
        _, tr = simulate(s0, UNIT, (CUBIC, CUBIC), SimConfig(t_end=2.0, dt=dt))
        res.append(dissipation_residual(tr))
    assert res[0] < 1e-4
    assert 3.5 <= res[0] / res[1] <= 4.5


def test_monotone_decay():
    g = grid(17)
    s0 = assemble_initial(g, {"w": [(1, 1, 2.0)], "psi": [(2, 1, 0.3)], "phit": [(1, 2, 1.5)]})
    _, tr = simulate(s0, UNIT, (CUBIC, FeedbackLaw.linear(0.5)), SimConfig(t_end=5.0))
    E = np.asarray(tr.E)
    assert np.all(np.diff(E) <= 1e-8 * E[0])
    assert E[-1] < E[0]


def test_swap_symmetry():
    g = grid(11)
    params = PlateParams(1.0, 2.0, 3.0, 1.5, 0.3)
    s0 = assemble_initial(g, {"w": [(1, 2, 1.0), (2, 1, 1.0)], "psi": [(1, 1, 0.4)],
                              "phi": [(1, 1, 0.4)], "psit": [(1, 3, 0.7)],
                              "phit": [(3, 1, 0.7)]})
    worst = []

    def check(s):
        sw = s.swapped()
        worst.append(max(np.abs(getattr(sw, n) - getattr(s, n)).max() for n in FIELDS))

    simulate(s0, params, (CUBIC, CUBIC), SimConfig(t_end=3.0, output_stride=5), callback=check)
    assert worst and max(worst) <= 1e-10


def test_spatial_convergence_of_energy():
    spec = {"w": [(1, 1, 1.0)], "psi": [(1, 2, 0.5)], "phit": [(2, 1, 0.5)]}
    E = []
    for n in (7, 15, 31, 63):
        g = grid(n)
        _, tr = simulate(assemble_initial(g, spec), UNIT, (CUBIC, CUBIC),
                         SimConfig(t_end=0.5, dt=0.5 / 800))
        E.append(tr.E[-1])
    E = np.array(E)
    ref = E[-1] + (E[-1] - E[-2]) / 3.0
    err = np.abs(E[:-1] - ref)
    orders = np.log2(err[:-1] / err[1:])
    assert np.all(orders >= 1.95), orders


def test_linear_damping_matches_matrix_exponential():
    g = grid(5)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)], "psi": [(2, 1, 0.5)], "phit": [(1, 2, 0.8)]})
    law = FeedbackLaw.linear(1.0)
    got, times = [], []
    simulate(s0, UNIT, (law, law), SimConfig(t_end=1.0, dt=1e-4, output_stride=1000),
             callback=lambda s: (got.append(pack(s)), times.append(s.t)))
    ref = linear_damping_reference(UNIT, g, energy, 1.0, s0, times)
    assert len(got) == 10
    assert max(np.abs(a - b).max() for a, b in zip(got, ref)) <= 1e-6


# --- configuration, stability and I/O --------------------------------------

def test_cfl_and_stability():
    g = grid(17)
    cfg = SimConfig(t_end=1.0)
    dt = cfg.resolve_dt(UNIT, g)
    assert dt <= 0.25 * g.cfl_limit(UNIT)
    assert cfg.n_steps(dt) * dt == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        SimConfig(t_end=1.0, dt=0.3 * g.cfl_limit(UNIT)).resolve_dt(UNIT, g)
    with pytest.raises(ParameterError):
        SimConfig(t_end=1.0, cfl_factor=1.5)
    assert max_stable_dt(UNIT, g) > g.cfl_limit(UNIT) * 0.5
    assert fundamental_period(UNIT, grid(33)) == pytest.approx(2 * math.pi / 3.671, rel=1e-3)


def test_unstable_dt_is_rejected():
    g = grid(9)
    dt = 0.9 * g.cfl_limit(UNIT)
    assert dt > max_stable_dt(UNIT, g)
    with pytest.raises(ParameterError):
        simulate(PlateState.zeros(g), UNIT, (NONE, NONE), SimConfig(t_end=1.0, dt=dt, cfl_factor=1.0))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    g = grid(5)
    s0 = assemble_initial(g, {"w": [(1, 1, 1e307)], "psi": [(1, 1, 1e307)]})
    with pytest.raises(DivergenceError) as exc:
        simulate(s0, UNIT, (NONE, NONE), SimConfig(t_end=0.5))
    assert exc.value.step >= 1
    bad = PlateState.zeros(g)
    bad.w[2, 2] = np.nan
    with pytest.raises(InputError):
        simulate(bad, UNIT, (NONE, NONE), SimConfig(t_end=0.5))


def test_integrator_reuses_cache_consistently():
    g = grid(9)
    s = assemble_initial(g, {"w": [(1, 1, 1.0)], "psit": [(1, 1, 0.9)]})
    integ = Integrator(UNIT, (CUBIC, CUBIC), 0.01)
    a = s.copy()
    integ.step(a)
    assert integ.dissipation_rate(a) == pytest.approx(dissipation_rate(a, (CUBIC, CUBIC)),
                                                      rel=1e-14)
    b = step(s, UNIT, (CUBIC, CUBIC), SimConfig(t_end=1.0, dt=0.01))
    assert np.array_equal(a.psit, b.psit)


def test_trace_csv_round_trip(tmp_path):
    tr = EnergyTrace(dt=0.1)
    for k in range(5):
        tr.append(0.1 * k, 1.0 / (k + 1), 0.01 * k)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,E,D_integral"
    back = EnergyTrace.from_csv(path)
    assert back.t == tr.t and back.E == tr.E and back.D_integral == tr.D_integral


def test_snapshot_round_trip(tmp_path):
    g = grid(6, 1.0, 2.0, ny=4)
    s = random_state(g, np.random.default_rng(11))
    s.t = 1.25
    path = tmp_path / "snap.bin"
    dump_snapshot(s, path)
    assert path.stat().st_size == 6 * 8 * 8 * 6
    hdr = (tmp_path / "snap.bin.hdr").read_text()
    assert "nx 8" in hdr and "fields w psi phi wt psit phit" in hdr
    back = load_snapshot(path)
    assert back.t == 1.25 and back.grid == g
    for name in FIELDS:
        assert np.array_equal(getattr(back, name), getattr(s, name))
