"""Acceptance criteria; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from oracles import linear_damping_reference, pack
from platedecay import convexity as cvx
from platedecay.convexity import HFunction
from platedecay.damping import FeedbackLaw, HSpec, build_H, verify_H0, verify_H1
from platedecay.harness import ExperimentConfig, run_experiment
from platedecay.model import Geometry, GridSpec, PlateParams
from platedecay.solver import (SimConfig, assemble_initial, dissipation_residual, energy,
                               fundamental_period, generator_dissipativity_check, simulate)

UNIT = PlateParams(1.0, 1.0, 1.0, 1.0, 0.3)
NONE = FeedbackLaw.none()


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} [{label}] {detail}")
        assert ok, detail
    return emit


def test_c1_undamped_conservation(verdict):
    t0 = time.perf_counter()
    g = GridSpec(Geometry(), 33, 33)
    T = fundamental_period(UNIT, g)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)]})
    _, tr = simulate(s0, UNIT, (NONE, NONE), SimConfig(t_end=10 * T, cfl_factor=0.25))
    E = np.asarray(tr.E)
    drift = float(np.max(np.abs(E - E[0])) / E[0])
    elapsed = time.perf_counter() - t0
    verdict("1 conservation", drift <= 1e-6 and elapsed <= 10.0,
            f"drift {drift:.2e} <= 1e-6 over 10 periods, {elapsed:.2f} s <= 10 s")


def test_c2_dissipation_identity(verdict):
    g = GridSpec(Geometry(), 17, 17)
    law = FeedbackLaw.power(3.0)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)], "psit": [(1, 1, 0.5)], "phi": [(2, 1, 0.2)]})
    dt = 0.25 * g.cfl_limit(UNIT)
    res = []
    for h in (dt, dt / 2):
        _, tr = simulate(s0, UNIT, (law, law), SimConfig(t_end=2.0, dt=h))
        res.append(dissipation_residual(tr))
    ratio = res[0] / res[1]
    verdict("2 dissipation identity", res[0] <= 1e-4 and 3.5 <= ratio <= 4.5,
            f"residual {res[0]:.2e} <= 1e-4, halving ratio {ratio:.3f} in [3.5, 4.5]")


def test_c3_generator_dissipativity(verdict):
    t0 = time.perf_counter()
    rep = generator_dissipativity_check(UNIT, GridSpec(Geometry(), 9, 9), n_trials=100)
    elapsed = time.perf_counter() - t0
    verdict("3 generator dissipativity", rep.max_normalized <= 1e-10 and elapsed <= 1.0,
            f"max (AU,U)/(U,U) {rep.max_normalized:.2e} <= 1e-10 over 100 states, "
            f"{elapsed:.3f} s <= 1 s")


def test_c4_convexity_oracle(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(4)
    for p in (2.0, 3.0, 5.0):
        q = (p + 1) / 2
        H = HFunction.power(p).without_closed_form()
        y = rng.uniform(1e-3, 2 * q, 100)
        xs = np.minimum((y / q) ** (1 / (q - 1)), 1.0)
        conj = xs * y - xs**q
        z = rng.uniform(1e-3, 0.999, 100)
        knee = (q - 1) / q
        Linv = np.where(z <= knee, q * (np.minimum(z, knee) * q / (q - 1)) ** (q - 1),
                        1 / (1 - z))
        x = rng.uniform(1e-4, 1.0, 100)
        u = 1 / q + rng.uniform(0.0, 20.0, 100)
        pairs = [(cvx.h_conjugate(H, y), conj), (cvx.L_eval(H, y), conj / y),
                 (cvx.L_inverse(H, z), Linv), (cvx.lambda_H(H, x), np.full(100, 1 / q)),
                 (cvx.psi0(H, u), 1 / q + q / (q - 1) * (u - 1 / q)),
                 (cvx.psi0_inverse(H, u), 1 / q + (q - 1) / q * (u - 1 / q))]
        for got, want in pairs:
            worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    elapsed = time.perf_counter() - t0
    verdict("4 convexity oracle", worst <= 1e-6 and elapsed <= 1.0,
            f"max relative error {worst:.2e} <= 1e-6 (p = 2, 3, 5; 6 x 100 points), "
            f"{elapsed:.3f} s <= 1 s")


def test_c5_envelope_shape(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(name="envelope-shape", nx=65, ny=65, feedback="power", p=3.0,
                           c=60.0, t_end=1200.0, cfl_factor=0.5, output_stride=20,
                           init_w=[[1, 1, 4.0]])
    rep = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    drop = rep.E_final / rep.E0
    rel = abs(rep.fitted_slope - rep.theoretical_slope) / abs(rep.theoretical_slope)
    ok = (rep.equal_speed and drop <= 1e-3 and rel <= 0.2 and rep.bound_holds
          and elapsed <= 300.0)
    verdict("5 envelope shape", ok,
            f"drop {drop:.2e} <= 1e-3, slope {rep.fitted_slope:.4f} within {rel:.1%} of -1, "
            f"sigma {rep.sigma:.4g}, bound on {rep.n_bound_samples} samples: "
            f"{rep.bound_holds}, {elapsed:.0f} s <= 300 s")


def test_c6_round_trips(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    for H in (HFunction.power(2.0), HFunction.power(3.0), HFunction.power(5.0),
              HFunction.power(3.0).without_closed_form()):
        y = rng.uniform(1e-6, 3 * H.dH_end, 1000)
        worst = max(worst, float(np.max(np.abs(cvx.L_inverse(H, cvx.L_eval(H, y)) - y) / y)))
        x = 1 / H.dH_end + rng.uniform(0.0, 100.0, 1000)
        back = cvx.psi0_inverse(H, cvx.psi0(H, x))
        worst = max(worst, float(np.max(np.abs(back - x) / x)))
    verdict("6 round trips", worst <= 1e-8, f"max relative error {worst:.2e} <= 1e-8")


def test_c7_linear_damping_oracle(verdict):
    g = GridSpec(Geometry(), 5, 5)
    s0 = assemble_initial(g, {"w": [(1, 1, 1.0)], "psi": [(2, 1, 0.5)], "phit": [(1, 2, 0.8)]})
    law = FeedbackLaw.linear(1.0)
    got, times = [], []
    simulate(s0, UNIT, (law, law), SimConfig(t_end=1.0, dt=1e-4, output_stride=100),
             callback=lambda s: (got.append(pack(s)), times.append(s.t)))
    ref = linear_damping_reference(UNIT, g, energy, 1.0, s0, times)
    err = max(float(np.max(np.abs(a - b))) for a, b in zip(got, ref))
    verdict("7 linear-damping oracle", err <= 1e-6 and len(got) == 100,
            f"max field error {err:.2e} <= 1e-6 at {len(got)} times in (0, 1]")


def test_c8_hypothesis_gates(verdict):
    h0_family = all(verify_H0(FeedbackLaw.power(p)).holds for p in (1.0, 2.0, 3.0, 5.0))
    dip = FeedbackLaw.tabulated([0.0, 0.5, 0.6, 1.0, 2.0], [0.0, 0.4, 0.2, 1.0, 2.0])
    h0_dip = verify_H0(dip)
    affine = HFunction(H=lambda x: np.asarray(x, dtype=float), dH=lambda x: np.ones_like(x))
    h1_affine = verify_H1(affine)
    h1_power = all(verify_H1(build_H(HSpec(FeedbackLaw.power(p)), check=False)).holds
                   for p in (2.0, 3.0, 5.0))
    ok = h0_family and not h0_dip.holds and not h1_affine.holds and h1_power
    verdict("8 hypothesis gates", ok,
            f"H0 family accepted {h0_family}, dip rejected {not h0_dip.holds} "
            f"({h0_dip.first_violation}); H1 affine rejected {not h1_affine.holds}, "
            f"p = 2, 3, 5 accepted {h1_power}")
