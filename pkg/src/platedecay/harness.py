"""Experiment configuration, runs, envelope calibration and decay fits."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy import stats

from . import convexity as cvx
from .damping import FeedbackLaw, HSpec, build_H, growth_exponent
from .errors import (CalibrationError, ConfigError, FitError, InputError, ParameterError,
                     PlateDecayError)
from .model import FIELDS, Geometry, GridSpec, PlateParams, equal_speed_check, wave_speeds
from .solver import EnergyTrace, SimConfig, assemble_initial, dump_snapshot, simulate

BOUND_SLACK = 1e-9
SIGMA_MIN = 1e-6
SIGMA_MAX = 1e6
SIGMA_FACTOR = 1.05
THREADS_ENV = "PLATEDECAY_THREADS"
ENVELOPE_CONSTANTS = ("alpha2", "alpha3", "c3", "c4", "c5", "c6")


@dataclass
class ExperimentConfig:
    """Flat configuration; every key maps to one field below.

    Initial data are sine-mode lists ``init_<field>: [[m, n, amplitude], ...]``.
    With ``calibrate`` on, sigma is fitted to the trace and beta takes its
    smallest admissible value unless ``c3`` is given; with it off, all six
    multiplier constants are required.
    """

    name: str = "run"
    # plate
    rho1: float = 1.0
    rho2: float = 1.0
    D: float = 1.0
    K: float = 1.0
    mu: float = 0.3
    E_young: Optional[float] = None
    h_thickness: Optional[float] = None
    k_shear_correction: Optional[float] = None
    # geometry and grid
    L1: float = 1.0
    L2: float = 1.0
    nx: int = 33
    ny: int = 33
    # damping (the same law acts on both rotations)
    feedback: str = "power"
    p: float = 3.0
    c: float = 1.0
    c1: Optional[float] = None
    c2: Optional[float] = None
    linear_tail: bool = True
    table: Optional[str] = None
    r0: float = 1.0
    # time stepping
    t_end: float = 1.0
    dt: Optional[float] = None
    cfl_factor: float = 0.25
    damping_solver_tol: float = 1e-13
    output_stride: int = 1
    # initial data
    init_w: list = field(default_factory=list)
    init_psi: list = field(default_factory=list)
    init_phi: list = field(default_factory=list)
    init_wt: list = field(default_factory=list)
    init_psit: list = field(default_factory=list)
    init_phit: list = field(default_factory=list)
    # envelope
    calibrate: bool = True
    alpha2: Optional[float] = None
    alpha3: Optional[float] = None
    c3: Optional[float] = None
    c4: Optional[float] = None
    c5: Optional[float] = None
    c6: Optional[float] = None
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX
    # decay fit window, defaults to [t_end / 10, t_end]
    fit_t_lo: Optional[float] = None
    fit_t_hi: Optional[float] = None
    # outputs
    trace_csv: Optional[str] = None
    envelope_csv: Optional[str] = None
    report_path: Optional[str] = None
    snapshot_path: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        try:
            self.plate_params()
            self.grid()
            self.laws()
            self.sim_config()
        except ParameterError as exc:
            raise ConfigError(f"invalid configuration: {exc}", module="harness") from exc
        lo, hi = self.fit_window()
        if not (0 <= lo < hi <= self.t_end * (1 + 1e-12)):
            raise ConfigError(f"fit window [{lo}, {hi}] must lie inside [0, t_end]",
                              module="harness")
        if not self.calibrate and self.damped:
            missing = [k for k in ENVELOPE_CONSTANTS if getattr(self, k) is None]
            if missing:
                raise ConfigError(f"calibrate is off but constants are missing: {missing}",
                                  module="harness")
        if not (0 < self.sigma_min < self.sigma_max):
            raise ConfigError("need 0 < sigma_min < sigma_max", module="harness")
        for name in FIELDS:
            for mode in getattr(self, "init_" + name):
                if len(mode) != 3:
                    raise ConfigError(f"init_{name} entries must be [m, n, amplitude]",
                                      module="harness")

    # construction -----------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping", module="harness")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}", module="harness")
        data = dict(data)
        if base_dir is not None:
            for key in ("table", "trace_csv", "envelope_csv", "report_path", "snapshot_path"):
                if data.get(key) and not Path(data[key]).is_absolute():
                    data[key] = str(Path(base_dir) / data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc), module="harness") from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}", module="harness") from exc
        return cls.from_dict(data or {}, base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    # derived objects --------------------------------------------------------

    def plate_params(self) -> PlateParams:
        return PlateParams(self.rho1, self.rho2, self.D, self.K, self.mu, self.E_young,
                           self.h_thickness, self.k_shear_correction)

    def grid(self) -> GridSpec:
        return GridSpec(Geometry(self.L1, self.L2), int(self.nx), int(self.ny))

    def law(self) -> FeedbackLaw:
        c1 = self.c if self.c1 is None else self.c1
        c2 = self.c if self.c2 is None else self.c2
        if self.feedback == "none":
            return FeedbackLaw.none()
        if self.feedback == "linear":
            return FeedbackLaw.linear(self.c)
        if self.feedback == "power":
            return FeedbackLaw.power(self.p, self.c, linear_tail=self.linear_tail)
        if self.feedback == "tabulated":
            if not self.table:
                raise ParameterError("tabulated feedback needs a table path", module="harness")
            try:
                return FeedbackLaw.from_table_file(self.table, p=self.p, c1=c1, c2=c2)
            except (OSError, InputError) as exc:
                raise ParameterError(str(exc), module="harness") from exc
        return FeedbackLaw(kind=self.feedback)  # raises for unknown kinds

    def laws(self) -> tuple[FeedbackLaw, FeedbackLaw]:
        law = self.law()
        return law, law

    def sim_config(self) -> SimConfig:
        return SimConfig(t_end=self.t_end, dt=self.dt, cfl_factor=self.cfl_factor,
                         damping_solver_tol=self.damping_solver_tol,
                         output_stride=int(self.output_stride))

    def mode_spec(self) -> dict:
        return {name: [tuple(m) for m in getattr(self, "init_" + name)]
                for name in FIELDS if getattr(self, "init_" + name)}

    def fit_window(self) -> tuple[float, float]:
        lo = self.t_end / 10.0 if self.fit_t_lo is None else self.fit_t_lo
        hi = self.t_end if self.fit_t_hi is None else self.fit_t_hi
        return lo, hi

    def constants(self) -> dict:
        return {k: getattr(self, k) for k in ENVELOPE_CONSTANTS}

    @property
    def damped(self) -> bool:
        return self.feedback != "none"


@dataclass
class Report:
    """Outcome of one experiment. Optional sections are None when they do not apply."""

    name: str
    grid: str
    p: Optional[float]
    t_end: float
    dt: float
    n_samples: int
    equal_speed: bool
    speed_ratio: float
    E0: float
    E_final: float
    D_final: float
    dissipation_residual: float
    fitted_slope: Optional[float] = None
    fitted_stderr: Optional[float] = None
    fit_window: Optional[tuple] = None
    theoretical_slope: Optional[float] = None
    sigma: Optional[float] = None
    sigma_calibrated: bool = False
    beta: Optional[float] = None
    envelope_start: Optional[float] = None
    n_bound_samples: int = 0
    bound_holds: Optional[bool] = None
    max_bound_violation: Optional[float] = None
    lambda_limsup: Optional[float] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["fit_window"] is not None:
            d["fit_window"] = list(d["fit_window"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if val is None or (key == "notes" and not val):
                continue
            if key == "notes":
                lines.extend(f"note: {n}" for n in val)
                continue
            if isinstance(val, float):
                val = f"{val:.10g}"
            lines.append(f"{key}: {val}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# fitting and calibration


def fit_decay_exponent(trace: EnergyTrace, window: tuple[float, float]) -> tuple[float, float]:
    """Least-squares slope of log E against log t over ``window``; returns (slope, stderr)."""
    t, E, _ = trace.arrays()
    lo, hi = window
    sel = (t >= lo) & (t <= hi) & (t > 0)
    if sel.sum() < 20:
        raise FitError(f"need >= 20 samples in fit window [{lo}, {hi}], got {int(sel.sum())}",
                       module="harness")
    if np.any(E[sel] <= 0):
        raise FitError("nonpositive energy inside the fit window", module="harness")
    res = stats.linregress(np.log(t[sel]), np.log(E[sel]))
    return float(res.slope), float(res.stderr)


def _bound_check(t, E, H, beta, sigma):
    """(n_checked, max violation) of E <= envelope * (1 + slack) for t >= start."""
    start = cvx.envelope_start(H, sigma)
    sel = t >= start
    if not sel.any():
        return 0, 0.0
    env = np.asarray(cvx.envelope(H, beta, sigma, t[sel]), dtype=float)
    return int(sel.sum()), float(np.max(E[sel] - env * (1.0 + BOUND_SLACK)))


def sigma_grid(sigma_min: float = SIGMA_MIN, sigma_max: float = SIGMA_MAX,
               factor: float = SIGMA_FACTOR) -> np.ndarray:
    n = int(math.floor(math.log(sigma_max / sigma_min) / math.log(factor) + 1e-9))
    return sigma_min * factor ** np.arange(n + 1)


def calibrate_sigma(trace: EnergyTrace, H: cvx.HFunction, beta: float,
                    sigma_min: float = SIGMA_MIN, sigma_max: float = SIGMA_MAX,
                    factor: float = SIGMA_FACTOR) -> float:
    """Smallest sigma on the geometric grid for which E(t) <= envelope(t) at every
    sample with t >= sigma / H'(r0^2).

    The grid is scanned in order without assuming the envelope is monotone in
    sigma. A sigma whose validity range contains no sample does not qualify.
    """
    if beta <= 0:
        raise CalibrationError("beta must be positive", module="harness")
    t, E, _ = trace.arrays()
    if not np.all(np.isfinite(E)):
        raise CalibrationError("trace has non-finite energies", module="harness")
    for sigma in sigma_grid(sigma_min, sigma_max, factor):
        n, worst = _bound_check(t, E, H, beta, float(sigma))
        if n > 0 and worst <= 0:
            return float(sigma)
    raise CalibrationError(f"no sigma <= {sigma_max:g} bounds the trace", module="harness")


# ---------------------------------------------------------------------------
# experiments


def _write_envelope_csv(path, t, H, beta, sigma, simplified_ok: bool):
    start = cvx.envelope_start(H, sigma)
    ts = t[t >= start]
    env = np.asarray(cvx.envelope(H, beta, sigma, ts), dtype=float) if ts.size else ts
    simp = (np.asarray(cvx.simplified_envelope(H, beta, sigma, ts), dtype=float)
            if simplified_ok and ts.size else None)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,envelope,simplified_envelope\n")
        for i, tv in enumerate(ts):
            s = repr(float(simp[i])) if simp is not None else ""
            fh.write(f"{float(tv)!r},{float(env[i])!r},{s}\n")


def envelope_section(config: ExperimentConfig, trace: EnergyTrace, report: Report) -> None:
    """Fill the envelope fields of ``report`` (and write the envelope CSV)."""
    law = config.law()
    H = build_H(HSpec(law, config.r0))
    E0 = float(trace.E[0])
    if config.calibrate:
        beta = (cvx.beta_of(E0, config.c3, H) if config.c3 is not None
                else cvx.beta_threshold(E0, H))
        if beta <= 0:
            report.notes.append("zero initial energy: envelope comparison skipped")
            return
        sigma = calibrate_sigma(trace, H, beta, config.sigma_min, config.sigma_max)
        report.notes.append("sigma calibrated from the simulated trace, not from the "
                            "multiplier constants")
    else:
        beta = cvx.beta_of(E0, config.c3, H)
        sigma = cvx.sigma_of(config.constants(), H)
    t, E, _ = trace.arrays()
    n, worst = _bound_check(t, E, H, beta, sigma)
    try:
        limsup = cvx.check_lambda_limsup(H)
        simplified_ok = True
    except PlateDecayError:
        limsup = cvx.lambda_limsup(H)
        simplified_ok = False
    report.sigma = sigma
    report.sigma_calibrated = config.calibrate
    report.beta = beta
    report.envelope_start = cvx.envelope_start(H, sigma)
    report.n_bound_samples = n
    report.max_bound_violation = worst
    report.bound_holds = bool(worst <= 0)
    report.lambda_limsup = limsup
    if config.envelope_csv:
        _write_envelope_csv(config.envelope_csv, t, H, beta, sigma, simplified_ok)


def base_report(config: ExperimentConfig, trace: EnergyTrace) -> Report:
    from .solver import dissipation_residual

    params = config.plate_params()
    v1, v2 = wave_speeds(params)
    _, E, D = trace.arrays()
    return Report(
        name=config.name, grid=f"{config.nx}x{config.ny}",
        p=config.p if config.damped else None, t_end=config.t_end, dt=trace.dt,
        n_samples=len(trace), equal_speed=equal_speed_check(params), speed_ratio=v1 / v2,
        E0=float(E[0]), E_final=float(E[-1]), D_final=float(D[-1]),
        dissipation_residual=dissipation_residual(trace) if E[0] > 0 else 0.0)


def run_simulation(config: ExperimentConfig):
    """Simulate the configured plate; writes the trace CSV and snapshot if requested."""
    state0 = assemble_initial(config.grid(), config.mode_spec())
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        final, trace = simulate(state0, config.plate_params(), config.laws(), config.sim_config())
    if config.trace_csv:
        trace.to_csv(config.trace_csv)
    if config.snapshot_path:
        dump_snapshot(final, config.snapshot_path)
    return trace, [str(w.message) for w in caught]


def run_experiment(config: ExperimentConfig, trace: Optional[EnergyTrace] = None) -> Report:
    """Simulate (unless a trace is supplied), fit the decay exponent and compare
    the energy with the decay envelope on its validity range."""
    notes = []
    if trace is None:
        trace, notes = run_simulation(config)
    report = base_report(config, trace)
    report.notes.extend(notes)
    law = config.law()
    if law.active and report.E0 > 0:
        if law.p > 1:
            report.theoretical_slope = growth_exponent(law)
        window = config.fit_window()
        try:
            report.fitted_slope, report.fitted_stderr = fit_decay_exponent(trace, window)
            report.fit_window = window
        except FitError as exc:
            report.notes.append(f"decay fit skipped: {exc}")
        if law.p > 1:
            envelope_section(config, trace, report)
        else:
            report.notes.append("linear growth: H is affine, no convexity envelope")
    if config.report_path:
        Path(config.report_path).write_text(report.to_json() + "\n")
    return report


# ---------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = ("name", "p", "speed_ratio", "grid", "fitted_slope", "theoretical_slope",
                 "calibrated_sigma", "bound_holds", "error")


def _sweep_row(config: ExperimentConfig) -> dict:
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    params = config.plate_params()
    v1, v2 = wave_speeds(params)
    row.update(name=config.name, p=config.p, speed_ratio=v1 / v2,
               grid=f"{config.nx}x{config.ny}")
    if config.p > 1:
        row["theoretical_slope"] = -2.0 / (config.p - 1.0)
    try:
        rep = run_experiment(config)
    except PlateDecayError as exc:
        row["error"] = str(exc)
        return row
    if rep.fitted_slope is not None:
        row["fitted_slope"] = rep.fitted_slope
    if rep.sigma is not None and rep.sigma_calibrated:
        row["calibrated_sigma"] = rep.sigma
    if rep.bound_holds is not None:
        row["bound_holds"] = rep.bound_holds
    return row


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}",
                          module="harness") from exc
    return max(1, n)


def sweep(configs: Sequence[ExperimentConfig], out_csv=None, workers: Optional[int] = None):
    """Run independent experiments and tabulate them; a failing row records its
    error and the sweep continues. Rows keep the order of ``configs``."""
    if not configs:
        raise ConfigError("sweep needs at least one configuration", module="harness")
    workers = thread_count() if workers is None else workers
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, configs))
    else:
        rows = [_sweep_row(c) for c in configs]
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                                 for k, v in row.items()})
    return rows


def load_sweep_dir(path) -> list[ExperimentConfig]:
    """All ``*.yaml``/``*.yml`` configs in a directory, sorted by file name."""
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"{path} is not a directory", module="harness")
    files = sorted(list(path.glob("*.yaml")) + list(path.glob("*.yml")))
    if not files:
        raise ConfigError(f"no configuration files in {path}", module="harness")
    return [ExperimentConfig.from_yaml(f) for f in files]
