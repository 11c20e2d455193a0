"""Command line entry point: simulate, envelope, verify, sweep.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 structural hypothesis violated.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import convexity as cvx
from .damping import HSpec, build_H, verify_H0, verify_H1
from .errors import (ConfigError, HypothesisViolation, InputError, ParameterError,
                     PlateDecayError)
from .harness import (ExperimentConfig, Report, base_report, envelope_section, load_sweep_dir,
                      run_experiment, run_simulation, sweep)
from .solver import EnergyTrace, generator_dissipativity_check

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_HYPOTHESIS = 0, 1, 2, 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, HypothesisViolation):
        return EXIT_HYPOTHESIS
    if isinstance(exc, (ConfigError, ParameterError, InputError)):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def _emit(report: Report, as_json: bool) -> None:
    print(report.to_json() if as_json else report.to_text())


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig.from_yaml(args.config)
    _emit(run_experiment(cfg), args.json)
    return EXIT_OK


def cmd_envelope(args) -> int:
    cfg = ExperimentConfig.from_yaml(args.config)
    if not cfg.damped:
        raise ConfigError("envelope needs a damped configuration", module="cli")
    trace_path = args.trace or cfg.trace_csv
    if trace_path and Path(trace_path).exists():
        trace = EnergyTrace.from_csv(trace_path)
        if len(trace) > 1:
            trace.dt = float(trace.t[1] - trace.t[0])
    else:
        trace, _ = run_simulation(cfg)
    report = base_report(cfg, trace)
    envelope_section(cfg, trace, report)
    _emit(report, args.json)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Structural checks for one configuration; prints one line per check."""
    cfg = ExperimentConfig.from_yaml(args.config)
    law = cfg.law()
    results = []  # (name, ok, is_hypothesis, detail)
    if law.active:
        rep = verify_H0(law)
        results.append(("H0 growth sandwich", rep.holds, True, rep.first_violation or ""))
        if law.p > 1:
            H = build_H(HSpec(law, cfg.r0), check=False)
            rep = verify_H1(H)
            results.append(("H1 strict convexity", rep.holds, True, rep.first_violation or ""))
            if rep.holds:
                try:
                    val = cvx.check_lambda_limsup(H)
                    results.append(("Lambda_H limsup < 1", True, True, f"{val:.6g}"))
                except PlateDecayError as exc:
                    results.append(("Lambda_H limsup < 1", False, True, str(exc)))
                rng = np.random.default_rng(cfg.seed)
                y = rng.uniform(0.0, H.dH_end, 200)[1:]
                err_L = np.max(np.abs(cvx.L_inverse(H, cvx.L_eval(H, y)) - y) / y)
                x = 1.0 / H.dH_end + rng.uniform(0.0, 10.0, 200)
                err_p = np.max(np.abs(cvx.psi0(H, cvx.psi0_inverse(H, x)) - x) / x)
                results.append(("round trips", max(err_L, err_p) <= 1e-8, False,
                                f"{max(err_L, err_p):.3g}"))
        else:
            results.append(("H1 strict convexity", False, True, "linear growth gives affine H"))
    diss = generator_dissipativity_check(cfg.plate_params(), cfg.grid(), n_trials=args.trials,
                                         seed=cfg.seed)
    results.append(("generator dissipativity", diss.holds, False,
                    f"max normalized {diss.max_normalized:.3g} <= {diss.tol:.3g}"))
    for name, ok, _, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    if any(not ok and hyp for _, ok, hyp, _ in results):
        return EXIT_HYPOTHESIS
    if any(not ok for _, ok, _, _ in results):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = load_sweep_dir(args.config_dir)
    out = args.out or str(Path(args.config_dir) / "sweep.csv")
    rows = sweep(configs, out_csv=out, workers=args.workers)
    for row in rows:
        status = row["error"] or "ok"
        print(f"{row['name']}: slope={row['fitted_slope']} theory={row['theoretical_slope']} "
              f"sigma={row['calibrated_sigma']} [{status}]")
    print(f"table written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platedecay",
                                 description="Damped Mindlin-Timoshenko plate experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment and print its report")
    p.add_argument("config")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("envelope", help="evaluate the decay envelope against a trace")
    p.add_argument("config")
    p.add_argument("--trace", help="existing trace CSV (default: the config's trace_csv)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("verify", help="hypothesis and discretization checks")
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run every config in a directory")
    p.add_argument("config_dir")
    p.add_argument("--out", help="output CSV (default: <config_dir>/sweep.csv)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel runs (default: PLATEDECAY_THREADS or 1)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlateDecayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
