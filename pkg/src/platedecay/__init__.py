"""Energy decay of a Mindlin-Timoshenko plate with nonlinear rotational damping.

Modules
-------
model      plate parameters, geometry, grid and state containers
damping    feedback laws and the growth/convexity hypothesis checks
convexity  convex-conjugate machinery and the decay envelope
solver     finite-difference leapfrog integrator, discrete energy
harness    configuration, experiments, calibration, sweeps
"""

from .convexity import HFunction, envelope, simplified_envelope
from .damping import FeedbackLaw, HSpec, build_H, verify_H0, verify_H1
from .errors import PlateDecayError
from .harness import ExperimentConfig, Report, calibrate_sigma, fit_decay_exponent, run_experiment
from .model import Geometry, GridSpec, PlateParams, PlateState
from .solver import EnergyTrace, SimConfig, assemble_initial, energy, simulate

__all__ = [
    "EnergyTrace", "ExperimentConfig", "FeedbackLaw", "Geometry", "GridSpec", "HFunction",
    "HSpec", "PlateDecayError", "PlateParams", "PlateState", "Report", "SimConfig",
    "assemble_initial", "build_H", "calibrate_sigma", "energy", "envelope",
    "fit_decay_exponent", "run_experiment", "simplified_envelope", "simulate", "verify_H0",
    "verify_H1",
]
