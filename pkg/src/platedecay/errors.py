"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
map it to an exit code and a readable provenance tag.
"""


class PlateDecayError(Exception):
    """Base class for all package errors."""

    module = "platedecay"

    def __init__(self, *args, module: str | None = None):
        super().__init__(*args)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ParameterError(PlateDecayError, ValueError):
    """A physical or numerical parameter is out of range."""


class InputError(PlateDecayError, ValueError):
    """A call received malformed input (non-finite value, grid mismatch...)."""


class DomainError(PlateDecayError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class HypothesisViolation(PlateDecayError):
    """A structural hypothesis on the feedback (monotonicity, convexity,
    growth classification) fails."""


class QuadratureError(PlateDecayError, ArithmeticError):
    """Adaptive quadrature could not reach the requested tolerance."""


class SolverError(PlateDecayError, ArithmeticError):
    """The pointwise damping solve failed to converge."""


class DivergenceError(SolverError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int, t: float):
        super().__init__(
            f"non-finite field values at step {step} (t={t:.6g})", module="solver"
        )
        self.step = step
        self.t = t


class CalibrationError(PlateDecayError):
    """No time scale on the scan grid makes the envelope dominate the trace."""


class FitError(PlateDecayError, ValueError):
    """Decay-exponent fit received unusable data."""


class ConfigError(PlateDecayError, ValueError):
    """Experiment configuration does not match the schema."""
