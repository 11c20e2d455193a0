"""Physical parameters, rectangle geometry, grid and state containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError, ParameterError

FIELDS = ("w", "psi", "phi", "wt", "psit", "phit")


def _check_mu(mu: float) -> None:
    if not (0.0 < mu < 0.5):
        raise ParameterError(f"Poisson ratio must satisfy 0 < mu < 1/2, got {mu}", module="model")


def derive_moduli(E: float, h: float, mu: float, k: float) -> tuple[float, float]:
    """Flexural rigidity and shear modulus from Young's modulus, thickness,
    Poisson ratio and shear correction.

    D = E h^3 / (12 (1 - mu^2)),  K = k E h / (2 (1 + mu))
    """
    _check_mu(mu)
    for name, val in (("E", E), ("h", h), ("k", k)):
        if not (val > 0 and math.isfinite(val)):
            raise ParameterError(f"{name} must be positive and finite, got {val}", module="model")
    D = E * h**3 / (12.0 * (1.0 - mu**2))
    K = k * E * h / (2.0 * (1.0 + mu))
    return D, K


@dataclass(frozen=True)
class PlateParams:
    rho1: float
    rho2: float
    D: float
    K: float
    mu: float
    E_young: Optional[float] = None
    h_thickness: Optional[float] = None
    k_shear_correction: Optional[float] = None

    def __post_init__(self):
        for name in ("rho1", "rho2", "D", "K"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ParameterError(f"{name} must be positive and finite, got {val}", module="model")
        _check_mu(self.mu)
        raw = (self.E_young, self.h_thickness, self.k_shear_correction)
        if any(r is not None for r in raw):
            if any(r is None for r in raw):
                raise ParameterError("raw inputs E_young, h_thickness, k_shear_correction "
                                     "must be given together", module="model")
            D, K = derive_moduli(self.E_young, self.h_thickness, self.mu, self.k_shear_correction)
            if abs(D - self.D) > 1e-12 * abs(D) or abs(K - self.K) > 1e-12 * abs(K):
                raise ParameterError(f"D={self.D}, K={self.K} inconsistent with raw inputs "
                                     f"(expected D={D}, K={K})", module="model")

    @classmethod
    def from_raw(cls, rho1: float, rho2: float, E: float, h: float, mu: float,
                 k: float) -> "PlateParams":
        D, K = derive_moduli(E, h, mu, k)
        return cls(rho1, rho2, D, K, mu, E_young=E, h_thickness=h, k_shear_correction=k)

    @property
    def c_max(self) -> float:
        """Largest characteristic speed of the principal part, used by the CFL bound."""
        return max(math.sqrt(self.K / self.rho1), math.sqrt(self.D / self.rho2),
                   math.sqrt(self.D * (1.0 - self.mu) / (2.0 * self.rho2)))


def wave_speeds(params: PlateParams) -> tuple[float, float]:
    """Return (v1^2, v2^2) = (K/rho1, D/rho2)."""
    return params.K / params.rho1, params.D / params.rho2


def equal_speed_check(params: PlateParams, rel_tol: float = 1e-9) -> bool:
    v1, v2 = wave_speeds(params)
    return abs(v1 - v2) <= rel_tol * max(v1, v2)


@dataclass(frozen=True)
class Geometry:
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0):
            raise ParameterError(f"rectangle sides must be positive, got {self.L1}, {self.L2}",
                                 module="model")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``nx * ny`` interior nodes; boundary nodes are implicit zeros
    stored in a one-node frame around the interior."""

    geometry: Geometry
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ParameterError(f"need at least 3x3 interior nodes, got {self.nx}x{self.ny}",
                                 module="model")

    @property
    def dx(self) -> float:
        return self.geometry.L1 / (self.nx + 1)

    @property
    def dy(self) -> float:
        return self.geometry.L2 / (self.ny + 1)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape including the boundary frame; axis 0 is x, axis 1 is y."""
        return (self.nx + 2, self.ny + 2)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx + 2) * self.dx
        y = np.arange(self.ny + 2) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def cfl_limit(self, params: PlateParams) -> float:
        return min(self.dx, self.dy) / params.c_max


@dataclass
class PlateState:
    """Displacement/rotation fields and their velocities at time ``t``.

    All arrays have ``grid.shape``; the outer frame holds the Dirichlet boundary
    and is kept at zero.
    """

    grid: GridSpec
    w: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    wt: np.ndarray
    psit: np.ndarray
    phit: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in FIELDS:
            arr = getattr(self, name)
            if arr.shape != self.grid.shape:
                raise InputError(f"field {name} has shape {arr.shape}, grid needs {self.grid.shape}",
                                 module="model")

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "PlateState":
        return cls(grid, *(np.zeros(grid.shape) for _ in FIELDS), t=t)

    def fields(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in FIELDS)

    def copy(self) -> "PlateState":
        return replace(self, **{name: getattr(self, name).copy() for name in FIELDS})

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.fields())

    def boundary_is_zero(self) -> bool:
        for a in self.fields():
            if a[0, :].any() or a[-1, :].any() or a[:, 0].any() or a[:, -1].any():
                return False
        return True

    def swapped(self) -> "PlateState":
        """Mirror across the diagonal: (x, psi) <-> (y, phi). Needs a square grid."""
        if self.grid.nx != self.grid.ny:
            raise InputError("swap needs a square grid", module="model")
        return PlateState(self.grid, self.w.T.copy(), self.phi.T.copy(), self.psi.T.copy(),
                          self.wt.T.copy(), self.phit.T.copy(), self.psit.T.copy(), t=self.t)

    def scaled(self, a: float) -> "PlateState":
        return PlateState(self.grid, *(a * f for f in self.fields()), t=self.t)
