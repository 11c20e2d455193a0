"""Monotone damping laws and the structural checks on them.

The growth function g is always a power ``g(s) = |s|^{p-1} s`` (p = 1 for the
linear law). Power laws follow g for |s| <= 1 and, by default, continue
linearly beyond, so the two-sided linear bounds required for large
velocities hold globally. ``linear_tail=False`` gives the pure power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .convexity import HFunction
from .errors import HypothesisViolation, InputError, ParameterError

KINDS = ("none", "linear", "power", "tabulated")


@dataclass(frozen=True)
class FeedbackLaw:
    """Damping law chi together with its growth function g and sandwich constants."""

    kind: str = "power"
    p: float = 1.0
    c: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    linear_tail: bool = True
    table_s: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    table_chi: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown feedback kind {self.kind!r}; expected one of {KINDS}",
                                 module="damping")
        if self.kind == "none":
            return
        if self.kind == "linear" and self.p != 1.0:
            object.__setattr__(self, "p", 1.0)
        if not self.p >= 1.0:
            raise ParameterError(f"growth exponent must be >= 1, got {self.p}", module="damping")
        for name in ("c", "c1", "c2"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive", module="damping")
        if self.kind == "tabulated":
            if self.table_s is None or self.table_chi is None:
                raise ParameterError("tabulated law needs a table", module="damping")
            s = np.asarray(self.table_s, dtype=float)
            if s.ndim != 1 or s.size < 2 or s.size != np.size(self.table_chi):
                raise InputError("table needs two equal-length columns with >= 2 rows",
                                 module="damping")
            if np.any(np.diff(s) <= 0):
                raise InputError("table s-column must be strictly increasing", module="damping")

    @classmethod
    def none(cls) -> "FeedbackLaw":
        return cls(kind="none", c=0.0)

    @classmethod
    def power(cls, p: float, c: float = 1.0, linear_tail: bool = True) -> "FeedbackLaw":
        return cls(kind="power", p=p, c=c, c1=c, c2=c, linear_tail=linear_tail)

    @classmethod
    def linear(cls, c: float = 1.0) -> "FeedbackLaw":
        return cls(kind="linear", p=1.0, c=c, c1=c, c2=c)

    @classmethod
    def tabulated(cls, s, chi, p: float = 1.0, c1: float = 1.0, c2: float = 1.0) -> "FeedbackLaw":
        s = np.asarray(s, dtype=float)
        chi = np.asarray(chi, dtype=float)
        if s.size and s[0] >= 0:
            # half-table: extend oddly
            pos = s > 0
            origin = [0.0] if s[0] > 0 else []
            s = np.concatenate([-s[pos][::-1], origin, s])
            chi = np.concatenate([-chi[pos][::-1], origin, chi])
        return cls(kind="tabulated", p=p, c=1.0, c1=c1, c2=c2, table_s=s, table_chi=chi)

    @classmethod
    def from_table_file(cls, path, p: float = 1.0, c1: float = 1.0, c2: float = 1.0) -> "FeedbackLaw":
        """Read a two-column whitespace/comma separated table (s, chi(s))."""
        text = Path(path).read_text().replace(",", " ")
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        try:
            data = np.array(rows, dtype=float)
        except ValueError as exc:
            raise InputError(f"malformed feedback table {path}: {exc}", module="damping") from exc
        if data.ndim != 2 or data.shape[1] != 2:
            raise InputError(f"feedback table {path} must have two columns", module="damping")
        return cls.tabulated(data[:, 0], data[:, 1], p=p, c1=c1, c2=c2)

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def g(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.abs(s) ** self.p

    def g_inverse(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.abs(s) ** (1.0 / self.p)

    def chi(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "none":
            return np.zeros_like(s)
        if self.kind == "linear":
            return self.c * s
        if self.kind == "power":
            a = np.abs(s)
            pure = s * _power(a, self.p - 1.0)
            if not self.linear_tail:
                return self.c * pure
            return self.c * np.where(a <= 1.0, pure, s)
        return _interp_linear_extrap(s, self.table_s, self.table_chi)

    def dchi(self, s):
        """Derivative of chi (one-sided slope at table knots)."""
        return self.chi_and_slope(s)[1]

    def chi_and_slope(self, s):
        """(chi(s), chi'(s)) in one pass; used by the implicit velocity solve."""
        s = np.asarray(s, dtype=float)
        if self.kind == "none":
            return np.zeros_like(s), np.zeros_like(s)
        if self.kind == "linear":
            return self.c * s, np.full_like(s, self.c)
        if self.kind == "power":
            a = np.abs(s)
            ap = _power(a, self.p - 1.0)
            val = self.c * s * ap
            slope = (self.c * self.p) * ap
            if self.linear_tail:
                inside = a <= 1.0
                val = np.where(inside, val, self.c * s)
                slope = np.where(inside, slope, self.c)
            return val, slope
        ts, tc = self.table_s, self.table_chi
        slopes = np.diff(tc) / np.diff(ts)
        idx = np.clip(np.searchsorted(ts, s, side="right") - 1, 0, slopes.size - 1)
        return _interp_linear_extrap(s, ts, tc), slopes[idx]


def _power(a, k: float):
    """a**k for a >= 0, by repeated multiplication when k is a small integer."""
    if k == int(k) and 0 <= k <= 8:
        k = int(k)
        if k == 0:
            return np.ones_like(a)
        out = None
        base = a
        while k:
            if k & 1:
                out = base if out is None else out * base
            k >>= 1
            if k:
                base = base * base
        return out
    return a ** k


def _interp_linear_extrap(s, xs, ys):
    out = np.interp(s, xs, ys)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    out = np.where(s < xs[0], ys[0] + lo_slope * (s - xs[0]), out)
    return np.where(s > xs[-1], ys[-1] + hi_slope * (s - xs[-1]), out)


def chi_eval(law: FeedbackLaw, s):
    s_arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s_arr)):
        raise InputError("damping law evaluated at a non-finite velocity", module="damping")
    out = law.chi(s_arr)
    return float(out) if np.ndim(s) == 0 else out


@dataclass
class CheckReport:
    holds: bool
    witnesses: list[str]
    min_second_difference: Optional[float] = None

    @property
    def first_violation(self) -> Optional[str]:
        return self.witnesses[0] if self.witnesses else None


def _h0_samples(n_samples: int) -> np.ndarray:
    small = np.geomspace(1e-6, 1.0, n_samples)
    large = np.linspace(1.0, 10.0, n_samples)
    return np.unique(np.concatenate([small, large]))


def verify_H0(law: FeedbackLaw, n_samples: int = 1000, slack: float = 1e-12) -> CheckReport:
    """Check monotonicity, oddness, chi(0) = 0 and the growth sandwich

        c1 g(|s|) <= |chi(s)| <= c2 g^{-1}(|s|)   for |s| <= 1
        c1 |s|    <= |chi(s)| <= c2 |s|           for |s| >= 1

    on log-spaced samples in (0, 1] and linear samples in [1, 10].
    """
    if n_samples < 100:
        raise ParameterError("verify_H0 needs n_samples >= 100", module="damping")
    if not law.active:
        return CheckReport(False, ["law is identically zero"])
    s = _h0_samples(n_samples)
    both = np.concatenate([-s[::-1], [0.0], s])
    chi_both = law.chi(both)
    wit: list[str] = []

    zero = float(law.chi(np.array(0.0)))
    if zero != 0.0:
        wit.append(f"chi(0) = {zero} != 0")
    drops = np.nonzero(np.diff(chi_both) < 0)[0]
    if drops.size:
        i = drops[0]
        wit.append(f"not monotone: chi({both[i]:.6g}) = {chi_both[i]:.6g} > "
                   f"chi({both[i + 1]:.6g}) = {chi_both[i + 1]:.6g}")
    chi_pos = law.chi(s)
    chi_neg = law.chi(-s)
    odd_err = np.abs(chi_pos + chi_neg)
    bad = np.nonzero(odd_err > 1e-12 * (1.0 + np.abs(chi_pos)))[0]
    if bad.size:
        wit.append(f"not odd at s={s[bad[0]]:.6g}: chi(s)={chi_pos[bad[0]]:.6g}, "
                   f"chi(-s)={chi_neg[bad[0]]:.6g}")

    mag = np.abs(chi_pos)
    small = s <= 1.0
    lower = np.where(small, law.c1 * law.g(s), law.c1 * s)
    upper = np.where(small, law.c2 * law.g_inverse(s), law.c2 * s)
    lo_bad = np.nonzero(mag < lower * (1.0 - slack))[0]
    if lo_bad.size:
        i = lo_bad[0]
        wit.append(f"lower bound fails at s={s[i]:.6g}: |chi|={mag[i]:.6g} < {lower[i]:.6g}")
    hi_bad = np.nonzero(mag > upper * (1.0 + slack))[0]
    if hi_bad.size:
        i = hi_bad[0]
        wit.append(f"upper bound fails at s={s[i]:.6g}: |chi|={mag[i]:.6g} > {upper[i]:.6g}")
    return CheckReport(not wit, wit)


@dataclass(frozen=True)
class HSpec:
    law: FeedbackLaw
    r0: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.r0 <= 1.0):
            raise ParameterError(f"r0 must lie in (0, 1], got {self.r0}", module="damping")


def verify_H1(H: HFunction, n_samples: int = 1000) -> CheckReport:
    """Sampled strict convexity of H on [0, r0^2] via second differences."""
    if n_samples < 100:
        raise ParameterError("verify_H1 needs n_samples >= 100", module="damping")
    x = np.linspace(0.0, H.r0_sq, n_samples)
    h = np.asarray(H.H(x), dtype=float)
    d2 = h[:-2] - 2.0 * h[1:-1] + h[2:]
    tol = 1e-12 * float(np.max(np.abs(h)))
    min_d2 = float(d2.min())
    wit = []
    if not min_d2 > tol:
        i = int(np.argmin(d2))
        wit.append(f"second difference {min_d2:.3g} <= {tol:.3g} at x={x[i + 1]:.6g}")
    if abs(float(H.H(np.asarray(0.0)))) > 0:
        wit.append("H(0) != 0")
    return CheckReport(not wit, wit, min_second_difference=min_d2)


def build_H(spec: HSpec, check: bool = True) -> HFunction:
    """H(x) = sqrt(x) g(sqrt(x)) on [0, r0^2]; for g(s) = s^p this is x^((p+1)/2)."""
    law = spec.law
    if not law.active:
        raise HypothesisViolation("no growth function for an undamped law", module="damping")
    H = HFunction.power(law.p, spec.r0)
    if check:
        rep = verify_H1(H)
        if not rep.holds:
            raise HypothesisViolation(f"H is not strictly convex on [0, r0^2]: {rep.first_violation}",
                                      module="damping")
    return H


def growth_exponent(law: FeedbackLaw) -> float:
    """Theoretical log-log decay slope -2/(p-1) for power growth (p > 1)."""
    if law.p <= 1.0:
        return -math.inf
    return -2.0 / (law.p - 1.0)
