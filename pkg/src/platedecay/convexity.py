"""Optimal-weight convexity machinery for the energy decay envelopes.

Every routine accepts scalars or numpy arrays. When the ``HFunction`` is a
pure power ``H(x) = x**q`` the closed forms are used; ``without_closed_form()``
forces the generic path (bisection for inverses, adaptive Simpson for
integrals), which is what the oracle tests exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, HypothesisViolation, ParameterError
from .numerics import adaptive_simpson, invert_increasing

LAMBDA_MARGIN = 1e-3
LIMSUP_LEVELS = 40
QUAD_RTOL = 1e-9


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class HFunction:
    """Convex function H on [0, r0_sq] with its derivative.

    ``exponent`` is q when H(x) = x**q exactly (power feedback g(s) = s**p,
    q = (p + 1) / 2); it switches on the closed-form path.
    """

    H: Callable[[np.ndarray], np.ndarray]
    dH: Callable[[np.ndarray], np.ndarray]
    r0_sq: float = 1.0
    exponent: Optional[float] = None

    @property
    def has_closed_form(self) -> bool:
        return self.exponent is not None

    def without_closed_form(self) -> "HFunction":
        return replace(self, exponent=None)

    @classmethod
    def power(cls, p: float, r0: float = 1.0) -> "HFunction":
        """H(x) = sqrt(x) * g(sqrt(x)) for g(s) = s**p, i.e. H(x) = x**((p+1)/2)."""
        q = 0.5 * (p + 1.0)
        return cls(H=lambda x: np.power(x, q),
                   dH=lambda x: q * np.power(x, q - 1.0),
                   r0_sq=r0 * r0, exponent=q)

    @classmethod
    def from_g(cls, g: Callable, r0: float = 1.0, dg: Optional[Callable] = None) -> "HFunction":
        """Build H(x) = sqrt(x) g(sqrt(x)) from a generic growth function.

        Without ``dg`` the derivative is a centered difference with a step
        proportional to x (an absolute step would cross zero near the origin).
        """
        def H(x):
            s = np.sqrt(x)
            return s * g(s)

        if dg is not None:
            def dH(x):
                s = np.sqrt(x)
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = 0.5 * g(s) / s + 0.5 * dg(s)
                return np.where(s > 0, out, dg(s))
        else:
            def dH(x):
                x = np.asarray(x, dtype=float)
                h = 1e-6 * np.maximum(x, 1e-300)
                return (H(x + h) - H(x - h)) / (2.0 * h)
        return cls(H=H, dH=dH, r0_sq=r0 * r0)

    @property
    def dH_end(self) -> float:
        """H'(r0^2)."""
        return float(self.dH(np.asarray(self.r0_sq)))

    @property
    def H_end(self) -> float:
        return float(self.H(np.asarray(self.r0_sq)))

    def dH_inverse(self, y):
        """(H')^{-1}(y) for y >= 0; may leave [0, r0^2] when y > H'(r0^2)."""
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < 0):
            raise DomainError("(H')^{-1} needs y >= 0", module="convexity")
        if self.has_closed_form:
            q = self.exponent
            out = np.power(y_arr / q, 1.0 / (q - 1.0))
        else:
            flat = y_arr.ravel()
            out = np.zeros_like(flat)
            pos = flat > 0
            if pos.any():
                out[pos] = invert_increasing(self.dH, flat[pos], lo=0.0, hi=self.r0_sq)
            out = out.reshape(y_arr.shape)
        return _out(out, y)


def _positive_q(H: HFunction) -> float:
    q = H.exponent
    if q <= 1.0:
        raise HypothesisViolation(f"H(x)=x^{q} is not strictly convex", module="convexity")
    return q


def h_conjugate(H: HFunction, y):
    """Convex conjugate of H restricted to [0, r0^2]: sup_x (x y - H(x))."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise DomainError("conjugate evaluated at y < 0", module="convexity")
    x_star = np.minimum(np.asarray(H.dH_inverse(y_arr)), H.r0_sq)
    return _out(x_star * y_arr - H.H(x_star), y)


def L_eval(H: HFunction, y):
    """L(y) = H*(y)/y, L(0) = 0; increasing from [0, inf) onto [0, r0^2)."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise DomainError("L evaluated at y < 0", module="convexity")
    if H.has_closed_form:
        q = _positive_q(H)
        r2 = H.r0_sq
        inner = np.minimum(y_arr, H.dH_end)
        x_star = np.power(inner / q, 1.0 / (q - 1.0))
        tail = r2 - H.H_end / np.maximum(y_arr, H.dH_end)
        out = np.where(y_arr <= H.dH_end, x_star * (q - 1.0) / q, tail)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(y_arr > 0, np.asarray(h_conjugate(H, y_arr)) / y_arr, 0.0)
    return _out(out, y)


def L_inverse(H: HFunction, z):
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0) or np.any(z_arr >= H.r0_sq):
        raise DomainError(f"L^{{-1}} needs 0 <= z < r0^2 = {H.r0_sq}", module="convexity")
    if H.has_closed_form:
        q = _positive_q(H)
        z_knee = H.r0_sq * (q - 1.0) / q
        x_star = np.minimum(z_arr, z_knee) * q / (q - 1.0)
        out = np.where(z_arr <= z_knee, q * np.power(x_star, q - 1.0),
                       H.H_end / (H.r0_sq - z_arr))
    else:
        flat = z_arr.ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        if pos.any():
            out[pos] = invert_increasing(lambda v: L_eval(H, v), flat[pos], lo=0.0, hi=H.dH_end)
        out = out.reshape(z_arr.shape)
    return _out(out, z)


def lambda_H(H: HFunction, x):
    """Lambda_H(x) = H(x) / (x H'(x)) on (0, r0^2]."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0) or np.any(x_arr > H.r0_sq * (1 + 1e-12)):
        raise DomainError("Lambda_H needs 0 < x <= r0^2", module="convexity")
    if H.has_closed_form:
        out = np.full_like(x_arr, 1.0 / H.exponent)
    else:
        out = H.H(x_arr) / (x_arr * H.dH(x_arr))
    return _out(out, x)


def _psi0_rate(H: HFunction, u: np.ndarray) -> np.ndarray:
    """d psi0/dx at x = u, i.e. 1 / (1 - Lambda_H((H')^{-1}(1/u)))."""
    x = np.minimum(np.asarray(H.dH_inverse(1.0 / u)), H.r0_sq)
    x = np.maximum(x, 1e-300)
    gap = 1.0 - lambda_H(H, x)
    if np.any(gap <= 1e-12):
        bad = float(np.asarray(x)[np.argmin(gap)])
        raise HypothesisViolation(
            f"Lambda_H reaches 1 at x={bad:.6g}; psi0 integrand is singular", module="convexity")
    return 1.0 / gap


def psi0(H: HFunction, x):
    """psi0(x) for x >= 1/H'(r0^2).

    The integral over s in [1/x, H'(r0^2)] of ds / (s^2 (1 - Lambda_H((H')^{-1}(s))))
    is evaluated after the substitution u = 1/s, which turns it into the
    integral of a bounded function of u over [1/H'(r0^2), x].
    """
    x_arr = np.asarray(x, dtype=float)
    u0 = 1.0 / H.dH_end
    if np.any(x_arr < u0 * (1 - 1e-12)):
        raise DomainError(f"psi0 needs x >= 1/H'(r0^2) = {u0}", module="convexity")
    x_arr = np.maximum(x_arr, u0)
    if H.has_closed_form:
        q = _positive_q(H)
        out = u0 + q / (q - 1.0) * (x_arr - u0)
    else:
        out = u0 + np.asarray(adaptive_simpson(lambda u: _psi0_rate(H, u), u0, x_arr,
                                               rtol=QUAD_RTOL))
    return _out(out, x)


def psi0_inverse(H: HFunction, t, tol: float = 1e-14, max_iter: int = 100):
    """Inverse of psi0 on [1/H'(r0^2), inf).

    Generic path: Newton on the bracket [1/H'(r0^2), t] (psi0(x) >= x because
    the integrand is >= 1), with a bisection step whenever Newton leaves it.
    """
    t_arr = np.asarray(t, dtype=float)
    u0 = 1.0 / H.dH_end
    if np.any(t_arr < u0 * (1 - 1e-12)):
        raise DomainError(f"psi0^{{-1}} needs t >= 1/H'(r0^2) = {u0}", module="convexity")
    t_arr = np.maximum(t_arr, u0)
    if H.has_closed_form:
        q = _positive_q(H)
        return _out(u0 + (q - 1.0) / q * (t_arr - u0), t)

    flat = t_arr.ravel()
    lo = np.full_like(flat, u0)
    hi = flat.copy()
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        resid = np.asarray(psi0(H, x)) - flat
        lo = np.where(resid < 0, x, lo)
        hi = np.where(resid > 0, x, hi)
        step = resid / _psi0_rate(H, x)
        x_new = x - step
        outside = (x_new < lo) | (x_new > hi)
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        done = np.abs(x_new - x) <= tol * np.maximum(x, 1.0)
        x = x_new
        if done.all():
            break
    return _out(x.reshape(t_arr.shape), t)


def K_r_eval(f: Callable, r: float, tau):
    """K_r(tau) = integral over [tau, r] of dy / (y f(y)), via y = exp(v)."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr <= 0):
        raise DomainError("K_r needs tau > 0", module="convexity")
    if np.any(tau_arr > r):
        raise DomainError("K_r needs tau <= r", module="convexity")
    out = adaptive_simpson(lambda v: 1.0 / f(np.exp(v)), np.log(tau_arr), math.log(r),
                           rtol=QUAD_RTOL)
    return _out(np.asarray(out), tau)


def psi_r_eval(f: Callable, r: float, z):
    """psi_r(z) = z + K_r(f^{-1}(1/z)) for z >= 1/f(r)."""
    z_arr = np.asarray(z, dtype=float)
    f_r = float(f(np.asarray(r)))
    if np.any(z_arr < (1.0 / f_r) * (1 - 1e-12)):
        raise DomainError(f"psi_r needs z >= 1/f(r) = {1.0 / f_r}", module="convexity")
    tau = invert_increasing(f, 1.0 / z_arr, lo=0.0, hi=r, grow=False)
    tau = np.minimum(np.asarray(tau), r)
    return _out(z_arr + np.asarray(K_r_eval(f, r, tau)), z)


def weight_f(H: HFunction, beta: float, s):
    """Weight f(s) = L^{-1}(s / (2 beta)) on [0, 2 beta r0^2)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr >= 2.0 * beta * H.r0_sq):
        raise DomainError(f"weight needs 0 <= s < 2 beta r0^2 = {2 * beta * H.r0_sq}",
                          module="convexity")
    return _out(np.asarray(L_inverse(H, s_arr / (2.0 * beta))), s)


def beta_threshold(E0: float, H: HFunction) -> float:
    """Smallest admissible energy scale: E(0) / (2 L(H'(r0^2)))."""
    return E0 / (2.0 * float(L_eval(H, H.dH_end)))


def beta_of(E0: float, c3: float, H: HFunction) -> float:
    if E0 < 0:
        raise ParameterError("initial energy must be >= 0", module="convexity")
    if c3 <= 0:
        raise ParameterError("c3 must be positive", module="convexity")
    return max(c3, beta_threshold(E0, H))


def sigma_of(constants: dict, H: HFunction) -> float:
    """Time scale from the multiplier constants alpha2, alpha3, c3, c4, c5, c6."""
    names = ("alpha2", "alpha3", "c3", "c4", "c5", "c6")
    missing = [n for n in names if n not in constants]
    if missing:
        raise ParameterError(f"missing constants: {missing}", module="convexity")
    for n in names:
        if not constants[n] > 0:
            raise ParameterError(f"constant {n} must be positive, got {constants[n]}",
                                 module="convexity")
    a2, a3 = constants["alpha2"], constants["alpha3"]
    c3, c4, c5, c6 = (constants[k] for k in ("c3", "c4", "c5", "c6"))
    return 2.0 * (a3 * (1.0 / c3 + 1.0 / c6) * (H.dH_end * a2 * (c4 + c5) + 1.0))


def envelope_start(H: HFunction, sigma: float) -> float:
    """First time at which the envelope is defined: sigma / H'(r0^2)."""
    return sigma / H.dH_end


def envelope(H: HFunction, beta: float, sigma: float, t):
    """Upper decay envelope beta * L(1 / psi0^{-1}(t / sigma)), t >= sigma / H'(r0^2)."""
    t_arr = np.asarray(t, dtype=float)
    if sigma <= 0:
        raise ParameterError("sigma must be positive", module="convexity")
    if np.any(t_arr < envelope_start(H, sigma) * (1 - 1e-12)):
        raise DomainError(f"envelope defined for t >= {envelope_start(H, sigma)}",
                          module="convexity")
    x = np.asarray(psi0_inverse(H, t_arr / sigma))
    y = np.minimum(1.0 / x, H.dH_end)
    return _out(beta * np.asarray(L_eval(H, y)), t)


def lambda_limsup(H: HFunction, levels: int = LIMSUP_LEVELS) -> float:
    """Largest Lambda_H on the geometric grid r0^2 2^-j, j = 1..levels."""
    xs = H.r0_sq * np.power(2.0, -np.arange(1, levels + 1))
    return float(np.max(lambda_H(H, xs)))


def check_lambda_limsup(H: HFunction, margin: float = LAMBDA_MARGIN) -> float:
    val = lambda_limsup(H)
    if not val < 1.0 - margin:
        raise HypothesisViolation(
            f"sampled limsup of Lambda_H near 0 is {val:.6g}, need < {1 - margin}",
            module="convexity")
    return val


def simplified_envelope(H: HFunction, beta: float, sigma: float, t):
    """Simplified envelope beta * (H')^{-1}(sigma / t), valid when Lambda_H stays below 1 near 0."""
    check_lambda_limsup(H)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("simplified envelope needs t > 0", module="convexity")
    return _out(beta * np.asarray(H.dH_inverse(sigma / t_arr)), t)
