"""Vectorized adaptive Simpson quadrature and monotone root bracketing.

Both routines work on whole arrays of problems at once: every refinement
round evaluates the integrand (or the monotone map) on one concatenated
array, which keeps the Python overhead independent of the batch size.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import QuadratureError

ArrayFn = Callable[[np.ndarray], np.ndarray]

MAX_PANELS = 2**20


def adaptive_simpson(f: ArrayFn, a, b, rtol: float = 1e-9, atol: float = 1e-300,
                     max_panels: int = MAX_PANELS, initial_panels: int = 4):
    """Integrate ``f`` over each ``[a_i, b_i]`` to relative tolerance ``rtol``.

    A panel is accepted when the two-half Simpson estimate differs from the
    whole-panel estimate by at most ``15 * rtol * |estimate|`` (or ``atol``
    scaled by the panel's share of the interval); accepted panels get the
    Richardson correction. Raises QuadratureError once the total number of
    panels created exceeds ``max_panels``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast(a, b).shape
    a, b = (np.broadcast_to(v, shape).ravel() for v in (a, b))
    total = np.zeros(a.size)
    width = np.abs(b - a)
    live = width > 0
    if not live.any():
        return total.reshape(shape) if shape else float(total[0])

    owner = np.repeat(np.nonzero(live)[0], initial_panels)
    frac = np.linspace(0.0, 1.0, initial_panels + 1)
    lo_all = a[live][:, None] + (b[live] - a[live])[:, None] * frac[None, :]
    left = lo_all[:, :-1].ravel()
    right = lo_all[:, 1:].ravel()
    mid = 0.5 * (left + right)
    vals = f(np.concatenate([left, mid, right]))
    n = left.size
    fl, fm, fr = vals[:n], vals[n:2 * n], vals[2 * n:]
    whole = (right - left) / 6.0 * (fl + 4.0 * fm + fr)
    created = n

    while left.size:
        lm = 0.5 * (left + mid)
        rm = 0.5 * (mid + right)
        vals = f(np.concatenate([lm, rm]))
        n = left.size
        flm, frm = vals[:n], vals[n:]
        h = (right - left) / 12.0
        s_left = h * (fl + 4.0 * flm + fm)
        s_right = h * (fm + 4.0 * frm + fr)
        s2 = s_left + s_right
        err = s2 - whole
        if not np.all(np.isfinite(s2)):
            raise QuadratureError("non-finite integrand value", module="numerics")
        share = np.abs(right - left) / width[owner]
        ok = np.abs(err) <= 15.0 * np.maximum(rtol * np.abs(s2), atol * share)
        np.add.at(total, owner[ok], s2[ok] + err[ok] / 15.0)
        bad = ~ok
        if not bad.any():
            break
        created += 2 * int(bad.sum())
        if created > max_panels:
            raise QuadratureError(f"adaptive Simpson exceeded {max_panels} panels", module="numerics")
        owner = np.concatenate([owner[bad], owner[bad]])
        left, mid, right = (np.concatenate([left[bad], mid[bad]]),
                            np.concatenate([lm[bad], rm[bad]]),
                            np.concatenate([mid[bad], right[bad]]))
        fl, fm, fr = (np.concatenate([fl[bad], fm[bad]]),
                      np.concatenate([flm[bad], frm[bad]]),
                      np.concatenate([fm[bad], fr[bad]]))
        whole = np.concatenate([s_left[bad], s_right[bad]])

    return total.reshape(shape) if shape else float(total[0])


def invert_increasing(fn: ArrayFn, targets, lo=0.0, hi=1.0, rtol: float = 4e-16,
                      floor: float = 1e-300, max_iter: int = 4000, grow: bool = True):
    """Solve ``fn(x) = target`` for a nondecreasing ``fn`` by bisection.

    ``fn(lo) <= target`` is assumed. When ``grow`` is set the upper end is
    doubled until ``fn(hi) >= target``. Once the bracket is away from zero the
    midpoint switches to the geometric mean, so tiny roots are found to full
    relative precision.
    """
    t = np.asarray(targets, dtype=float)
    shape = t.shape
    t = t.ravel()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), t.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), t.shape).copy()
    if grow:
        for _ in range(2100):
            short = fn(hi) < t
            if not short.any():
                break
            lo = np.where(short, hi, lo)
            hi = np.where(short, 2.0 * hi, hi)
        else:
            raise ValueError("could not bracket root: function bounded below target")
    for _ in range(max_iter):
        active = (hi - lo) > rtol * hi + floor
        if not active.any():
            break
        geo = (lo > 0) & (hi > 2.0 * lo)
        mid = np.where(geo, np.sqrt(lo * hi), 0.5 * (lo + hi))
        below = fn(mid) < t
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    x = 0.5 * (lo + hi)
    return x.reshape(shape) if shape else float(x[0])
