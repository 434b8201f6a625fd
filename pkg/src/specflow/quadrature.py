"""Adaptive Simpson quadrature with Richardson acceptance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import InvalidInputError, QuadratureError


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int


def _simpson(fa, fm, fb, width):
    return width / 6.0 * (fa + 4.0 * fm + fb)


def integrate_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 40,
    min_depth: int = 3,
) -> QuadResult:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    A panel is accepted once ``|S2 - S1| <= 15 tol_panel`` and the Richardson
    corrected value ``S2 + (S2 - S1)/15`` is kept.  ``tol`` is split in half
    at each bisection.  Panels are processed depth-first, left to right, so
    the summation order (and the result) is deterministic.

    Panels shallower than ``min_depth`` are always split; this guards against
    accepting a narrow peak that the first five nodes happen to miss.
    """
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise InvalidInputError(f"need finite a < b, got [{a}, {b}]")
    if not tol > 0:
        raise InvalidInputError("tol must be positive")

    nevals = 0

    def ev(x):
        nonlocal nevals
        nevals += 1
        y = float(f(x))
        if not math.isfinite(y):
            raise QuadratureError(f"integrand is not finite at x={x!r}")
        return y

    fa, fm, fb = ev(a), ev(0.5 * (a + b)), ev(b)
    # stack entries: (a, b, fa, fm, fb, whole, tol, depth)
    stack = [(a, b, fa, fm, fb, _simpson(fa, fm, fb, b - a), tol, 0)]
    total = 0.0
    comp = 0.0
    err = 0.0
    exhausted = False
    while stack:
        lo, hi, flo, fmid, fhi, whole, ptol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = ev(0.5 * (lo + mid))
        fr = ev(0.5 * (mid + hi))
        left = _simpson(flo, fl, fmid, mid - lo)
        right = _simpson(fmid, fr, fhi, hi - mid)
        delta = left + right - whole
        if depth >= min_depth and (abs(delta) <= 15.0 * ptol or depth >= max_depth):
            if abs(delta) > 15.0 * ptol:
                exhausted = True
            piece = left + right + delta / 15.0
            # Kahan summation keeps the accumulation order-exact.
            y = piece - comp
            t = total + y
            comp = (t - total) - y
            total = t
            err += abs(delta) / 15.0
            continue
        # push right first so the left half is processed first
        stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * ptol, depth + 1))
        stack.append((lo, mid, flo, fl, fmid, left, 0.5 * ptol, depth + 1))

    result = QuadResult(total, err, nevals)
    if exhausted:
        raise QuadratureError(
            f"adaptive Simpson reached max depth {max_depth} on [{a}, {b}] (estimate {total!r}, error {err:.3e})",
            best=result,
        )
    return result


LINE_SHRINK = 1e-12


def integrate_line(g: Callable[[float], float], tol: float = 1e-10, **kwargs) -> QuadResult:
    """Integrate ``g`` over the whole real line via ``x = tan(u)``.

    Requires tails no heavier than ``(1 + x^2)^-1``; the endpoints
    ``u = +-pi/2`` are pulled in by ``1e-12``.
    """

    def mapped(u):
        c = math.cos(u)
        return g(math.tan(u)) / (c * c)

    half = 0.5 * math.pi - LINE_SHRINK
    return integrate_adaptive(mapped, -half, half, tol, **kwargs)


def integrate_segments(f, points, tol, **kwargs) -> QuadResult:
    """Integrate over consecutive ``[points[i], points[i+1]]`` pieces.

    The tolerance is shared among pieces in proportion to their length.
    ``f`` receives ``(t, lo, hi)`` so the caller can pick one-sided values at
    the piece ends.
    """
    span = points[-1] - points[0]
    value = 0.0
    err = 0.0
    nev = 0
    for lo, hi in zip(points[:-1], points[1:]):
        if hi <= lo:
            continue
        r = integrate_adaptive(lambda t, lo=lo, hi=hi: f(t, lo, hi), lo, hi, tol * (hi - lo) / span, **kwargs)
        value += r.value
        err += r.error_estimate
        nev += r.evaluations
    return QuadResult(value, err, nev)
