"""Operator paths on ``[0, 1]``, loops, and the bounded transform of unbounded paths.

A path is a sequence of segments.  Each segment covers ``[t0, t1]`` and owns a
block evaluator and, optionally, an analytic derivative.  Splitting at
breakpoints is what makes one-sided derivatives well defined: sampling at a
breakpoint uses the segment on the requested side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .doi import vartheta, vartheta_derivative
from .errors import GeneratorError, InvalidInputError, InvalidPairError
from .operators import (
    FramedOperator,
    eigensystem,
    essential_data,
    hermitian_part,
    phase,
    random_hermitian,
    random_unitary,
    same_framing,
    with_spectrum,
)

log = logging.getLogger(__name__)

DEFAULT_ETA = 1e-5
CONTINUITY_GRID = 33
CONTINUITY_STEP = 1e-7
CONTINUITY_SLACK = 1e-3

BOUNDED = "bounded"
UNBOUNDED = "unbounded_model"


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    block: Callable[[float], np.ndarray]
    deriv: Optional[Callable[[float], np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class OperatorPath:
    """Piecewise C1 family ``t -> F_t`` with constant essential points."""

    segments: tuple
    essential_points: tuple = ()
    kind: str = BOUNDED
    eta: float = DEFAULT_ETA
    check: bool = True
    coefficients: object = None

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise InvalidInputError("a path needs at least one segment")
        if segs[0].t0 != 0.0 or segs[-1].t1 != 1.0:
            raise InvalidInputError("segments must cover [0, 1]")
        for a, b in zip(segs[:-1], segs[1:]):
            if a.t1 != b.t0 or not a.t0 < a.t1:
                raise InvalidInputError("segments must be contiguous and ordered")
        if self.kind not in (BOUNDED, UNBOUNDED):
            raise InvalidInputError(f"unknown path kind {self.kind!r}")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "essential_points", tuple(float(e) for e in self.essential_points))
        if self.check:
            self._spot_check()

    @property
    def breakpoints(self) -> tuple:
        return tuple(s.t0 for s in self.segments[1:])

    @property
    def analytic(self) -> bool:
        return all(s.deriv is not None for s in self.segments)

    @property
    def n(self) -> int:
        return self.block(0.0).shape[0]

    def _segment(self, t: float, side: Optional[str] = None) -> Segment:
        segs = self.segments
        if side == "left":
            for s in segs:
                if s.t0 < t <= s.t1:
                    return s
            return segs[0]
        for s in segs:
            if s.t0 <= t < s.t1:
                return s
        return segs[-1]

    def block(self, t: float, side: Optional[str] = None) -> np.ndarray:
        return np.asarray(self._segment(t, side).block(t))

    def at(self, t: float) -> FramedOperator:
        return FramedOperator(self.block(t), self.essential_points)

    def _spot_check(self):
        grid = np.linspace(0.0, 1.0, CONTINUITY_GRID)
        for t in grid:
            b = hermitian_part(self.block(float(t)))
            step = CONTINUITY_STEP if t < 1.0 else -CONTINUITY_STEP
            jump = np.linalg.norm(self.block(float(t) + step) - b, 2)
            if jump > CONTINUITY_SLACK * (1.0 + np.linalg.norm(b, 2)):
                raise InvalidInputError(f"path looks discontinuous near t={t:.6g} (jump {jump:.3e})")
        for bp in self.breakpoints:
            gap = np.linalg.norm(self.block(bp, "left") - self.block(bp, "right"), 2)
            if gap > 1e-9 * (1.0 + np.linalg.norm(self.block(bp), 2)):
                raise InvalidInputError(f"path is discontinuous at breakpoint {bp} (gap {gap:.3e})")


def make_path(
    block, deriv=None, essential_points=(), kind=BOUNDED, breakpoints=(), eta=DEFAULT_ETA, check=True, coefficients=None
):
    """Path from global callables, split at ``breakpoints``."""
    cuts = [0.0, *sorted(float(b) for b in breakpoints if 0.0 < b < 1.0), 1.0]
    segs = tuple(Segment(a, b, block, deriv) for a, b in zip(cuts[:-1], cuts[1:]))
    return OperatorPath(segs, tuple(essential_points), kind, eta, check, coefficients)


def _framing(F0: FramedOperator, F1: FramedOperator):
    if not same_framing(F0, F1):
        raise InvalidPairError("endpoints differ in dimension or essential points")
    return F0.essential_points


def make_line_path(F0: FramedOperator, F1: FramedOperator, kind=BOUNDED) -> OperatorPath:
    """``F_t = (1 - t) F0 + t F1`` with derivative ``F1 - F0``."""
    ess = _framing(F0, F1)
    a, b = F0.block, F1.block
    d = b - a

    def block(t):
        if t == 0.0:
            return a
        if t == 1.0:
            return b
        return (1.0 - t) * a + t * b

    return make_path(block, lambda t: d, ess, kind)


def constant_path(F: FramedOperator, kind=BOUNDED) -> OperatorPath:
    zero = np.zeros_like(F.block)
    return make_path(lambda t: F.block, lambda t: zero, F.essential_points, kind)


def _rescaled(seg: Segment, lo: float, hi: float) -> Segment:
    """Map ``seg`` (a piece of a path on [0,1]) into the window ``[lo, hi]``."""
    width = hi - lo

    def inner(t):
        u = (t - lo) / width
        return min(max(u, 0.0), 1.0)

    block = lambda t, f=seg.block: f(inner(t))
    deriv = None if seg.deriv is None else (lambda t, f=seg.deriv: f(inner(t)) / width)
    return Segment(lo + seg.t0 * width, lo + seg.t1 * width, block, deriv)


def concatenate(*paths: OperatorPath) -> OperatorPath:
    """Run the paths one after another, each on an equal share of ``[0, 1]``."""
    if not paths:
        raise InvalidInputError("nothing to concatenate")
    first = paths[0]
    k = len(paths)
    segs = []
    for i, p in enumerate(paths):
        if p.essential_points != first.essential_points or p.kind != first.kind:
            raise InvalidPairError("concatenated paths must share framing and kind")
        if i:
            gap = np.linalg.norm(paths[i - 1].block(1.0) - p.block(0.0), 2)
            if gap > 1e-12 * (1.0 + np.linalg.norm(p.block(0.0), 2)):
                raise InvalidPairError(f"path {i} does not start where path {i - 1} ends (gap {gap:.3e})")
        lo, hi = i / k, (i + 1) / k
        for s in p.segments:
            segs.append(_rescaled(s, lo, hi))
    # pin the joints to exact values so the segment boundaries line up
    segs = [Segment(0.0 if j == 0 else segs[j - 1].t1, s.t1, s.block, s.deriv) for j, s in enumerate(segs)]
    segs[-1] = Segment(segs[-1].t0, 1.0, segs[-1].block, segs[-1].deriv)
    return OperatorPath(tuple(segs), first.essential_points, first.kind, first.eta, check=False)


def reverse(path: OperatorPath) -> OperatorPath:
    segs = []
    for s in reversed(path.segments):
        block = lambda t, f=s.block: f(1.0 - t)
        deriv = None if s.deriv is None else (lambda t, f=s.deriv: -f(1.0 - t))
        segs.append(Segment(1.0 - s.t1, 1.0 - s.t0, block, deriv))
    return OperatorPath(tuple(segs), path.essential_points, path.kind, path.eta, check=False)


def make_phase_rectangle_loop(F0: FramedOperator, F1: FramedOperator, bridge: OperatorPath) -> OperatorPath:
    """Closed loop ``F0 -> F1`` (bridge), ``F1 -> B1``, ``B1 -> B0``, ``B0 -> F0``.

    ``B_j`` is the phase of ``F_j``; the three extra legs are straight lines.
    Each leg takes a quarter of ``[0, 1]``.
    """
    for name, F in (("F0", F0), ("F1", F1)):
        if not essential_data(F).in_Fpm1:
            raise InvalidInputError(f"{name} must have norm <= 1 and essential points {{-1, +1}}")
    for t, F in ((0.0, F0), (1.0, F1)):
        if np.linalg.norm(bridge.block(t) - F.block, 2) > 1e-12 * (1.0 + np.linalg.norm(F.block, 2)):
            raise InvalidPairError(f"bridge does not pass through the given endpoint at t={t:g}")
    B0, B1 = phase(F0), phase(F1)
    legs = [bridge, make_line_path(F1, B1), make_line_path(B1, B0), make_line_path(B0, F0)]
    return concatenate(*legs)


# -- random generators --------------------------------------------------------

MAX_TRIES = 100
SAMPLE_GRID = 257


@dataclass(frozen=True)
class TrigCoefficients:
    base: np.ndarray
    cos: tuple
    sin: tuple
    drift: Optional[np.ndarray] = None


def _trig_block(c: TrigCoefficients, t: float) -> np.ndarray:
    out = np.array(c.base, copy=True)
    for k, (A, B) in enumerate(zip(c.cos, c.sin), start=1):
        ang = 2.0 * np.pi * k * t
        out = out + np.cos(ang) * A + np.sin(ang) * B
    if c.drift is not None:
        out = out + (2.0 * t - 1.0) * c.drift
    return out


def _trig_deriv(c: TrigCoefficients, t: float) -> np.ndarray:
    out = np.zeros_like(c.base)
    for k, (A, B) in enumerate(zip(c.cos, c.sin), start=1):
        ang = 2.0 * np.pi * k * t
        out = out + (2.0 * np.pi * k) * (np.cos(ang) * B - np.sin(ang) * A)
    if c.drift is not None:
        out = out + 2.0 * c.drift
    return out


def _max_norm_on_grid(c: TrigCoefficients) -> float:
    return max(np.abs(np.linalg.eigvalsh(_trig_block(c, t))).max() for t in np.linspace(0.0, 1.0, SAMPLE_GRID))


def _spectrum_with_gap(rng, n, gap, top):
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return signs * rng.uniform(gap, top, n)


def make_trig_loop(
    seed: int,
    n: int,
    amplitude: float,
    harmonics: int = 2,
    essential_points=(-1.0, 1.0),
    gap: float = 0.3,
    margin: float = 0.05,
    complex_: bool = True,
) -> OperatorPath:
    """Random smooth loop ``F_base + sum_k A_k cos(2 pi k t) + B_k sin(2 pi k t)``.

    ``F_base`` has every eigenvalue in ``[gap, 1 - margin - amplitude]`` in
    absolute value, and the trigonometric part has operator norm at most
    ``amplitude``, so for ``amplitude < gap`` no eigenvalue reaches 0.  Draws
    whose sampled norm exceeds ``1 - margin`` are rejected.  The loop is
    evaluated at ``t mod 1``, so ``F_0`` and ``F_1`` are bit-identical.
    """
    if n < 1 or harmonics < 0 or amplitude < 0:
        raise InvalidInputError("need n >= 1, harmonics >= 0, amplitude >= 0")
    top = 1.0 - margin - amplitude
    if top <= gap:
        raise GeneratorError(f"amplitude {amplitude} leaves no room for spectrum above gap {gap}")
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_TRIES):
        U = random_unitary(rng, n) if complex_ else np.linalg.qr(rng.standard_normal((n, n)))[0]
        base = with_spectrum(U, _spectrum_with_gap(rng, n, gap, top))
        if not complex_:
            base = base.real
        share = amplitude / (2.0 * harmonics) if harmonics else 0.0
        cos = tuple(random_hermitian(rng, n, share, complex_) for _ in range(harmonics))
        sin = tuple(random_hermitian(rng, n, share, complex_) for _ in range(harmonics))
        coeffs = TrigCoefficients(base, cos, sin)
        if _max_norm_on_grid(coeffs) <= 1.0 - margin:
            break
        log.debug("trig loop draw %d rejected", attempt)
    else:
        raise GeneratorError(f"no admissible trig loop after {MAX_TRIES} draws (seed {seed})")

    block = lambda t: _trig_block(coeffs, 0.0 if t >= 1.0 else t)
    deriv = lambda t: _trig_deriv(coeffs, 0.0 if t >= 1.0 else t)
    return make_path(block, deriv, essential_points, coefficients=coeffs)


def make_trig_path(
    seed: int,
    n: int,
    amplitude: float = 0.1,
    harmonics: int = 2,
    drift: float = 0.5,
    essential_points=(-1.0, 1.0),
    margin: float = 0.05,
    endpoint_gap: float = 1e-3,
    complex_: bool = True,
) -> OperatorPath:
    """Random open path: trig wiggle plus ``(2t - 1) diag(d)`` with ``|d_i| <= drift``.

    The drifting diagonal pushes eigenvalues through 0, so the path carries
    nonzero spectral flow.  Draws are rejected until the sampled norm is at
    most ``1 - margin`` and no endpoint eigenvalue lies within
    ``endpoint_gap`` of 0.
    """
    rng = np.random.default_rng(seed)
    budget = 1.0 - margin
    for attempt in range(MAX_TRIES):
        U = random_unitary(rng, n) if complex_ else np.linalg.qr(rng.standard_normal((n, n)))[0]
        spread = budget - amplitude - drift
        if spread <= 0:
            raise GeneratorError("amplitude + drift leave no room below the norm budget")
        base = with_spectrum(U, rng.uniform(-spread, spread, n))
        if not complex_:
            base = base.real
        share = amplitude / (2.0 * harmonics) if harmonics else 0.0
        cos = tuple(random_hermitian(rng, n, share, complex_) for _ in range(harmonics))
        sin = tuple(random_hermitian(rng, n, share, complex_) for _ in range(harmonics))
        d = np.diag(rng.uniform(-drift, drift, n)).astype(base.dtype)
        coeffs = TrigCoefficients(base, cos, sin, d)
        ends = [np.linalg.eigvalsh(_trig_block(coeffs, t)) for t in (0.0, 1.0)]
        if _max_norm_on_grid(coeffs) <= budget and all(np.abs(e).min() > endpoint_gap for e in ends):
            break
        log.debug("trig path draw %d rejected", attempt)
    else:
        raise GeneratorError(f"no admissible trig path after {MAX_TRIES} draws (seed {seed})")
    return make_path(
        lambda t: _trig_block(coeffs, t), lambda t: _trig_deriv(coeffs, t), essential_points, coefficients=coeffs
    )


@dataclass(frozen=True)
class QuadraticData:
    D0: np.ndarray
    V: np.ndarray
    W: np.ndarray


def make_quadratic_path(D0, V, W, essential_points=(), kind=UNBOUNDED) -> OperatorPath:
    """``D_t = D0 + t V + t^2 W`` with analytic derivative ``V + 2 t W``."""
    D0, V, W = (hermitian_part(x) for x in (D0, V, W))
    block = lambda t: D0 + t * V + (t * t) * W
    deriv = lambda t: V + (2.0 * t) * W
    return make_path(block, deriv, essential_points, kind, coefficients=QuadraticData(D0, V, W))


def make_random_quadratic_path(
    seed: int,
    n: int,
    headroom: float = 4.0,
    spread: float = 4.0,
    flips: Optional[int] = None,
    curvature: float = 1.0,
) -> OperatorPath:
    """Unbounded-model path whose endpoint eigenvalues all satisfy ``|lam| >= headroom``.

    ``D0`` and ``D1`` have spectra in ``+-[headroom, headroom + spread]``;
    ``flips`` eigenvalues change sign between them.  ``W`` is a random
    Hermitian perturbation of norm ``curvature`` and ``V = D1 - D0 - W``.
    """
    rng = np.random.default_rng(seed)
    mags = rng.uniform(headroom, headroom + spread, n)
    signs0 = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    k = int(rng.integers(1, max(2, n // 4) + 1)) if flips is None else int(flips)
    signs1 = signs0.copy()
    signs1[rng.choice(n, size=min(k, n), replace=False)] *= -1.0
    U0 = random_unitary(rng, n)
    U1 = random_unitary(rng, n)
    D0 = with_spectrum(U0, signs0 * mags)
    D1 = with_spectrum(U1, signs1 * rng.uniform(headroom, headroom + spread, n))
    W = random_hermitian(rng, n, curvature)
    return make_quadratic_path(D0, D1 - D0 - W, W)


# -- sampling -----------------------------------------------------------------


def sample(path: OperatorPath, t: float, side: Optional[str] = None):
    """``(F_t, Fdot_t, one_sided)``.

    ``side`` picks the segment at a breakpoint (default: the one to the
    right, or the left one at ``t = 1``).  Without an analytic derivative a
    central difference with step ``eta`` is used, switching to second-order
    one-sided differences near segment ends.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"t = {t} lies outside [0, 1]")
    F, Fdot, one_sided = sample_block(path, t, side)
    return FramedOperator(F, path.essential_points), Fdot, one_sided


def sample_block(path: OperatorPath, t: float, side: Optional[str] = None):
    seg = path._segment(t, side)
    F = np.asarray(seg.block(t))
    at_edge = t in (seg.t0, seg.t1) and (t in path.breakpoints or t in (0.0, 1.0))
    if seg.deriv is not None:
        return F, np.asarray(seg.deriv(t)), at_edge
    return F, *_difference(seg, t, path.eta)


def _difference(seg: Segment, t: float, eta: float):
    f = seg.block
    eta = min(eta, 0.5 * (seg.t1 - seg.t0))
    if t - eta < seg.t0:
        d = (-3.0 * f(t) + 4.0 * f(t + eta) - f(t + 2.0 * eta)) / (2.0 * eta)
        return d, True
    if t + eta > seg.t1:
        d = (3.0 * f(t) - 4.0 * f(t - eta) + f(t - 2.0 * eta)) / (2.0 * eta)
        return d, True
    return (f(t + eta) - f(t - eta)) / (2.0 * eta), False


def vartheta_path(Dpath: OperatorPath) -> OperatorPath:
    """``F_t = vartheta(D_t)`` framed by ``{-1, +1}``; derivative by divided differences."""

    def wrap(seg: Segment) -> Segment:
        @lru_cache(maxsize=8)
        def system(t):
            return eigensystem(FramedOperator(seg.block(t)))

        def block(t):
            es = system(t)
            out = (es.basis * vartheta(es.values)) @ es.basis.conj().T
            return 0.5 * (out + out.conj().T)

        def deriv(t):
            Ddot = seg.deriv(t) if seg.deriv is not None else _difference(seg, t, Dpath.eta)[0]
            return vartheta_derivative(system(t), Ddot)

        return Segment(seg.t0, seg.t1, block, deriv)

    return OperatorPath(tuple(wrap(s) for s in Dpath.segments), (-1.0, 1.0), BOUNDED, Dpath.eta, check=False)


def _inverse_sqrt_resolvent(D: np.ndarray) -> np.ndarray:
    vals, U = np.linalg.eigh(D)
    return (U * (1.0 + vals**2) ** -0.5) @ U.conj().T


def gamma_derivative_residual(Dpath: OperatorPath, t0: float, t: float) -> float:
    """``||((D_t - D_t0)/(t - t0) - Ddot_t0) (1 + D_t0^2)^(-1/2)||`` in operator norm."""
    if t == t0:
        raise InvalidInputError("t must differ from t0")
    side = "right" if t > t0 else "left"
    D0, Ddot, _ = sample_block(Dpath, t0, side)
    D0 = hermitian_part(D0)
    quotient = (np.asarray(Dpath.block(t)) - D0) / (t - t0)
    return float(np.linalg.norm((quotient - Ddot) @ _inverse_sqrt_resolvent(D0), 2))


def arc_length(path: OperatorPath, points: int = SAMPLE_GRID) -> float:
    """Polygonal operator-norm length on a uniform grid."""
    ts = np.linspace(0.0, 1.0, points)
    blocks = [path.block(float(t)) for t in ts]
    return float(sum(np.linalg.norm(b - a, 2) for a, b in zip(blocks[:-1], blocks[1:])))


def min_delta_on_grid(path: OperatorPath, points: int = SAMPLE_GRID) -> float:
    """``delta_F`` sampled along the path (constant in the framed model)."""
    return min(essential_data(path.at(float(t))).delta_F for t in np.linspace(0.0, 1.0, points))
