"""Framed Hermitian operators and their spectral calculus.

A :class:`FramedOperator` is a finite Hermitian block together with a finite
set of *essential points*: real numbers standing for spectrum of infinite
multiplicity.  The block carries everything with a finite trace; the
essential points carry the image in the Calkin quotient.  Every function of
the operator acts on both parts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DomainError,
    InvalidInputError,
    NoCalkinModelError,
    NotTraceClassError,
)

HERMITIAN_TOL = 1e-12
ESSENTIAL_MERGE_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10


def _merge_points(points, tol=ESSENTIAL_MERGE_TOL):
    pts = sorted(float(p) for p in points)
    out: list[float] = []
    for p in pts:
        if not np.isfinite(p):
            raise InvalidInputError(f"essential point {p!r} is not finite")
        if out and abs(p - out[-1]) <= tol:
            continue
        out.append(p)
    return tuple(out)


def hermitian_part(matrix, tol=HERMITIAN_TOL) -> np.ndarray:
    """Return ``(M + M*)/2`` after checking ``M`` is Hermitian within ``tol``."""
    m = np.asarray(matrix)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    asym = np.abs(m - m.conj().T).max(initial=0.0)
    if asym > tol * scale:
        raise InvalidInputError(
            f"matrix is not Hermitian: max |M - M*| = {asym:.3e} > {tol:.1e} * {scale:.3e}"
        )
    h = 0.5 * (m + m.conj().T)
    if np.iscomplexobj(h) and not np.any(h.imag):
        h = h.real
    return h


class EigenSystem(NamedTuple):
    values: np.ndarray
    basis: np.ndarray


@dataclass(frozen=True, eq=False)
class FramedOperator:
    """Finite Hermitian block plus essential-spectrum points.

    ``essential_points`` empty means an unframed (unbounded-model) operator.
    """

    block: np.ndarray
    essential_points: tuple[float, ...] = ()
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self._checked:
            b = np.asarray(self.block)
        else:
            b = hermitian_part(self.block)
        b = np.array(b, copy=True)
        b.setflags(write=False)
        object.__setattr__(self, "block", b)
        object.__setattr__(self, "essential_points", _merge_points(self.essential_points))

    @classmethod
    def trusted(cls, block, essential_points=()):
        """Build without the Hermitian check (block must already be Hermitian)."""
        return cls(block, tuple(essential_points), _checked=True)

    @classmethod
    def diag(cls, values, essential_points=()):
        return cls.trusted(np.diag(np.asarray(values, dtype=float)), essential_points)

    @property
    def n(self) -> int:
        return self.block.shape[0]

    @cached_property
    def eig(self) -> EigenSystem:
        return eigensystem(self)

    def with_block(self, block) -> "FramedOperator":
        return FramedOperator(block, self.essential_points)

    def __repr__(self):
        return f"FramedOperator(n={self.n}, essential_points={self.essential_points})"


def eigensystem(A: FramedOperator) -> EigenSystem:
    """Ascending eigenvalues and a unitary eigenbasis of the block.

    Ties are ordered by the index of each vector's dominant component, and
    every column is rotated so that its dominant component is real positive,
    which makes the output a deterministic function of the input.
    """
    b = A.block if isinstance(A, FramedOperator) else hermitian_part(A)
    values, basis = np.linalg.eigh(b)
    dominant = np.argmax(np.abs(basis), axis=0)
    order = np.lexsort((dominant, values))
    values = values[order]
    basis = basis[:, order]
    dominant = dominant[order]
    pivots = basis[dominant, np.arange(basis.shape[1])]
    phases = pivots / np.abs(pivots)
    basis = basis / phases
    if not np.iscomplexobj(b):
        basis = basis.real
    values.setflags(write=False)
    basis.setflags(write=False)
    return EigenSystem(values, basis)


def _from_spectrum(es: EigenSystem, fvals) -> np.ndarray:
    U = es.basis
    out = (U * fvals) @ U.conj().T
    return 0.5 * (out + out.conj().T)


def _apply_scalar(f, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(float)
    return y


def apply_function(A: FramedOperator, f: Callable) -> FramedOperator:
    """Functional calculus ``f(A)`` on block and essential points.

    ``f`` must accept a numpy array and act elementwise.
    """
    es = A.eig
    fv = _apply_scalar(f, es.values)
    fe = _apply_scalar(f, np.array(A.essential_points))
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(fe))):
        raise DomainError("function is undefined (non-finite) on the spectrum")
    return FramedOperator.trusted(_from_spectrum(es, fv), tuple(fe))


def function_values(A: FramedOperator, f: Callable) -> np.ndarray:
    """``f`` evaluated at the eigenvalues of the block (no reassembly)."""
    fv = _apply_scalar(f, A.eig.values)
    if not np.all(np.isfinite(fv)):
        raise DomainError("function is undefined (non-finite) on the spectrum")
    return fv


@dataclass(frozen=True)
class Interval:
    """Real interval with independently open or closed ends."""

    lo: float = -np.inf
    hi: float = np.inf
    closed_lo: bool = True
    closed_hi: bool = False

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        lo_ok = x >= self.lo if self.closed_lo else x > self.lo
        hi_ok = x <= self.hi if self.closed_hi else x < self.hi
        return lo_ok & hi_ok

    @classmethod
    def open(cls, lo, hi):
        return cls(lo, hi, False, False)

    @classmethod
    def closed(cls, lo, hi):
        return cls(lo, hi, True, True)


NONNEGATIVE = Interval(0.0, np.inf, True, False)


def spectral_projection(A: FramedOperator, interval: Interval = NONNEGATIVE) -> FramedOperator:
    """Spectral projection of ``A`` onto ``interval``.

    The essential points of the result are the indicator values at the
    essential points of ``A``; the projection is finite rank (tau-finite)
    exactly when they are all 0, see :func:`is_finite_rank`.
    """
    return apply_function(A, lambda x: interval.contains(x).astype(float))


def is_finite_rank(P: FramedOperator) -> bool:
    return all(abs(e) <= ESSENTIAL_MERGE_TOL for e in P.essential_points)


def _sign_ge0(x):
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def phase(A: FramedOperator) -> FramedOperator:
    """Involution ``2 chi_[0,inf)(A) - 1``; eigenvalue 0 maps to +1."""
    return apply_function(A, _sign_ge0)


class TraceData(NamedTuple):
    trace: float
    trace_norm: float
    op_norm: float


def op_norm(A: FramedOperator) -> float:
    vals = np.abs(A.eig.values)
    ess = np.abs(np.array(A.essential_points))
    return float(max(vals.max(initial=0.0), ess.max(initial=0.0)))


def trace_functionals(A: FramedOperator, strict: bool = True) -> TraceData:
    """Trace, trace norm and operator norm.

    With ``strict`` the trace is refused when an essential point is nonzero,
    since such an operator is not trace class.  ``strict=False`` returns the
    traces of the block alone.
    """
    if strict and any(abs(e) > ESSENTIAL_MERGE_TOL for e in A.essential_points):
        raise NotTraceClassError(
            f"essential points {A.essential_points} are not all zero: not trace-class in the framed model"
        )
    vals = A.eig.values
    return TraceData(float(np.sum(vals)), float(np.sum(np.abs(vals))), op_norm(A))


class EssentialData(NamedTuple):
    delta_F: float
    essential_norm: float
    is_fredholm: bool
    in_Fpm1: bool


def essential_data(A: FramedOperator, tol: float = RECONSTRUCTION_TOL) -> EssentialData:
    """Distance from 0 to the essential spectrum and related flags."""
    if not A.essential_points:
        raise NoCalkinModelError("operator has no essential points (no Calkin model)")
    ess = np.abs(np.array(A.essential_points))
    delta = float(ess.min())
    in_pm1 = (
        op_norm(A) <= 1.0 + tol
        and len(A.essential_points) == 2
        and abs(A.essential_points[0] + 1.0) <= tol
        and abs(A.essential_points[1] - 1.0) <= tol
    )
    return EssentialData(delta, float(ess.max()), delta > 0.0, bool(in_pm1))


def same_framing(A: FramedOperator, B: FramedOperator, tol=ESSENTIAL_MERGE_TOL) -> bool:
    a, b = A.essential_points, B.essential_points
    return A.n == B.n and len(a) == len(b) and all(abs(x - y) <= tol for x, y in zip(a, b))


def random_hermitian(rng: np.random.Generator, n: int, scale: float = 1.0, complex_: bool = True) -> np.ndarray:
    """Random Hermitian matrix with operator norm exactly ``scale``."""
    x = rng.standard_normal((n, n))
    if complex_:
        x = x + 1j * rng.standard_normal((n, n))
    h = 0.5 * (x + x.conj().T)
    nrm = np.abs(np.linalg.eigvalsh(h)).max()
    return h * (scale / nrm) if nrm > 0 else h


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def with_spectrum(U: np.ndarray, values: Sequence[float]) -> np.ndarray:
    out = (U * np.asarray(values, dtype=float)) @ U.conj().T
    return 0.5 * (out + out.conj().T)


# -- Matrix I/O ---------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def _fmt_list(xs) -> str:
    return "[" + ", ".join(_fmt(x) for x in xs) + "]"


def to_text(A: FramedOperator) -> str:
    """Serialize as JSON text with 17 significant digits per value."""
    b = np.asarray(A.block)
    re = np.real(b).ravel()
    im = np.imag(b).ravel() if np.iscomplexobj(b) else np.zeros(b.size)
    return (
        "{\n"
        f'  "n": {A.n},\n'
        f'  "real_parts": {_fmt_list(re)},\n'
        f'  "imag_parts": {_fmt_list(im)},\n'
        f'  "essential_points": {_fmt_list(A.essential_points)}\n'
        "}\n"
    )


def from_dict(d: dict) -> FramedOperator:
    try:
        n = int(d["n"])
        re = np.asarray(d["real_parts"], dtype=float)
        im = np.asarray(d.get("imag_parts", np.zeros(n * n)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed matrix record: {exc}") from exc
    if re.size != n * n or im.size != n * n:
        raise InvalidInputError(f"matrix record needs {n * n} real and imaginary parts")
    block = re.reshape(n, n) + 1j * im.reshape(n, n) if np.any(im) else re.reshape(n, n)
    return FramedOperator(block, tuple(d.get("essential_points", ())))


def from_text(text: str) -> FramedOperator:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"matrix text is not valid JSON: {exc}") from exc
    return from_dict(d)
