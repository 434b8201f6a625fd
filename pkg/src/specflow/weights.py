"""Weight families for the spectral flow integrands.

Every weight is a positive density ``h`` of unit mass with an odd
antiderivative ``H`` (``H(-inf) = -1/2``, ``H(+inf) = +1/2``).  The boundary
function ``f = H - chi_[0,inf) + 1/2`` is evaluated through the upper tail
``T(x) = int_x^inf h`` as ``f(x) = -sign(x) T(|x|)`` (``f(0) = -1/2``), which
keeps it exactly odd away from 0 and free of cancellation far out.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special

from .errors import InvalidPairError, InvalidWeightError
from .operators import FramedOperator, function_values, same_framing
from .quadrature import integrate_adaptive, integrate_line

NORMALIZATION_TOL = 1e-10


def _odd_from_tail(x, tail):
    """``H`` from the upper tail of a symmetric density."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.sign(x) * (0.5 - tail(ax))


def _boundary_from_tail(x, tail):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = -np.sign(x) * tail(ax)
    return np.where(x == 0.0, -0.5, out)


@dataclass(frozen=True)
class SpectralWeight:
    """Base class.  Subclasses set ``kind`` and implement ``h`` and ``_tail``."""

    kind: str = field(init=False, default="abstract")

    # support as (lo, hi); None means the whole line
    @property
    def support(self):
        return None

    @property
    def normalization(self) -> float:
        raise NotImplementedError

    def h(self, x):
        raise NotImplementedError

    def _tail(self, ax):
        raise NotImplementedError

    def H(self, x):
        return _odd_from_tail(x, self._tail)

    def boundary_f(self, x):
        return _boundary_from_tail(x, self._tail)

    def spec(self) -> dict:
        raise NotImplementedError

    def check_normalization(self, tol=NORMALIZATION_TOL) -> float:
        """Quadrature check of unit mass; returns the computed mass."""
        if self.support is None:
            mass = integrate_line(lambda x: float(self.h(x)), tol=1e-13).value
        else:
            lo, hi = self.support
            mass = integrate_adaptive(lambda x: float(self.h(x)), lo, hi, tol=1e-13).value
        if abs(mass - 1.0) > tol:
            raise InvalidWeightError(f"{self.kind} weight has mass {mass!r}, expected 1")
        return mass


@dataclass(frozen=True)
class BumpWeight(SpectralWeight):
    """``c_m (delta^2 - x^2)^m`` on ``[-delta, delta]``; exactly ``C^(m-1)``."""

    delta: float = 0.5
    m: int = 2
    kind: str = field(init=False, default="bump")

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidWeightError(f"bump delta must be positive, got {self.delta}")
        if int(self.m) != self.m or self.m < 2:
            raise InvalidWeightError(f"bump smoothness m must be an integer >= 2, got {self.m}")

    @cached_property
    def _poly(self):
        # (1 - u^2)^m in the scaled variable u = x / delta
        p = Polynomial([1.0, 0.0, -1.0]) ** int(self.m)
        mass = 2.0 ** (2 * self.m + 1) * math.factorial(self.m) ** 2 / math.factorial(2 * self.m + 1)
        upper = p.integ(lbnd=1.0)  # int_1^u p, so -upper(u) = int_u^1 p
        return p, mass, upper

    @property
    def support(self):
        return (-self.delta, self.delta)

    @property
    def normalization(self) -> float:
        _, mass, _ = self._poly
        return 1.0 / (mass * self.delta ** (2 * self.m + 1))

    def h(self, x):
        p, mass, _ = self._poly
        u = np.asarray(x, dtype=float) / self.delta
        return np.where(np.abs(u) < 1.0, p(u) / (mass * self.delta), 0.0)

    def _tail(self, ax):
        _, mass, upper = self._poly
        u = np.asarray(ax, dtype=float) / self.delta
        return np.where(u < 1.0, -upper(np.minimum(u, 1.0)) / mass, 0.0)

    def spec(self):
        return {"kind": "bump", "delta": self.delta, "m": int(self.m)}


@dataclass(frozen=True)
class GaussianWeight(SpectralWeight):
    """``sqrt(eps/pi) exp(-eps x^2)``."""

    epsilon: float = 1.0
    kind: str = field(init=False, default="gaussian")

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidWeightError(f"gaussian epsilon must be positive, got {self.epsilon}")

    @property
    def normalization(self):
        return math.sqrt(self.epsilon / math.pi)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return self.normalization * np.exp(-self.epsilon * x * x)

    def _tail(self, ax):
        return 0.5 * special.erfc(math.sqrt(self.epsilon) * np.asarray(ax, dtype=float))

    def spec(self):
        return {"kind": "gaussian", "epsilon": self.epsilon}


@dataclass(frozen=True)
class ResolventWeight(SpectralWeight):
    """``(1 + x^2)^(-s) / c`` with ``s`` fixed by the variant.

    ``half_shift``: ``s = p/2 + 1/2`` (the resolvent-weighted p-summable form).
    ``classic``: ``s = p``; for ``p = 1`` this is the Cauchy density with
    ``H = arctan / pi``.
    """

    p: float = 1.0
    variant: str = "half_shift"
    kind: str = field(init=False, default="resolvent")

    def __post_init__(self):
        if not self.p >= 1:
            raise InvalidWeightError(f"resolvent p must be >= 1, got {self.p}")
        if self.variant not in ("half_shift", "classic"):
            raise InvalidWeightError(f"unknown resolvent variant {self.variant!r}")

    @property
    def exponent(self) -> float:
        return self.p / 2.0 + 0.5 if self.variant == "half_shift" else float(self.p)

    @property
    def normalization(self):
        # int (1+x^2)^-s dx = B(1/2, s - 1/2)
        return 1.0 / special.beta(0.5, self.exponent - 0.5)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return self.normalization * (1.0 + x * x) ** (-self.exponent)

    def _tail(self, ax):
        ax = np.asarray(ax, dtype=float)
        w = 1.0 / (1.0 + ax * ax)
        return 0.5 * special.betainc(self.exponent - 0.5, 0.5, w)

    def spec(self):
        return {"kind": "resolvent", "p": self.p, "variant": self.variant}


UNDERFLOW_TAIL = 1e-300


@dataclass(frozen=True)
class PullbackWeight(SpectralWeight):
    """Weight on ``(-1, 1)`` matching an unbounded weight through ``theta(x) = x/sqrt(1+x^2)``.

    ``h(y) = g(x) (1 + x^2)^(3/2)`` with ``x = y / sqrt(1 - y^2)``, so that
    ``h(theta(x)) theta'(x) = g(x)`` and ``H(theta(x)) = G(x)``.  The density is
    cut to zero where the tail of ``g`` drops below 1e-300, which gives a
    compact support strictly inside ``(-1, 1)`` when ``g`` decays fast enough.
    """

    base: SpectralWeight = None
    kind: str = field(init=False, default="pullback")

    def __post_init__(self):
        if self.base is None or self.base.support is not None:
            raise InvalidWeightError("pullback needs a whole-line base weight")

    @cached_property
    def cutoff(self) -> float:
        from scipy.optimize import brentq

        hi = 1.0
        while float(self.base._tail(hi)) > UNDERFLOW_TAIL:
            hi *= 2.0
            if hi > 1e12:
                return math.inf
        target = math.log(UNDERFLOW_TAIL)
        return brentq(lambda x: math.log(max(float(self.base._tail(x)), 1e-320)) - target, 0.0, hi)

    @property
    def support(self):
        y = self.cutoff / math.sqrt(1.0 + self.cutoff**2) if math.isfinite(self.cutoff) else 1.0
        return (-y, y)

    @property
    def normalization(self):
        return self.base.normalization

    def _x(self, y):
        y = np.clip(np.asarray(y, dtype=float), -1.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return y / np.sqrt(1.0 - y * y)

    def h(self, y):
        x = self._x(y)
        inside = np.abs(x) < self.cutoff
        xs = np.where(inside, x, 0.0)
        return np.where(inside, self.base.h(xs) * (1.0 + xs * xs) ** 1.5, 0.0)

    def _tail(self, ay):
        x = self._x(ay)
        inside = np.abs(x) < self.cutoff
        return np.where(inside, self.base._tail(np.where(inside, x, 0.0)), 0.0)

    def spec(self):
        return {"kind": "pullback", "base": self.base.spec()}


@dataclass(frozen=True)
class NumericWeight(SpectralWeight):
    """User density on a finite interval; mass and ``H`` by quadrature (slow)."""

    density: Callable = None
    lo: float = -0.5
    hi: float = 0.5
    kind: str = field(init=False, default="numeric")

    @cached_property
    def _mass(self):
        return integrate_adaptive(lambda x: float(self.density(x)), self.lo, self.hi, 1e-13).value

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def normalization(self):
        return 1.0 / self._mass

    def h(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lo) & (x < self.hi)
        vals = np.vectorize(lambda v: float(self.density(v)))(np.where(inside, x, self.lo))
        return np.where(inside, vals / self._mass, 0.0)

    def _cdf(self, x):
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        return integrate_adaptive(lambda t: float(self.density(t)), self.lo, x, 1e-13).value / self._mass

    def H(self, x):
        return np.vectorize(lambda v: self._cdf(v) - 0.5)(np.asarray(x, dtype=float))

    def boundary_f(self, x):
        x = np.asarray(x, dtype=float)
        return self.H(x) - (x >= 0) + 0.5

    def spec(self):
        return {"kind": "numeric", "lo": self.lo, "hi": self.hi}


def make_weight(spec: dict | SpectralWeight, check: bool = True) -> SpectralWeight:
    """Build a weight from a config dict and verify its unit mass."""
    if isinstance(spec, SpectralWeight):
        w = spec
    else:
        try:
            kind = spec["kind"]
        except (KeyError, TypeError) as exc:
            raise InvalidWeightError(f"weight spec needs a 'kind': {spec!r}") from exc
        try:
            if kind == "bump":
                w = BumpWeight(float(spec.get("delta", 0.5)), int(spec.get("m", 2)))
            elif kind == "gaussian":
                w = GaussianWeight(float(spec.get("epsilon", 1.0)))
            elif kind == "resolvent":
                w = ResolventWeight(float(spec.get("p", 1)), spec.get("variant", "half_shift"))
            elif kind == "pullback":
                w = PullbackWeight(make_weight(spec["base"], check=False))
            else:
                raise InvalidWeightError(f"unknown weight kind {kind!r}")
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, InvalidWeightError):
                raise
            raise InvalidWeightError(f"bad weight spec {spec!r}: {exc}") from exc
    if check:
        w.check_normalization()
    return w


def evaluate(w: SpectralWeight, x):
    """``(h(x), H(x))``."""
    return w.h(x), w.H(x)


def boundary_f(w: SpectralWeight, x):
    return w.boundary_f(x)


def _boundary_sign() -> float:
    # fault-injection hook for the selftest mutation check
    return -1.0 if os.environ.get("SPECFLOW_MUTATE") == "boundary_sign" else 1.0


def boundary_term(w: SpectralWeight, F0: FramedOperator, F1: FramedOperator) -> float:
    """Endpoint correction ``sum f(F0) - sum f(F1)`` over block eigenvalues.

    This equals ``tau(H(F0) - H(F1) + B1/2 - B0/2)``: for a scalar path the
    integral of ``h`` gives ``H(F1) - H(F0)`` and the count of nonnegative
    eigenvalues changes by ``(B1 - B0)/2``.
    """
    if not same_framing(F0, F1):
        raise InvalidPairError("endpoints have different dimension or essential points")
    ess = np.array(F0.essential_points)
    if ess.size and np.max(np.abs(w.boundary_f(ess))) > 0.0:
        raise InvalidPairError("boundary function does not vanish on the essential points")
    f0 = function_values(F0, w.boundary_f)
    f1 = function_values(F1, w.boundary_f)
    return _boundary_sign() * float(math.fsum(f0) - math.fsum(f1))
