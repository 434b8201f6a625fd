"""Double operator integrals at matrix scale.

For Hermitian ``A = U diag(lam) U*`` and ``B = V diag(mu) V*`` the multiplier
``T_phi(A, B)`` acts by ``X -> U (Phi o (U* X V)) V*`` with
``Phi[j, k] = phi(lam_j, mu_k)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError, InvalidKernelError
from .operators import EigenSystem, FramedOperator, eigensystem

log = logging.getLogger(__name__)


class ScalarFunction(NamedTuple):
    """A real function together with its derivative, both elementwise on arrays."""

    f: Callable
    df: Callable
    name: str = "f"


def vartheta(x):
    x = np.asarray(x, dtype=float)
    return x / np.sqrt(1.0 + x * x)


def vartheta_prime(x):
    x = np.asarray(x, dtype=float)
    return (1.0 + x * x) ** -1.5


SQUARE = ScalarFunction(lambda x: np.asarray(x) ** 2, lambda x: 2.0 * np.asarray(x), "x^2")
CUBE = ScalarFunction(lambda x: np.asarray(x) ** 3, lambda x: 3.0 * np.asarray(x) ** 2, "x^3")
VARTHETA = ScalarFunction(vartheta, vartheta_prime, "vartheta")
TANH = ScalarFunction(np.tanh, lambda x: 1.0 / np.cosh(x) ** 2, "tanh")

FUNCTIONS = {fn.name: fn for fn in (SQUARE, CUBE, VARTHETA, TANH)}


def merge_tolerance(lam, mu):
    return 1e-7 * (1.0 + np.abs(lam) + np.abs(mu))


def divided_difference(fn: ScalarFunction, lam, mu, tol=None):
    """``(f(lam) - f(mu)) / (lam - mu)``, or ``f'`` at the midpoint when close.

    ``lam`` and ``mu`` broadcast.  The switch happens at
    ``|lam - mu| < 1e-7 (1 + |lam| + |mu|)`` unless ``tol`` is given; using the
    midpoint makes the fallback second order accurate.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    gap = lam - mu
    close = np.abs(gap) < (merge_tolerance(lam, mu) if tol is None else tol)
    safe = np.where(close, 1.0, gap)
    with np.errstate(all="ignore"):
        quotient = (fn.f(lam) - fn.f(mu)) / safe
    return np.where(close, fn.df(0.5 * (lam + mu)), quotient)


@dataclass(frozen=True)
class DOIKernel:
    """Two-variable symbol ``phi(lam, mu)`` evaluated on broadcast arrays."""

    phi: Callable
    family: str = "custom"
    symmetric: bool = False

    def matrix(self, lam, mu) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)[:, None]
        mu = np.asarray(mu, dtype=float)[None, :]
        return np.broadcast_to(np.asarray(self.phi(lam, mu)), (lam.shape[0], mu.shape[1]))

    def __mul__(self, other: "DOIKernel") -> "DOIKernel":
        return DOIKernel(
            lambda l, m: self.phi(l, m) * other.phi(l, m),
            f"{self.family}*{other.family}",
            self.symmetric and other.symmetric,
        )


def divided_difference_kernel(fn: ScalarFunction) -> DOIKernel:
    return DOIKernel(lambda l, m: divided_difference(fn, l, m), f"divided_difference({fn.name})", True)


def phi_theta_kernel() -> DOIKernel:
    """``psi_vartheta(lam, mu) (1 + mu^2)^(1/2)``; unbounded in ``mu``.

    Only used through :func:`apply_phi_theta`, which routes it through the
    bounded symbol of :func:`psi_theta_kernel`.
    """
    return DOIKernel(
        lambda l, m: divided_difference(VARTHETA, l, m) * np.sqrt(1.0 + m * m), "phi_theta", False
    )


def psi_theta_kernel() -> DOIKernel:
    """``(1 + lam^2)^(1/4) psi_vartheta(lam, mu) (1 + mu^2)^(1/4)``; bounded."""
    return DOIKernel(
        lambda l, m: (1.0 + l * l) ** 0.25 * divided_difference(VARTHETA, l, m) * (1.0 + m * m) ** 0.25,
        "psi_theta",
        True,
    )


def custom_kernel(phi: Callable, symmetric: bool = False) -> DOIKernel:
    return DOIKernel(phi, "custom", symmetric)


def _system(A) -> EigenSystem:
    if isinstance(A, EigenSystem):
        return A
    if isinstance(A, FramedOperator):
        return A.eig
    return eigensystem(FramedOperator(A))


def apply_doi(kernel: DOIKernel, A, B, X) -> np.ndarray:
    """``T_phi(A, B)(X)`` with ``A`` acting on the left and ``B`` on the right."""
    ea, eb = _system(A), _system(B)
    X = np.asarray(X)
    if X.shape != (ea.values.size, eb.values.size):
        raise InvalidInputError(
            f"dimension mismatch: X is {X.shape}, systems are {ea.values.size} and {eb.values.size}"
        )
    Ua, Ub = ea.basis, eb.basis
    Phi = kernel.matrix(ea.values, eb.values)
    return Ua @ (Phi * (Ua.conj().T @ X @ Ub)) @ Ub.conj().T


def _block(A) -> np.ndarray:
    return A.block if isinstance(A, FramedOperator) else np.asarray(A)


def matrix_function(A, fn) -> np.ndarray:
    es = _system(A)
    f = fn.f if isinstance(fn, ScalarFunction) else fn
    vals = np.asarray(f(es.values), dtype=float)
    out = (es.basis * vals) @ es.basis.conj().T
    return 0.5 * (out + out.conj().T)


def perturbation_residual(fn: ScalarFunction, A, B) -> float:
    """Frobenius norm of ``f(A) - f(B) - T_{psi_f}(A, B)(A - B)``."""
    a, b = _block(A), _block(B)
    if a.shape != b.shape:
        raise InvalidInputError("A and B must have the same dimension")
    lhs = matrix_function(A, fn) - matrix_function(B, fn)
    rhs = apply_doi(divided_difference_kernel(fn), A, B, a - b)
    return float(np.linalg.norm(lhs - rhs))


def vartheta_derivative(D, Ddot) -> np.ndarray:
    """Derivative of ``t -> vartheta(D + t Ddot)`` at ``t = 0``."""
    Ddot = np.asarray(Ddot)
    out = apply_doi(divided_difference_kernel(VARTHETA), D, D, Ddot)
    return 0.5 * (out + out.conj().T)


def _power_of_resolvent(es: EigenSystem, s: float) -> np.ndarray:
    vals = (1.0 + es.values**2) ** s
    return (es.basis * vals) @ es.basis.conj().T


def apply_phi_theta(D1, D0, Bmat) -> np.ndarray:
    """``T_phi(D1, D0)(B)`` computed as ``T_psi((1+D1^2)^(-1/4) B (1+D0^2)^(1/4))``.

    With ``B = (D1 - D0)(1 + D0^2)^(-1/2)`` this returns
    ``vartheta(D1) - vartheta(D0)``.
    """
    e1, e0 = _system(D1), _system(D0)
    inner = _power_of_resolvent(e1, -0.25) @ np.asarray(Bmat) @ _power_of_resolvent(e0, 0.25)
    return apply_doi(psi_theta_kernel(), e1, e0, inner)


def graph_normalized(D, A) -> np.ndarray:
    """``A (1 + D^2)^(-1/2)``."""
    return np.asarray(A) @ _power_of_resolvent(_system(D), -0.5)


def aux_estimate_ratio(D1, D0) -> float:
    """Ratio ``||(1+D1^2)^(-1/4)(1+D0^2)^(1/4) - 1|| / ||(D1 - D0)(1+D0^2)^(-1/2)||``.

    The bounding constant is not known in closed form, so callers log this
    value instead of asserting on it.
    """
    e1, e0 = _system(D1), _system(D0)
    n = e1.values.size
    lhs = np.linalg.norm(_power_of_resolvent(e1, -0.25) @ _power_of_resolvent(e0, 0.25) - np.eye(n), 2)
    rhs = np.linalg.norm(graph_normalized(e0, _block(D1) - _block(D0)), 2)
    ratio = float(lhs / rhs) if rhs > 0 else 0.0
    log.debug("aux estimate ratio %.4g (lhs %.3e, rhs %.3e)", ratio, lhs, rhs)
    return ratio


def trace_duality_residual(kernel: DOIKernel, D: FramedOperator, V, sym_tol: float = 1e-12) -> float:
    """``|tr T_phi(D, D)(V) - tr(f(D) V)|`` with ``f(lam) = phi(lam, lam)``."""
    es = _system(D)
    Phi = kernel.matrix(es.values, es.values)
    scale = max(1.0, np.abs(Phi).max(initial=0.0))
    if np.abs(Phi - Phi.T).max(initial=0.0) > sym_tol * scale:
        raise InvalidKernelError("trace duality needs a symmetric kernel")
    if isinstance(D, FramedOperator) and D.essential_points:
        ess = np.array(D.essential_points)
        if np.abs(kernel.matrix(ess, ess)).max() > 0.0:
            raise InvalidKernelError("kernel does not vanish at the essential points")
    V = np.asarray(V)
    lhs = np.trace(apply_doi(kernel, es, es, V))
    fvals = np.real(np.diagonal(Phi))
    fD = (es.basis * fvals) @ es.basis.conj().T
    rhs = np.trace(fD @ V)
    return float(abs(lhs - rhs))


def bump_trace_kernel(weight) -> DOIKernel:
    """Symmetric kernel ``h^(1/2)(lam) psi_H(lam, mu) h^(1/2)(mu)`` supported on ``supp h x supp h``."""
    fn = ScalarFunction(weight.H, weight.h, f"H[{weight.kind}]")

    def phi(l, m):
        return np.sqrt(weight.h(l)) * divided_difference(fn, l, m) * np.sqrt(weight.h(m))

    return DOIKernel(phi, "bump_trace", True)


def _fractional_power(M, s, tol=1e-12) -> np.ndarray:
    es = eigensystem(FramedOperator(M))
    lo = es.values.min(initial=0.0)
    scale = max(1.0, np.abs(es.values).max(initial=0.0))
    if lo < -tol * scale:
        raise InvalidInputError(f"matrix is not positive semidefinite (min eigenvalue {lo:.3e})")
    vals = np.clip(es.values, 0.0, None)
    p = vals**s if s != 0 else np.ones_like(vals)
    return (es.basis * p) @ es.basis.conj().T


def interpolation_gap(A, B0, B1, theta: float) -> float:
    """``||B1 A||^(1-theta) ||A B0||^theta - ||B1^(1-theta) A B0^theta||`` (operator norms)."""
    if not 0.0 <= theta <= 1.0:
        raise InvalidInputError("theta must lie in [0, 1]")
    A = np.asarray(A)
    lhs = np.linalg.norm(_fractional_power(B1, 1.0 - theta) @ A @ _fractional_power(B0, theta), 2)
    rhs = np.linalg.norm(np.asarray(B1) @ A, 2) ** (1.0 - theta) * np.linalg.norm(A @ np.asarray(B0), 2) ** theta
    return float(rhs - lhs)
