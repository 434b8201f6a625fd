"""Acceptance suite: eleven seeded property checks with fixed tolerances.

Each check returns a :class:`CriterionResult`; nothing here raises on a
failed property, so one bad criterion does not hide the others.
"""

from __future__ import annotations

import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import doi
from .flow import (
    loop_integral,
    retract,
    retract_lipschitz_bound,
    sf_integral_bounded,
    sf_integral_unbounded,
)
from .operators import (
    FramedOperator,
    essential_data,
    random_hermitian,
    random_unitary,
    with_spectrum,
)
from .paths import (
    UNBOUNDED,
    arc_length,
    make_line_path,
    make_path,
    make_random_quadratic_path,
    make_trig_loop,
    make_trig_path,
    reverse,
    vartheta_path,
)
from .quadrature import integrate_line
from .weights import BumpWeight, GaussianWeight, PullbackWeight, ResolventWeight

log = logging.getLogger(__name__)

ESS = (-1.0, 1.0)


@dataclass
class CriterionResult:
    key: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    worst: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.key}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


# -- 1: four-way agreement ----------------------------------------------------------

def four_way_agreement(count=100, dims=(2, 4, 8, 16), quad_tol=1e-9, budget=60.0, seed0=1000):
    w = BumpWeight(0.5, 2)
    started = time.perf_counter()
    bad, worst = [], 0.0
    for i in range(count):
        n = dims[i % len(dims)]
        path = make_trig_path(seed0 + i, n, amplitude=0.1, harmonics=2, drift=0.5)
        r = sf_integral_bounded(path, w, quad_tol)
        worst = max(worst, r.integer_defect)
        if not (r.sf_partition == r.sf_crossing == r.rounded_total and r.integer_defect < 1e-6):
            bad.append((seed0 + i, n, r.sf_partition, r.sf_crossing, r.total))
    elapsed = time.perf_counter() - started
    ok = not bad and elapsed < budget
    detail = f"{count - len(bad)}/{count} agree, worst defect {worst:.2e}, {elapsed:.1f}s of {budget:.0f}s budget"
    if bad:
        detail += f"; first mismatch (seed, n, partition, crossing, total) = {bad[0]}"
    return ok, detail


# -- 2: scalar closed forms ------------------------------------------------------------

SCALAR_WEIGHTS = (
    [BumpWeight(0.5, 2), BumpWeight(0.9, 3)]
    + [GaussianWeight(e) for e in (0.25, 1.0, 4.0)]
    + [ResolventWeight(p, v) for p in (1, 2, 4) for v in ("half_shift", "classic")]
)


def _scalar_path(framed: bool):
    if framed:
        return make_line_path(FramedOperator.diag([-1.0], ESS), FramedOperator.diag([1.0], ESS))
    return make_path(lambda t: np.array([[2.0 * t - 1.0]]), lambda t: np.array([[2.0]]), kind=UNBOUNDED)


def scalar_closed_forms(tol=1e-9, quad_tol=1e-11):
    worst, bad = 0.0, []
    for w in SCALAR_WEIGHTS:
        framed = w.support is not None
        path = _scalar_path(framed)
        est = sf_integral_bounded if framed else sf_integral_unbounded
        for p, expect in ((path, 1.0), (reverse(path), -1.0)):
            total = est(p, w, quad_tol).total
            err = abs(total - expect)
            worst = max(worst, err)
            if err > tol:
                bad.append((w.spec(), expect, total))
    detail = f"{2 * len(SCALAR_WEIGHTS) - len(bad)}/{2 * len(SCALAR_WEIGHTS)} within {tol:g}, worst {worst:.2e}"
    if bad:
        detail += f"; first failure {bad[0]}"
    return not bad, detail


# -- 3: loops integrate to zero -------------------------------------------------------

def loop_vanishing(count=50, dims=(2, 4, 8), quad_tol=1e-11, seed0=2000):
    w = BumpWeight(0.5, 2)
    worst = 0.0
    bad = []
    for i in range(count):
        loop = make_trig_loop(seed0 + i, dims[i % len(dims)], amplitude=0.2, harmonics=2, gap=0.3)
        value = loop_integral(loop, w, quad_tol).value
        bound = 1e-8 * (1.0 + arc_length(loop))
        worst = max(worst, abs(value) / bound)
        if abs(value) >= bound:
            bad.append((seed0 + i, value))
    detail = f"{count - len(bad)}/{count} loops below 1e-8 (1 + length), worst ratio {worst:.2e}"
    return not bad, detail


# -- 4: path independence -------------------------------------------------------------

def _random_endpoint(rng, n):
    return FramedOperator(with_spectrum(random_unitary(rng, n), rng.uniform(-0.9, 0.9, n)), ESS)


def bent_bridge(F0: FramedOperator, F1: FramedOperator, K: np.ndarray):
    """``(1 - t) F0 + t F1 + sin(pi t) K``: same endpoints as the line, homotopic to it."""
    a, b = F0.block, F1.block

    def block(t):
        if t == 0.0:
            return a
        if t == 1.0:
            return b
        return (1.0 - t) * a + t * b + math.sin(math.pi * t) * K

    deriv = lambda t: (b - a) + math.pi * math.cos(math.pi * t) * K
    return make_path(block, deriv, F0.essential_points)


def path_independence(count=25, dims=(2, 4, 8), quad_tol=1e-9, tol=1e-7, seed0=3000):
    w = BumpWeight(0.5, 2)
    worst, bad = 0.0, []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        n = dims[i % len(dims)]
        F0, F1 = _random_endpoint(rng, n), _random_endpoint(rng, n)
        K = random_hermitian(rng, n, 0.05)
        t_line = sf_integral_bounded(make_line_path(F0, F1), w, quad_tol).total
        t_bent = sf_integral_bounded(bent_bridge(F0, F1, K), w, quad_tol).total
        diff = abs(t_line - t_bent)
        worst = max(worst, diff)
        if diff > tol:
            bad.append((seed0 + i, t_line, t_bent))
    return not bad, f"{count - len(bad)}/{count} pairs agree within {tol:g}, worst {worst:.2e}"


# -- 5: unbounded reduction -----------------------------------------------------------

def unbounded_reduction(count=20, n=64, headroom=4.0, epsilon=1.0, p=2, quad_tol=1e-9, seed0=4000, grid=256):
    g = GaussianWeight(epsilon)
    r = ResolventWeight(p, "half_shift")
    pull = PullbackWeight(g)
    allowance = 1e-6 + n * math.exp(-epsilon * headroom**2)
    worst, bad = 0.0, []
    for i in range(count):
        D = make_random_quadratic_path(seed0 + i, n, headroom=headroom)
        rg = sf_integral_unbounded(D, g, quad_tol, grid)
        rr = sf_integral_unbounded(D, r, quad_tol, grid)
        crossings = rg.sf_crossing
        tb = sf_integral_bounded(vartheta_path(D), pull, quad_tol, grid).total
        errs = (abs(rg.total - crossings), abs(rr.total - crossings), abs(tb - rg.total))
        worst = max(worst, *errs)
        if max(errs) > allowance or rg.sf_partition != crossings:
            bad.append((seed0 + i, crossings, rg.total, rr.total, tb))
    detail = f"{count - len(bad)}/{count} paths within {allowance:.2e}, worst {worst:.2e}"
    if bad:
        detail += f"; first failure {bad[0]}"
    return not bad, detail


# -- 6: perturbation identity ----------------------------------------------------------

def doi_identity(count=50, max_n=12, seed0=5000):
    worst, bad = 0.0, []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        n = 2 + i % (max_n - 1)
        A = random_hermitian(rng, n, rng.uniform(0.5, 2.0))
        B = random_hermitian(rng, n, rng.uniform(0.5, 2.0))
        for fn in (doi.SQUARE, doi.CUBE, doi.VARTHETA, doi.TANH):
            res = doi.perturbation_residual(fn, A, B)
            scale = 1.0 + np.linalg.norm(doi.matrix_function(A, fn) - doi.matrix_function(B, fn))
            worst = max(worst, res / scale)
            if res >= 1e-10 * scale:
                bad.append((seed0 + i, fn.name, res))
    return not bad, f"{4 * count - len(bad)}/{4 * count} residual ratios below 1e-10, worst {worst:.2e}"


# -- 7: derivative of vartheta ---------------------------------------------------------

STEPS = (1e-2, 1e-3, 1e-4, 1e-5)


def vartheta_fd_errors(D, X, steps=STEPS):
    exact = doi.vartheta_derivative(D, X)
    errs = []
    for h in steps:
        fd = (doi.matrix_function(D + h * X, doi.VARTHETA) - doi.matrix_function(D - h * X, doi.VARTHETA)) / (2 * h)
        errs.append(float(np.linalg.norm(fd - exact, 2)))
    return np.array(errs)


def vartheta_order(count=10, n=6, seed0=6000, min_order=1.9, direction_norm=3.0):
    # Rounding in the literal difference is about 5e-11 at h = 1e-5 because
    # vartheta is bounded by 1; a direction of norm 3 keeps the h^2 term above it.
    orders = []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        D = random_hermitian(rng, n, 1.5)
        X = random_hermitian(rng, n, direction_norm)
        errs = vartheta_fd_errors(D, X)
        slope = np.polyfit(np.log(STEPS), np.log(errs), 1)[0]
        orders.append(float(slope))
    worst = min(orders)
    return worst >= min_order, f"observed orders {min(orders):.3f}..{max(orders):.3f} (need >= {min_order})"


# -- 8: trace duality ------------------------------------------------------------------

def trace_duality(count=50, dims=(2, 4, 8), seed0=7000):
    worst, bad = 0.0, []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        n = dims[i % len(dims)]
        w = BumpWeight(rng.uniform(0.3, 0.9), int(rng.integers(2, 5)))
        D = FramedOperator(random_hermitian(rng, n, rng.uniform(0.2, 0.95)), ESS)
        V = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        k = doi.bump_trace_kernel(w)
        res = doi.trace_duality_residual(k, D, V)
        fvals = np.diagonal(k.matrix(D.eig.values, D.eig.values)).real
        scale = 1.0 + np.linalg.norm(V, 2) * np.abs(fvals).sum()
        worst = max(worst, res / scale)
        if res >= 1e-10 * scale:
            bad.append((seed0 + i, res))
    return not bad, f"{count - len(bad)}/{count} below 1e-10 scale, worst ratio {worst:.2e}"


# -- 9: interpolation ------------------------------------------------------------------

def _psd(rng, n):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return x @ x.conj().T


def interpolation(count=500, dims=(2, 3, 4, 6), seed0=8000):
    worst, bad = math.inf, []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        n = dims[i % len(dims)]
        theta = 0.1 * (1 + i % 9)
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        B0, B1 = _psd(rng, n), _psd(rng, n)
        gap = doi.interpolation_gap(A, B0, B1, theta)
        rhs = np.linalg.norm(B1 @ A, 2) ** (1 - theta) * np.linalg.norm(A @ B0, 2) ** theta
        worst = min(worst, gap / rhs)
        if gap < -1e-12 * rhs:
            bad.append((seed0 + i, theta, gap))
    return not bad, f"{count - len(bad)}/{count} gaps >= -1e-12 RHS, smallest relative gap {worst:.2e}"


# -- 10: deformation retract -----------------------------------------------------------

def _framed_distance(A: FramedOperator, B: FramedOperator) -> float:
    d = float(np.linalg.norm(A.block - B.block, 2))
    if len(A.essential_points) == len(B.essential_points):
        d = max(d, max((abs(a - b) for a, b in zip(A.essential_points, B.essential_points)), default=0.0))
    return d


def _random_fredholm(rng, n):
    lo, hi = rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0)
    block = random_hermitian(rng, n, rng.uniform(0.1, 4.0))
    return FramedOperator(block, (-lo, hi))


def _random_Fpm1(rng, n):
    return FramedOperator(with_spectrum(random_unitary(rng, n), rng.uniform(-1.0, 1.0, n)), ESS)


def retract_checks(count=50, dims=(1, 2, 4, 6), samples=32, seed0=9000):
    fails = []
    for i in range(count):
        rng = np.random.default_rng(seed0 + i)
        n = dims[i % len(dims)]
        F = _random_fredholm(rng, n)
        r0 = retract(F, 0.0)
        if not (np.array_equal(r0.block, F.block) and r0.essential_points == F.essential_points):
            fails.append(("identity at 0", seed0 + i))
        if not essential_data(retract(F, 1.0)).in_Fpm1:
            fails.append(("endpoint not in F*^{+-1}", seed0 + i))
        G = _random_Fpm1(rng, n)
        if _framed_distance(retract(G, 1.0), G) > 1e-12:
            fails.append(("not fixed", seed0 + i))
        C = retract_lipschitz_bound(F)
        ts = np.sort(rng.uniform(0.0, 1.0, samples))
        for a, b in zip(ts[:-1], ts[1:]):
            dist = _framed_distance(retract(F, float(a)), retract(F, float(b)))
            if dist > C * (b - a) * (1.0 + 1e-9) + 1e-12:
                fails.append(("Lipschitz", seed0 + i, float(a), float(b)))
                break
    detail = f"{count} operators: identity at 0, endpoint in F*^(+-1), fixed points, Lipschitz modulus"
    if fails:
        detail += f"; {len(fails)} failures, first {fails[0]}"
    return not fails, detail


# -- 11: weights -----------------------------------------------------------------------

ALL_WEIGHTS = (
    [BumpWeight(d, m) for d in (0.25, 0.5, 1.0) for m in (2, 3, 4)]
    + [GaussianWeight(e) for e in (0.25, 1.0, 4.0)]
    + [ResolventWeight(p, v) for p in (1, 2, 3, 4) for v in ("half_shift", "classic")]
)


def weight_checks(seed=10_000):
    rng = np.random.default_rng(seed)
    fails = []
    for w in ALL_WEIGHTS:
        try:
            w.check_normalization(1e-10)
        except Exception as exc:  # report, do not abort the suite
            fails.append((w.spec(), str(exc)))
        x = rng.uniform(-5.0, 5.0, 200)
        x = x[x != 0.0]
        if np.abs(w.boundary_f(x) + w.boundary_f(-x)).max() > 1e-14:
            fails.append((w.spec(), "boundary not odd"))
    c1 = 1.0 / ResolventWeight(1, "classic").normalization
    c2 = 1.0 / ResolventWeight(2, "half_shift").normalization
    q1 = integrate_line(lambda x: 1.0 / (1.0 + x * x), 1e-12).value
    q2 = integrate_line(lambda x: (1.0 + x * x) ** -1.5, 1e-12).value
    for label, val, ref in (("c1", c1, math.pi), ("c2", c2, 2.0), ("c1 quad", q1, math.pi), ("c2 quad", q2, 2.0)):
        if abs(val - ref) > 1e-10:
            fails.append((label, val))
    detail = f"{len(ALL_WEIGHTS)} weights; c1 = {c1:.12f}, c2 = {c2:.12f}"
    if fails:
        detail += f"; failures {fails[:2]}"
    return not fails, detail


CRITERIA: list[tuple[str, str, Callable]] = [
    ("1", "four-way agreement", four_way_agreement),
    ("2", "scalar closed forms", scalar_closed_forms),
    ("3", "loop vanishing", loop_vanishing),
    ("4", "path independence", path_independence),
    ("5", "unbounded reduction", unbounded_reduction),
    ("6", "DOI perturbation identity", doi_identity),
    ("7", "vartheta derivative order", vartheta_order),
    ("8", "trace duality", trace_duality),
    ("9", "interpolation bound", interpolation),
    ("10", "deformation retract", retract_checks),
    ("11", "weight normalization and antisymmetry", weight_checks),
]


def run_criterion(key: str, name: str, fn: Callable) -> CriterionResult:
    started = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crash is a failure of that criterion only
        log.debug("criterion %s crashed:\n%s", key, traceback.format_exc())
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CriterionResult(key, name, bool(passed), detail, time.perf_counter() - started)


def select(filter_: Optional[str] = None):
    if not filter_:
        return list(CRITERIA)
    f = filter_.lower()
    return [c for c in CRITERIA if f == c[0] or f in c[1].lower()]


def run_acceptance(filter_: Optional[str] = None, emit: Callable[[str], None] = print) -> list:
    results = []
    for key, name, fn in select(filter_):
        res = run_criterion(key, name, fn)
        emit(res.line())
        results.append(res)
    return results
