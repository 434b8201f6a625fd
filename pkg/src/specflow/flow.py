"""Spectral flow estimators, loop integrals and the deformation retract.

Four independent estimates of the spectral flow of a path:

* ``sf_partition``: sum of relative indices of the nonnegative spectral
  projections along a partition of ``[0, 1]``;
* ``sf_crossing``: signed count of eigenvalue branches passing through 0;
* ``sf_integral_bounded``: ``int tr(Fdot h(F)) dt`` plus a boundary term, for
  compactly supported ``h`` inside the essential gap;
* ``sf_integral_unbounded``: the same with a whole-line weight ``g`` applied
  to an unframed path.

Eigenvalue 0 counts as nonnegative throughout.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateCrossingError,
    HypothesisViolationError,
    InvalidInputError,
    InvalidPairError,
    InvalidWeightError,
    ModelViolationError,
    NoCalkinModelError,
    PathTooWildError,
)
from .operators import (
    FramedOperator,
    apply_function,
    essential_data,
    hermitian_part,
    same_framing,
)
from .paths import UNBOUNDED, OperatorPath, sample_block
from .quadrature import integrate_segments
from .weights import GaussianWeight, ResolventWeight, SpectralWeight, boundary_term

log = logging.getLogger(__name__)

PROJECTION_TOL = 1e-8
INDEX_DEFECT_TOL = 1e-6
MAX_PARTITION_POINTS = 2**14
MAX_REFINE_LEVEL = 14
SUPPORT_MARGIN = 1e-6
DEFAULT_GRID = 256


# -- relative index and partition -------------------------------------------------


def _check_projection(P: FramedOperator, name: str):
    b = P.block
    scale = max(1.0, float(np.linalg.norm(b, 2)))
    if np.abs(b @ b - b).max(initial=0.0) > PROJECTION_TOL * scale:
        raise InvalidInputError(f"{name} is not idempotent")
    for e in P.essential_points:
        if min(abs(e), abs(e - 1.0)) > PROJECTION_TOL:
            raise InvalidInputError(f"{name} has essential point {e} outside {{0, 1}}")


def relative_index(P: FramedOperator, Q: FramedOperator) -> int:
    """Index of ``P Q : QH -> PH``, which is ``tr Q - tr P`` when ``P - Q`` has finite rank."""
    _check_projection(P, "P")
    _check_projection(Q, "Q")
    if not same_framing(P, Q):
        raise InvalidPairError("projections have different essential parts")
    return _index_from_traces(float(np.trace(P.block).real), float(np.trace(Q.block).real))


def _index_from_traces(trP: float, trQ: float) -> int:
    value = trQ - trP
    rounded = round(value)
    if abs(value - rounded) > INDEX_DEFECT_TOL:
        raise ModelViolationError(f"relative index {value!r} is not within {INDEX_DEFECT_TOL} of an integer")
    return int(rounded)


def _nonneg_projection(block: np.ndarray) -> np.ndarray:
    vals, U = np.linalg.eigh(block)
    keep = U[:, vals >= 0.0]
    return keep @ keep.conj().T


def _grid(path: OperatorPath, grid: int) -> list:
    if grid < 2:
        raise InvalidInputError("grid must be at least 2")
    pts = set(np.linspace(0.0, 1.0, grid).tolist())
    pts.update(path.breakpoints)
    return sorted(pts)


def _needs_refinement(P: np.ndarray, Q: np.ndarray) -> bool:
    # Projections of different rank are always at distance 1, so the
    # closeness test only applies to equal ranks; a rank jump of more than one
    # means several crossings were lumped together.
    rp, rq = round(float(np.trace(P).real)), round(float(np.trace(Q).real))
    if abs(rp - rq) > 1:
        return True
    return rp == rq and np.linalg.norm(P - Q, 2) >= 1.0 - 1e-9


def _refined_partition(path: OperatorPath, grid: int):
    ts = _grid(path, grid)
    proj = {t: _nonneg_projection(hermitian_part(path.block(t))) for t in ts}
    level = {t: 0 for t in ts}
    stack = list(zip(ts[:-1], ts[1:]))
    while stack:
        a, b = stack.pop()
        if not _needs_refinement(proj[a], proj[b]):
            continue
        depth = max(level[a], level[b])
        if depth >= MAX_REFINE_LEVEL or len(proj) >= MAX_PARTITION_POINTS:
            raise PathTooWildError(
                f"projections near t={a:.6g} stay incompatible after {depth} halvings ({len(proj)} points)"
            )
        m = 0.5 * (a + b)
        proj[m] = _nonneg_projection(hermitian_part(path.block(m)))
        level[m] = depth + 1
        stack.extend([(m, b), (a, m)])
    return sorted(proj), proj


def _phillips_sum(ts, proj) -> int:
    traces = [float(np.trace(proj[t]).real) for t in ts]
    return sum(_index_from_traces(p, q) for p, q in zip(traces[:-1], traces[1:]))


def sf_partition(path: OperatorPath, grid: int = DEFAULT_GRID) -> int:
    """Phillips sum over a partition refined until consecutive projections are compatible.

    The sum is recomputed after halving every interval and the two must
    agree; the telescoped value ``tr P_1 - tr P_0`` is a further cross-check.
    """
    ts, proj = _refined_partition(path, grid)
    total = _phillips_sum(ts, proj)
    fine = sorted(set(ts) | {0.5 * (a + b) for a, b in zip(ts[:-1], ts[1:])})
    if len(fine) > MAX_PARTITION_POINTS:
        raise PathTooWildError(f"doubled partition exceeds {MAX_PARTITION_POINTS} points")
    for t in fine:
        if t not in proj:
            proj[t] = _nonneg_projection(hermitian_part(path.block(t)))
    doubled = _phillips_sum(fine, proj)
    telescoped = _index_from_traces(float(np.trace(proj[0.0]).real), float(np.trace(proj[1.0]).real))
    if not total == doubled == telescoped:
        raise ModelViolationError(
            f"partition sum is not refinement invariant ({total}, doubled {doubled}, telescoped {telescoped})"
        )
    return total


# -- crossings ------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossingEvent:
    t: float
    branch: int
    direction: int


def _branch_values(path, ts):
    return np.array([np.linalg.eigvalsh(hermitian_part(path.block(t))) for t in ts])


def _locate(path, branch, a, b, up, iters=60):
    for _ in range(iters):
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        nonneg = np.linalg.eigvalsh(hermitian_part(path.block(m)))[branch] >= 0.0
        if nonneg == up:
            b = m
        else:
            a = m
    return b


def crossing_events(path: OperatorPath, grid: int = DEFAULT_GRID, locate: bool = True) -> list:
    """Signed sign changes of each sorted eigenvalue branch between grid samples."""
    ts = _grid(path, grid)
    lam = _branch_values(path, ts)
    nonneg = lam >= 0.0
    events = []
    for k in range(len(ts) - 1):
        changed = np.nonzero(nonneg[k] != nonneg[k + 1])[0]
        for i in changed:
            up = bool(nonneg[k + 1, i])
            t = _locate(path, int(i), ts[k], ts[k + 1], up) if locate else 0.5 * (ts[k] + ts[k + 1])
            events.append(CrossingEvent(t, int(i), 1 if up else -1))
    return events, int(nonneg[-1].sum() - nonneg[0].sum())


def sf_crossing(path: OperatorPath, grid: int = DEFAULT_GRID) -> int:
    """Signed 0-crossing tally, checked against the endpoint count."""
    events, endpoint = crossing_events(path, grid, locate=False)
    tally = sum(e.direction for e in events)
    if tally != endpoint:
        raise DegenerateCrossingError(
            f"crossing tally {tally} differs from endpoint count {endpoint}; refine the grid"
        )
    return tally


# -- reports ----------------------------------------------------------------------------


@dataclass
class SFReport:
    sf_partition: int
    sf_crossing: int
    integral_value: float
    boundary_term: float
    total: float
    rounded_total: int
    integer_defect: float
    quadrature_error_estimate: float
    wall_time: float = field(default=0.0)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=False)

    def agrees(self, defect_tol: float = INDEX_DEFECT_TOL) -> bool:
        return (
            self.sf_partition == self.sf_crossing == self.rounded_total
            and self.integer_defect <= defect_tol
        )


def _assemble(path, grid, integral, boundary, started) -> SFReport:
    total = integral.value + boundary
    rounded = int(round(total))
    return SFReport(
        sf_partition=sf_partition(path, grid),
        sf_crossing=sf_crossing(path, grid),
        integral_value=float(integral.value),
        boundary_term=float(boundary),
        total=float(total),
        rounded_total=rounded,
        integer_defect=float(abs(total - rounded)),
        quadrature_error_estimate=float(integral.error_estimate),
        wall_time=1e3 * (time.perf_counter() - started),
    )


# -- integrals --------------------------------------------------------------------------


def trace_integrand(block: np.ndarray, fdot: np.ndarray, h) -> float:
    """``tr(Fdot h(F))`` through the eigenbasis of ``F``; only the support of ``h`` is touched."""
    vals, U = np.linalg.eigh(block)
    hv = np.asarray(h(vals), dtype=float)
    live = np.nonzero(hv)[0]
    if live.size == 0:
        return 0.0
    Ul = U[:, live]
    diag = np.einsum("ij,ij->j", Ul.conj(), fdot @ Ul).real
    return math.fsum(hv[live] * diag)


def _integral(path: OperatorPath, h, quad_tol: float):
    def integrand(t, lo, hi):
        side = "right" if t == lo else "left"
        F, Fdot, _ = sample_block(path, t, side)
        return trace_integrand(hermitian_part(F), Fdot, h)

    points = [0.0, *path.breakpoints, 1.0]
    return integrate_segments(integrand, points, quad_tol)


def check_support(w: SpectralWeight, delta: float):
    """Enforce ``supp h`` inside ``[-delta (1 - 1e-6), delta (1 - 1e-6)]``."""
    if w.support is None:
        raise HypothesisViolationError(f"{w.kind} weight is not compactly supported")
    reach = max(abs(w.support[0]), abs(w.support[1]))
    limit = delta * (1.0 - SUPPORT_MARGIN)
    if reach > limit:
        raise HypothesisViolationError(
            f"weight support reaches {reach:.6g}, beyond the essential gap allowance {limit:.6g}"
        )


def path_delta(path: OperatorPath) -> float:
    if not path.essential_points:
        raise NoCalkinModelError("bounded formulas need a framed path (essential points)")
    return float(min(abs(e) for e in path.essential_points))


def _endpoints(path: OperatorPath):
    F0 = FramedOperator(path.block(0.0), path.essential_points)
    F1 = FramedOperator(path.block(1.0), path.essential_points)
    return F0, F1


def sf_integral_bounded(
    path: OperatorPath, w: SpectralWeight, quad_tol: float = 1e-9, grid: int = DEFAULT_GRID
) -> SFReport:
    """Integral formula for a framed path with a weight supported inside the essential gap."""
    started = time.perf_counter()
    if path.kind == UNBOUNDED:
        raise InvalidInputError("use sf_integral_unbounded for unbounded-model paths")
    check_support(w, path_delta(path))
    integral = _integral(path, w.h, quad_tol)
    F0, F1 = _endpoints(path)
    return _assemble(path, grid, integral, boundary_term(w, F0, F1), started)


UNBOUNDED_WEIGHTS = (GaussianWeight, ResolventWeight)


def sf_integral_unbounded(
    Dpath: OperatorPath, w: SpectralWeight, quad_tol: float = 1e-9, grid: int = DEFAULT_GRID
) -> SFReport:
    """Integral formula with a whole-line weight (gaussian or resolvent)."""
    started = time.perf_counter()
    if not isinstance(w, UNBOUNDED_WEIGHTS):
        raise InvalidWeightError(f"{w.kind} weight is not admissible for the unbounded formula")
    integral = _integral(Dpath, w.h, quad_tol)
    D0, D1 = _endpoints(Dpath)
    return _assemble(Dpath, grid, integral, boundary_term(w, D0, D1), started)


def loop_integral(loop: OperatorPath, w: SpectralWeight, quad_tol: float = 1e-9, framed: Optional[bool] = None):
    """``int tr(Fdot h(F)) dt`` over a closed loop; returns the quadrature result.

    Framed loops must satisfy the bounded support hypothesis; unframed loops
    accept any weight.
    """
    if not np.array_equal(loop.block(0.0), loop.block(1.0)):
        raise InvalidInputError("loop is not closed (F_0 != F_1 bit for bit)")
    if framed is None:
        framed = bool(loop.essential_points)
    if framed:
        check_support(w, path_delta(loop))
    return _integral(loop, w.h, quad_tol)


# -- deformation retract ------------------------------------------------------------------


def clamp(x):
    """``chi(x) = |x + 1|/2 - |x - 1|/2``, i.e. ``x`` clipped to ``[-1, 1]``."""
    return np.clip(np.asarray(x, dtype=float), -1.0, 1.0)


def _scale(F: FramedOperator, c: float) -> FramedOperator:
    return FramedOperator.trusted(F.block / c, tuple(e / c for e in F.essential_points))


def retract(F: FramedOperator, t: float) -> FramedOperator:
    """Deformation of the Fredholm operators onto norm-one operators with essential spectrum ``{+-1}``.

    On ``[0, 1/2]``: ``F / (1 - s + s delta_F)`` with ``s = 2t``, ending at
    ``G = F / delta_F``.  On ``[1/2, 1]``: ``(1 - s) G + s chi(G)`` with
    ``s = 2t - 1``.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidInputError(f"t = {t} lies outside [0, 1]")
    data = essential_data(F)
    if not data.is_fredholm:
        raise InvalidInputError("retract needs a Fredholm operator (0 outside the essential points)")
    if t == 0.0:
        return F
    delta = data.delta_F
    if t <= 0.5:
        s = 2.0 * t
        return _scale(F, 1.0 - s + s * delta)
    G = F if delta == 1.0 else _scale(F, delta)
    vals = G.eig.values
    ess = np.array(G.essential_points)
    if np.all(np.abs(vals) <= 1.0) and np.all(np.abs(ess) <= 1.0):
        # chi is the identity on [-1, 1], so chi(G) = G
        return G
    C = apply_function(G, clamp)
    s = 2.0 * t - 1.0
    if s == 1.0:
        return C
    return FramedOperator.trusted(
        (1.0 - s) * G.block + s * C.block,
        tuple((1.0 - s) * g + s * float(clamp(g)) for g in G.essential_points),
    )


def retract_lipschitz_bound(F: FramedOperator) -> float:
    """Lipschitz constant of ``t -> retract(F, t)`` in operator norm."""
    data = essential_data(F)
    delta = data.delta_F
    norm = max(float(np.abs(F.eig.values).max(initial=0.0)), data.essential_norm)
    first = 2.0 * norm * abs(delta - 1.0) / min(1.0, delta) ** 2
    second = 2.0 * max(norm / delta - 1.0, 0.0)
    return max(first, second)
