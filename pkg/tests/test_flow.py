import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import erf

from specflow import flow, paths
from specflow.errors import (
    HypothesisViolationError,
    InvalidInputError,
    InvalidWeightError,
    ModelViolationError,
    NoCalkinModelError,
    PathTooWildError,
)
from specflow.operators import FramedOperator, essential_data, phase, random_hermitian, random_unitary
from specflow.weights import BumpWeight, GaussianWeight, ResolventWeight

from conftest import ESS


def scalar_path(a, b, ess=ESS, kind=paths.BOUNDED):
    return paths.make_line_path(FramedOperator.diag([a], ess), FramedOperator.diag([b], ess), kind)


def rising():
    return scalar_path(-1.0, 1.0)


class TestRelativeIndex:
    def test_equal(self):
        P = FramedOperator.diag([1.0, 0.0, 1.0])
        assert flow.relative_index(P, P) == 0

    def test_inclusion(self):
        assert flow.relative_index(FramedOperator.diag([1.0, 1.0]), FramedOperator.diag([1.0, 0.0])) == -1

    def test_equal_rank(self):
        assert flow.relative_index(FramedOperator.diag([1.0, 0.0]), FramedOperator.diag([0.0, 1.0])) == 0

    def test_not_a_projection(self):
        with pytest.raises(InvalidInputError):
            flow.relative_index(FramedOperator.diag([0.5]), FramedOperator.diag([1.0]))

    def test_essential_mismatch(self):
        with pytest.raises(Exception):
            flow.relative_index(FramedOperator.diag([1.0], (0.0, 1.0)), FramedOperator.diag([1.0], (1.0,)))

    def test_defect(self):
        with pytest.raises(ModelViolationError):
            flow._index_from_traces(0.0, 0.4)


class TestDiscreteEstimators:
    def test_constant(self, rng):
        p = paths.constant_path(FramedOperator(random_hermitian(rng, 4, 0.8), ESS))
        assert flow.sf_partition(p) == 0 and flow.sf_crossing(p) == 0

    def test_scalar_rising(self):
        assert flow.sf_partition(rising()) == 1
        assert flow.sf_crossing(rising()) == 1

    def test_scalar_reversed(self):
        p = paths.reverse(rising())
        assert flow.sf_partition(p) == -1 and flow.sf_crossing(p) == -1

    def test_crossing_located(self):
        events, endpoint = flow.crossing_events(rising(), grid=16)
        assert endpoint == 1 and len(events) == 1
        assert events[0].direction == 1 and abs(events[0].t - 0.5) < 1e-12

    def test_opposite_crossings_cancel(self):
        p = paths.make_path(lambda t: np.diag([2 * t - 1, 1 - 2 * t]), lambda t: np.diag([2.0, -2.0]), ESS)
        events, _ = flow.crossing_events(p, grid=17)
        assert sorted(e.direction for e in events) == [-1, 1]
        assert flow.sf_crossing(p) == 0 and flow.sf_partition(p) == 0

    def test_loop(self):
        loop = paths.make_trig_loop(5, 4, 0.2)
        assert flow.sf_crossing(loop) == 0 and flow.sf_partition(loop) == 0

    def test_eigenvalue_swap_needs_refinement(self):
        # two eigenvalues rotate through each other's eigenspaces while one crosses zero
        def block(t):
            c, s = math.cos(math.pi * t / 2), math.sin(math.pi * t / 2)
            U = np.array([[c, -s], [s, c]])
            return U @ np.diag([2 * t - 1, 0.5]) @ U.T

        p = paths.make_path(block, essential_points=ESS)
        assert flow.sf_partition(p, grid=2) == 1

    def test_too_wild(self):
        # jump between orthogonal projections at a point no dyadic partition hits
        def block(t):
            return np.diag([0.5, -0.5]) if t < 1 / 3 else np.diag([-0.5, 0.5])

        p = paths.make_path(block, essential_points=ESS, check=False)
        with pytest.raises(PathTooWildError):
            flow.sf_partition(p, grid=2)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=10)
    def test_partition_matches_crossing(self, seed):
        p = paths.make_trig_path(seed, 4)
        assert flow.sf_partition(p) == flow.sf_crossing(p)

    def test_zero_endpoint_convention(self):
        # 0 counts as nonnegative: leaving 0 upward is no flow, leaving downward is -1
        assert flow.sf_crossing(scalar_path(0.0, 1.0)) == 0
        assert flow.sf_crossing(scalar_path(0.0, -1.0)) == -1
        assert flow.sf_crossing(scalar_path(-1.0, 0.0)) == 1
        # so a path ending at 0 and its mirror image do not have opposite flow
        assert flow.sf_crossing(scalar_path(1.0, 0.0)) == 0


class TestBoundedIntegral:
    def test_scalar_rising(self):
        r = flow.sf_integral_bounded(rising(), BumpWeight(0.5), quad_tol=1e-11)
        assert abs(r.integral_value - 1.0) < 1e-10
        assert r.boundary_term == 0.0
        assert r.rounded_total == 1 and r.agrees()

    def test_constant(self, rng):
        p = paths.constant_path(FramedOperator(random_hermitian(rng, 3, 0.9), ESS))
        assert flow.sf_integral_bounded(p, BumpWeight(0.5)).total == 0.0

    def test_unitarily_equivalent_endpoints(self, rng):
        F0 = FramedOperator(random_hermitian(rng, 4, 0.9), ESS)
        U = random_unitary(rng, 4)
        F1 = FramedOperator(U @ F0.block @ U.conj().T, ESS)
        r = flow.sf_integral_bounded(paths.make_line_path(F0, F1), BumpWeight(0.4))
        assert abs(r.boundary_term) < 1e-13
        assert abs(r.total - r.integral_value) < 1e-13

    def test_support_violation(self):
        with pytest.raises(HypothesisViolationError):
            flow.sf_integral_bounded(scalar_path(-0.5, 0.5, (-0.3, 1.0)), BumpWeight(0.5))

    def test_whole_line_weight_rejected(self):
        with pytest.raises(HypothesisViolationError):
            flow.sf_integral_bounded(rising(), GaussianWeight(1.0))

    def test_unframed_rejected(self):
        with pytest.raises(NoCalkinModelError):
            flow.sf_integral_bounded(scalar_path(-1.0, 1.0, ()), BumpWeight(0.5))

    def test_endpoint_at_zero(self):
        for a, b, expect in ((0.0, 1.0, 0), (0.0, -1.0, -1), (-1.0, 0.0, 1), (1.0, 0.0, 0)):
            r = flow.sf_integral_bounded(scalar_path(a, b), BumpWeight(0.5), quad_tol=1e-11)
            assert abs(r.total - expect) < 1e-9 and r.sf_crossing == expect

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_weight_independence(self, seed):
        p = paths.make_trig_path(seed, 5)
        tol = 1e-9
        a = flow.sf_integral_bounded(p, BumpWeight(0.9, 2), tol).total
        b = flow.sf_integral_bounded(p, BumpWeight(0.4, 3), tol).total
        assert abs(a - b) < 10 * tol

    @pytest.mark.parametrize("seed", [3, 4])
    def test_agreement(self, seed):
        r = flow.sf_integral_bounded(paths.make_trig_path(seed, 6), BumpWeight(0.8), 1e-10)
        assert r.agrees()
        assert abs(r.total - r.sf_crossing) <= 10 * 1e-10 + 1e-8

    def test_additive_under_concatenation(self):
        a = paths.make_trig_path(7, 3)
        F1 = a.at(1.0)
        F2 = FramedOperator(np.diag([-0.5, 0.3, 0.6]), ESS)
        b = paths.make_line_path(F1, F2)
        w = BumpWeight(0.7)
        ra, rb = flow.sf_integral_bounded(a, w, 1e-10), flow.sf_integral_bounded(b, w, 1e-10)
        rab = flow.sf_integral_bounded(paths.concatenate(a, b), w, 1e-10)
        assert abs(rab.total - ra.total - rb.total) < 1e-8
        assert rab.sf_partition == ra.sf_partition + rb.sf_partition
        assert rab.sf_crossing == ra.sf_crossing + rb.sf_crossing

    def test_reversal(self):
        p = paths.make_trig_path(8, 4)
        w = BumpWeight(0.6)
        fwd, bwd = flow.sf_integral_bounded(p, w), flow.sf_integral_bounded(paths.reverse(p), w)
        assert abs(fwd.total + bwd.total) < 1e-8
        assert fwd.sf_partition == -bwd.sf_partition

    def test_homotopy_invariance(self, rng):
        F0 = FramedOperator(np.diag([-0.6, 0.2, 0.7]), ESS)
        F1 = FramedOperator(np.diag([0.5, -0.3, 0.7]), ESS)
        K = random_hermitian(rng, 3, 0.2)
        bent = paths.make_path(
            lambda t: (1 - t) * F0.block + t * F1.block + math.sin(math.pi * t) * K,
            lambda t: F1.block - F0.block + math.pi * math.cos(math.pi * t) * K,
            ESS,
        )
        w = BumpWeight(0.6)
        a = flow.sf_integral_bounded(paths.make_line_path(F0, F1), w, 1e-10).total
        b = flow.sf_integral_bounded(bent, w, 1e-10).total
        assert abs(a - b) < 1e-9


class TestReport:
    def test_fields(self):
        r = flow.sf_integral_bounded(rising(), BumpWeight(0.5))
        assert list(r.to_dict()) == [
            "sf_partition",
            "sf_crossing",
            "integral_value",
            "boundary_term",
            "total",
            "rounded_total",
            "integer_defect",
            "quadrature_error_estimate",
            "wall_time",
        ]
        assert "wall_time" not in json.loads(r.to_json(timing=False))
        assert r.integer_defect == abs(r.total - r.rounded_total)


class TestUnboundedIntegral:
    @pytest.mark.parametrize("a,eps", [(1.0, 1.0), (3.0, 0.5), (0.4, 2.0)])
    def test_gaussian_scalar(self, a, eps):
        p = scalar_path(-a, a, (), paths.UNBOUNDED)
        r = flow.sf_integral_unbounded(p, GaussianWeight(eps), 1e-11)
        E = erf(a * math.sqrt(eps))
        assert abs(r.integral_value - E) < 1e-10
        assert abs(r.boundary_term - (1 - E)) < 1e-10
        assert r.rounded_total == 1 and r.sf_crossing == 1

    @pytest.mark.parametrize("a", [0.5, 2.0, 10.0])
    def test_resolvent_classic_scalar(self, a):
        p = scalar_path(-a, a, (), paths.UNBOUNDED)
        r = flow.sf_integral_unbounded(p, ResolventWeight(1.0, "classic"), 1e-11)
        assert abs(r.integral_value - 2 / math.pi * math.atan(a)) < 1e-10
        assert abs(r.total - 1.0) < 1e-10

    def test_constant(self, rng):
        p = paths.constant_path(FramedOperator(random_hermitian(rng, 3, 4.0)), paths.UNBOUNDED)
        assert flow.sf_integral_unbounded(p, GaussianWeight(1.0)).total == 0.0

    def test_bump_not_admissible(self):
        with pytest.raises(InvalidWeightError):
            flow.sf_integral_unbounded(scalar_path(-1, 1, (), paths.UNBOUNDED), BumpWeight(0.5))

    @pytest.mark.parametrize("seed", [0, 1])
    def test_random_quadratic(self, seed):
        p = paths.make_random_quadratic_path(seed, 6)
        r = flow.sf_integral_unbounded(p, GaussianWeight(1.0), 1e-10)
        assert r.agrees()


class TestLoopIntegral:
    def test_constant(self):
        loop = paths.constant_path(FramedOperator.diag([0.3, -0.4], ESS))
        assert flow.loop_integral(loop, BumpWeight(0.2)).value == 0.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_trig_loop(self, seed):
        loop = paths.make_trig_loop(seed, 5, 0.2)
        assert abs(flow.loop_integral(loop, BumpWeight(0.28), 1e-11).value) < 1e-8

    def test_not_closed(self):
        with pytest.raises(InvalidInputError):
            flow.loop_integral(rising(), BumpWeight(0.5))

    def test_support(self):
        loop = paths.constant_path(FramedOperator.diag([0.3], (-0.2, 1.0)))
        with pytest.raises(HypothesisViolationError):
            flow.loop_integral(loop, BumpWeight(0.5))

    def test_rectangle_loop(self):
        F0 = FramedOperator(np.diag([-0.7, 0.3, 0.8]), ESS)
        F1 = FramedOperator(np.diag([0.4, 0.5, 0.8]), ESS)
        bridge = paths.make_line_path(F0, F1)
        loop = paths.make_phase_rectangle_loop(F0, F1, bridge)
        w = BumpWeight(0.25)
        value = flow.loop_integral(loop, w, 1e-11).value
        assert abs(value) < 1e-8
        # bridge integral cancels the three straight legs through the phases
        B0, B1 = phase(F0), phase(F1)
        pieces = [bridge, paths.make_line_path(F1, B1), paths.make_line_path(B1, B0), paths.make_line_path(B0, F0)]
        ints = [flow.sf_integral_bounded(q, w, 1e-11).integral_value for q in pieces]
        assert abs(ints[0] + sum(ints[1:])) < 1e-8
        assert abs(ints[0]) > 0.5

    def test_unframed_loop_accepts_gaussian(self):
        D = np.diag([2.0, -3.0])
        loop = paths.make_path(lambda t: D + math.sin(2 * math.pi * (t % 1.0)) * np.eye(2) * 0.5, essential_points=())
        assert abs(flow.loop_integral(loop, GaussianWeight(1.0), 1e-11).value) < 1e-9


class TestRetract:
    def test_identity_at_zero(self, rng):
        F = FramedOperator(random_hermitian(rng, 3, 2.0), (-3.0, 2.0))
        assert flow.retract(F, 0.0) is F

    def test_fixed_point(self, rng):
        F = FramedOperator(random_hermitian(rng, 4, 0.9), ESS)
        for t in (0.3, 0.5, 0.8, 1.0):
            assert np.allclose(flow.retract(F, t).block, F.block)

    def test_scalar_example(self):
        F = FramedOperator.diag([3.0], (-2.0, 2.0))
        half = flow.retract(F, 0.5)
        assert np.allclose(half.block, [[1.5]]) and half.essential_points == (-1.0, 1.0)
        end = flow.retract(F, 1.0)
        assert np.allclose(end.block, [[1.0]]) and end.essential_points == (-1.0, 1.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0), st.floats(0.2, 5.0))
    @settings(max_examples=25)
    def test_lands_in_Fpm1(self, seed, lo, hi):
        F = FramedOperator(random_hermitian(np.random.default_rng(seed), 4, 3.0), (-lo, hi))
        if not essential_data(F).is_fredholm:
            return
        assert essential_data(flow.retract(F, 1.0)).in_Fpm1

    def test_lipschitz(self, rng):
        F = FramedOperator(random_hermitian(rng, 4, 4.0), (-0.5, 3.0))
        L = flow.retract_lipschitz_bound(F)
        ts = np.linspace(0, 1, 201)
        blocks = [flow.retract(F, float(t)).block for t in ts]
        steps = [np.linalg.norm(b - a, 2) / (ts[1] - ts[0]) for a, b in zip(blocks[:-1], blocks[1:])]
        assert max(steps) <= L * (1 + 1e-9)

    def test_non_fredholm(self):
        with pytest.raises(InvalidInputError):
            flow.retract(FramedOperator.diag([1.0], (0.0, 1.0)), 0.5)

    def test_t_range(self):
        with pytest.raises(InvalidInputError):
            flow.retract(FramedOperator.diag([1.0], ESS), 1.5)

    def test_clamp(self):
        assert flow.clamp(2.0) == 1.0 and flow.clamp(-0.5) == -0.5 and flow.clamp(1.0) == 1.0
        x = np.linspace(-3, 3, 61)
        assert np.allclose(flow.clamp(x), 0.5 * np.abs(x + 1) - 0.5 * np.abs(x - 1))
