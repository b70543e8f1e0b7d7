import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralfield import (
    FieldState,
    FiringRate,
    Grid,
    LearningKernel,
    ModelSpec,
    SynapticKernel,
    apply_F,
    apply_J,
    build_operator,
    make_quadrature,
)
from conftest import exponential_kernel, make_model, zero_firing
from oracles import brute_force_apply_j


class TestGrid:
    def test_compact_spacing_and_nodes(self):
        g = Grid(bounds=[(-1.0, 1.0)], npts=[5])
        assert g.spacing == (0.5,)
        assert np.array_equal(g.axis_nodes[0], [-1.0, -0.5, 0.0, 0.5, 1.0])
        assert np.all(np.diff(g.axis_nodes[0]) > 0)

    def test_periodic_spacing_excludes_endpoint(self):
        g = Grid(bounds=[(0.0, 1.0)], npts=[4], boundary="periodic")
        assert g.spacing == (0.25,)
        assert np.array_equal(g.axis_nodes[0], [0.0, 0.25, 0.5, 0.75])

    def test_minimum_nodes(self):
        with pytest.raises(ValueError):
            Grid(bounds=[(0.0, 1.0)], npts=[2])

    def test_2d_lexicographic_points(self):
        g = Grid(bounds=[(0.0, 1.0), (0.0, 2.0)], npts=[3, 5])
        assert g.n_total == 15
        assert g.points.shape == (15, 2)
        # first axis varies slowest
        assert np.array_equal(g.points[0], [0.0, 0.0])
        assert np.array_equal(g.points[4], [0.0, 2.0])
        assert np.array_equal(g.points[5], [0.5, 0.0])
        assert g.volume == 2.0

    def test_periodic_minimal_image(self):
        g = Grid(bounds=[(0.0, 10.0)], npts=[10], boundary="periodic")
        d = g.pairwise_distance()
        assert d[0, 9] == pytest.approx(1.0)  # wraps around, not 9
        assert d.max() <= 5.0 + 1e-12


class TestQuadrature:
    @given(st.integers(3, 400), st.floats(-5, 0), st.floats(1, 7))
    @settings(max_examples=100)
    def test_trapezoid_weights_sum_to_volume(self, n, a, b):
        g = Grid(bounds=[(a, b)], npts=[n])
        q = make_quadrature(g, "trapezoid")
        assert np.all(q.weights > 0)
        assert np.sum(q.weights) == pytest.approx(b - a, abs=1e-12)

    @given(st.integers(1, 150), st.floats(-5, 0), st.floats(1, 7))
    @settings(max_examples=100)
    def test_simpson_weights_sum_to_volume(self, half, a, b):
        n = 2 * half + 1
        g = Grid(bounds=[(a, b)], npts=[n])
        q = make_quadrature(g, "simpson")
        assert np.all(q.weights > 0)
        assert np.sum(q.weights) == pytest.approx(b - a, abs=1e-12)

    def test_simpson_needs_odd_node_count(self):
        g = Grid(bounds=[(0.0, 1.0)], npts=[4])
        with pytest.raises(ValueError, match="odd"):
            make_quadrature(g, "simpson")

    def test_simpson_rejected_on_periodic(self):
        g = Grid(bounds=[(0.0, 1.0)], npts=[5], boundary="periodic")
        with pytest.raises(ValueError, match="periodic"):
            make_quadrature(g, "simpson")

    def test_2d_weights_sum_to_area(self):
        g = Grid(bounds=[(0.0, 1.0), (0.0, 2.0)], npts=[5, 7])
        q = make_quadrature(g, "trapezoid")
        assert np.sum(q.weights) == pytest.approx(2.0, abs=1e-12)

    def test_simpson_integrates_cubics_exactly(self):
        g = Grid(bounds=[(0.0, 1.0)], npts=[21])
        q = make_quadrature(g, "simpson")
        x = g.points[:, 0]
        assert q.integrate(x ** 3) == pytest.approx(0.25, abs=1e-14)


class TestFieldState:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            FieldState(np.array([0.0, np.nan, 1.0]))

    def test_values_read_only(self):
        s = FieldState(np.zeros(4))
        with pytest.raises(ValueError):
            s.values[0] = 1.0


class TestBuildOperator:
    def test_center_row_sum_against_analytic_integral(self):
        # analytic integral of the exponential profile over [-10, 10] at x = 0
        grid = Grid(bounds=[(-10.0, 10.0)], npts=[2001])
        exact = 1.0 - math.exp(-10.0)
        trap = build_operator(exponential_kernel(), grid, make_quadrature(grid, "trapezoid"))
        # trapezoid carries ~8.3e-6 quadrature bias on this integrand (second
        # order with the kink on a node); simpson removes it
        assert trap.matrix[1000].sum() == pytest.approx(exact, abs=1e-5)
        simp = build_operator(exponential_kernel(), grid, make_quadrature(grid, "simpson"))
        assert simp.matrix[1000].sum() == pytest.approx(exact, abs=1e-6)

    def test_constant_kernel_row_sums(self):
        grid = Grid(bounds=[(0.0, 1.0)], npts=[3])
        ones = SynapticKernel("tabulated", {"matrix": np.ones((3, 3)), "nodes": grid.points})
        op = build_operator(ones, grid, make_quadrature(grid))
        assert np.allclose(op.matrix.sum(axis=1), 1.0, atol=1e-15)

    def test_periodic_ring_is_circulant(self):
        grid = Grid(bounds=[(0.0, 10.0)], npts=[16], boundary="periodic")
        op = build_operator(exponential_kernel(), grid, make_quadrature(grid))
        w = op.matrix
        for i in range(1, 16):
            assert np.max(np.abs(w[i] - np.roll(w[0], i))) < 1e-14

    def test_row_sums_bounded_by_l1_constant(self):
        from neuralfield.model import compute_constants

        grid = Grid(bounds=[(-10.0, 10.0)], npts=[401])
        op = build_operator(exponential_kernel(), grid, make_quadrature(grid))
        model = make_model(gamma=0.0)
        c = compute_constants(model, grid)
        # within quadrature error of the analytic constant
        assert np.max(op.abs_row_sums) <= c.kernel_l1_sup + 1e-3

    def test_tabulated_kernel_grid_mismatch(self):
        grid = Grid(bounds=[(0.0, 1.0)], npts=[5])
        other = Grid(bounds=[(0.0, 2.0)], npts=[5])
        k = SynapticKernel("tabulated", {"matrix": np.eye(5), "nodes": other.points})
        with pytest.raises(ValueError, match="different grid"):
            build_operator(k, grid, make_quadrature(grid))


class TestApplyJ:
    def test_zero_firing_gives_zero(self, grid_201, quad_201, op_201):
        model = ModelSpec(exponential_kernel(), zero_firing(), LearningKernel(), gamma=0.8)
        u = np.sin(grid_201.points[:, 0])
        assert np.all(apply_J(model, op_201, u) == 0.0)

    def test_constant_state_factors_out(self, op_201):
        model = make_model(gamma=0.0)
        u = np.full(201, 0.7)
        expected = model.firing(0.7) * op_201.matrix.sum(axis=1)
        assert np.allclose(apply_J(model, op_201, u), expected, rtol=1e-14)

    def test_plasticity_factor_exact_on_constant_state(self, op_201):
        # g(0) = 1 makes the modulation (1 + gamma) exactly
        base = make_model(gamma=0.0)
        plastic = make_model(gamma=0.5)
        u = np.full(201, 0.3)
        j0 = apply_J(base, op_201, u)
        j1 = apply_J(plastic, op_201, u)
        assert np.allclose(j1, 1.5 * j0, rtol=1e-14)

    def test_against_brute_force_oracle(self):
        grid = Grid(bounds=[(-5.0, 5.0)], npts=[201])
        quad = make_quadrature(grid)
        op = build_operator(exponential_kernel(), grid, quad)
        model = make_model(gamma=0.7)
        u = np.exp(-grid.points[:, 0] ** 2 / 2.0)
        expected = brute_force_apply_j(model, grid, quad, u)
        assert np.max(np.abs(apply_J(model, op, u) - expected)) < 1e-13

    def test_brute_force_oracle_2d(self):
        grid = Grid(bounds=[(0.0, 2.0), (0.0, 2.0)], npts=[7, 7])
        quad = make_quadrature(grid)
        op = build_operator(exponential_kernel(), grid, quad)
        model = make_model(gamma=0.4)
        pts = grid.points
        u = np.exp(-((pts[:, 0] - 1) ** 2 + (pts[:, 1] - 1) ** 2))
        expected = brute_force_apply_j(model, grid, quad, u)
        assert np.max(np.abs(apply_J(model, op, u) - expected)) < 1e-13

    def test_sup_bound(self, op_201):
        # discrete analogue of the (1 + gamma) Cw estimate
        rng = np.random.default_rng(3)
        model = make_model(gamma=1.0)
        cap = (1.0 + model.gamma) * np.max(op_201.abs_row_sums)
        for _ in range(25):
            u = rng.uniform(-5, 5, size=201)
            assert np.max(np.abs(apply_J(model, op_201, u))) <= cap + 1e-12

    def test_dimension_mismatch(self, op_201):
        model = make_model()
        with pytest.raises(ValueError, match="nodes"):
            apply_J(model, op_201, np.zeros(100))

    def test_rotation_equivariance_on_ring(self):
        # gamma = 0 input term commutes with grid rotations on a periodic ring
        grid = Grid(bounds=[(0.0, 10.0)], npts=[32], boundary="periodic")
        op = build_operator(exponential_kernel(), grid, make_quadrature(grid))
        model = make_model(gamma=0.0)
        rng = np.random.default_rng(11)
        u = rng.uniform(-1, 1, size=32)
        for shift in (1, 5, 17):
            lhs = apply_J(model, op, np.roll(u, shift))
            rhs = np.roll(apply_J(model, op, u), shift)
            assert np.max(np.abs(lhs - rhs)) < 1e-14

    def test_trapezoid_vs_simpson_refinement(self):
        # smooth (gaussian) kernel: the rule difference shrinks at order >= 2
        diffs = []
        for n in (51, 101, 201):
            grid = Grid(bounds=[(-8.0, 8.0)], npts=[n])
            x = grid.points[:, 0]
            wmat = np.exp(-(((x[:, None] - x[None, :]) / 4.0) ** 2))
            kern = SynapticKernel("tabulated", {"matrix": wmat, "nodes": grid.points})
            model = ModelSpec(kern, FiringRate("sigmoid"), LearningKernel(), gamma=0.5)
            u = np.exp(-x * x / 2.0)
            j_trap = apply_J(model, build_operator(kern, grid, make_quadrature(grid, "trapezoid")), u)
            j_simp = apply_J(model, build_operator(kern, grid, make_quadrature(grid, "simpson")), u)
            diffs.append(np.max(np.abs(j_trap - j_simp)))
        assert diffs[0] / diffs[1] > 3.0
        assert diffs[1] / diffs[2] > 3.0


class TestApplyF:
    def test_zero_state_sigmoid(self, op_201):
        model = make_model(gamma=0.0)
        u = np.zeros(201)
        expected = 0.5 * op_201.matrix.sum(axis=1)
        assert np.allclose(apply_F(model, op_201, u), expected, rtol=1e-13)

    def test_zero_firing_is_pure_decay(self, grid_201, op_201):
        model = ModelSpec(exponential_kernel(), zero_firing(), LearningKernel(), gamma=0.3)
        u = np.cos(grid_201.points[:, 0])
        assert np.array_equal(apply_F(model, op_201, u), -u)

    def test_accepts_field_state(self, op_201, bump_201):
        model = make_model()
        out1 = apply_F(model, op_201, bump_201)
        out2 = apply_F(model, op_201, bump_201.values)
        assert np.array_equal(out1, out2)
