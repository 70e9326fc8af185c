"""Staggered grid operators: exactness on polynomials, adjointness, hand stencils."""

import numpy as np
import pytest

from ipdsim.grid import (
    CellField,
    FaceField,
    FluidBc,
    MacGrid,
    TRACTION,
    advect,
    convective_term,
    divergence,
    gradient,
    laplacian,
)


def make_grid(n=8, L=1.0, dim=2):
    return MacGrid(extent=(L,) * dim, cells=(n,) * dim)


class TestMacGrid:
    def test_spacing(self):
        g = MacGrid(extent=(2.0, 1.0), cells=(16, 8))
        assert g.h == pytest.approx(0.125)

    def test_rejects_nonuniform_spacing(self):
        with pytest.raises(ValueError, match="spacing"):
            MacGrid(extent=(2.0, 1.0), cells=(10, 8))

    def test_rejects_tiny_grid(self):
        with pytest.raises(ValueError, match="4 cells"):
            MacGrid(extent=(1.0, 1.0), cells=(2, 2))

    def test_shapes(self):
        g = make_grid(8)
        assert g.cell_shape == (8, 8)
        assert g.face_shape(0) == (9, 8)
        assert g.face_shape(1) == (8, 9)

    def test_mismatched_field_errors(self):
        g = make_grid(8)
        u = FaceField(g, [np.zeros((8, 8)), np.zeros((8, 9))])
        with pytest.raises(ValueError, match="shape"):
            divergence(u)


class TestGradient:
    def test_linear_field_exact(self):
        g = make_grid(8)
        bc = FluidBc(dim=2)
        X, Y = g.cell_coords()
        p = CellField(g, 3.0 * X)
        gr = gradient(p, bc)
        assert np.allclose(gr.comps[0][1:-1, :], 3.0)
        assert np.allclose(gr.comps[1], 0.0)

    def test_constant_annihilated(self):
        g = make_grid(8)
        bc = FluidBc(dim=2)
        p = CellField(g, np.full(g.cell_shape, 7.3))
        gr = gradient(p, bc)
        for c in gr.comps:
            assert np.allclose(c, 0.0)

    def test_quadratic_centered_difference(self):
        # p = x^2 on h = 0.5: interior x-faces carry exactly 2 x_face
        g = MacGrid(extent=(4.0, 4.0), cells=(8, 8))
        bc = FluidBc(dim=2)
        X, _ = g.cell_coords()
        p = CellField(g, X**2)
        gr = gradient(p, bc)
        xf, _ = g.face_coords(0)
        assert np.allclose(gr.comps[0][1:-1, :], 2.0 * xf[1:-1, :])


class TestDivergence:
    def test_constant_zero(self):
        g = make_grid(8)
        u = FaceField.zeros(g)
        u.comps[0][:] = 2.0
        u.comps[1][:] = -1.0
        assert np.allclose(divergence(u).a, 0.0)

    def test_linear_divergence_free(self):
        g = make_grid(8)
        u = FaceField.zeros(g)
        xf, _ = g.face_coords(0)
        _, yf = g.face_coords(1)
        u.comps[0][:] = xf
        u.comps[1][:] = -yf
        assert np.allclose(divergence(u).a, 0.0)

    def test_hand_value_x_squared(self):
        # u = (x^2, 0), h = 1, cell centered at x = 0.5 -> (1 - 0)/1 = 1
        g = MacGrid(extent=(8.0, 8.0), cells=(8, 8))
        u = FaceField.zeros(g)
        xf, _ = g.face_coords(0)
        u.comps[0][:] = xf**2
        div = divergence(u)
        assert div.a[0, 0] == pytest.approx(1.0)
        assert div.a[3, 5] == pytest.approx((4.0**2 - 3.0**2) / 1.0)


class TestLaplacian:
    def test_linear_zero_interior(self):
        g = make_grid(8)
        bc = FluidBc(dim=2)
        u = FaceField.zeros(g)
        xf, yf = g.face_coords(0)
        u.comps[0][:] = 2.0 * xf - yf
        lap = laplacian(u, bc)
        assert np.allclose(lap.comps[0][2:-2, 1:-1], 0.0, atol=1e-12)

    def test_hand_value_quadratic(self):
        # u1 = x^2 + y^2 on h = 1 -> interior value 4
        g = MacGrid(extent=(8.0, 8.0), cells=(8, 8))
        bc = FluidBc(dim=2)
        u = FaceField.zeros(g)
        xf, yf = g.face_coords(0)
        u.comps[0][:] = xf**2 + yf**2
        lap = laplacian(u, bc)
        assert np.allclose(lap.comps[0][2:-2, 1:-1], 4.0)

    def test_point_spike_stencil(self):
        g = MacGrid(extent=(8.0, 8.0), cells=(8, 8))
        bc = FluidBc(dim=2)
        u = FaceField.zeros(g)
        u.comps[0][4, 4] = 1.0
        lap = laplacian(u, bc)
        assert lap.comps[0][4, 4] == pytest.approx(-4.0)
        for i, j in ((3, 4), (5, 4), (4, 3), (4, 5)):
            assert lap.comps[0][i, j] == pytest.approx(1.0)

    def test_matches_div_grad_composition(self):
        # on random cell data, div(grad(.)) reduces to the same 2d+1-point
        # stencil the face Laplacian applies, verified entrywise at interior
        # points
        g = make_grid(16)
        bc = FluidBc(dim=2)
        rng = np.random.default_rng(0)
        q = rng.standard_normal(g.cell_shape)
        composed = divergence(gradient(CellField(g, q), bc)).a
        direct = (
            q[:-2, 1:-1] + q[2:, 1:-1] + q[1:-1, :-2] + q[1:-1, 2:]
            - 4.0 * q[1:-1, 1:-1]
        ) / g.h**2
        assert np.abs(composed[1:-1, 1:-1] - direct).max() <= 1e-12

        # and the face operator applies that same stencil at its own points
        u = FaceField.zeros(g)
        u.comps[0][:] = rng.standard_normal(g.face_shape(0))
        lap = laplacian(u, bc).comps[0]
        c = u.comps[0]
        direct_face = (
            c[:-2, 1:-1] + c[2:, 1:-1] + c[1:-1, :-2] + c[1:-1, 2:]
            - 4.0 * c[1:-1, 1:-1]
        ) / g.h**2
        assert np.abs(lap[1:-1, 1:-1] - direct_face).max() <= 1e-12


class TestAdjointness:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_gradient_divergence_adjoint(self, dim):
        g = make_grid(6, dim=dim)
        bc = FluidBc(dim=dim)
        rng = np.random.default_rng(1)
        p = CellField(g, rng.standard_normal(g.cell_shape))
        u = FaceField(g, [rng.standard_normal(g.face_shape(k)) for k in range(dim)])
        # homogeneous boundary data: zero the wall-normal faces
        for k, c in enumerate(u.comps):
            idx_lo = [slice(None)] * dim
            idx_lo[k] = 0
            c[tuple(idx_lo)] = 0.0
            idx_lo[k] = -1
            c[tuple(idx_lo)] = 0.0
        vol = g.h**dim
        lhs = gradient(p, bc).dot(u) * vol
        rhs = -float(np.sum(p.a * divergence(u).a)) * vol
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestAdvect:
    def test_zero_and_constant(self):
        g = make_grid(8)
        bc = FluidBc(dim=2)
        u = FaceField.zeros(g)
        assert advect(u, u, bc).max_norm() == 0.0
        u.comps[0][:] = 2.0
        u.comps[1][:] = 2.0
        # constant field: derivative zero except wall-ghost rows, which see
        # the no-slip reflection
        a = advect(u, u, bc)
        assert np.allclose(a.comps[0][2:-2, 2:-2], 0.0, atol=1e-12)

    def test_linear_field_hand_value(self):
        # u = (x, 0): u . grad u = (x, 0); AB2 weights sum to 1
        g = make_grid(8)
        bc = FluidBc(dim=2)
        u = FaceField.zeros(g)
        xf, _ = g.face_coords(0)
        u.comps[0][:] = xf
        a = advect(u, u, bc)
        assert np.allclose(a.comps[0][2:-2, 1:-1], xf[2:-2, 1:-1])

    def test_ab2_weights(self):
        g = make_grid(8)
        bc = FluidBc(dim=2)
        u_now = FaceField.zeros(g)
        u_prev = FaceField.zeros(g)
        xf, _ = g.face_coords(0)
        u_now.comps[0][:] = xf
        # u_prev = 2x gives conv = 4x; combination 1.5*x - 0.5*4x = -0.5x
        u_prev.comps[0][:] = 2.0 * xf
        a = advect(u_now, u_prev, bc)
        assert np.allclose(a.comps[0][2:-2, 1:-1], -0.5 * xf[2:-2, 1:-1])


class TestBc:
    def test_every_side_has_one_condition(self):
        bc = FluidBc(dim=2, sides={(0, 0): (TRACTION, (1.0, 0.0))})
        assert bc.kind(0, 0) == TRACTION
        assert bc.kind(1, 1) == "noslip"

    def test_traction_pressure_sign(self):
        bc = FluidBc(
            dim=2,
            sides={(0, 0): (TRACTION, (30.0, 0.0)), (0, 1): (TRACTION, (30.0, 0.0))},
        )
        # outward normal is -x on the low side: p = -h.n = +30
        assert bc.boundary_pressure(0, 0, 0.0) == pytest.approx(30.0)
        assert bc.boundary_pressure(0, 1, 0.0) == pytest.approx(-30.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown boundary kind"):
            FluidBc(dim=2, sides={(0, 0): ("slippery", None)})
