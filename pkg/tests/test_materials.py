"""Hyperelastic laws: hand values, finite-difference stress oracle, objectivity."""

import math

import numpy as np
import pytest

from ipdsim import materials as M

SQ3 = math.sqrt(3.0)


def all_models():
    return [
        M.NeoHookeanStab(G=83.3333, nu_stab=0.4, dim=2),
        M.MooneyRivlinStab(c1=9000.0, c2=9000.0, nu_stab=0.4, dim=3,
                           G_f=18000.0, fiber=(SQ3 / 2, 0.5, 0.0)),
        M.StandardReinforced(G=80.194, G_f=80.194, fiber=(SQ3 / 2, 0.5),
                             nu_stab=0.4, dim=2),
        M.TransverselyIsotropic(G_T=8.0, G_L=160.0, E_L=1200.0,
                                fiber=tuple(np.ones(3) / SQ3), nu_stab=0.4, dim=3),
        M.HGO(G=764.0, k1=966.6e2, k2=524.6, kappa_disp=0.0,
              fibers_list=((1.0, 0.0),), nu_stab=0.4, dim=2),
    ]


def fd_stress(model, F, h=1e-6):
    P = np.zeros_like(F)
    d = F.shape[0]
    for i in range(d):
        for j in range(d):
            Fp = F.copy()
            Fp[i, j] += h
            Fm = F.copy()
            Fm[i, j] -= h
            P[i, j] = (M.strain_energy(model, Fp) - M.strain_energy(model, Fm)) / (2 * h)
    return P


def admissible_F(rng, d, spread=0.2):
    while True:
        F = np.eye(d) + spread * rng.standard_normal((d, d))
        if np.linalg.det(F) > 0.4:
            return F


class TestKappaStab:
    def test_hand_values(self):
        assert M.kappa_stab(83.3333, 0.4) == pytest.approx(388.889, abs=5e-4)
        assert M.kappa_stab(18000.0, 0.4) == pytest.approx(84000.0)

    def test_stabilization_off(self):
        assert M.kappa_stab(100.0, -1.0) == 0.0

    def test_rejects_half(self):
        with pytest.raises(ValueError):
            M.kappa_stab(1.0, 0.5)
        with pytest.raises(ValueError):
            M.kappa_stab(1.0, 0.6)


class TestInvariants:
    def test_identity(self):
        assert M.fourth_invariant(np.eye(2), (1.0, 0.0)) == pytest.approx(1.0)
        assert M.fifth_invariant(np.eye(3), (0.0, 0.0, 1.0)) == pytest.approx(1.0)

    def test_hand_values(self):
        F = np.diag([1.2, 1 / 1.2])
        assert M.fourth_invariant(F, (1.0, 0.0)) == pytest.approx(1.44)
        assert M.fifth_invariant(F, (1.0, 0.0)) == pytest.approx(1.44**2)

    def test_material_frame_rotation(self):
        rng = np.random.default_rng(0)
        th = 0.7
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        F = admissible_F(rng, 2)
        A = np.array([1.0, 0.0])
        i4 = M.fourth_invariant(F, A)
        assert M.fourth_invariant(F @ R.T, R @ A) == pytest.approx(i4, rel=1e-12)


class TestEnergy:
    @pytest.mark.parametrize("model", all_models(), ids=lambda m: type(m).__name__)
    def test_reference_state_is_stress_free(self, model):
        d = model.dim
        assert M.strain_energy(model, np.eye(d)) == pytest.approx(0.0, abs=1e-12)
        assert np.abs(M.pk1(model, np.eye(d)).P).max() < 1e-10

    def test_neo_hookean_hand_value(self):
        # G = 2, stabilization off, F = diag(2, 1/2): J = 1, I1bar = 4.25
        m = M.NeoHookeanStab(G=2.0, nu_stab=-1.0, dim=2)
        F = np.diag([2.0, 0.5])
        assert M.strain_energy(m, F) == pytest.approx(2.25)

    def test_hgo_hand_value(self):
        m = M.HGO(G=764.0, k1=966.6e2, k2=5.0, kappa_disp=0.0,
                  fibers_list=((1.0, 0.0),), nu_stab=-1.0, dim=2)
        lam = 1.2
        F = np.diag([lam, 1 / lam])
        i4 = lam**2
        expected_fiber = m.k1 / (2 * m.k2) * (math.exp(m.k2 * (i4 - 1) ** 2) - 1)
        base = M.strain_energy(
            M.NeoHookeanStab(G=764.0, nu_stab=-1.0, dim=2), F
        )
        assert M.strain_energy(m, F) == pytest.approx(base + expected_fiber, rel=1e-12)

    def test_fiber_clamp_in_compression(self):
        m = M.StandardReinforced(G=80.0, G_f=80.0, fiber=(1.0, 0.0), nu_stab=-1.0, dim=2)
        F = np.diag([0.9, 1.1])  # I4 = 0.81 < 1
        base = M.strain_energy(M.NeoHookeanStab(G=80.0, nu_stab=-1.0, dim=2), F)
        assert M.strain_energy(m, F) == pytest.approx(base, rel=1e-12)
        P = M.pk1(m, F).P
        P_base = M.pk1(M.NeoHookeanStab(G=80.0, nu_stab=-1.0, dim=2), F).P
        assert np.allclose(P, P_base)

    def test_volumetric_term_isolated(self):
        m0 = M.NeoHookeanStab(G=10.0, nu_stab=-1.0, dim=2)
        m1 = M.NeoHookeanStab(G=10.0, nu_stab=0.4, dim=2)
        F = np.diag([1.3, 0.9])
        kap = M.kappa_stab(10.0, 0.4)
        dE = M.strain_energy(m1, F) - M.strain_energy(m0, F)
        assert dE == pytest.approx(0.5 * kap * math.log(np.linalg.det(F)) ** 2, rel=1e-12)

    def test_negative_jacobian_rejected(self):
        m = M.NeoHookeanStab(G=1.0, nu_stab=0.4, dim=2)
        with pytest.raises(M.NonPositiveJacobianError) as exc:
            M.strain_energy(m, np.diag([-1.0, 1.0]))
        assert exc.value.jacobian < 0


class TestStressOracle:
    @pytest.mark.parametrize("model", all_models(), ids=lambda m: type(m).__name__)
    def test_analytic_matches_finite_differences(self, model):
        rng = np.random.default_rng(42)
        d = model.dim
        spread = 0.1 if isinstance(model, M.HGO) else 0.25
        for _ in range(25):
            F = admissible_F(rng, d, spread)
            res = M.pk1(model, F)
            Pfd = fd_stress(model, F)
            scale = 1.0 + np.abs(res.P).max()
            assert np.abs(res.P - Pfd).max() <= 1e-5 * scale

    def test_batched_matches_single(self):
        m = M.StandardReinforced(G=80.0, G_f=40.0, fiber=(1.0, 0.0), nu_stab=0.4, dim=2)
        rng = np.random.default_rng(3)
        batch = np.stack([admissible_F(rng, 2) for _ in range(7)])
        res = M.pk1(m, batch)
        for i in range(7):
            single = M.pk1(m, batch[i])
            assert np.allclose(res.P[i], single.P)
            assert res.J[i] == pytest.approx(single.J)
            assert res.energy[i] == pytest.approx(single.energy)


class TestObjectivity:
    @pytest.mark.parametrize("model", all_models(), ids=lambda m: type(m).__name__)
    def test_rotation_invariance(self, model):
        rng = np.random.default_rng(7)
        d = model.dim
        for _ in range(10):
            F = admissible_F(rng, d, 0.15)
            th = rng.uniform(0, 2 * np.pi)
            if d == 2:
                Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
            else:
                axis = rng.standard_normal(3)
                axis /= np.linalg.norm(axis)
                K = np.array([[0, -axis[2], axis[1]],
                              [axis[2], 0, -axis[0]],
                              [-axis[1], axis[0], 0]])
                Q = np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K
            e1 = M.strain_energy(model, F)
            e2 = M.strain_energy(model, Q @ F)
            assert e2 == pytest.approx(e1, rel=1e-10, abs=1e-10)


class TestValidation:
    def test_nu_stab_range(self):
        with pytest.raises(ValueError):
            M.NeoHookeanStab(G=1.0, nu_stab=0.6, dim=2)

    def test_fiber_must_be_unit(self):
        with pytest.raises(ValueError, match="unit"):
            M.StandardReinforced(G=1.0, G_f=1.0, fiber=(2.0, 0.0), nu_stab=0.4, dim=2)

    def test_kappa_disp_range(self):
        with pytest.raises(ValueError, match="kappa_disp"):
            M.HGO(G=1.0, k1=1.0, k2=1.0, kappa_disp=0.4,
                  fibers_list=((1.0, 0.0),), nu_stab=0.4, dim=2)
