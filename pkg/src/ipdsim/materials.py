"""Hyperelastic strain-energy functions and analytic first Piola-Kirchhoff stress.

All models share the Flory split Fbar = J^(-1/d) F (d the spatial dimension,
so the isochoric offset is d and the reference state is stress free in both
2D and 3D), a volumetric stabilization term (kappa_stab/2) (ln J)^2, and
fiber invariants built from the unmodified right Cauchy-Green tensor
C = F^T F.  Fiber terms whose stress vanishes at I4 = 1 are clamped to stay
inactive under fiber compression; the shear-coupling term of the transversely
isotropic model keeps the raw invariants because clamping it would make the
stress jump at I4 = 1.

Everything here is pure and stateless; functions accept a single d x d
deformation gradient or a batch shaped (n, d, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NeoHookeanStab",
    "MooneyRivlinStab",
    "StandardReinforced",
    "TransverselyIsotropic",
    "HGO",
    "Pk1Result",
    "NonPositiveJacobianError",
    "kappa_stab",
    "fourth_invariant",
    "fifth_invariant",
    "strain_energy",
    "pk1",
]


class NonPositiveJacobianError(ValueError):
    """det F <= 0 where the material law needs an invertible deformation."""

    def __init__(self, jac, index=None):
        self.jacobian = float(jac)
        self.index = index
        where = "" if index is None else f" at node {index}"
        super().__init__(f"non-positive Jacobian det F = {self.jacobian:.6g}{where}")


def kappa_stab(G, nu_stab):
    """Numerical bulk modulus 2G(1+nu)/(3(1-2nu)) from a numerical Poisson ratio.

    nu_stab = -1 switches the volumetric stabilization off entirely.
    """
    if nu_stab >= 0.5:
        raise ValueError(f"nu_stab must be < 0.5, got {nu_stab}")
    if nu_stab < -1.0:
        raise ValueError(f"nu_stab must be >= -1, got {nu_stab}")
    return 2.0 * G * (1.0 + nu_stab) / (3.0 * (1.0 - 2.0 * nu_stab))


def _unit(vec, dim, name="fiber"):
    a = np.asarray(vec, dtype=float)
    if a.shape != (dim,):
        raise ValueError(f"{name} must be a length-{dim} vector")
    n = np.linalg.norm(a)
    if abs(n - 1.0) > 1e-8:
        raise ValueError(f"{name} must be a unit vector, |A| = {n}")
    return tuple(a / n)


def _require_positive(**kwargs):
    for name, v in kwargs.items():
        if not v > 0.0:
            raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class NeoHookeanStab:
    """Modified neo-Hookean: (G/2)(I1bar - d) + volumetric stabilization."""

    G: float
    nu_stab: float = 0.4
    dim: int = 2

    def __post_init__(self):
        _require_positive(G=self.G)
        kappa_stab(self.G, self.nu_stab)

    @property
    def reference_shear_modulus(self):
        return self.G

    def fibers(self):
        return ()


@dataclass(frozen=True)
class MooneyRivlinStab:
    """Mooney-Rivlin ground matrix, optionally reinforced by one fiber family.

    G = c1 + c2 sets the numerical bulk modulus.  The fiber term is the
    standard quadratic reinforcement (G_f/2)(I4 - 1)^2 and is off by default.
    """

    c1: float
    c2: float
    nu_stab: float = 0.4
    dim: int = 3
    G_f: float = 0.0
    fiber: tuple = None

    def __post_init__(self):
        _require_positive(c1=self.c1, c2=self.c2)
        if self.G_f < 0.0:
            raise ValueError("G_f must be nonnegative")
        if self.G_f > 0.0:
            object.__setattr__(self, "fiber", _unit(self.fiber, self.dim))
        kappa_stab(self.reference_shear_modulus, self.nu_stab)

    @property
    def reference_shear_modulus(self):
        return self.c1 + self.c2

    def fibers(self):
        return (self.fiber,) if self.G_f > 0.0 else ()


@dataclass(frozen=True)
class StandardReinforced:
    """Neo-Hookean ground matrix plus (G_f/2)(I4 - 1)^2 along one fiber."""

    G: float
    G_f: float
    fiber: tuple = (1.0, 0.0)
    nu_stab: float = 0.4
    dim: int = 2

    def __post_init__(self):
        _require_positive(G=self.G, G_f=self.G_f)
        object.__setattr__(self, "fiber", _unit(self.fiber, self.dim))
        kappa_stab(self.G, self.nu_stab)

    @property
    def reference_shear_modulus(self):
        return self.G

    def fibers(self):
        return (self.fiber,)


@dataclass(frozen=True)
class TransverselyIsotropic:
    """Transversely isotropic solid (transverse/longitudinal shear plus fiber
    Young's modulus), with the shear-stretch coupling through I5."""

    G_T: float
    G_L: float
    E_L: float
    fiber: tuple = (1.0, 0.0, 0.0)
    nu_stab: float = 0.4
    dim: int = 3

    def __post_init__(self):
        _require_positive(G_T=self.G_T, G_L=self.G_L, E_L=self.E_L)
        object.__setattr__(self, "fiber", _unit(self.fiber, self.dim))
        kappa_stab(self.G_T, self.nu_stab)

    @property
    def reference_shear_modulus(self):
        return self.G_T

    def fibers(self):
        return (self.fiber,)


@dataclass(frozen=True)
class HGO:
    """Exponentially stiffening fiber-reinforced model with optional dispersion.

    One or two fiber families; the pseudo-invariant argument is
    kappa_disp*I1bar + (1 - 3 kappa_disp)*I4 - 1, active only when positive.
    """

    G: float
    k1: float
    k2: float
    kappa_disp: float = 0.0
    fibers_list: tuple = ((1.0, 0.0),)
    nu_stab: float = 0.4
    dim: int = 2

    def __post_init__(self):
        _require_positive(G=self.G, k1=self.k1, k2=self.k2)
        if not 0.0 <= self.kappa_disp <= 1.0 / 3.0:
            raise ValueError(f"kappa_disp must lie in [0, 1/3], got {self.kappa_disp}")
        if not 1 <= len(self.fibers_list) <= 2:
            raise ValueError("HGO takes one or two fiber families")
        object.__setattr__(
            self, "fibers_list", tuple(_unit(a, self.dim) for a in self.fibers_list)
        )
        kappa_stab(self.G, self.nu_stab)

    @property
    def reference_shear_modulus(self):
        return self.G

    def fibers(self):
        return self.fibers_list


@dataclass
class Pk1Result:
    """First Piola-Kirchhoff stress with the Jacobian and energy density."""

    P: np.ndarray
    J: np.ndarray
    energy: np.ndarray


# --- batched small-matrix helpers (d = 2 or 3) -------------------------------


def _as_batch(F):
    F = np.asarray(F, dtype=float)
    if F.ndim == 2:
        return F[None], True
    return F, False


def _det(F):
    d = F.shape[-1]
    if d == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def _inv(F, det=None):
    d = F.shape[-1]
    if det is None:
        det = _det(F)
    out = np.empty_like(F)
    if d == 2:
        out[..., 0, 0] = F[..., 1, 1]
        out[..., 0, 1] = -F[..., 0, 1]
        out[..., 1, 0] = -F[..., 1, 0]
        out[..., 1, 1] = F[..., 0, 0]
    else:
        out[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
        out[..., 0, 1] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
        out[..., 0, 2] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
        out[..., 1, 0] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
        out[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
        out[..., 1, 2] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
        out[..., 2, 0] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
        out[..., 2, 1] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
        out[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return out / det[..., None, None]


def fourth_invariant(F, A):
    """I4 = |F A|^2 (unclamped; clamping is the energy layer's concern)."""
    F, single = _as_batch(F)
    A = np.asarray(A, dtype=float)
    FA = F @ A
    out = np.sum(FA * FA, axis=-1)
    return float(out[0]) if single else out


def fifth_invariant(F, A):
    """I5 = |C A|^2 with C = F^T F."""
    F, single = _as_batch(F)
    A = np.asarray(A, dtype=float)
    C = np.swapaxes(F, -1, -2) @ F
    CA = C @ A
    out = np.sum(CA * CA, axis=-1)
    return float(out[0]) if single else out


def _check_jacobian(J):
    bad = J <= 0.0
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise NonPositiveJacobianError(J[idx], index=idx)


class _Kinematics:
    """Shared quantities for one batch of deformation gradients."""

    def __init__(self, F, dim):
        self.F = F
        self.d = dim
        self.J = _det(F)
        _check_jacobian(self.J)
        self.FinvT = np.swapaxes(_inv(F, self.J), -1, -2)
        self.C = np.swapaxes(F, -1, -2) @ F
        self.I1 = np.trace(self.C, axis1=-2, axis2=-1)
        self.Jm2d = self.J ** (-2.0 / dim)
        self.I1bar = self.Jm2d * self.I1

    def dI1bar(self):
        return 2.0 * self.Jm2d[..., None, None] * (
            self.F - (self.I1 / self.d)[..., None, None] * self.FinvT
        )


def _fiber_quantities(kin, A):
    A = np.asarray(A, dtype=float)
    FA = kin.F @ A
    I4 = np.sum(FA * FA, axis=-1)
    return A, FA, I4


def _energy_and_stress(model, F, want_stress):
    F, single = _as_batch(F)
    d = model.dim
    if F.shape[-2:] != (d, d):
        raise ValueError(f"deformation gradient must be {d}x{d} for this model")
    kin = _Kinematics(F, d)
    kap = kappa_stab(model.reference_shear_modulus, model.nu_stab)
    logJ = np.log(kin.J)

    energy = 0.5 * kap * logJ**2
    P = kap * logJ[..., None, None] * kin.FinvT if want_stress else None

    def add(dE, dP):
        nonlocal energy, P
        energy = energy + dE
        if want_stress:
            P = P + dP

    if isinstance(model, NeoHookeanStab):
        add(0.5 * model.G * (kin.I1bar - d), 0.5 * model.G * kin.dI1bar() if want_stress else None)
    elif isinstance(model, MooneyRivlinStab):
        add(model.c1 * (kin.I1bar - d), model.c1 * kin.dI1bar() if want_stress else None)
        # second modified invariant (standard 1/2 convention so it is d(d-1)/2
        # at the reference state)
        trC2 = np.sum(kin.C * np.swapaxes(kin.C, -1, -2), axis=(-2, -1))
        I2s = 0.5 * (kin.I1**2 - trC2)
        Jm4d = kin.Jm2d**2
        I2bar = Jm4d * I2s
        add(model.c2 * (I2bar - 0.5 * d * (d - 1)), None if not want_stress else model.c2 * (
            Jm4d[..., None, None]
            * (
                2.0 * kin.I1[..., None, None] * kin.F
                - 2.0 * kin.F @ kin.C
                - (4.0 / d) * I2s[..., None, None] * kin.FinvT
            )
        ))
        if model.G_f > 0.0:
            _add_quadratic_fiber(add, kin, model.fiber, model.G_f, want_stress)
    elif isinstance(model, StandardReinforced):
        add(0.5 * model.G * (kin.I1bar - d), 0.5 * model.G * kin.dI1bar() if want_stress else None)
        _add_quadratic_fiber(add, kin, model.fiber, model.G_f, want_stress)
    elif isinstance(model, TransverselyIsotropic):
        add(0.5 * model.G_T * (kin.I1bar - d), 0.5 * model.G_T * kin.dI1bar() if want_stress else None)
        A, FA, I4 = _fiber_quantities(kin, model.fiber)
        CA = kin.C @ A
        I5 = np.sum(CA * CA, axis=-1)
        c_bb = 0.5 * (model.G_T - model.G_L)
        FCA = np.einsum("...ij,...j->...i", kin.F, CA)
        add(c_bb * (2.0 * I4 - I5 - 1.0), None if not want_stress else c_bb * (
            4.0 * np.einsum("...i,j->...ij", FA, A)
            - 2.0 * (np.einsum("...i,...j->...ij", FCA, A)
                     + np.einsum("...i,...j->...ij", FA, CA))
        ))
        _add_quadratic_fiber(
            add, kin, model.fiber, (model.E_L + model.G_T - 4.0 * model.G_L) / 8.0, want_stress
        )
    elif isinstance(model, HGO):
        add(0.5 * model.G * (kin.I1bar - d), 0.5 * model.G * kin.dI1bar() if want_stress else None)
        kd = model.kappa_disp
        for A in model.fibers():
            A, FA, I4 = _fiber_quantities(kin, A)
            I4c = np.maximum(I4, 1.0)
            E = kd * kin.I1bar + (1.0 - 3.0 * kd) * I4c - 1.0
            active = E > 0.0
            Ea = np.where(active, E, 0.0)
            expo = np.exp(model.k2 * Ea**2)
            add(
                model.k1 / (2.0 * model.k2) * np.where(active, expo - 1.0, 0.0),
                None
                if not want_stress
                else (model.k1 * Ea * np.where(active, expo, 0.0))[..., None, None]
                * (
                    kd * kin.dI1bar()
                    + (1.0 - 3.0 * kd)
                    * (I4 > 1.0)[..., None, None]
                    * 2.0
                    * np.einsum("...i,j->...ij", FA, A)
                ),
            )
    else:
        raise TypeError(f"unknown material model {type(model).__name__}")

    if single:
        energy = float(energy[0])
        J = float(kin.J[0])
        P = P[0] if want_stress else None
    else:
        J = kin.J
    return energy, J, P


def _add_quadratic_fiber(add, kin, fiber, half_modulus, want_stress):
    """(half_modulus)(I4 - 1)^2 with I4 clamped at 1 (inactive in compression).

    half_modulus is the coefficient multiplying (I4-1)^2 / 1, i.e. G_f/2 for
    the standard reinforced model.
    """
    A, FA, I4 = _fiber_quantities(kin, fiber)
    I4c = np.maximum(I4, 1.0)
    add(
        half_modulus * (I4c - 1.0) ** 2,
        None
        if not want_stress
        else (4.0 * half_modulus * (I4c - 1.0) * (I4 > 1.0))[..., None, None]
        * np.einsum("...i,j->...ij", FA, A),
    )


def strain_energy(model, F):
    """Strain energy density (erg/cm^3) of the model at F; det F must be > 0."""
    energy, _, _ = _energy_and_stress(model, F, want_stress=False)
    return energy


def pk1(model, F) -> Pk1Result:
    """Analytic P = dPsi/dF together with J = det F and the energy density."""
    energy, J, P = _energy_and_stress(model, F, want_stress=True)
    return Pk1Result(P=P, J=J, energy=energy)
