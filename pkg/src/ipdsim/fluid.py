"""Incompressible Navier-Stokes time integrator on the staggered grid.

One step advances (u^n, p^{n-1/2}) to (u^{n+1}, p^{n+1/2}) with Crank-Nicolson
viscosity, Adams-Bashforth advection and an incremental pressure projection:

    (rho/dt - (mu/2) L) u* = (rho/dt + (mu/2) L) u^n - rho N^{n+1/2}
                             - grad p^{n-1/2} + f^{n+1/2}
    L_p phi = (rho/dt) div u*
    u^{n+1} = u* - (dt/rho) grad phi,      p^{n+1/2} = p^{n-1/2} + phi

The Helmholtz solve runs matrix-free conjugate gradients (the system is
heavily diagonally dominant at the time steps used here).  The pressure
Poisson problem is solved exactly by fast cosine/sine transforms whenever
every axis carries uniform boundary kinds (all presets do), with a conjugate
gradient fallback otherwise; either route exceeds the 1e-10 relative residual
contract.

Boundary handling: velocity walls prescribe the wall-normal face values and
reflect tangential ghosts; traction walls pin the pressure to -h.n, treat the
tangential velocity as homogeneous Neumann, and leave the wall-normal face as
an unknown closed with a zero-normal-gradient ghost inside the viscous solve,
after which the projection corrects it through the wall pressure gradient.

A two-pass predictor-corrector bootstraps the very first step so the scheme
stays second order from t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .grid import (
    NOSLIP,
    TRACTION,
    VELOCITY,
    CellField,
    FaceField,
    FluidBc,
    MacGrid,
    _sl,
    advect,
    convective_term,
    divergence,
)

__all__ = [
    "FluidProps",
    "FluidState",
    "FluidBc",
    "SolverError",
    "fluid_step",
    "initialize_first_step",
    "solve_pressure_poisson",
    "solve_viscous_helmholtz",
]


class SolverError(RuntimeError):
    """A linear solve failed to converge; carries the final residual."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


@dataclass(frozen=True)
class FluidProps:
    rho: float = 1.0  # g/cm^3
    mu: float = 0.01  # dyn s/cm^2

    def __post_init__(self):
        if self.rho <= 0.0 or self.mu < 0.0:
            raise ValueError("need rho > 0 and mu >= 0")


@dataclass
class FluidState:
    """Velocity, pressure, the previous velocity for AB2, and step count."""

    u: FaceField
    p: CellField
    u_prev: FaceField
    step_index: int = 0
    pb_applied: dict = field(default_factory=dict)

    @classmethod
    def rest(cls, grid):
        return cls(FaceField.zeros(grid), CellField.zeros(grid), FaceField.zeros(grid))

    def copy(self):
        return FluidState(
            self.u.copy(), self.p.copy(), self.u_prev.copy(), self.step_index,
            dict(self.pb_applied),
        )


# --- viscous Helmholtz solve --------------------------------------------------


def _operator_pad(c, k, bc, t):
    """Ghost pad for the symmetric Helmholtz operator: like the physical pad,
    but the wall-normal ghost on traction walls copies the wall face."""
    q = bc.pad_face(c, k, t, width=1)
    nd = c.ndim
    for side in (0, 1):
        if bc.kind(k, side) == TRACTION:
            g = 0 if side == 0 else -1
            e = 1 if side == 0 else -2
            q[_sl(nd, k, g)] = q[_sl(nd, k, e)]
    return q


def _laplacian_component(c, k, bc, t):
    """Sum of second differences (unscaled by 1/h^2) with operator ghosts."""
    lap = np.zeros_like(c)
    q = _operator_pad(c, k, bc, t)
    nd = c.ndim
    for a in range(nd):
        hi = tuple(slice(2, None) if b == a else slice(1, -1) for b in range(nd))
        lo = tuple(slice(0, -2) if b == a else slice(1, -1) for b in range(nd))
        mid = tuple(slice(1, -1) for _ in range(nd))
        lap += q[hi] + q[lo] - 2.0 * q[mid]
    return lap


def _unknown_mask(grid, k, bc):
    """Faces solved for: everything except prescribed wall-normal faces."""
    mask = np.ones(grid.face_shape(k), dtype=bool)
    for side in (0, 1):
        if bc.kind(k, side) != TRACTION:
            mask[_sl(grid.dim, k, 0 if side == 0 else -1)] = False
    return mask


def _helmholtz_cg(rhs, x0, apply_full, apply_hom, mask, tol, max_iter=2000):
    """CG on the masked faces; inhomogeneous data enters via the initial
    residual computed with the full-BC operator."""
    x = x0
    r = rhs - apply_full(x)
    r[~mask] = 0.0
    b_norm = np.linalg.norm(rhs[mask])
    if b_norm == 0.0:
        b_norm = 1.0
    p = r.copy()
    rz = float(np.sum(r * r))
    for _ in range(max_iter):
        if np.sqrt(rz) <= tol * b_norm:
            return x
        ap = apply_hom(np.where(mask, p, 0.0))
        ap[~mask] = 0.0
        denom = float(np.sum(p * ap))
        if denom == 0.0:
            return x
        alpha = rz / denom
        x = x + alpha * np.where(mask, p, 0.0)
        r = r - alpha * ap
        rz_new = float(np.sum(r * r))
        p = r + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("viscous Helmholtz solve did not converge",
                      float(np.sqrt(rz)) / b_norm)


def solve_viscous_helmholtz(rhs: FaceField, coeff, bc: FluidBc, t=0.0,
                            guess: FaceField = None, rel_tol=1e-10) -> FaceField:
    """Solve (rho/dt - (mu/2) lap) u = rhs componentwise with boundary data.

    ``coeff`` is a mapping with keys ``rho_dt`` (rho/dt) and ``mu_half``
    (mu/2), both nonnegative with rho_dt > 0.
    """
    rho_dt = float(coeff["rho_dt"])
    mu_half = float(coeff["mu_half"])
    if rho_dt <= 0.0 or mu_half < 0.0:
        raise ValueError("need rho/dt > 0 and mu/2 >= 0")
    grid = rhs.grid
    out = FaceField.zeros(grid)
    bc0 = bc.homogeneous()
    h2 = grid.h**2
    for k in range(grid.dim):
        mask = _unknown_mask(grid, k, bc)
        bc_vals = np.zeros(grid.face_shape(k))
        for side in (0, 1):
            if bc.kind(k, side) != TRACTION:
                val = bc.velocity_value(k, side, k, t)
                bc_vals[_sl(grid.dim, k, 0 if side == 0 else -1)] = val
        if mu_half == 0.0:
            out.comps[k] = np.where(mask, rhs.comps[k] / rho_dt, bc_vals)
            continue

        def apply_full(x_full, k=k):
            return rho_dt * x_full - (mu_half / h2) * _laplacian_component(x_full, k, bc, t)

        def apply_hom(x_full, k=k):
            return rho_dt * x_full - (mu_half / h2) * _laplacian_component(x_full, k, bc0, t)

        g = guess.comps[k] if guess is not None else np.zeros(grid.face_shape(k))
        x0 = np.where(mask, g, bc_vals)
        out.comps[k] = _helmholtz_cg(rhs.comps[k], x0, apply_full, apply_hom, mask, rel_tol)
    return out


# --- pressure Poisson solve -----------------------------------------------------


def _axis_kinds(bc, dim):
    """Pressure boundary kind per axis: 'neumann' (velocity walls) or
    'dirichlet' (traction walls); None when the two sides differ."""
    kinds = []
    for axis in range(dim):
        k0 = "dirichlet" if bc.kind(axis, 0) == TRACTION else "neumann"
        k1 = "dirichlet" if bc.kind(axis, 1) == TRACTION else "neumann"
        kinds.append(k0 if k0 == k1 else None)
    return kinds


def _poisson_eigenvalues(n, kind):
    k = np.arange(n)
    if kind == "neumann":
        return 2.0 * np.cos(np.pi * k / n) - 2.0
    return 2.0 * np.cos(np.pi * (k + 1) / n) - 2.0


def _fast_poisson(rhs, h, kinds, dirichlet, compat_tol):
    """Exact solve by per-axis DCT-II (Neumann) / DST-II (staggered Dirichlet)."""
    dim = rhs.ndim
    work = rhs.copy()
    # lift inhomogeneous Dirichlet data into the right-hand side
    for axis in range(dim):
        if kinds[axis] == "dirichlet":
            lo, hi = dirichlet[axis]
            work[_sl(dim, axis, 0)] -= 2.0 * lo / h**2
            work[_sl(dim, axis, -1)] -= 2.0 * hi / h**2
    all_neumann = all(k == "neumann" for k in kinds)
    if all_neumann:
        imbalance = abs(float(np.mean(work)))
        scale = max(float(np.max(np.abs(work))), 1e-300)
        if imbalance > compat_tol * scale + 1e-12:
            raise SolverError("incompatible all-Neumann pressure problem", imbalance)
        work = work - np.mean(work)

    for axis in range(dim):
        tf = sfft.dctn if kinds[axis] == "neumann" else sfft.dstn
        work = tf(work, type=2, axes=axis)
    shape = rhs.shape
    lam = np.zeros(shape)
    for axis in range(dim):
        e = _poisson_eigenvalues(shape[axis], kinds[axis]) / h**2
        lam = lam + e.reshape([-1 if a == axis else 1 for a in range(dim)])
    if all_neumann:
        lam.ravel()[0] = 1.0  # zero mode pinned to zero mean
        work.ravel()[0] = 0.0
    work = work / lam
    for axis in range(dim):
        tf = sfft.idctn if kinds[axis] == "neumann" else sfft.idstn
        work = tf(work, type=2, axes=axis)
    return work


def _poisson_cg(rhs, h, axis_kinds_per_side, dirichlet, compat_tol, tol=1e-10,
                max_iter=20000):
    """Matrix-free CG fallback for mixed per-side boundary kinds."""
    dim = rhs.ndim

    def pad(p):
        q = np.pad(p, 1, mode="edge")
        for axis in range(dim):
            for side in (0, 1):
                if axis_kinds_per_side[axis][side] == "dirichlet":
                    g = _sl(dim, axis, 0 if side == 0 else -1)
                    e = _sl(dim, axis, 1 if side == 0 else -2)
                    q[g] = -q[e]
        return q

    def apply_op(p):
        q = pad(p)
        out = np.zeros_like(p)
        for a in range(dim):
            hi = tuple(slice(2, None) if b == a else slice(1, -1) for b in range(dim))
            lo = tuple(slice(0, -2) if b == a else slice(1, -1) for b in range(dim))
            mid = tuple(slice(1, -1) for _ in range(dim))
            out += (q[hi] + q[lo] - 2.0 * q[mid]) / h**2
        return out

    work = rhs.copy()
    for axis in range(dim):
        for side in (0, 1):
            if axis_kinds_per_side[axis][side] == "dirichlet":
                edge = _sl(dim, axis, 0 if side == 0 else -1)
                work[edge] -= 2.0 * dirichlet[axis][side] / h**2
    all_neumann = all(
        k == "neumann" for ks in axis_kinds_per_side for k in ks
    )
    if all_neumann:
        imbalance = abs(float(np.mean(work)))
        scale = max(float(np.max(np.abs(work))), 1e-300)
        if imbalance > compat_tol * scale + 1e-12:
            raise SolverError("incompatible all-Neumann pressure problem", imbalance)
        work = work - np.mean(work)

    x = np.zeros_like(work)
    r = work - apply_op(x)
    b_norm = max(np.linalg.norm(work), 1e-300)
    p = r.copy()
    rz = float(np.sum(r * r))
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * b_norm:
            break
        ap = apply_op(p)
        if all_neumann:
            ap = ap - np.mean(ap)
        denom = float(np.sum(p * ap))
        if denom == 0.0:
            break
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * ap
        rz_new = float(np.sum(r * r))
        p = r + (rz_new / rz) * p
        rz = rz_new
    else:
        raise SolverError("pressure Poisson solve did not converge",
                          np.linalg.norm(r) / b_norm)
    if all_neumann:
        x = x - np.mean(x)
    return x


def solve_pressure_poisson(rhs: CellField, bc: FluidBc, dirichlet_values=None,
                           t=0.0, rel_tol=1e-10, compat_tol=1e-6) -> CellField:
    """Solve lap p = rhs with Neumann data on velocity walls and Dirichlet
    data on traction walls; the all-Neumann null space is removed by pinning
    the mean to zero.

    ``dirichlet_values[(axis, side)]`` overrides the traction-wall pressure
    (used for pressure increments); by default it is -h.n from ``bc``.
    """
    grid = rhs.grid
    dim = grid.dim

    def pb(axis, side):
        if dirichlet_values is not None:
            return float(dirichlet_values.get((axis, side), 0.0))
        return float(bc.boundary_pressure(axis, side, t))

    kinds = _axis_kinds(bc, dim)
    dirichlet = []
    per_side = []
    for axis in range(dim):
        sides = []
        vals = []
        for side in (0, 1):
            kind = "dirichlet" if bc.kind(axis, side) == TRACTION else "neumann"
            sides.append(kind)
            vals.append(pb(axis, side) if kind == "dirichlet" else 0.0)
        per_side.append(tuple(sides))
        dirichlet.append(tuple(vals))

    if all(k is not None for k in kinds):
        sol = _fast_poisson(rhs.a, grid.h, kinds, dirichlet, compat_tol)
    else:
        sol = _poisson_cg(rhs.a, grid.h, per_side, dirichlet, compat_tol, rel_tol)
    return CellField(grid, sol)


def _gradient_with_dirichlet(p: CellField, bc: FluidBc, dirichlet) -> FaceField:
    """Gradient of a cell scalar whose traction-wall Dirichlet data is given
    explicitly (velocity walls are homogeneous Neumann, so wall faces get a
    zero gradient and prescribed velocities stay untouched)."""
    grid = p.grid
    h = grid.h
    comps = []
    for k in range(grid.dim):
        padded = np.pad(
            p.a, [(1, 1) if a == k else (0, 0) for a in range(grid.dim)], mode="edge"
        )
        for side in (0, 1):
            if bc.kind(k, side) == TRACTION:
                val = dirichlet[k][side]
                g = _sl(grid.dim, k, 0 if side == 0 else -1)
                e = _sl(grid.dim, k, 1 if side == 0 else -2)
                padded[g] = 2.0 * val - padded[e]
        comps.append(np.diff(padded, axis=k) / h)
    return FaceField(grid, comps)


# --- time stepping --------------------------------------------------------------


def _half_step_pressures(bc, grid, t_half, pb_applied):
    """Dirichlet increments for the pressure update and the new applied values."""
    increments = []
    new_applied = dict(pb_applied)
    for axis in range(grid.dim):
        vals = [0.0, 0.0]
        for side in (0, 1):
            if bc.kind(axis, side) == TRACTION:
                target = bc.boundary_pressure(axis, side, t_half)
                prev = pb_applied.get((axis, side), 0.0)
                vals[side] = target - prev
                new_applied[(axis, side)] = target
        increments.append(tuple(vals))
    return increments, new_applied


def fluid_step(state: FluidState, f_half: FaceField, dt, props: FluidProps,
               bc: FluidBc, t=0.0, advection: FaceField = None,
               ab_ratio=1.0, rel_tol=1e-10) -> FluidState:
    """Advance one time step; ``t`` is the time at the start of the step.

    ``advection`` overrides the AB2 advection term (the first-step
    predictor-corrector uses this); ``ab_ratio`` is dt/dt_prev.
    """
    grid = state.u.grid
    rho, mu = props.rho, props.mu
    u_n = state.u

    if advection is None:
        if state.step_index == 0:
            advection = convective_term(u_n, bc, t)
        else:
            advection = advect(u_n, state.u_prev, bc, t, ratio=ab_ratio)

    prev_dirichlet = []
    for axis in range(grid.dim):
        prev_dirichlet.append(
            (state.pb_applied.get((axis, 0), 0.0), state.pb_applied.get((axis, 1), 0.0))
        )
    grad_p = _gradient_with_dirichlet(state.p, bc, prev_dirichlet)

    lap_u = FaceField(
        grid,
        [
            _laplacian_component(c, k, bc, t) / grid.h**2
            for k, c in enumerate(u_n.comps)
        ],
    )

    rhs = FaceField(
        grid,
        [
            (rho / dt) * u_n.comps[k]
            + 0.5 * mu * lap_u.comps[k]
            - rho * advection.comps[k]
            - grad_p.comps[k]
            + f_half.comps[k]
            for k in range(grid.dim)
        ],
    )

    t_new = t + dt
    u_star = solve_viscous_helmholtz(
        rhs, {"rho_dt": rho / dt, "mu_half": 0.5 * mu}, bc, t=t_new,
        guess=u_n, rel_tol=rel_tol,
    )

    div_star = divergence(u_star)
    rhs_p = CellField(grid, (rho / dt) * div_star.a)
    t_half = t + 0.5 * dt
    increments, new_applied = _half_step_pressures(bc, grid, t_half, state.pb_applied)
    inc_map = {
        (axis, side): increments[axis][side]
        for axis in range(grid.dim)
        for side in (0, 1)
    }
    phi = solve_pressure_poisson(rhs_p, bc, dirichlet_values=inc_map, rel_tol=rel_tol)

    grad_phi = _gradient_with_dirichlet(phi, bc, increments)
    u_new = FaceField(
        grid,
        [u_star.comps[k] - (dt / rho) * grad_phi.comps[k] for k in range(grid.dim)],
    )
    bc.apply_dirichlet_faces(u_new, t_new)
    p_new = CellField(grid, state.p.a + phi.a)
    return FluidState(u_new, p_new, u_n.copy(), state.step_index + 1, new_applied)


def initialize_first_step(state: FluidState, f_half: FaceField, dt,
                          props: FluidProps, bc: FluidBc, t=0.0,
                          rel_tol=1e-10) -> FluidState:
    """Second-order bootstrap: predictor with N = u.grad u at t^n, corrector
    re-evaluating the advection at the predicted midpoint velocity."""
    if state.step_index != 0:
        raise ValueError("initialize_first_step requires step_index = 0")
    n_pred = convective_term(state.u, bc, t)
    predicted = fluid_step(
        state.copy(), f_half, dt, props, bc, t=t, advection=n_pred, rel_tol=rel_tol
    )
    u_mid = 0.5 * (state.u + predicted.u)
    n_corr = convective_term(u_mid, bc, t + 0.5 * dt)
    return fluid_step(
        state, f_half, dt, props, bc, t=t, advection=n_corr, rel_tol=rel_tol
    )
