"""Regularized delta-kernel force spreading and velocity interpolation.

The point cloud talks to the staggered grid through a tensor product of
one-dimensional kernels phi(r):

    spread:       f_k(face) = sum_m F_{m,k} delta_h(x_face - chi_m) V_m
    interpolate:  U_{m,k}   = sum_faces u_k delta_h(x_face - chi_m) h^d

with delta_h(x) = prod_a phi(x_a/h) / h^d.  Spreading uses the nodal volume
V_m as the Lagrangian quadrature weight so that total force is conserved for
rescaled and irregular clouds; with the matching V_m weight in the Lagrangian
inner product the two operators are adjoint.

Spreading accumulates with np.bincount in fixed node order, so repeated runs
are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FaceField, MacGrid

__all__ = [
    "DeltaKernel",
    "KERNELS",
    "kernel_phi",
    "spread_forces",
    "interpolate_velocity",
    "NodeNearBoundaryError",
]

_SQRT29 = np.sqrt(29.0)
_IB6_K = 59.0 / 60.0 - _SQRT29 / 20.0


class NodeNearBoundaryError(ValueError):
    """A node sits within kernel support of the domain boundary."""

    def __init__(self, node, position):
        self.node = int(node)
        self.position = np.asarray(position)
        super().__init__(
            f"node {self.node} at {np.array2string(self.position, precision=6)} "
            "is within kernel support of the domain boundary"
        )


def _phi_ib4(r):
    r = np.abs(r)
    out = np.zeros_like(r)
    inner = r < 1.0
    outer = (r >= 1.0) & (r < 2.0)
    ri = r[inner]
    ro = r[outer]
    out[inner] = 0.125 * (3.0 - 2.0 * ri + np.sqrt(1.0 + 4.0 * ri - 4.0 * ri * ri))
    out[outer] = 0.125 * (5.0 - 2.0 * ro - np.sqrt(-7.0 + 12.0 * ro - 4.0 * ro * ro))
    return out


def _phi_cbs3(r):
    r = np.abs(r)
    out = np.zeros_like(r)
    inner = r < 1.0
    outer = (r >= 1.0) & (r < 2.0)
    ri = r[inner]
    ro = r[outer]
    out[inner] = 2.0 / 3.0 - ri * ri + 0.5 * ri**3
    out[outer] = (2.0 - ro) ** 3 / 6.0
    return out


def _ib6_fraction_weights(fr):
    """Six stencil weights phi(fr - 3 + k), k = 0..5, for fractions fr in [0, 1).

    This is the six-point kernel with three continuous derivatives; the last
    degree of freedom beyond the discrete moment conditions is fixed by a
    quadratic condition, hence the square root.
    """
    K = _IB6_K
    alpha = 28.0
    beta = 9.0 / 4.0 - 1.5 * (K + fr**2) + (22.0 / 3.0 - 7.0 * K) * fr - (7.0 / 3.0) * fr**3
    gamma = 0.25 * (
        0.5 * (161.0 / 36.0 - 59.0 / 6.0 * K + 5.0 * K * K) * fr * fr
        + (1.0 / 3.0) * (-109.0 / 24.0 + 5.0 * K) * fr**4
        + (5.0 / 18.0) * fr**6
    )
    disc = np.maximum(beta * beta - 4.0 * alpha * gamma, 0.0)
    pm3 = (-beta + np.sqrt(disc)) / (2.0 * alpha)
    pm2 = (
        -3.0 * pm3
        - 1.0 / 16.0
        + 0.125 * (K + fr**2)
        + (1.0 / 12.0) * (3.0 * K - 1.0) * fr
        + (1.0 / 12.0) * fr**3
    )
    pm1 = 2.0 * pm3 + 0.25 + (1.0 / 6.0) * (4.0 - 3.0 * K) * fr - (1.0 / 6.0) * fr**3
    p0 = 2.0 * pm3 + 5.0 / 8.0 - 0.25 * (K + fr**2)
    pp1 = -3.0 * pm3 + 0.25 - (1.0 / 6.0) * (4.0 - 3.0 * K) * fr + (1.0 / 6.0) * fr**3
    pp2 = (
        pm3
        - 1.0 / 16.0
        + 0.125 * (K + fr**2)
        - (1.0 / 12.0) * (3.0 * K - 1.0) * fr
        - (1.0 / 12.0) * fr**3
    )
    return np.stack([pm3, pm2, pm1, p0, pp1, pp2], axis=-1)


def _phi_ib6(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    mask = np.abs(r) < 3.0
    rm = r[mask]
    fr = rm - np.floor(rm)
    w = _ib6_fraction_weights(fr)
    # phi(fr - 3 + k) == phi(rm) when k = rm - fr + 3
    k = np.rint(rm - fr + 3).astype(int)
    valid = (k >= 0) & (k <= 5)
    vals = np.zeros_like(rm)
    vals[valid] = w[valid, k[valid]]
    out[mask] = vals
    return out


_PHI = {"ib4": _phi_ib4, "ib6": _phi_ib6, "cbs3": _phi_cbs3}
_HALFWIDTH = {"ib4": 2, "ib6": 3, "cbs3": 2}


def kernel_phi(kind, r):
    """One-dimensional kernel phi evaluated elementwise at r (grid units)."""
    if kind not in _PHI:
        raise ValueError(f"unknown kernel kind {kind!r}")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    out = _PHI[kind](np.atleast_1d(r))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class DeltaKernel:
    """Tensor-product regularized delta kernel choice."""

    kind: str = "ib4"

    def __post_init__(self):
        if self.kind not in _PHI:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @property
    def support_halfwidth(self):
        return _HALFWIDTH[self.kind]

    def phi(self, r):
        return kernel_phi(self.kind, r)


def _axis_stencils(kernel, grid, positions, k):
    """Per-axis stencil bases and weights for faces of component k.

    Returns (bases, weights): bases[a] has shape (M,), weights[a] shape
    (M, 2w).  Index i of the component-k array along axis a sits at
    coordinate i*h (a == k) or (i + 1/2)*h.
    """
    w = kernel.support_halfwidth
    h = grid.h
    offs = np.arange(2 * w)
    bases = []
    weights = []
    for a in range(grid.dim):
        s = positions[:, a] / h - (0.0 if a == k else 0.5)
        base = np.floor(s).astype(np.int64) - (w - 1)
        args = s[:, None] - (base[:, None] + offs[None, :])
        weights.append(kernel.phi(args.ravel()).reshape(args.shape))
        bases.append(base)
    return bases, weights


def _check_bounds(bases, width, shape, positions, clip):
    """Detect stencils poking outside the array; report the first bad node."""
    bad = np.zeros(len(positions), dtype=bool)
    for a, base in enumerate(bases):
        bad |= (base < 0) | (base + 2 * width - 1 >= shape[a])
    if not bad.any():
        return None
    if not clip:
        node = int(np.argmax(bad))
        raise NodeNearBoundaryError(node, positions[node])
    return bad


def spread_forces(forces, volumes, positions, grid: MacGrid, kernel: DeltaKernel,
                  clip_at_boundary=False) -> FaceField:
    """Spread per-node force densities (dyn/cm^3) to a face field.

    ``clip_at_boundary`` truncates kernel stencils at the domain boundary
    (the wall absorbs the clipped share) instead of raising; bodies anchored
    to walls need this.
    """
    forces = np.asarray(forces, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    positions = np.asarray(positions, dtype=float)
    d = grid.dim
    scale = grid.h ** (-d)
    out = FaceField.zeros(grid)
    w = kernel.support_halfwidth
    for k in range(d):
        shape = grid.face_shape(k)
        bases, weights = _axis_stencils(kernel, grid, positions, k)
        _check_bounds(bases, w, shape, positions, clip_at_boundary)
        amp = forces[:, k] * volumes * scale
        if d == 2:
            vals = amp[:, None, None] * weights[0][:, :, None] * weights[1][:, None, :]
            ii = (bases[0][:, None] + np.arange(2 * w))[:, :, None]
            jj = (bases[1][:, None] + np.arange(2 * w))[:, None, :]
            ii, jj = np.broadcast_arrays(ii, jj)
            if clip_at_boundary:
                ok = (ii >= 0) & (ii < shape[0]) & (jj >= 0) & (jj < shape[1])
                flat = (ii * shape[1] + jj)[ok]
                out.comps[k].ravel()[:] += np.bincount(
                    flat, weights=vals[ok], minlength=shape[0] * shape[1]
                )
            else:
                flat = (ii * shape[1] + jj).ravel()
                out.comps[k].ravel()[:] += np.bincount(
                    flat, weights=vals.ravel(), minlength=shape[0] * shape[1]
                )
        else:
            vals = (
                amp[:, None, None, None]
                * weights[0][:, :, None, None]
                * weights[1][:, None, :, None]
                * weights[2][:, None, None, :]
            )
            ii = (bases[0][:, None] + np.arange(2 * w))[:, :, None, None]
            jj = (bases[1][:, None] + np.arange(2 * w))[:, None, :, None]
            kk = (bases[2][:, None] + np.arange(2 * w))[:, None, None, :]
            ii, jj, kk = np.broadcast_arrays(ii, jj, kk)
            flat_all = (ii * shape[1] + jj) * shape[2] + kk
            if clip_at_boundary:
                ok = (
                    (ii >= 0) & (ii < shape[0])
                    & (jj >= 0) & (jj < shape[1])
                    & (kk >= 0) & (kk < shape[2])
                )
                out.comps[k].ravel()[:] += np.bincount(
                    flat_all[ok], weights=vals[ok], minlength=int(np.prod(shape))
                )
            else:
                out.comps[k].ravel()[:] += np.bincount(
                    flat_all.ravel(), weights=vals.ravel(), minlength=int(np.prod(shape))
                )
    return out


def interpolate_velocity(u: FaceField, positions, grid: MacGrid, kernel: DeltaKernel,
                         bc=None, t=0.0, clip_at_boundary=False):
    """Interpolate a face field to the nodes: U_{m,k} = sum u_k delta_h h^d.

    Near-wall stencils use ghost values extended from ``bc`` when given
    (otherwise they raise, or clip to zero outside with ``clip_at_boundary``).
    """
    positions = np.asarray(positions, dtype=float)
    d = grid.dim
    w = kernel.support_halfwidth
    out = np.zeros((len(positions), d))
    for k in range(d):
        shape = grid.face_shape(k)
        bases, weights = _axis_stencils(kernel, grid, positions, k)
        if bc is not None:
            data = bc.pad_face(u.comps[k], k, t, width=w)
            offset = w
        else:
            _check_bounds(bases, w, shape, positions, clip_at_boundary)
            data = u.comps[k]
            offset = 0
        padded_shape = data.shape
        if d == 2:
            ii = np.clip((bases[0][:, None] + np.arange(2 * w))[:, :, None] + offset, 0, padded_shape[0] - 1)
            jj = np.clip((bases[1][:, None] + np.arange(2 * w))[:, None, :] + offset, 0, padded_shape[1] - 1)
            vals = data[ii, jj]
            wts = weights[0][:, :, None] * weights[1][:, None, :]
            if bc is None and clip_at_boundary:
                ii0 = (bases[0][:, None] + np.arange(2 * w))[:, :, None]
                jj0 = (bases[1][:, None] + np.arange(2 * w))[:, None, :]
                wts = wts * ((ii0 >= 0) & (ii0 < shape[0]) & (jj0 >= 0) & (jj0 < shape[1]))
            out[:, k] = np.sum(vals * wts, axis=(1, 2))
        else:
            ii = np.clip((bases[0][:, None] + np.arange(2 * w))[:, :, None, None] + offset, 0, padded_shape[0] - 1)
            jj = np.clip((bases[1][:, None] + np.arange(2 * w))[:, None, :, None] + offset, 0, padded_shape[1] - 1)
            kk = np.clip((bases[2][:, None] + np.arange(2 * w))[:, None, None, :] + offset, 0, padded_shape[2] - 1)
            vals = data[ii, jj, kk]
            wts = (
                weights[0][:, :, None, None]
                * weights[1][:, None, :, None]
                * weights[2][:, None, None, :]
            )
            if bc is None and clip_at_boundary:
                ii0 = (bases[0][:, None] + np.arange(2 * w))[:, :, None, None]
                jj0 = (bases[1][:, None] + np.arange(2 * w))[:, None, :, None]
                kk0 = (bases[2][:, None] + np.arange(2 * w))[:, None, None, :]
                wts = wts * (
                    (ii0 >= 0) & (ii0 < shape[0])
                    & (jj0 >= 0) & (jj0 < shape[1])
                    & (kk0 >= 0) & (kk0 < shape[2])
                )
            out[:, k] = np.sum(vals * wts, axis=(1, 2, 3))
    return out
