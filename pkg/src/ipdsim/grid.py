"""Staggered (MAC) Cartesian grid storage and second-order finite-difference operators.

Pressure-like scalars live at cell centers, velocity-like vectors live on cell
faces (component k on faces normal to axis k).  All operators are pure: they
never mutate their inputs.  Arrays are laid out axis-major with axis 0 varying
fastest in memory order conventions of C-contiguous numpy arrays; this layout
is fixed so that snapshot files are bit-stable.

Boundary closures use one layer of ghost values populated from the scene's
boundary conditions before each operator application: reflection for Dirichlet
data, linear extrapolation for Neumann data.  Where an upwind stencil needs a
second ghost layer it is built by linear extension of the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MacGrid",
    "CellField",
    "FaceField",
    "FluidBc",
    "NOSLIP",
    "VELOCITY",
    "TRACTION",
    "gradient",
    "divergence",
    "laplacian",
    "advect",
    "convective_term",
]

NOSLIP = "noslip"
VELOCITY = "velocity"
TRACTION = "traction"


def _sl(ndim, axis, s):
    """Index tuple selecting slice ``s`` along ``axis``."""
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


@dataclass(frozen=True)
class MacGrid:
    """Uniform staggered grid on a box [0, extent[0]] x ... with equal spacing.

    extent      length per axis (cm)
    cells       number of cells per axis
    """

    extent: tuple
    cells: tuple

    def __post_init__(self):
        if len(self.extent) != len(self.cells):
            raise ValueError("extent and cells must have the same length")
        if self.dim not in (2, 3):
            raise ValueError("only 2D and 3D grids are supported")
        spacings = [L / n for L, n in zip(self.extent, self.cells)]
        h = spacings[0]
        if any(abs(s - h) > 1e-12 * h for s in spacings):
            raise ValueError(f"grid spacing must be equal on all axes, got {spacings}")
        if any(n < 4 for n in self.cells):
            raise ValueError("need at least 4 cells per axis")

    @property
    def dim(self):
        return len(self.extent)

    @property
    def h(self):
        return self.extent[0] / self.cells[0]

    @property
    def cell_shape(self):
        return tuple(self.cells)

    def face_shape(self, k):
        return tuple(n + 1 if a == k else n for a, n in enumerate(self.cells))

    def cell_coords(self):
        """Coordinate arrays (meshgrid, ij indexing) of cell centers."""
        axes = [(np.arange(n) + 0.5) * self.h for n in self.cells]
        return np.meshgrid(*axes, indexing="ij")

    def face_coords(self, k):
        """Coordinate arrays of faces normal to axis k."""
        axes = []
        for a, n in enumerate(self.cells):
            if a == k:
                axes.append(np.arange(n + 1) * self.h)
            else:
                axes.append((np.arange(n) + 0.5) * self.h)
        return np.meshgrid(*axes, indexing="ij")


@dataclass
class CellField:
    """Scalar field at cell centers (pressure dyn/cm^2, divergence 1/s)."""

    grid: MacGrid
    a: np.ndarray

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.cell_shape))

    def copy(self):
        return CellField(self.grid, self.a.copy())


@dataclass
class FaceField:
    """Vector field with component k stored on faces normal to axis k."""

    grid: MacGrid
    comps: list

    @classmethod
    def zeros(cls, grid):
        return cls(grid, [np.zeros(grid.face_shape(k)) for k in range(grid.dim)])

    def copy(self):
        return FaceField(self.grid, [c.copy() for c in self.comps])

    def check_shapes(self):
        for k, c in enumerate(self.comps):
            if c.shape != self.grid.face_shape(k):
                raise ValueError(
                    f"component {k} has shape {c.shape}, expected {self.grid.face_shape(k)}"
                )
        return self

    def __add__(self, other):
        _require_same_grid(self.grid, other.grid)
        return FaceField(self.grid, [a + b for a, b in zip(self.comps, other.comps)])

    def __sub__(self, other):
        _require_same_grid(self.grid, other.grid)
        return FaceField(self.grid, [a - b for a, b in zip(self.comps, other.comps)])

    def __mul__(self, s):
        return FaceField(self.grid, [s * c for c in self.comps])

    __rmul__ = __mul__

    def max_norm(self):
        return max(np.max(np.abs(c)) if c.size else 0.0 for c in self.comps)

    def dot(self, other):
        """Unweighted sum of componentwise products over all faces."""
        _require_same_grid(self.grid, other.grid)
        return sum(float(np.sum(a * b)) for a, b in zip(self.comps, other.comps))


def _require_same_grid(g1, g2):
    if g1 is not g2 and g1 != g2:
        raise ValueError("fields live on different grids")


def _value_vector(value, t, dim):
    v = value(t) if callable(value) else value
    v = np.asarray(v, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"boundary value must be a length-{dim} vector")
    return v


@dataclass
class FluidBc:
    """Per-boundary-side conditions: one of no-slip, prescribed velocity,
    prescribed normal traction (dyn/cm^2).

    ``sides[(axis, side)]`` with side 0 = low wall, 1 = high wall maps to
    ``(kind, value)``; value is a length-dim vector or a callable of t
    returning one.  No-slip needs no value.  Every boundary carries exactly
    one condition; unspecified sides default to no-slip.
    """

    dim: int
    sides: dict = field(default_factory=dict)

    def __post_init__(self):
        full = {}
        for axis in range(self.dim):
            for side in (0, 1):
                spec = self.sides.get((axis, side), (NOSLIP, None))
                if isinstance(spec, str):
                    spec = (spec, None)
                kind, value = spec
                if kind not in (NOSLIP, VELOCITY, TRACTION):
                    raise ValueError(f"unknown boundary kind {kind!r}")
                if kind != NOSLIP and value is None:
                    raise ValueError(f"{kind} boundary needs a value")
                full[(axis, side)] = (kind, value)
        self.sides = full

    def kind(self, axis, side):
        return self.sides[(axis, side)][0]

    def velocity_value(self, axis, side, comp, t):
        kind, value = self.sides[(axis, side)]
        if kind == NOSLIP:
            return 0.0
        if kind == VELOCITY:
            return float(_value_vector(value, t, self.dim)[comp])
        raise ValueError("traction boundary has no prescribed velocity")

    def boundary_pressure(self, axis, side, t):
        """Dirichlet pressure -h.n on a traction wall (n outward)."""
        kind, value = self.sides[(axis, side)]
        if kind != TRACTION:
            raise ValueError("pressure value only defined on traction boundaries")
        h_vec = _value_vector(value, t, self.dim)
        n_sign = 1.0 if side == 1 else -1.0
        return -h_vec[axis] * n_sign

    def all_velocity(self):
        return all(kind != TRACTION for kind, _ in self.sides.values())

    def homogeneous(self):
        """Same boundary kinds with all values zeroed (for linear operators)."""
        zero = np.zeros(self.dim)
        sides = {
            key: (kind, None if kind == NOSLIP else zero)
            for key, (kind, _) in self.sides.items()
        }
        return FluidBc(self.dim, sides)

    # --- ghost fills -------------------------------------------------------

    def pad_cell(self, p, t):
        """Pad a cell scalar by one ghost layer per side.

        Velocity walls carry homogeneous Neumann pressure data (ghost copies
        the edge), traction walls carry Dirichlet pressure (ghost reflects).
        """
        q = np.pad(p, 1, mode="edge")
        nd = p.ndim
        for axis in range(nd):
            for side in (0, 1):
                if self.kind(axis, side) == TRACTION:
                    pb = self.boundary_pressure(axis, side, t)
                    ghost = _sl(nd, axis, 0 if side == 0 else -1)
                    edge = _sl(nd, axis, 1 if side == 0 else -2)
                    q[ghost] = 2.0 * pb - q[edge]
        return q

    def pad_face(self, u, k, t, width=1):
        """Pad velocity component k by ``width`` ghost layers per side.

        Normal direction: mirror about the boundary face (Dirichlet walls hold
        their prescribed value there; traction walls were extrapolated, so the
        mirror is a linear extension).  Tangential direction: Dirichlet walls
        reflect about the wall value, traction walls copy (homogeneous
        Neumann).  A second layer, when requested, linearly extends the first.
        """
        q = np.pad(u, width, mode="edge")
        nd = u.ndim
        for axis in range(nd):
            for side in (0, 1):
                kind = self.kind(axis, side)
                lo = side == 0
                g1 = width - 1 if lo else -width
                e1 = width if lo else -width - 1
                e2 = width + 1 if lo else -width - 2
                if axis == k:
                    q[_sl(nd, axis, g1)] = 2.0 * q[_sl(nd, axis, e1)] - q[_sl(nd, axis, e2)]
                elif kind == TRACTION:
                    q[_sl(nd, axis, g1)] = q[_sl(nd, axis, e1)]
                else:
                    w = self.velocity_value(axis, side, k, t)
                    q[_sl(nd, axis, g1)] = 2.0 * w - q[_sl(nd, axis, e1)]
                # extend further layers linearly off the first ghost
                for extra in range(1, width):
                    g = width - 1 - extra if lo else -width + extra
                    p1 = g + 1 if lo else g - 1
                    p2 = g + 2 if lo else g - 2
                    q[_sl(nd, axis, g)] = 2.0 * q[_sl(nd, axis, p1)] - q[_sl(nd, axis, p2)]
        return q

    def apply_dirichlet_faces(self, u, t):
        """Overwrite boundary-normal faces with prescribed values in place.

        Traction walls are left untouched (their normal velocity is free).
        """
        for k, c in enumerate(u.comps):
            for side in (0, 1):
                if self.kind(k, side) == TRACTION:
                    continue
                val = self.velocity_value(k, side, k, t)
                c[_sl(c.ndim, k, 0 if side == 0 else -1)] = val
        return u

    def extrapolate_traction_faces(self, u):
        """Fill boundary-normal faces on traction walls by linear extrapolation."""
        for k, c in enumerate(u.comps):
            for side in (0, 1):
                if self.kind(k, side) != TRACTION:
                    continue
                nd = c.ndim
                if side == 0:
                    c[_sl(nd, k, 0)] = 2.0 * c[_sl(nd, k, 1)] - c[_sl(nd, k, 2)]
                else:
                    c[_sl(nd, k, -1)] = 2.0 * c[_sl(nd, k, -2)] - c[_sl(nd, k, -3)]
        return u


# --- operators --------------------------------------------------------------


def gradient(p: CellField, bc: FluidBc, t=0.0) -> FaceField:
    """Discrete gradient of a cell scalar, evaluated at faces.

    Component k at a face is the centered difference of adjacent cell values
    divided by h; boundary faces use ghost values from the pressure boundary
    data carried by ``bc``.
    """
    grid = p.grid
    h = grid.h
    comps = []
    for k in range(grid.dim):
        q = p.a
        # pad only along axis k
        padded = np.pad(q, [(1, 1) if a == k else (0, 0) for a in range(grid.dim)], mode="edge")
        if bc.kind(k, 0) == TRACTION:
            pb = bc.boundary_pressure(k, 0, t)
            padded[_sl(grid.dim, k, 0)] = 2.0 * pb - padded[_sl(grid.dim, k, 1)]
        if bc.kind(k, 1) == TRACTION:
            pb = bc.boundary_pressure(k, 1, t)
            padded[_sl(grid.dim, k, -1)] = 2.0 * pb - padded[_sl(grid.dim, k, -2)]
        comps.append(np.diff(padded, axis=k) / h)
    return FaceField(grid, comps)


def divergence(u: FaceField) -> CellField:
    """Discrete divergence of a face vector field at cell centers."""
    u.check_shapes()
    h = u.grid.h
    out = np.zeros(u.grid.cell_shape)
    for k, c in enumerate(u.comps):
        out += np.diff(c, axis=k) / h
    return CellField(u.grid, out)


def laplacian(u: FaceField, bc: FluidBc, t=0.0) -> FaceField:
    """Componentwise 2d+1-point Laplacian at each component's own faces."""
    grid = u.grid
    h2 = grid.h ** 2
    comps = []
    for k, c in enumerate(u.comps):
        q = bc.pad_face(c, k, t, width=1)
        lap = np.zeros_like(c)
        for a in range(grid.dim):
            hi = tuple(slice(2, None) if b == a else slice(1, -1) for b in range(grid.dim))
            lo = tuple(slice(0, -2) if b == a else slice(1, -1) for b in range(grid.dim))
            mid = tuple(slice(1, -1) for _ in range(grid.dim))
            lap += (q[hi] + q[lo] - 2.0 * q[mid]) / h2
        comps.append(lap)
    return FaceField(grid, comps)


def _tangential_average(u: FaceField, src: int, k: int) -> np.ndarray:
    """Average component ``src`` onto the faces of component ``k``."""
    c = u.comps[src]
    # faces(src) -> centers along src
    a = 0.5 * (c[_sl(c.ndim, src, slice(1, None))] + c[_sl(c.ndim, src, slice(0, -1))])
    # centers along k -> faces along k (edge-copied at boundary faces)
    a = np.pad(a, [(1, 1) if ax == k else (0, 0) for ax in range(c.ndim)], mode="edge")
    return 0.5 * (a[_sl(c.ndim, k, slice(1, None))] + a[_sl(c.ndim, k, slice(0, -1))])


def convective_term(u: FaceField, bc: FluidBc, t=0.0) -> FaceField:
    """u . grad(u) with a second-order upwind-biased derivative per component.

    Stencils fall back to the linearly extended ghost layer next to walls.
    """
    grid = u.grid
    h = grid.h
    out = []
    for k, c in enumerate(u.comps):
        conv = np.zeros_like(c)
        q = bc.pad_face(c, k, t, width=2)
        for a in range(grid.dim):
            adv = c if a == k else _tangential_average(u, a, k)

            def shifted(off, axis=a):
                return q[
                    tuple(
                        slice(2 + off, 2 + off + c.shape[ax]) if ax == axis else slice(2, 2 + c.shape[ax])
                        for ax in range(grid.dim)
                    )
                ]

            u0 = shifted(0)
            up2 = (3.0 * u0 - 4.0 * shifted(-1) + shifted(-2)) / (2.0 * h)
            dn2 = (-3.0 * u0 + 4.0 * shifted(1) - shifted(2)) / (2.0 * h)
            conv += adv * np.where(adv >= 0.0, up2, dn2)
        out.append(conv)
    return FaceField(grid, out)


def advect(u_now: FaceField, u_prev: FaceField, bc: FluidBc, t=0.0, ratio=1.0) -> FaceField:
    """Adams-Bashforth extrapolated advection term at the half step.

    ``ratio`` is dt_now/dt_prev for variable-step runs; ratio 1 gives the
    classic 3/2, -1/2 weights.
    """
    _require_same_grid(u_now.grid, u_prev.grid)
    c_now = 1.0 + 0.5 * ratio
    c_prev = 0.5 * ratio
    a_now = convective_term(u_now, bc, t)
    if u_prev is u_now:
        a_prev = a_now
    else:
        a_prev = convective_term(u_prev, bc, t)
    return c_now * a_now - c_prev * a_prev
