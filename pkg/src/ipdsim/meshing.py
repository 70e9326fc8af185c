"""Point-cloud generation with finite-element quadrature nodal volumes.

Structured meshes of bilinear quadrilaterals (2D) or trilinear hexahedra (3D)
carry the cloud: every PD node coincides with one FE node, and the volume of
node n is the integral of its hat basis over the adjacent elements (2x2 or
2x2x2 Gauss-Legendre, exact for these element maps).  Volumes of 2D meshes
are areas and get multiplied by the out-of-plane thickness.

Nodes on the mesh boundary only own a partial stencil of elements; their
nodal weights are recovered by topological multipliers (2D: edge x2, corner
x4; 3D: face x2, edge x4, corner x8).  The total corrected volume then
deliberately exceeds the geometric volume; nothing is renormalized, since the
correction exists to restore full volumetric force near boundaries.

Three cloud kinds: ``uniform`` (lattice points inside the shape, equal
volumes, no mesh), ``rescaled`` (boundary-conforming structured mesh), and
``irregular`` (rescaled mesh with interior nodes perturbed by a seeded draw,
volumes recomputed from the perturbed elements).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeMesh",
    "CloudSpec",
    "GeneratedCloud",
    "Rectangle",
    "Box",
    "CookTrapezoid",
    "DegenerateElementError",
    "nodal_volumes",
    "boundary_volume_correction",
    "generate_cloud",
    "write_mesh",
    "read_mesh",
]

_GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)

CLASS_LABELS_2D = {4: "interior", 2: "edge", 1: "corner"}
CLASS_LABELS_3D = {8: "interior", 4: "face", 2: "edge", 1: "corner"}
_MULTIPLIER = {"interior": 1.0, "face": 2.0, "edge": None, "corner": None}


class DegenerateElementError(ValueError):
    """An element has a non-positive mapping determinant at a quadrature point."""


def _quad_basis(xi, eta):
    n = 0.25 * np.array(
        [
            (1 - xi) * (1 - eta),
            (1 + xi) * (1 - eta),
            (1 + xi) * (1 + eta),
            (1 - xi) * (1 + eta),
        ]
    )
    dn = 0.25 * np.array(
        [
            [-(1 - eta), -(1 - xi)],
            [(1 - eta), -(1 + xi)],
            [(1 + eta), (1 + xi)],
            [-(1 + eta), (1 - xi)],
        ]
    )
    return n, dn


def _hex_basis(xi, eta, zeta):
    signs = np.array(
        [
            [-1, -1, -1],
            [1, -1, -1],
            [1, 1, -1],
            [-1, 1, -1],
            [-1, -1, 1],
            [1, -1, 1],
            [1, 1, 1],
            [-1, 1, 1],
        ],
        dtype=float,
    )
    g = np.array([xi, eta, zeta])
    terms = 1.0 + signs * g
    n = 0.125 * terms.prod(axis=1)
    dn = np.empty((8, 3))
    for a in range(8):
        for k in range(3):
            prod = 0.125 * signs[a, k]
            for m in range(3):
                if m != k:
                    prod *= terms[a, m]
            dn[a, k] = prod
    return n, dn


def _gauss_points(dim):
    if dim == 2:
        for xi in _GAUSS_1D:
            for eta in _GAUSS_1D:
                yield 1.0, _quad_basis(xi, eta)
    else:
        for xi in _GAUSS_1D:
            for eta in _GAUSS_1D:
                for zeta in _GAUSS_1D:
                    yield 1.0, _hex_basis(xi, eta, zeta)


@dataclass
class FeMesh:
    """Structured mesh of bilinear quads or trilinear hexes."""

    nodes: np.ndarray
    elements: np.ndarray

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def element_valence(self):
        counts = np.zeros(self.n_nodes, dtype=int)
        np.add.at(counts, self.elements.ravel(), 1)
        return counts

    def classification(self):
        """Topological node classes from the number of adjacent elements."""
        labels = CLASS_LABELS_2D if self.dim == 2 else CLASS_LABELS_3D
        counts = self.element_valence()
        out = np.empty(self.n_nodes, dtype=object)
        for count, label in labels.items():
            out[counts == count] = label
        if any(v is None for v in out):
            bad = int(np.argmax([v is None for v in out]))
            raise ValueError(
                f"node {bad} has element valence {counts[bad]}, not a structured-mesh class"
            )
        return out

    def total_volume(self):
        vols, _ = _element_volumes(self)
        return float(vols.sum())

    def boundary_facets(self):
        """Boundary facets as node-index tuples (edges in 2D, quads in 3D)."""
        if self.dim == 2:
            local = [(0, 1), (1, 2), (2, 3), (3, 0)]
        else:
            local = [
                (0, 3, 2, 1),
                (4, 5, 6, 7),
                (0, 1, 5, 4),
                (2, 3, 7, 6),
                (1, 2, 6, 5),
                (3, 0, 4, 7),
            ]
        seen = {}
        for elem in self.elements:
            for loc in local:
                facet = tuple(int(elem[i]) for i in loc)
                key = tuple(sorted(facet))
                if key in seen:
                    seen[key] = None
                else:
                    seen[key] = facet
        return [f for f in seen.values() if f is not None]

    def node_patch_areas(self, node_mask, thickness=1.0):
        """Boundary-patch area per node over facets fully inside node_mask.

        The area integral of each facet basis function is accumulated to its
        node, so the per-node areas partition the selected boundary patch
        exactly.  2D edge "areas" are lengths times the thickness.
        """
        areas = np.zeros(self.n_nodes)
        for facet in self.boundary_facets():
            ids = np.asarray(facet)
            if not node_mask[ids].all():
                continue
            coords = self.nodes[ids]
            if self.dim == 2:
                length = np.linalg.norm(coords[1] - coords[0])
                areas[ids] += 0.5 * length * thickness
            else:
                for g_eta in _GAUSS_1D:
                    for g_xi in _GAUSS_1D:
                        n, dn = _quad_basis(g_xi, g_eta)
                        t1 = dn[:, 0] @ coords
                        t2 = dn[:, 1] @ coords
                        da = np.linalg.norm(np.cross(t1, t2))
                        areas[ids] += n * da
        return areas


def _element_volumes(mesh: FeMesh):
    """Per-element volumes and per-element nodal basis integrals."""
    coords = mesh.nodes[mesh.elements]
    nen = mesh.elements.shape[1]
    vols = np.zeros(mesh.n_elements)
    basis_int = np.zeros((mesh.n_elements, nen))
    for w, (n, dn) in _gauss_points(mesh.dim):
        jac = np.einsum("eai,aj->eij", coords, dn)
        det = np.linalg.det(jac)
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise DegenerateElementError(
                f"element {bad} has non-positive Jacobian {det[bad]:.3e}"
            )
        vols += w * det
        basis_int += w * det[:, None] * n[None, :]
    return vols, basis_int


def nodal_volumes(mesh: FeMesh, thickness=1.0):
    """Integral of each node's basis over its adjacent elements.

    The basis functions form a partition of unity, so these volumes sum to
    the mesh volume exactly.  ``thickness`` converts 2D areas to volumes.
    """
    _, basis_int = _element_volumes(mesh)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements.ravel(), basis_int.ravel())
    if mesh.dim == 2:
        out *= thickness
    return out


def boundary_volume_correction(volumes, classification, dim):
    """Recover full boundary-layer weights: 2D edge x2 / corner x4, 3D face x2
    / edge x4 / corner x8.  Interior volumes pass through unchanged."""
    mult_2d = {"interior": 1.0, "edge": 2.0, "corner": 4.0}
    mult_3d = {"interior": 1.0, "face": 2.0, "edge": 4.0, "corner": 8.0}
    table = mult_2d if dim == 2 else mult_3d
    factors = np.array([table[c] for c in classification])
    return np.asarray(volumes) * factors


# --- geometries ---------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle (2D) for structured meshing."""

    origin: tuple
    size: tuple

    @property
    def dim(self):
        return 2

    def contains(self, pts, tol=0.0):
        o = np.asarray(self.origin)
        s = np.asarray(self.size)
        return np.all((pts >= o - tol) & (pts <= o + s + tol), axis=1)

    def structured_nodes(self, dx):
        o = np.asarray(self.origin, dtype=float)
        counts = [max(1, round(s / dx)) for s in self.size]
        axes = [o[k] + np.linspace(0.0, self.size[k], counts[k] + 1) for k in range(2)]
        return _lattice(axes), tuple(c + 1 for c in counts)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box (3D)."""

    origin: tuple
    size: tuple

    @property
    def dim(self):
        return 3

    def contains(self, pts, tol=0.0):
        o = np.asarray(self.origin)
        s = np.asarray(self.size)
        return np.all((pts >= o - tol) & (pts <= o + s + tol), axis=1)

    def structured_nodes(self, dx):
        o = np.asarray(self.origin, dtype=float)
        counts = [max(1, round(s / dx)) for s in self.size]
        axes = [o[k] + np.linspace(0.0, self.size[k], counts[k] + 1) for k in range(3)]
        return _lattice(axes), tuple(c + 1 for c in counts)


@dataclass(frozen=True)
class CookTrapezoid:
    """Tapered panel with corners scale*{(0,0),(48,44),(48,60),(0,44)} + origin.

    ``thickness`` extrudes the panel along z into a 3D slab.
    """

    origin: tuple = (0.0, 0.0)
    scale: float = 1.0
    thickness: float = 0.0

    @property
    def dim(self):
        return 3 if self.thickness > 0.0 else 2

    @property
    def width(self):
        return 48.0 * self.scale

    def y_bottom(self, x_rel):
        return 44.0 * self.scale * (x_rel / self.width)

    def y_top(self, x_rel):
        return 44.0 * self.scale + 16.0 * self.scale * (x_rel / self.width)

    def contains(self, pts, tol=0.0):
        o = np.asarray(self.origin[:2])
        rel = pts[:, :2] - o
        inside = (rel[:, 0] >= -tol) & (rel[:, 0] <= self.width + tol)
        x = np.clip(rel[:, 0], 0.0, self.width)
        inside &= (rel[:, 1] >= self.y_bottom(x) - tol) & (rel[:, 1] <= self.y_top(x) + tol)
        if self.dim == 3:
            z0 = self.origin[2]
            inside &= (pts[:, 2] >= z0 - tol) & (pts[:, 2] <= z0 + self.thickness + tol)
        return inside

    def structured_nodes(self, dx):
        """Transfinite map of a lattice onto the trapezoid (column heights vary)."""
        nx = max(2, round(self.width / dx)) + 1
        ny = max(2, round(44.0 * self.scale / dx)) + 1
        xs = np.linspace(0.0, self.width, nx)
        cols = []
        for x in xs:
            ys = np.linspace(self.y_bottom(x), self.y_top(x), ny)
            col = np.column_stack([np.full(ny, x), ys])
            cols.append(col)
        nodes2d = np.concatenate(cols) + np.asarray(self.origin[:2])
        if self.dim == 2:
            # index order (ix, iy) row-major to match _lattice
            return nodes2d, (nx, ny)
        nz = max(1, round(self.thickness / dx)) + 1
        zs = self.origin[2] + np.linspace(0.0, self.thickness, nz)
        nodes = np.empty((nx * ny * nz, 3))
        for i2, p in enumerate(nodes2d):
            for iz, z in enumerate(zs):
                nodes[i2 * nz + iz] = (p[0], p[1], z)
        return nodes, (nx, ny, nz)


def _lattice(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _structured_elements(shape):
    """Connectivity of a structured node lattice in ij(k) row-major order."""
    if len(shape) == 2:
        nx, ny = shape
        idx = np.arange(nx * ny).reshape(nx, ny)
        n00 = idx[:-1, :-1].ravel()
        n10 = idx[1:, :-1].ravel()
        n11 = idx[1:, 1:].ravel()
        n01 = idx[:-1, 1:].ravel()
        return np.column_stack([n00, n10, n11, n01])
    nx, ny, nz = shape
    idx = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    c = [
        idx[:-1, :-1, :-1],
        idx[1:, :-1, :-1],
        idx[1:, 1:, :-1],
        idx[:-1, 1:, :-1],
        idx[:-1, :-1, 1:],
        idx[1:, :-1, 1:],
        idx[1:, 1:, 1:],
        idx[:-1, 1:, 1:],
    ]
    return np.column_stack([a.ravel() for a in c])


@dataclass(frozen=True)
class CloudSpec:
    """How to discretize a geometry into a PD cloud."""

    kind: str = "rescaled"
    target_spacing: float = 1.0
    perturbation_fraction: float = 0.25
    thickness: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "rescaled", "irregular"):
            raise ValueError(f"unknown cloud kind {self.kind!r}")
        if not 0.0 <= self.perturbation_fraction < 0.45:
            raise ValueError("perturbation_fraction must lie in [0, 0.45)")
        if self.thickness <= 0.0:
            raise ValueError("thickness must be positive")


@dataclass
class GeneratedCloud:
    """Cloud plus its provenance: mesh (None for uniform lattices), volumes
    before and after boundary correction, and node classes."""

    mesh: FeMesh
    points: np.ndarray
    raw_volumes: np.ndarray
    volumes: np.ndarray
    classification: np.ndarray
    spacing: float


def generate_cloud(geometry, spec: CloudSpec, rng=None) -> GeneratedCloud:
    """Generate the PD cloud for one of the built-in geometries."""
    dx = spec.target_spacing
    dim = geometry.dim
    thickness = spec.thickness if dim == 2 else 1.0

    if spec.kind == "uniform":
        pts = _uniform_lattice_points(geometry, dx)
        vol = np.full(len(pts), dx**dim * (thickness if dim == 2 else 1.0))
        classes = np.array(["interior"] * len(pts), dtype=object)
        return GeneratedCloud(None, pts, vol.copy(), vol, classes, dx)

    nodes, shape = geometry.structured_nodes(dx)
    elements = _structured_elements(shape)
    mesh = FeMesh(nodes=nodes, elements=elements)

    if spec.kind == "irregular" and spec.perturbation_fraction > 0.0:
        rng = rng or np.random.default_rng(spec.seed)
        mesh = _perturb_mesh(mesh, spec.perturbation_fraction * dx, rng)

    raw = nodal_volumes(mesh, thickness=thickness)
    classes = mesh.classification()
    corrected = boundary_volume_correction(raw, classes, dim)
    return GeneratedCloud(mesh, mesh.nodes.copy(), raw, corrected, classes, dx)


def _uniform_lattice_points(geometry, dx):
    if isinstance(geometry, (Rectangle, Box)):
        nodes, _ = geometry.structured_nodes(dx)
        return nodes
    # lattice clipped to the shape; stair-stepped boundary by construction
    if isinstance(geometry, CookTrapezoid):
        o = np.asarray(geometry.origin[:2], dtype=float)
        nx = int(np.floor(geometry.width / dx)) + 1
        ny = int(np.floor(60.0 * geometry.scale / dx)) + 1
        axes = [o[0] + np.arange(nx) * dx, o[1] + np.arange(ny) * dx]
        if geometry.dim == 3:
            nz = int(np.floor(geometry.thickness / dx)) + 1
            axes.append(geometry.origin[2] + np.arange(nz) * dx)
        pts = _lattice(axes)
        return pts[geometry.contains(pts, tol=1e-9 * dx)]
    raise TypeError(f"no uniform lattice rule for {type(geometry).__name__}")


def _perturb_mesh(mesh: FeMesh, amplitude, rng, attempts=10):
    """Randomly displace interior nodes, redrawing on element inversion."""
    interior = mesh.classification() == "interior"
    for _ in range(attempts):
        offs = rng.uniform(-amplitude, amplitude, size=mesh.nodes.shape)
        offs[~interior] = 0.0
        candidate = FeMesh(nodes=mesh.nodes + offs, elements=mesh.elements)
        try:
            _element_volumes(candidate)
        except DegenerateElementError:
            continue
        return candidate
    raise DegenerateElementError(
        f"could not find a non-inverting perturbation in {attempts} attempts"
    )


# --- plain-text mesh exchange -------------------------------------------------


def write_mesh(path, mesh: FeMesh, volumes, classification):
    """Plain-text node and element tables (documented in the README)."""
    with open(path, "w") as f:
        f.write(f"# ipdsim mesh dim={mesh.dim}\n")
        f.write(f"# nodes {mesh.n_nodes}\n")
        f.write("# id x y" + (" z" if mesh.dim == 3 else "") + " volume class\n")
        for i, (p, v, c) in enumerate(zip(mesh.nodes, volumes, classification)):
            coords = " ".join(f"{x:.17g}" for x in p)
            f.write(f"{i} {coords} {v:.17g} {c}\n")
        f.write(f"# elements {mesh.n_elements}\n")
        for i, conn in enumerate(mesh.elements):
            f.write(f"{i} " + " ".join(str(int(c)) for c in conn) + "\n")


def read_mesh(path):
    """Inverse of write_mesh; returns (mesh, volumes, classification)."""
    with open(path) as f:
        header = f.readline().strip()
        dim = int(header.rsplit("=", 1)[1])
        n_nodes = int(f.readline().split()[2])
        f.readline()
        nodes = np.empty((n_nodes, dim))
        volumes = np.empty(n_nodes)
        classes = np.empty(n_nodes, dtype=object)
        for _ in range(n_nodes):
            parts = f.readline().split()
            i = int(parts[0])
            nodes[i] = [float(x) for x in parts[1 : 1 + dim]]
            volumes[i] = float(parts[1 + dim])
            classes[i] = parts[2 + dim]
        n_elems = int(f.readline().split()[2])
        conn = []
        for _ in range(n_elems):
            parts = f.readline().split()
            conn.append([int(x) for x in parts[1:]])
    mesh = FeMesh(nodes=nodes, elements=np.asarray(conn, dtype=np.int64))
    return mesh, volumes, classes
