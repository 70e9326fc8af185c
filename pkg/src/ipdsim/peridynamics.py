"""Meshfree peridynamic kinematics, bond bookkeeping and force assembly.

A body is a static reference point cloud.  Bonds connect every pair of nodes
closer than the horizon radius and carry a partial-volume quadrature weight,
a cubic B-spline influence value, a breakable flag and the largest stretch
seen so far.  The per-node shape tensor

    K_m = sum_n omega(|xi|) xi (x) xi V_n^(m)

is precomputed from the undamaged influence function and never changes, even
while failure degrades the influence used for the deformation gradient

    F_m = [ sum_n omega_hat(|xi|, t) (x_n - x_m) (x) xi V_n^(m) ] K_m^{-1}

and for the pairwise bond forces

    F(X_m) = sum_n omega_hat (P_m K_m^{-1} + P_n K_n^{-1}) xi V_n^(m).

Bond failure is a piecewise-linear ramp in the historical maximum stretch, so
damage never heals.  Bonds crossing a pre-existing notch segment are removed
while building the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FailureLaw",
    "PdBody",
    "PdConstructionError",
    "influence",
    "build_bonds",
    "bond_stretches",
    "failure_indicator",
    "nonlocal_def_gradient",
    "assemble_forces",
    "local_damage",
]


class PdConstructionError(ValueError):
    """The point cloud cannot form a valid bond network."""


@dataclass(frozen=True)
class FailureLaw:
    """Ductile bond failure ramp between two critical stretches."""

    s_c1: float = 1.5
    s_c2: float = 1.8
    enabled: bool = False

    def __post_init__(self):
        if self.enabled and not (1.0 < self.s_c1 < self.s_c2):
            raise ValueError(
                f"critical stretches must satisfy 1 < s_c1 < s_c2, got {self.s_c1}, {self.s_c2}"
            )


def influence(r, epsilon, dim):
    """Cubic B-spline influence function of bond length r with support epsilon.

    Normalized with C = 15/(7 pi) in 2D and 3/(2 pi) in 3D.
    """
    if dim == 2:
        C = 15.0 / (7.0 * np.pi)
    elif dim == 3:
        C = 3.0 / (2.0 * np.pi)
    else:
        raise ValueError("dim must be 2 or 3")
    s = 2.0 * np.asarray(r, dtype=float) / epsilon
    out = np.zeros_like(s)
    inner = s < 1.0
    outer = (s >= 1.0) & (s < 2.0)
    si = s[inner]
    out[inner] = C * (2.0 / 3.0 - si * si + 0.5 * si**3)
    out[outer] = C * (2.0 - s[outer]) ** 3 / 6.0
    return out


def _cell_list_pairs(points, cutoff):
    """All unordered pairs within cutoff via a uniform cell list of that size."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    mins = pts.min(axis=0)
    cells = np.floor((pts - mins) / cutoff).astype(np.int64)
    keys = [tuple(c) for c in cells]
    buckets = {}
    for idx, key in enumerate(keys):
        buckets.setdefault(key, []).append(idx)
    buckets = {k: np.asarray(v, dtype=np.int64) for k, v in buckets.items()}

    offsets = []
    for off in np.ndindex(*(3,) * d):
        o = tuple(x - 1 for x in off)
        if o > (0,) * d or o == (0,) * d:
            offsets.append(o)

    pi, pj = [], []
    cut2 = cutoff * cutoff
    for key, ids in buckets.items():
        for o in offsets:
            if o == (0,) * d:
                if len(ids) > 1:
                    a, b = np.triu_indices(len(ids), k=1)
                    ii, jj = ids[a], ids[b]
                else:
                    continue
            else:
                other = buckets.get(tuple(k + oo for k, oo in zip(key, o)))
                if other is None:
                    continue
                ii = np.repeat(ids, len(other))
                jj = np.tile(other, len(ids))
            dx = pts[ii] - pts[jj]
            keep = np.einsum("ij,ij->i", dx, dx) <= cut2
            if keep.any():
                pi.append(ii[keep])
                pj.append(jj[keep])
    if not pi:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    bi = np.concatenate(pi)
    bj = np.concatenate(pj)
    lo = np.minimum(bi, bj)
    hi = np.maximum(bi, bj)
    order = np.lexsort((hi, lo))
    return lo[order], hi[order]


def _segments_cross(p0, p1, q0, q1):
    """Vectorized proper/improper intersection test of 2D segments p with one q."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return (d1 * d2 < 0.0) & (d3 * d4 < 0.0)


def partial_volume(r, full_volume, epsilon, delta_x):
    """Three-branch partial-volume correction for a bond of length r."""
    r = np.asarray(r, dtype=float)
    full_volume = np.asarray(full_volume, dtype=float)
    inner = r <= epsilon - 0.5 * delta_x
    ring = (~inner) & (r <= epsilon)
    factor = np.zeros_like(r)
    factor[inner] = 1.0
    factor[ring] = (epsilon - (r[ring] - 0.5 * delta_x)) / delta_x
    return factor * full_volume


@dataclass
class PdBody:
    """Reference point cloud with its bond network and cached shape tensors.

    ``volumes`` are the boundary-corrected nodal volumes entering every PD
    sum; ``raw_volumes`` keep the pre-correction values whose total equals the
    geometric volume (used by volume-ratio probes).  Bond arrays are stored
    once per unordered pair (i < j); per-direction partial volumes pvol_ij
    (volume of j seen from i) and pvol_ji can differ for non-uniform clouds.
    """

    reference_positions: np.ndarray
    volumes: np.ndarray
    raw_volumes: np.ndarray
    horizon: float
    delta_x: float
    bond_i: np.ndarray
    bond_j: np.ndarray
    xi: np.ndarray
    xi_len: np.ndarray
    omega: np.ndarray
    pvol_ij: np.ndarray
    pvol_ji: np.ndarray
    breakable: np.ndarray
    max_stretch: np.ndarray
    shape_tensors: np.ndarray
    shape_tensor_inverses: np.ndarray
    material_id: int = 0

    @property
    def n_nodes(self):
        return len(self.reference_positions)

    @property
    def n_bonds(self):
        return len(self.bond_i)

    @property
    def dim(self):
        return self.reference_positions.shape[1]

    def damage_denominator(self):
        d = np.bincount(self.bond_i, weights=self.pvol_ij, minlength=self.n_nodes)
        d += np.bincount(self.bond_j, weights=self.pvol_ji, minlength=self.n_nodes)
        return d


def build_bonds(points, volumes, epsilon, delta_x, raw_volumes=None,
                notch_segments=(), breakable_fn=None, material_id=0) -> PdBody:
    """Construct the bond network, partial volumes and shape tensors.

    Horizons smaller than sqrt(2) dx in 2D (sqrt(3) dx in 3D) leave boundary
    nodes without off-axis bonds; construction still proceeds as long as every
    node's shape tensor stays safely invertible, and fails loudly naming the
    first offending node otherwise.
    """
    pts = np.asarray(points, dtype=float)
    vols = np.asarray(volumes, dtype=float)
    n, d = pts.shape
    if d not in (2, 3):
        raise PdConstructionError("points must be 2D or 3D")
    if raw_volumes is None:
        raw_volumes = vols.copy()

    bi, bj = _cell_list_pairs(pts, epsilon)
    xi = pts[bj] - pts[bi]
    xi_len = np.linalg.norm(xi, axis=1)
    keep = xi_len > 0.0
    bi, bj, xi, xi_len = bi[keep], bj[keep], xi[keep], xi_len[keep]

    for seg in notch_segments:
        q0 = np.asarray(seg[0], dtype=float)
        q1 = np.asarray(seg[1], dtype=float)
        if d != 2:
            raise PdConstructionError("notch segments are only supported in 2D")
        hit = _segments_cross(pts[bi], pts[bj], q0, q1)
        bi, bj, xi, xi_len = bi[~hit], bj[~hit], xi[~hit], xi_len[~hit]

    omega = influence(xi_len, epsilon, d)
    pvol_ij = partial_volume(xi_len, vols[bj], epsilon, delta_x)
    pvol_ji = partial_volume(xi_len, vols[bi], epsilon, delta_x)

    if breakable_fn is None:
        breakable = np.ones(len(bi), dtype=bool)
    else:
        breakable = np.asarray(breakable_fn(pts[bi], pts[bj]), dtype=bool)

    K = _shape_tensors(n, d, bi, bj, xi, omega, pvol_ij, pvol_ji)
    Kinv = _invert_shape_tensors(K)

    return PdBody(
        reference_positions=pts,
        volumes=vols,
        raw_volumes=np.asarray(raw_volumes, dtype=float),
        horizon=float(epsilon),
        delta_x=float(delta_x),
        bond_i=bi,
        bond_j=bj,
        xi=xi,
        xi_len=xi_len,
        omega=omega,
        pvol_ij=pvol_ij,
        pvol_ji=pvol_ji,
        breakable=breakable,
        max_stretch=np.ones(len(bi)),
        shape_tensors=K,
        shape_tensor_inverses=Kinv,
        material_id=material_id,
    )


def _scatter_outer(n, d, bond_i, bond_j, outer, w_i, w_j):
    """Accumulate w_i * outer to rows bond_i and w_j * outer to rows bond_j."""
    flat = outer.reshape(len(outer), d * d)
    out = np.zeros((n, d * d))
    for c in range(d * d):
        out[:, c] = np.bincount(bond_i, weights=w_i * flat[:, c], minlength=n)
        out[:, c] += np.bincount(bond_j, weights=w_j * flat[:, c], minlength=n)
    return out.reshape(n, d, d)


def _shape_tensors(n, d, bi, bj, xi, omega, pvol_ij, pvol_ji):
    outer = xi[:, :, None] * xi[:, None, :]
    return _scatter_outer(n, d, bi, bj, outer, omega * pvol_ij, omega * pvol_ji)


def _invert_shape_tensors(K):
    n, d, _ = K.shape
    asym = np.max(np.abs(K - np.swapaxes(K, 1, 2)))
    if asym > 1e-12:
        raise PdConstructionError(f"shape tensor asymmetry {asym:.3e}")
    det = np.linalg.det(K)
    tr = np.trace(K, axis1=1, axis2=2)
    floor = 1e-12 * np.maximum(tr / d, 0.0) ** d
    bad = (det <= floor) | (tr <= 0.0)
    if np.any(bad):
        node = int(np.argmax(bad))
        raise PdConstructionError(
            f"singular shape tensor at node {node} (det {det[node]:.3e}); "
            "the node has too few non-collinear neighbors"
        )
    eig = np.linalg.eigvalsh(K)
    cond = eig[:, -1] / np.maximum(eig[:, 0], 1e-300)
    if np.any(cond > 1e12):
        node = int(np.argmax(cond > 1e12))
        raise PdConstructionError(
            f"ill-conditioned shape tensor at node {node} (cond {cond[node]:.3e})"
        )
    return np.linalg.inv(K)


def bond_stretches(body: PdBody, current_positions, update_max=False):
    """Current over reference bond length, optionally folding into the maxima."""
    y = current_positions[body.bond_j] - current_positions[body.bond_i]
    s = np.linalg.norm(y, axis=1) / body.xi_len
    if update_max:
        np.maximum(body.max_stretch, s, out=body.max_stretch)
    return s


def failure_indicator(max_stretch, law: FailureLaw):
    """Piecewise-linear bond connectivity in [0, 1] at the historical stretch."""
    s = np.asarray(max_stretch, dtype=float)
    if not law.enabled:
        return np.ones_like(s)
    ramp = (law.s_c2 - s) / (law.s_c2 - law.s_c1)
    return np.clip(ramp, 0.0, 1.0)


def bond_indicators(body: PdBody, law: FailureLaw):
    """Per-bond indicators; unbreakable bonds always report 1."""
    ind = failure_indicator(body.max_stretch, law)
    ind[~body.breakable] = 1.0
    return ind


def nonlocal_def_gradient(body: PdBody, current_positions, indicators=None):
    """Correspondence deformation gradient per node from current positions."""
    if indicators is None:
        indicators = np.ones(body.n_bonds)
    y = current_positions[body.bond_j] - current_positions[body.bond_i]
    outer = y[:, :, None] * body.xi[:, None, :]
    w = body.omega * indicators
    A = _scatter_outer(
        body.n_nodes, body.dim, body.bond_i, body.bond_j, outer,
        w * body.pvol_ij, w * body.pvol_ji,
    )
    return A @ body.shape_tensor_inverses


def assemble_forces(body: PdBody, pk1_per_node, indicators=None, jacobians=None):
    """Net internal force density (dyn/cm^3) per node from nodal PK1 tensors."""
    P = np.asarray(pk1_per_node, dtype=float)
    if not np.all(np.isfinite(P)):
        bad = (~np.isfinite(P)).any(axis=(1, 2))
        node = int(np.argmax(bad))
        detail = "" if jacobians is None else f" (det F = {jacobians[node]:.6g})"
        raise FloatingPointError(f"non-finite PK1 at node {node}{detail}")
    if indicators is None:
        indicators = np.ones(body.n_bonds)
    G = P @ body.shape_tensor_inverses
    t = np.einsum("bij,bj->bi", G[body.bond_i] + G[body.bond_j], body.xi)
    w = body.omega * indicators
    out = np.zeros((body.n_nodes, body.dim))
    for c in range(body.dim):
        out[:, c] = np.bincount(
            body.bond_i, weights=w * body.pvol_ij * t[:, c], minlength=body.n_nodes
        )
        out[:, c] -= np.bincount(
            body.bond_j, weights=w * body.pvol_ji * t[:, c], minlength=body.n_nodes
        )
    return out


def local_damage(body: PdBody, indicators):
    """Volume-weighted lost connectivity: 0 pristine, 1 fully severed."""
    num = np.bincount(body.bond_i, weights=indicators * body.pvol_ij, minlength=body.n_nodes)
    num += np.bincount(body.bond_j, weights=indicators * body.pvol_ji, minlength=body.n_nodes)
    den = body.damage_denominator()
    out = np.zeros(body.n_nodes)
    ok = den > 0.0
    out[ok] = 1.0 - num[ok] / den[ok]
    return np.clip(out, 0.0, 1.0)
