"""Run output writers: probe CSV, legacy-ASCII VTK snapshots, run metadata.

Snapshot NNNN.vtk holds the point cloud (polydata vertices) with point data
named exactly displacement, velocity, damage, jacobian, material_id;
NNNN_grid.vtk holds the Eulerian grid (structured points) with cell pressure
and the face-averaged velocity.  probes.csv is RFC-4180 with a documented
header row.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from . import peridynamics

__all__ = ["write_probes_csv", "write_point_cloud_vtk", "write_grid_vtk",
           "write_snapshot", "write_run_meta"]


def write_probes_csv(path, record):
    """One row per sample time; columns in insertion order after t."""
    keys = list(record.columns)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + keys)
        for i, t in enumerate(record.times):
            w.writerow([f"{t:.12g}"] + [f"{record.columns[k][i]:.12g}" for k in keys])


def _pad3(arr):
    n, d = arr.shape
    if d == 3:
        return arr
    out = np.zeros((n, 3))
    out[:, :d] = arr
    return out


def write_point_cloud_vtk(path, positions, displacement, velocity, damage,
                          jacobian, material_id):
    n = len(positions)
    pos3 = _pad3(np.asarray(positions, dtype=float))
    disp3 = _pad3(np.asarray(displacement, dtype=float))
    vel3 = _pad3(np.asarray(velocity, dtype=float))
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("ipdsim point cloud\n")
        f.write("ASCII\n")
        f.write("DATASET POLYDATA\n")
        f.write(f"POINTS {n} double\n")
        for p in pos3:
            f.write(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g}\n")
        f.write(f"VERTICES {n} {2 * n}\n")
        for i in range(n):
            f.write(f"1 {i}\n")
        f.write(f"POINT_DATA {n}\n")
        f.write("VECTORS displacement double\n")
        for v in disp3:
            f.write(f"{v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        f.write("VECTORS velocity double\n")
        for v in vel3:
            f.write(f"{v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
        f.write("SCALARS damage double 1\nLOOKUP_TABLE default\n")
        for v in np.asarray(damage, dtype=float):
            f.write(f"{v:.12g}\n")
        f.write("SCALARS jacobian double 1\nLOOKUP_TABLE default\n")
        for v in np.asarray(jacobian, dtype=float):
            f.write(f"{v:.12g}\n")
        f.write("SCALARS material_id int 1\nLOOKUP_TABLE default\n")
        for v in np.asarray(material_id, dtype=int):
            f.write(f"{int(v)}\n")


def write_grid_vtk(path, grid, state):
    """Cell pressure plus velocity averaged from faces to cell centers."""
    dims = list(grid.cells) + [1] * (3 - grid.dim)
    h = grid.h
    vel = []
    for k in range(grid.dim):
        c = state.u.comps[k]
        sl_lo = tuple(
            slice(0, -1) if a == k else slice(None) for a in range(grid.dim)
        )
        sl_hi = tuple(
            slice(1, None) if a == k else slice(None) for a in range(grid.dim)
        )
        vel.append(0.5 * (c[sl_lo] + c[sl_hi]))
    n_cells = int(np.prod(grid.cells))
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("ipdsim grid\n")
        f.write("ASCII\n")
        f.write("DATASET STRUCTURED_POINTS\n")
        f.write(f"DIMENSIONS {dims[0] + 1} {dims[1] + 1} {dims[2] + 1}\n")
        f.write("ORIGIN 0 0 0\n")
        f.write(f"SPACING {h:.12g} {h:.12g} {h:.12g}\n")
        f.write(f"CELL_DATA {n_cells}\n")
        f.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for v in state.p.a.ravel(order="F"):
            f.write(f"{v:.12g}\n")
        f.write("VECTORS velocity double\n")
        zero = np.zeros(grid.cell_shape)
        comps = [vel[k] if k < grid.dim else zero for k in range(3)]
        flat = [c.ravel(order="F") for c in comps]
        for i in range(n_cells):
            f.write(f"{flat[0][i]:.12g} {flat[1][i]:.12g} {flat[2][i]:.12g}\n")


def write_snapshot(out_dir, index, grid, state, bodies):
    """Write NNNN.vtk (cloud, when bodies exist) and NNNN_grid.vtk."""
    tag = f"{index:04d}"
    grid_path = os.path.join(out_dir, f"{tag}_grid.vtk")
    write_grid_vtk(grid_path, grid, state)
    if not bodies:
        return [grid_path]
    positions = []
    displacement = []
    velocity = []
    damage = []
    jacobian = []
    material_id = []
    for i, cb in enumerate(bodies):
        body = cb.body
        ind = peridynamics.bond_indicators(body, cb.failure)
        F = peridynamics.nonlocal_def_gradient(body, cb.positions, ind)
        positions.append(cb.positions)
        displacement.append(cb.positions - body.reference_positions)
        velocity.append(cb.velocities)
        damage.append(peridynamics.local_damage(body, ind))
        jacobian.append(np.linalg.det(F))
        material_id.append(np.full(body.n_nodes, i))
    cloud_path = os.path.join(out_dir, f"{tag}.vtk")
    write_point_cloud_vtk(
        cloud_path,
        np.concatenate(positions),
        np.concatenate(displacement),
        np.concatenate(velocity),
        np.concatenate(damage),
        np.concatenate(jacobian),
        np.concatenate(material_id),
    )
    return [cloud_path, grid_path]


def write_run_meta(path, scene_dict, seed, steps, wall_time, converged,
                   not_converged_columns, version):
    meta = {
        "version": version,
        "seed": seed,
        "steps": steps,
        "wall_time_s": wall_time,
        "steady": converged,
        "not_converged_probes": list(not_converged_columns),
        "scene": scene_dict,
    }
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
