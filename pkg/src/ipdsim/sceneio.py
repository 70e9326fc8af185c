"""Scene-file parsing and serialization.

Scene files are TOML.  A file either spells out a full scene or names a
``preset`` (with optional ``level`` and ``preset_args``) and overrides any of
its keys; tables merge key-by-key, scalars and arrays replace.  Unknown keys
are errors everywhere, so typos never pass silently.

All physical quantities are CGS: lengths cm, times s, velocities cm/s,
tractions/pressures/moduli dyn/cm^2, densities g/cm^3, viscosity dyn s/cm^2,
penalty stiffness dyn/cm^4 and damping dyn s/cm^4 (force density per unit
displacement / velocity).
"""

from __future__ import annotations

import math
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from . import materials
from .fluid import FluidProps
from .grid import NOSLIP, TRACTION, VELOCITY
from .meshing import Box, CookTrapezoid, Rectangle
from .peridynamics import FailureLaw
from .sim import (
    BodySpec,
    ConstraintSpec,
    Motion,
    NodeSet,
    ProbeSpec,
    Scene,
    SceneValidationError,
    TimeControls,
    TractionLoad,
)

__all__ = ["scene_to_dict", "dict_to_scene", "scene_to_toml", "load_scene_file",
           "parse_scene_text"]

_SIDE_NAMES = ["x_low", "x_high", "y_low", "y_high", "z_low", "z_high"]


def _side_key(name, dim):
    try:
        i = _SIDE_NAMES.index(name)
    except ValueError:
        raise SceneValidationError(f"unknown boundary side {name!r}") from None
    axis, side = divmod(i, 2)
    if axis >= dim:
        raise SceneValidationError(f"boundary side {name!r} does not exist in {dim}D")
    return (axis, side)


def _check_keys(d, allowed, where):
    unknown = set(d) - set(allowed)
    if unknown:
        raise SceneValidationError(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}"
        )


def _vec(x, dim, where):
    v = [float(c) for c in x]
    if len(v) != dim:
        raise SceneValidationError(f"{where} must have {dim} components, got {len(v)}")
    return tuple(v)


# --- scene -> dict ---------------------------------------------------------------


def _geometry_to_dict(g):
    if isinstance(g, Rectangle):
        return {"kind": "rectangle", "origin": list(g.origin), "size": list(g.size)}
    if isinstance(g, Box):
        return {"kind": "box", "origin": list(g.origin), "size": list(g.size)}
    if isinstance(g, CookTrapezoid):
        out = {"kind": "cook", "origin": list(g.origin), "scale": g.scale}
        if g.thickness > 0.0:
            out["thickness"] = g.thickness
        return out
    raise SceneValidationError(f"unserializable geometry {type(g).__name__}")


def _material_to_dict(m):
    if isinstance(m, materials.NeoHookeanStab):
        return {"kind": "neo_hookean", "G": m.G, "nu_stab": m.nu_stab}
    if isinstance(m, materials.MooneyRivlinStab):
        out = {"kind": "mooney_rivlin", "c1": m.c1, "c2": m.c2, "nu_stab": m.nu_stab}
        if m.G_f > 0.0:
            out["G_f"] = m.G_f
            out["fiber"] = list(m.fiber)
        return out
    if isinstance(m, materials.StandardReinforced):
        return {
            "kind": "standard_reinforced", "G": m.G, "G_f": m.G_f,
            "fiber": list(m.fiber), "nu_stab": m.nu_stab,
        }
    if isinstance(m, materials.TransverselyIsotropic):
        return {
            "kind": "transversely_isotropic", "G_T": m.G_T, "G_L": m.G_L,
            "E_L": m.E_L, "fiber": list(m.fiber), "nu_stab": m.nu_stab,
        }
    if isinstance(m, materials.HGO):
        return {
            "kind": "hgo", "G": m.G, "k1": m.k1, "k2": m.k2,
            "kappa_disp": m.kappa_disp,
            "fibers": [list(a) for a in m.fibers_list], "nu_stab": m.nu_stab,
        }
    raise SceneValidationError(f"unserializable material {type(m).__name__}")


def _nodes_to_dict(ns):
    if ns is None:
        return "all"
    return {"lo": list(ns.lo), "hi": list(ns.hi), "slack": ns.slack}


def _motion_to_dict(m):
    out = {"kind": m.kind}
    if m.kind == "linear":
        out["velocity"] = list(m.velocity)
        if m.displacement_cap is not None:
            out["displacement_cap"] = m.displacement_cap
    elif m.kind == "rotation":
        out.update(
            point=list(m.point), axis=list(m.axis),
            theta_final=m.theta_final, t_ramp=m.t_ramp,
        )
    return out


def scene_to_dict(scene: Scene):
    d = {
        "name": scene.name,
        "seed": scene.seed,
        "penalty_safety": scene.penalty_safety,
        "domain": {"extent": list(scene.extent), "cells": list(scene.cells)},
        "fluid": {"rho": scene.fluid.rho, "mu": scene.fluid.mu},
        "coupling": {
            "kernel": scene.kernel,
            "m_fac": scene.m_fac,
            "epsilon_factor": scene.epsilon_factor,
        },
        "time": {
            "t_load": scene.time.t_load,
            "t_final": scene.time.t_final,
            "cfl_advective": scene.time.cfl_advective,
            "cfl_elastic": scene.time.cfl_elastic,
            "snapshot_every": scene.time.snapshot_every,
        },
    }
    if scene.time.dt is not None:
        d["time"]["dt"] = scene.time.dt
    if scene.time.probe_every is not None:
        d["time"]["probe_every"] = scene.time.probe_every
    boundary = {}
    for (axis, side), (kind, value) in sorted(scene.boundary.items()):
        name = _SIDE_NAMES[2 * axis + side]
        spec = {"kind": kind}
        if value is not None and kind != NOSLIP:
            spec["value"] = list(np.asarray(value, dtype=float))
        boundary[name] = spec
    if boundary:
        d["boundary"] = boundary

    bodies = []
    for b in scene.bodies:
        bd = {
            "geometry": _geometry_to_dict(b.geometry),
            "cloud": b.cloud_kind,
            "thickness": b.thickness,
            "perturbation_fraction": b.perturbation_fraction,
            "material": _material_to_dict(b.material),
            "failure": {
                "enabled": b.failure.enabled,
                "s_c1": b.failure.s_c1,
                "s_c2": b.failure.s_c2,
            },
        }
        if b.notches:
            bd["notches"] = [[list(p) for p in seg] for seg in b.notches]
        if b.breakable_band is not None:
            bd["breakable_band"] = list(b.breakable_band)
        cons = []
        for c in b.constraints:
            cd = {"nodes": _nodes_to_dict(c.nodes), "eta": c.eta}
            cd["kappa"] = "auto" if c.kappa is None else c.kappa
            if c.components is not None:
                cd["components"] = list(c.components)
            if c.motion.kind != "static":
                cd["motion"] = _motion_to_dict(c.motion)
            cons.append(cd)
        if cons:
            bd["constraint"] = cons
        loads = [
            {
                "nodes": _nodes_to_dict(ld.nodes),
                "traction": list(ld.traction),
                "t_ramp": ld.t_ramp,
            }
            for ld in b.loads
        ]
        if loads:
            bd["load"] = loads
        bodies.append(bd)
    d["body"] = bodies
    d["probe"] = [{"near": list(p.near), "label": p.label} for p in scene.probes]
    return d


# --- dict -> scene ---------------------------------------------------------------


def _parse_geometry(d, where):
    _check_keys(d, {"kind", "origin", "size", "scale", "thickness"}, where)
    kind = d.get("kind")
    if kind == "rectangle":
        return Rectangle(origin=tuple(d["origin"]), size=tuple(d["size"]))
    if kind == "box":
        return Box(origin=tuple(d["origin"]), size=tuple(d["size"]))
    if kind == "cook":
        return CookTrapezoid(
            origin=tuple(d["origin"]),
            scale=float(d.get("scale", 1.0)),
            thickness=float(d.get("thickness", 0.0)),
        )
    raise SceneValidationError(f"unknown geometry kind {kind!r} in {where}")


def _parse_material(d, dim, where):
    kind = d.get("kind")
    try:
        if kind == "neo_hookean":
            _check_keys(d, {"kind", "G", "nu_stab"}, where)
            return materials.NeoHookeanStab(G=float(d["G"]),
                                            nu_stab=float(d.get("nu_stab", 0.4)), dim=dim)
        if kind == "mooney_rivlin":
            _check_keys(d, {"kind", "c1", "c2", "nu_stab", "G_f", "fiber"}, where)
            return materials.MooneyRivlinStab(
                c1=float(d["c1"]), c2=float(d["c2"]),
                nu_stab=float(d.get("nu_stab", 0.4)), dim=dim,
                G_f=float(d.get("G_f", 0.0)),
                fiber=tuple(d["fiber"]) if "fiber" in d else None,
            )
        if kind == "standard_reinforced":
            _check_keys(d, {"kind", "G", "G_f", "fiber", "nu_stab"}, where)
            return materials.StandardReinforced(
                G=float(d["G"]), G_f=float(d["G_f"]), fiber=_vec(d["fiber"], dim, where),
                nu_stab=float(d.get("nu_stab", 0.4)), dim=dim,
            )
        if kind == "transversely_isotropic":
            _check_keys(d, {"kind", "G_T", "G_L", "E_L", "fiber", "nu_stab"}, where)
            return materials.TransverselyIsotropic(
                G_T=float(d["G_T"]), G_L=float(d["G_L"]), E_L=float(d["E_L"]),
                fiber=_vec(d["fiber"], dim, where),
                nu_stab=float(d.get("nu_stab", 0.4)), dim=dim,
            )
        if kind == "hgo":
            _check_keys(d, {"kind", "G", "k1", "k2", "kappa_disp", "fibers", "nu_stab"}, where)
            return materials.HGO(
                G=float(d["G"]), k1=float(d["k1"]), k2=float(d["k2"]),
                kappa_disp=float(d.get("kappa_disp", 0.0)),
                fibers_list=tuple(_vec(a, dim, where) for a in d["fibers"]),
                nu_stab=float(d.get("nu_stab", 0.4)), dim=dim,
            )
    except (ValueError, KeyError) as exc:
        raise SceneValidationError(f"invalid material in {where}: {exc}") from exc
    raise SceneValidationError(f"unknown material kind {kind!r} in {where}")


def _parse_nodes(d, dim, where):
    if d == "all":
        return None
    _check_keys(d, {"lo", "hi", "slack"}, where)
    return NodeSet(
        lo=_vec(d["lo"], dim, where + ".lo"),
        hi=_vec(d["hi"], dim, where + ".hi"),
        slack=float(d.get("slack", 1e-9)),
    )


def _parse_motion(d, dim, where):
    _check_keys(
        d, {"kind", "velocity", "displacement_cap", "point", "axis",
            "theta_final", "t_ramp"}, where,
    )
    kind = d.get("kind", "static")
    if kind == "static":
        return Motion()
    if kind == "linear":
        return Motion(
            kind="linear",
            velocity=_vec(d["velocity"], dim, where + ".velocity"),
            displacement_cap=(
                float(d["displacement_cap"]) if "displacement_cap" in d else None
            ),
        )
    if kind == "rotation":
        return Motion(
            kind="rotation",
            point=_vec(d["point"], dim, where + ".point"),
            axis=_vec(d["axis"], dim, where + ".axis") if "axis" in d else None,
            theta_final=float(d["theta_final"]),
            t_ramp=float(d["t_ramp"]),
        )
    raise SceneValidationError(f"unknown motion kind {kind!r} in {where}")


def dict_to_scene(d) -> Scene:
    _check_keys(
        d,
        {"name", "seed", "penalty_safety", "domain", "fluid", "coupling", "time",
         "boundary", "body", "probe"},
        "scene",
    )
    dom = d.get("domain")
    if not dom:
        raise SceneValidationError("scene needs a [domain] table")
    _check_keys(dom, {"extent", "cells"}, "domain")
    extent = tuple(float(x) for x in dom["extent"])
    cells = tuple(int(x) for x in dom["cells"])
    dim = len(extent)

    fl = d.get("fluid", {})
    _check_keys(fl, {"rho", "mu"}, "fluid")
    cp = d.get("coupling", {})
    _check_keys(cp, {"kernel", "m_fac", "epsilon_factor"}, "coupling")
    tm = d.get("time", {})
    _check_keys(
        tm,
        {"t_load", "t_final", "dt", "cfl_advective", "cfl_elastic",
         "probe_every", "snapshot_every"},
        "time",
    )

    boundary = {}
    for name, spec in d.get("boundary", {}).items():
        key = _side_key(name, dim)
        _check_keys(spec, {"kind", "value"}, f"boundary.{name}")
        kind = spec.get("kind", NOSLIP)
        if kind not in (NOSLIP, VELOCITY, TRACTION):
            raise SceneValidationError(f"unknown boundary kind {kind!r}")
        value = tuple(spec["value"]) if "value" in spec else None
        boundary[key] = (kind, value)

    bodies = []
    for i, bd in enumerate(d.get("body", [])):
        where = f"body[{i}]"
        _check_keys(
            bd,
            {"geometry", "cloud", "thickness", "perturbation_fraction", "material",
             "failure", "notches", "breakable_band", "constraint", "load"},
            where,
        )
        fail = bd.get("failure", {})
        _check_keys(fail, {"enabled", "s_c1", "s_c2"}, where + ".failure")
        constraints = []
        for j, cd in enumerate(bd.get("constraint", [])):
            cw = f"{where}.constraint[{j}]"
            _check_keys(cd, {"nodes", "kappa", "eta", "components", "motion"}, cw)
            kappa = cd.get("kappa", "auto")
            constraints.append(
                ConstraintSpec(
                    nodes=_parse_nodes(cd.get("nodes", "all"), dim, cw + ".nodes"),
                    kappa=None if kappa == "auto" else float(kappa),
                    eta=float(cd.get("eta", 0.0)),
                    components=(
                        tuple(int(c) for c in cd["components"])
                        if "components" in cd
                        else None
                    ),
                    motion=_parse_motion(cd.get("motion", {"kind": "static"}), dim, cw),
                )
            )
        loads = []
        for j, ld in enumerate(bd.get("load", [])):
            lw = f"{where}.load[{j}]"
            _check_keys(ld, {"nodes", "traction", "t_ramp"}, lw)
            loads.append(
                TractionLoad(
                    nodes=_parse_nodes(ld["nodes"], dim, lw + ".nodes"),
                    traction=_vec(ld["traction"], dim, lw + ".traction"),
                    t_ramp=float(ld.get("t_ramp", 0.0)),
                )
            )
        try:
            failure = FailureLaw(
                s_c1=float(fail.get("s_c1", 1.5)),
                s_c2=float(fail.get("s_c2", 1.8)),
                enabled=bool(fail.get("enabled", False)),
            )
        except ValueError as exc:
            raise SceneValidationError(f"invalid failure law in {where}: {exc}") from exc
        bodies.append(
            BodySpec(
                geometry=_parse_geometry(bd["geometry"], where + ".geometry"),
                cloud_kind=str(bd.get("cloud", "rescaled")),
                thickness=float(bd.get("thickness", 1.0)),
                perturbation_fraction=float(bd.get("perturbation_fraction", 0.25)),
                material=_parse_material(bd["material"], dim, where + ".material"),
                failure=failure,
                notches=[
                    (tuple(seg[0]), tuple(seg[1])) for seg in bd.get("notches", [])
                ],
                breakable_band=(
                    tuple(bd["breakable_band"]) if "breakable_band" in bd else None
                ),
                constraints=constraints,
                loads=loads,
            )
        )

    probes = []
    for j, pd in enumerate(d.get("probe", [])):
        _check_keys(pd, {"near", "label"}, f"probe[{j}]")
        probes.append(
            ProbeSpec(near=_vec(pd["near"], dim, "probe.near"), label=str(pd.get("label", "")))
        )

    try:
        time = TimeControls(
            t_load=float(tm.get("t_load", 1.0)),
            t_final=float(tm.get("t_final", 1.0)),
            dt=float(tm["dt"]) if "dt" in tm else None,
            cfl_advective=float(tm.get("cfl_advective", 0.1)),
            cfl_elastic=float(tm.get("cfl_elastic", 0.05)),
            probe_every=float(tm["probe_every"]) if "probe_every" in tm else None,
            snapshot_every=float(tm.get("snapshot_every", 0.0)),
        )
        scene = Scene(
            name=str(d.get("name", "scene")),
            extent=extent,
            cells=cells,
            fluid=FluidProps(rho=float(fl.get("rho", 1.0)), mu=float(fl.get("mu", 0.01))),
            boundary=boundary,
            bodies=bodies,
            kernel=str(cp.get("kernel", "ib4")),
            m_fac=float(cp.get("m_fac", 0.5)),
            epsilon_factor=float(cp.get("epsilon_factor", 2.015)),
            time=time,
            probes=probes,
            seed=int(d.get("seed", 0)),
            penalty_safety=float(d.get("penalty_safety", 0.2)),
        )
    except (ValueError, TypeError) as exc:
        raise SceneValidationError(str(exc)) from exc
    return scene


# --- TOML emission ---------------------------------------------------------------


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        out = repr(float(v))
        return out
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        inner = ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items())
        return "{" + inner + "}"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def _emit_table(lines, name, table, array=False):
    lines.append(f"[[{name}]]" if array else f"[{name}]")
    subtables = []
    for k, v in table.items():
        if isinstance(v, list) and v and isinstance(v[0], dict):
            subtables.append((k, v, True))
        elif isinstance(v, dict) and any(
            isinstance(x, (dict, list)) and not _inline_ok(x) for x in v.values()
        ):
            subtables.append((k, v, False))
        else:
            lines.append(f"{k} = {_toml_value(v)}")
    for k, v, arr in subtables:
        lines.append("")
        if arr:
            for item in v:
                _emit_table(lines, f"{name}.{k}", item, array=True)
        else:
            _emit_table(lines, f"{name}.{k}", v)


def _inline_ok(x):
    if isinstance(x, dict):
        return all(_inline_ok(v) for v in x.values())
    if isinstance(x, list):
        return all(_inline_ok(v) for v in x)
    return isinstance(x, (bool, int, float, str, np.integer, np.floating))


def scene_to_toml(scene: Scene) -> str:
    d = scene_to_dict(scene)
    lines = []
    for k in ("name", "seed", "penalty_safety"):
        if k in d:
            lines.append(f"{k} = {_toml_value(d[k])}")
    lines.append("")
    for key in ("domain", "fluid", "coupling", "time"):
        _emit_table(lines, key, d[key])
        lines.append("")
    if "boundary" in d:
        for name, spec in d["boundary"].items():
            _emit_table(lines, f"boundary.{name}", spec)
            lines.append("")
    for bd in d.get("body", []):
        _emit_table(lines, "body", bd, array=True)
        lines.append("")
    for pd in d.get("probe", []):
        _emit_table(lines, "probe", pd, array=True)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


# --- file loading ----------------------------------------------------------------


def _deep_merge(base, override):
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_merge(base[k], v)
        else:
            base[k] = v
    return base


def parse_scene_text(text) -> Scene:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SceneValidationError(f"TOML parse error: {exc}") from exc
    if "preset" in raw:
        from .presets import build_preset

        name = raw.pop("preset")
        level = raw.pop("level", None)
        args = raw.pop("preset_args", {})
        try:
            scene = build_preset(name, level=level, **args)
        except (KeyError, IndexError, TypeError) as exc:
            raise SceneValidationError(f"bad preset reference: {exc}") from exc
        base = scene_to_dict(scene)
        _deep_merge(base, raw)
        return dict_to_scene(base)
    return dict_to_scene(raw)


def load_scene_file(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scene_text(f.read())
