"""Command-line entry point.

Subcommands:
    run <scene-file> [--out DIR] [--seed N] [--force] [--require-steady]
    preset list
    preset show <name> [--level N]
    validate <scene-file>

Exit codes: 0 success, 1 usage error, 2 scene validation error, 3 runtime
abort or I/O failure, 4 steady-state check failed under --require-steady.
The environment variable IPD_THREADS caps the worker thread count.
"""

from __future__ import annotations

import argparse
import os
import sys

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_NOT_STEADY = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_cap():
    cap = os.environ.get("IPD_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except Exception:
        pass


def _build_parser():
    parser = _Parser(prog="ipdsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scene file")
    p_run.add_argument("scene", help="TOML scene file")
    p_run.add_argument("--out", default=None, help="output directory (default: ./<scene name>_out)")
    p_run.add_argument("--seed", type=int, default=None, help="override the scene seed")
    p_run.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    p_run.add_argument("--require-steady", action="store_true",
                       help="exit 4 when the steady-state check fails")

    p_preset = sub.add_parser("preset", help="inspect built-in scenes")
    sub_p = p_preset.add_subparsers(dest="preset_command", required=True)
    sub_p.add_parser("list", help="list preset names")
    p_show = sub_p.add_parser("show", help="dump a fully resolved preset scene")
    p_show.add_argument("name")
    p_show.add_argument("--level", type=int, default=None, help="resolution level")

    p_val = sub.add_parser("validate", help="parse and check a scene file without running")
    p_val.add_argument("scene")
    return parser


def _cmd_run(args):
    from . import output, sceneio, sim

    try:
        scene = sceneio.load_scene_file(args.scene)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sim.SceneValidationError as exc:
        print(f"scene validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        scene.seed = args.seed

    out_dir = args.out or f"{scene.name}_out"
    if os.path.exists(out_dir):
        if not args.force:
            print(
                f"error: output directory {out_dir!r} exists (use --force to overwrite)",
                file=sys.stderr,
            )
            return EXIT_USAGE
    else:
        os.makedirs(out_dir)
    snap_dir = os.path.join(out_dir, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)

    counter = {"i": 0}

    def hook(t, grid, state, bodies, extras):
        try:
            output.write_snapshot(snap_dir, counter["i"], grid, state, bodies)
        except OSError as exc:
            raise sim.SimulationAbort(f"snapshot write failed: {exc}") from exc
        counter["i"] += 1

    try:
        result = sim.run(scene, snapshot_hook=hook)
    except sim.SceneValidationError as exc:
        print(f"scene validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except sim.SimulationAbort as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        output.write_probes_csv(os.path.join(out_dir, "probes.csv"), result.record)
        output.write_run_meta(
            os.path.join(out_dir, "run_meta.json"),
            sceneio.scene_to_dict(scene),
            scene.seed,
            result.steps,
            result.wall_time,
            result.record.converged,
            result.record.not_converged_columns,
            __version__,
        )
    except OSError as exc:
        print(f"output write failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(
        f"{scene.name}: {result.steps} steps in {result.wall_time:.1f} s "
        f"-> {out_dir} (steady: {'yes' if result.record.converged else 'NO'})"
    )
    if args.require_steady and not result.record.converged:
        print(
            "steady-state check failed for: "
            + ", ".join(result.record.not_converged_columns),
            file=sys.stderr,
        )
        return EXIT_NOT_STEADY
    return EXIT_OK


def _cmd_preset(args):
    from . import presets, sceneio, sim

    if args.preset_command == "list":
        for name in presets.preset_names():
            print(f"{name}  (levels 0..{presets.preset_levels(name) - 1})")
        return EXIT_OK
    try:
        scene = presets.build_preset(args.name, level=args.level)
    except (KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sim.SceneValidationError as exc:
        print(f"scene validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    sys.stdout.write(sceneio.scene_to_toml(scene))
    return EXIT_OK


def _cmd_validate(args):
    from . import sceneio, sim

    try:
        scene = sceneio.load_scene_file(args.scene)
        sim.compile_scene(scene)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (sim.SceneValidationError, ValueError) as exc:
        print(f"scene validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{args.scene}: ok ({scene.name})")
    return EXIT_OK


def main(argv=None):
    _apply_thread_cap()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "preset":
        return _cmd_preset(args)
    if args.command == "validate":
        return _cmd_validate(args)
    return EXIT_USAGE


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
