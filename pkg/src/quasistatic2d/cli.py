"""Command-line interface: simulate scenes, run gain sweeps, verify properties.

Exit codes are a stable contract:
  0  success
  1  usage error, parse failure, infeasible start
  2  expected infeasibility (jam under perfect velocity control)
  3  existence-guarantee violation (solver/assembly bug; problem dump emitted)

Artifacts (trajectory CSV/JSON, reports) are bit-reproducible given the same
scene, flags, and seed; run manifests additionally carry wall-clock statistics
which naturally vary between runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .scenes import (
    SCENE_BUILDERS,
    SceneFormatError,
    builtin_scene,
    load_scene_file,
    scene_hash,
)
from .stepping import (
    TimeStepConfig,
    check_penetration,
    simulate,
    trajectory_to_csv,
    trajectory_to_json,
)
from .studies import ReferenceInfeasibleError, run_convergence_study, run_jamming_study
from .verification import run_suites

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_EXPECTED_INFEASIBLE = 2
EXIT_THEOREM_VIOLATION = 3

SCENE_DIR_ENV = "QS2D_SCENE_DIR"


class CliParser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad usage; remap to the contract's 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _resolve_scene(name_or_path: str):
    if name_or_path in SCENE_BUILDERS:
        return builtin_scene(name_or_path)
    path = Path(name_or_path)
    if path.exists():
        return load_scene_file(path)
    scene_dir = os.environ.get(SCENE_DIR_ENV)
    if scene_dir:
        candidate = Path(scene_dir) / name_or_path
        if candidate.exists():
            return load_scene_file(candidate)
    raise SceneFormatError(
        f"scene {name_or_path!r} is neither a builtin "
        f"({', '.join(sorted(SCENE_BUILDERS))}) nor a readable file")


def _timestep_config(scene, args) -> TimeStepConfig:
    h = args.h if args.h is not None else scene.sim.h
    return TimeStepConfig(h=h, activation_distance=scene.sim.activation)


def _write_manifest(path: Path, argv, scene, config: TimeStepConfig, seed,
                    artifacts, stats, extra=None) -> None:
    manifest = {
        "command_line": list(argv),
        "scene": scene.name,
        "scene_hash": scene_hash(scene),
        "config": {
            "h": config.h,
            "max_relin_iters": config.max_relin_iters,
            "relin_tol": config.relin_tol,
            "penetration_tol": config.penetration_tol,
            "activation_distance": config.activation_distance,
        },
        "seed": seed,
        "artifacts": [str(a) for a in artifacts],
        "stats": stats,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def cmd_simulate(args, argv) -> int:
    try:
        scene = _resolve_scene(args.scene)
    except (SceneFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.c_override is not None:
        scene = scene.with_c(args.c_override)
    duration = args.duration if args.duration is not None else scene.sim.duration
    config = _timestep_config(scene, args)

    t0 = time.perf_counter()
    try:
        trajectory = simulate(scene, scene.commands, duration, config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    wall = time.perf_counter() - t0

    out = Path(args.out) if args.out else Path(f"{scene.name}.{args.format}")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        trajectory_to_csv(trajectory, out)
    else:
        trajectory_to_json(trajectory, out)

    stats = trajectory.solve_time_stats()
    stats["wall_s"] = wall
    extra = {"completed": trajectory.completed, "error": trajectory.error,
             "final_pose": trajectory.final_pose.tolist()}
    if trajectory.completed:
        pen = check_penetration(trajectory, scene)
        extra["max_penetration_m"] = pen.max_penetration
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    _write_manifest(manifest_path, argv, scene, config, args.seed,
                    [out], stats, extra)

    if trajectory.completed:
        print(f"{scene.name}: {trajectory.n_steps} steps -> {out}")
        return EXIT_OK
    kind = trajectory.error["kind"]
    step_index = trajectory.error["step_index"]
    if kind in ("jam", "infeasible_start"):
        print(f"{scene.name}: infeasible at step {step_index} ({kind}); "
              f"partial trajectory in {out}")
        return EXIT_EXPECTED_INFEASIBLE
    if kind == "theorem_violation":
        dump_path = out.with_suffix(out.suffix + ".dump.json")
        with open(dump_path, "w", encoding="utf-8") as fh:
            json.dump(trajectory.error.get("dump"), fh, indent=2, sort_keys=True)
        print(f"{scene.name}: existence violated at step {step_index}; "
              f"dump in {dump_path}", file=sys.stderr)
        return EXIT_THEOREM_VIOLATION
    print(f"{scene.name}: aborted at step {step_index} ({kind})", file=sys.stderr)
    return EXIT_USAGE


def cmd_sweep(args, argv) -> int:
    try:
        scene = _resolve_scene(args.scene)
        c_list = [float(x) for x in args.c_list.split(",") if x.strip()]
        if not c_list:
            raise ValueError("empty c list")
    except (SceneFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    duration = args.duration if args.duration is not None else scene.sim.duration
    rate = 1.0 / (args.h if args.h is not None else scene.sim.h)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _timestep_config(scene, args)

    t0 = time.perf_counter()
    try:
        if args.mode == "converge":
            report = run_convergence_study(scene, scene.commands, c_list,
                                           duration, rate, config, jobs=args.jobs)
        else:
            report = run_jamming_study(scene, scene.commands, c_list,
                                       duration, rate, config, jobs=args.jobs)
    except ReferenceInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_THEOREM_VIOLATION
    wall = time.perf_counter() - t0

    artifacts = []
    for key, traj in report.trajectories.items():
        label = "reference" if key == "reference" else f"c{key:g}"
        path = out_dir / f"{scene.name}_{label}.csv"
        trajectory_to_csv(traj, path)
        artifacts.append(path)
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    artifacts.append(report_path)

    if args.mode == "converge":
        loglog_path = out_dir / "loglog.csv"
        with open(loglog_path, "w", encoding="utf-8") as fh:
            fh.write("log10_c,log10_e\n")
            for e in report.entries:
                if e.error > 0:
                    fh.write(f"{np.log10(e.c)!r},{np.log10(e.error)!r}\n")
        artifacts.append(loglog_path)

    _write_manifest(out_dir / "manifest.json", argv, scene, config, args.seed,
                    artifacts, {"wall_s": wall},
                    {"mode": args.mode, "report": report.to_dict()})
    print(f"{scene.name} {args.mode} sweep -> {report_path}")
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    try:
        reports = run_suites(args.suite, args.trials, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    payload = [r.to_dict() for r in reports]
    for r in reports:
        for c in r.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"{status} {r.suite}.{c.name} {json.dumps(c.details, sort_keys=True)}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        print(f"report -> {out}")
    all_passed = all(r.passed for r in reports)
    return EXIT_OK if all_passed else EXIT_USAGE


def build_parser() -> CliParser:
    parser = CliParser(prog="qs2d",
                       description="Quasi-static planar manipulation simulator")
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="roll out one scene")
    sim.add_argument("scene", help="builtin scene name or scene JSON path")
    sim.add_argument("--h", type=float, default=None, help="time step (s)")
    sim.add_argument("--duration", type=float, default=None)
    sim.add_argument("--c-override", type=float, default=None,
                     help="override the scene's feedback scaling")
    sim.add_argument("--out", default=None)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--seed", type=int, default=0)

    sweep = sub.add_parser("sweep", help="gain sweep (convergence or jamming)")
    sweep.add_argument("scene")
    sweep.add_argument("--c-list", required=True,
                       help="comma-separated, strictly decreasing, e.g. 1,0.1,0.01")
    sweep.add_argument("--mode", choices=("converge", "jam"), default="converge")
    sweep.add_argument("--out-dir", default="sweep_out")
    sweep.add_argument("--h", type=float, default=None)
    sweep.add_argument("--duration", type=float, default=None)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=0)

    verify = sub.add_parser("verify", help="run the property suites")
    verify.add_argument("--suite", choices=("lcp", "model", "timestep", "all"),
                        default="all")
    verify.add_argument("--trials", type=int, default=None)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "simulate":
        return cmd_simulate(args, argv)
    if args.command == "sweep":
        return cmd_sweep(args, argv)
    if args.command == "verify":
        return cmd_verify(args, argv)
    parser.print_usage(sys.stderr)
    return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
