"""Command-line front end: plan, verify, benchmark, library, relocalize.

Every command that writes does so strictly under its --out directory and
drops a manifest.json describing the run.  Outputs are reproducible: a
fixed seed gives byte-identical artifacts across reruns and across
worker counts.  Wall-clock measurements are the one thing that cannot
be reproducible, so they are routed to a timings sidecar instead of the
manifest or result tables.

Exit codes: 0 success, 1 lookup miss, 2 planner finished infeasible,
3 degenerate geometry (unreachable target, rank-deficient map), 64 bad
usage, 65 malformed input data.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import config as _cfg
from .grf_profile import MODES, OPT_DIMS, OptVector, TransformError
from .jump_plane import PlaneError, build_plane, sagittal_plane
from .jump_sim import DEFAULT_DT, export_trajectory_csv, simulate_jump
from .motion_library import MotionLibrary, build_library
from .optimizer import DEConfig, OptimizationFailed, optimize
from .reloc import (
    EPS_R,
    MIN_THETA,
    MIN_XY,
    DegenerateGeometryError,
    bnb_search,
    load_patch_map,
    load_point_cloud,
    refine_pose,
)
from .robot_model import RobotParams

EXIT_OK = 0
EXIT_MISS = 1
EXIT_INFEASIBLE = 2
EXIT_DEGENERATE = 3
EXIT_USAGE = 64
EXIT_DATA = 65

# Default robot configuration file; a named profile is used when unset.
ROBOT_ENV = "JUMPKIT_ROBOT_CONFIG"
DEFAULT_PROFILE = "mini_cheetah"

# Target boxes per direction family, indexed by benchmark range.  The
# diagonal families sweep a full box; the axis families are lines.
_BENCH_X_MAX = {1: 1.0, 2: 1.2, 3: 1.3}


@dataclass(frozen=True)
class RunManifest:
    """Reproducible record of one CLI invocation.

    Everything in the manifest is a pure function of the inputs and the
    seed.  Wall-clock timings live next to it in timings.txt so that
    manifest.json itself stays byte-stable under reruns.
    """

    command: str
    argv: tuple
    config_digest: str
    seed: int | None
    results: dict
    artifacts: tuple
    timings: dict

    def write(self, out_dir: Path) -> None:
        doc = {
            "command": self.command,
            "argv": list(self.argv),
            "config_digest": self.config_digest,
            "seed": self.seed,
            "results": self.results,
            "artifacts": sorted(self.artifacts) + ["manifest.json", "timings.txt"],
        }
        text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
        (out_dir / "manifest.json").write_text(text + "\n", encoding="utf-8")
        lines = [f"{k} = {float(v):.6f}" for k, v in sorted(self.timings.items())]
        (out_dir / "timings.txt").write_text("".join(f"{ln}\n" for ln in lines), encoding="utf-8")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    raise TypeError(f"unserializable manifest value {v!r}")


def input_digest(parts: dict) -> str:
    """Order-independent digest of the run inputs; recomputable by hand."""
    blob = "".join(f"{k} = {parts[k]}\n" for k in sorted(parts))
    return "sha256:" + hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _manifest_argv(raw_argv) -> tuple:
    """The invocation minus flags that do not describe the result.

    Output location and worker count change neither artifacts nor
    results, so two equivalent runs keep identical manifests.
    """
    skip_next = False
    out = []
    for tok in raw_argv:
        if skip_next:
            skip_next = False
            continue
        if tok in ("--out", "--workers"):
            skip_next = True
            continue
        if tok.startswith("--out=") or tok.startswith("--workers="):
            continue
        out.append(tok)
    return tuple(out)


def _load_robot(spec: str | None) -> tuple[RobotParams, str]:
    """Resolve --robot: a config file path or a named profile.

    Falls back to the file named by JUMPKIT_ROBOT_CONFIG, then to the
    default profile.  The returned tag feeds the manifest digest.
    """
    if spec is None:
        spec = os.environ.get(ROBOT_ENV) or DEFAULT_PROFILE
    path = Path(spec)
    if path.is_file():
        data = path.read_bytes()
        return RobotParams.from_file(path), "file:" + hashlib.sha256(data).hexdigest()
    return RobotParams.named(spec), f"profile:{spec}"


def _ensure_out(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_de_config(args, warm: bool) -> DEConfig:
    if getattr(args, "de_config", None):
        return DEConfig.from_file(args.de_config)
    profile = getattr(args, "profile", None)
    if profile == "cold":
        return DEConfig.cold()
    if profile == "warm":
        return DEConfig.warm()
    if warm:
        # Online budget with the aggressive warm-search knobs.
        return dataclasses.replace(
            DEConfig.online(), weight_f=0.9, cross_cr=0.95, mutate_p=0.5
        )
    return DEConfig.online()


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, float).ravel())


# -- optimize ----------------------------------------------------------


def _planner_target(mode: str, target: np.ndarray):
    """The planner's target view: quadruped modes take the full (x, y, z)
    displacement, the sagittal humanoid takes (x, z) with y pinned to 0."""
    if mode == "humanoid":
        if abs(target[1]) > 1e-12:
            raise PlaneError("humanoid jumps are sagittal; target y must be 0")
        return target[[0, 2]]
    return target


def _write_plan(path: Path, mode: str, target, yaw: float, theta_land: float, result) -> None:
    lines = [
        "# jump plan record",
        f"mode = {mode}",
        f"target = {_fmt_floats(target)}",
        f"yaw = {yaw!r}",
        f"theta_land = {theta_land!r}",
        f"values = {_fmt_floats(result.vector.values)}",
        f"fitness = {result.fitness!r}",
        f"generations = {result.generations}",
        f"evaluations = {result.evaluations}",
        f"stop_reason = {result.stop_reason}",
    ]
    path.write_text("".join(f"{ln}\n" for ln in lines), encoding="utf-8")


def _report_text(outcome) -> str:
    parts = [outcome.report.to_text()]
    parts.append(
        "landing (x, z, theta) = "
        f"({outcome.landing[0]:.6f}, {outcome.landing[1]:.6f}, {outcome.landing[2]:.6f})"
    )
    parts.append(f"target error = {outcome.target_error:.6f} m")
    for w in outcome.warnings:
        parts.append(f"warning: {w}")
    return "".join(f"{ln}\n" for ln in parts)


def cmd_optimize(args) -> int:
    t0 = time.perf_counter()
    params, robot_tag = _load_robot(args.robot)
    out = _ensure_out(args.out)
    target = np.asarray(args.target, float)
    if args.yaw != 0.0:
        print("jumpkit: nonzero --yaw is reserved; the reduced model plans "
              "zero-yaw jumps", file=sys.stderr)
        return EXIT_USAGE

    warm_vec = None
    warm_src = "none"
    if args.library:
        lib = MotionLibrary.load(args.library)
        hit = lib.lookup(target, mode=args.mode)
        if hit is not None:
            warm_vec = hit.values
            warm_src = f"entry:{hit.entry_id}"
    cfg = _resolve_de_config(args, warm=warm_vec is not None)

    plan_target = _planner_target(args.mode, target)
    feasible = True
    try:
        result = optimize(
            plan_target,
            params,
            args.mode,
            seed=args.seed,
            config=cfg,
            warm_start=warm_vec,
            theta_land=args.theta_land,
            dt=args.dt,
        )
    except OptimizationFailed as exc:
        result = exc.result
        feasible = False
    wall = time.perf_counter() - t0

    artifacts = ["s_opt.txt"]
    _write_plan(out / "s_opt.txt", args.mode, target, args.yaw, args.theta_land, result)
    results = {
        "feasible": feasible,
        "fitness": repr(result.fitness),
        "generations": result.generations,
        "evaluations": result.evaluations,
        "stop_reason": result.stop_reason,
        "warm_start": warm_src,
    }
    if result.outcome is not None:
        export_trajectory_csv(out / "trajectory.csv", result.outcome, params)
        (out / "report.txt").write_text(_report_text(result.outcome), encoding="utf-8")
        artifacts += ["trajectory.csv", "report.txt"]
        results["landing_error"] = repr(result.outcome.target_error)
    digest = input_digest({
        "command": "optimize",
        "robot": robot_tag,
        "mode": args.mode,
        "target": _fmt_floats(target),
        "theta_land": repr(args.theta_land),
        "seed": args.seed,
        "dt": repr(args.dt),
        "de_config": repr(cfg),
        "warm": warm_src,
    })
    RunManifest(
        command="optimize",
        argv=_manifest_argv(args.raw_argv),
        config_digest=digest,
        seed=args.seed,
        results=results,
        artifacts=tuple(artifacts),
        timings={"solve_wall_s": wall},
    ).write(out)
    status = "feasible" if feasible else "infeasible"
    print(f"optimize: {status} fitness={result.fitness:.6g} "
          f"generations={result.generations} ({warm_src})")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


# -- simulate ----------------------------------------------------------


def _read_plan(path: str):
    cfg = _cfg.parse_kv_file(path)
    mode = str(_cfg.scalar(cfg, "mode"))
    if mode not in MODES:
        raise _cfg.ConfigError(f"{path}: unknown mode {mode!r}")
    target = np.asarray(_cfg.vector(cfg, "target", 3), float)
    values = np.asarray(_cfg.vector(cfg, "values", OPT_DIMS[mode]), float)
    theta_land = float(_cfg.scalar(cfg, "theta_land", 0.0))
    return mode, target, values, theta_land


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    params, robot_tag = _load_robot(args.robot)
    out = _ensure_out(args.out)
    mode, target, values, theta_land = _read_plan(args.plan)
    vec = OptVector(mode, values)
    if mode == "humanoid":
        spec = sagittal_plane(target[[0, 2]], theta_land)
    else:
        spec = build_plane(target, params.default_stance_feet(), theta_land=theta_land)
    obstacle = tuple(args.obstacle) if args.obstacle else None
    outcome = simulate_jump(vec, spec, params, dt=args.dt, obstacle=obstacle)
    wall = time.perf_counter() - t0

    export_trajectory_csv(out / "trajectory.csv", outcome, params)
    (out / "report.txt").write_text(_report_text(outcome), encoding="utf-8")
    digest = input_digest({
        "command": "simulate",
        "robot": robot_tag,
        "plan": f"{mode} {_fmt_floats(target)} {_fmt_floats(values)}",
        "theta_land": repr(theta_land),
        "dt": repr(args.dt),
        "obstacle": repr(obstacle),
    })
    RunManifest(
        command="simulate",
        argv=_manifest_argv(args.raw_argv),
        config_digest=digest,
        seed=None,
        results={
            "feasible": outcome.feasible,
            "fitness": repr(outcome.fitness),
            "landing_error": repr(outcome.target_error),
            "warnings": list(outcome.warnings),
        },
        artifacts=("trajectory.csv", "report.txt"),
        timings={"simulate_wall_s": wall},
    ).write(out)
    print(f"simulate: {'feasible' if outcome.feasible else 'infeasible'} "
          f"landing_error={outcome.target_error:.4f} m")
    return EXIT_OK


# -- bench -------------------------------------------------------------


def bench_grid(range_id: int, step: float) -> list:
    """Direction-labelled target lattice over one benchmark range.

    Diagonal families sweep their full box; front and left families are
    the y = 0 and x = 0 lines.  Cells are (direction, target) pairs in a
    fixed deterministic order.
    """
    x_hi = _BENCH_X_MAX[range_id]
    xs = np.arange(0.3, x_hi + 1e-9, step)
    ys = np.arange(-0.6, 0.6 + 1e-9, step)
    zs = np.arange(0.2, 0.6 + 1e-9, step)
    cells = []
    for x in xs:
        for z in zs:
            cells.append(("N", (float(x), 0.0, float(z))))
    for y in ys:
        if abs(y) < 1e-12:
            continue
        for z in zs:
            cells.append(("W", (0.0, float(y), float(z))))
    for name, xsign, ysel in (
        ("NW", 1.0, 1), ("NE", 1.0, -1), ("SW", -1.0, -1), ("SE", -1.0, 1),
    ):
        for x in xs:
            for y in ys:
                if ysel * y <= 1e-12:
                    continue
                for z in zs:
                    cells.append((name, (float(xsign * x), float(y), float(z))))
    return cells


def _bench_solve(job):
    """One benchmark trial; module level so worker processes can pickle it."""
    ordinal, target, mode, params, cfg, master_seed, phase, warm_values = job
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(phase, ordinal)))
    t0 = time.perf_counter()
    try:
        tg = _planner_target(mode, np.asarray(target, float))
        res = optimize(tg, params, mode, seed=rng,
                       config=cfg, warm_start=warm_values)
        ok = True
    except OptimizationFailed as exc:
        res = exc.result
        ok = False
    except (PlaneError, TransformError):
        return ordinal, False, 0, 0, None, None, time.perf_counter() - t0
    wall = time.perf_counter() - t0
    values = res.vector.values if ok else None
    return ordinal, ok, res.generations, res.evaluations, res.feasible_generation, values, wall


def _run_jobs(jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_bench_solve, jobs, chunksize=1))
    return [_bench_solve(j) for j in jobs]


def _median(vals):
    return float(np.median(vals)) if vals else float("nan")


def _mean(vals):
    return float(np.mean(vals)) if vals else float("nan")


def cmd_bench(args) -> int:
    params, robot_tag = _load_robot(args.robot)
    out = _ensure_out(args.out)
    range_id, step = int(args.grid[0]), float(args.grid[1])
    if range_id not in _BENCH_X_MAX:
        print(f"jumpkit: unknown benchmark range {range_id}", file=sys.stderr)
        return EXIT_USAGE
    cells = bench_grid(range_id, step)
    cfg = _resolve_de_config(args, warm=False)
    warm_cfg = dataclasses.replace(cfg, weight_f=0.9, cross_cr=0.95, mutate_p=0.5)
    library = MotionLibrary.load(args.library) if args.library else None

    trials = []
    ordinal = 0
    for cell_id, (direction, target) in enumerate(cells):
        for rep in range(args.seeds):
            trials.append((ordinal, cell_id, direction, target))
            ordinal += 1

    t0 = time.perf_counter()
    cold_jobs = [(o, tg, args.mode, params, cfg, args.seed, 0, None)
                 for o, _, _, tg in trials]
    cold = _run_jobs(cold_jobs, args.workers)

    # Warm pass: seed each trial from the library when one is given, else
    # from the nearest other target solved in the cold pass.
    solved = [(o, np.asarray(trials[o][3]), cold[o][5]) for o in range(len(trials)) if cold[o][1]]
    warm_jobs = []
    for o, _, _, target in trials:
        start = None
        if library is not None:
            hit = library.lookup(target, mode=args.mode)
            if hit is not None:
                start = hit.values
        elif solved:
            tgt = np.asarray(target)
            dists = [float(np.linalg.norm(tgt - stg)) for so, stg, _ in solved if so != o]
            pool_ids = [so for so, _, _ in solved if so != o]
            vals = [sv for so, _, sv in solved if so != o]
            if dists:
                order = np.lexsort((pool_ids, dists))
                start = vals[int(order[0])]
        warm_jobs.append((o, target, args.mode, params,
                          warm_cfg if start is not None else cfg,
                          args.seed, 1, start))
    warm = _run_jobs(warm_jobs, args.workers)
    wall_total = time.perf_counter() - t0

    cell_rows = []
    for o, cell_id, direction, target in trials:
        _, cok, cgen, cev, cfg_gen, _, cwall = cold[o]
        _, wok, wgen, wev, wfg_gen, _, wwall = warm[o]
        cell_rows.append((direction, target, o % max(args.seeds, 1), cok, cgen, cev,
                          cfg_gen, wok, wgen, wev, wfg_gen, cwall, wwall))

    directions = sorted({d for d, _ in cells})
    header = ("direction,trials,successes,success_rate,"
              "cold_gens_median,cold_gens_mean,cold_evals_median,cold_evals_mean,"
              "warm_gens_median,warm_gens_mean,warm_evals_median,warm_evals_mean\n")
    tim_header = ("direction,cold_wall_median_s,cold_wall_mean_s,"
                  "warm_wall_median_s,warm_wall_mean_s\n")
    table, timings = [header], [tim_header]
    for d in directions:
        rows = [r for r in cell_rows if r[0] == d]
        n = len(rows)
        if n == 0:
            continue
        wins = sum(r[3] for r in rows)
        cg = [r[4] for r in rows if r[3]]
        ce = [r[5] for r in rows if r[3]]
        wg = [r[8] for r in rows if r[7]]
        we = [r[9] for r in rows if r[7]]
        table.append(
            f"{d},{n},{wins},{wins / n:.4f},"
            f"{_median(cg):.1f},{_mean(cg):.2f},{_median(ce):.1f},{_mean(ce):.2f},"
            f"{_median(wg):.1f},{_mean(wg):.2f},{_median(we):.1f},{_mean(we):.2f}\n"
        )
        timings.append(
            f"{d},{_median([r[11] for r in rows]):.4f},{_mean([r[11] for r in rows]):.4f},"
            f"{_median([r[12] for r in rows]):.4f},{_mean([r[12] for r in rows]):.4f}\n"
        )
    (out / "bench.csv").write_text("".join(table), encoding="utf-8")
    (out / "bench_timings.csv").write_text("".join(timings), encoding="utf-8")

    cc_header = ("direction,x,y,z,rep,cold_ok,cold_gens,cold_evals,cold_first_feasible,"
                 "warm_ok,warm_gens,warm_evals,warm_first_feasible\n")
    cc = [cc_header]
    for direction, target, rep, cok, cgen, cev, cfg_gen, wok, wgen, wev, wfg_gen, _, _ in cell_rows:
        cc.append(
            f"{direction},{target[0]!r},{target[1]!r},{target[2]!r},{rep},"
            f"{int(cok)},{cgen},{cev},{'' if cfg_gen is None else cfg_gen},"
            f"{int(wok)},{wgen},{wev},{'' if wfg_gen is None else wfg_gen}\n"
        )
    (out / "cells.csv").write_text("".join(cc), encoding="utf-8")

    digest = input_digest({
        "command": "bench",
        "robot": robot_tag,
        "grid": f"{range_id} {step!r}",
        "mode": args.mode,
        "seeds": args.seeds,
        "seed": args.seed,
        "de_config": repr(cfg),
        "library": args.library or "none",
    })
    total = len(cell_rows)
    wins = sum(r[3] for r in cell_rows)
    RunManifest(
        command="bench",
        argv=_manifest_argv(args.raw_argv),
        config_digest=digest,
        seed=args.seed,
        results={"trials": total, "successes": wins,
                 "success_rate": f"{wins / total:.4f}" if total else "nan"},
        artifacts=("bench.csv", "bench_timings.csv", "cells.csv"),
        timings={"bench_wall_s": wall_total},
    ).write(out)
    print(f"bench: {wins}/{total} solved over {len(directions)} directions")
    return EXIT_OK


# -- premotion ---------------------------------------------------------


def cmd_premotion_build(args) -> int:
    params, robot_tag = _load_robot(args.robot)
    out = _ensure_out(args.out)
    box = tuple((float(args.box[i]), float(args.box[i + 1])) for i in (0, 2, 4))
    cfg = _resolve_de_config(args, warm=False)
    modes = tuple(args.modes.split(","))
    for m in modes:
        if m not in MODES:
            print(f"jumpkit: unknown mode {m!r}", file=sys.stderr)
            return EXIT_USAGE
    checkpoint = out / args.checkpoint if args.checkpoint else None
    t0 = time.perf_counter()
    lib = build_library(
        box, args.step, params, modes=modes, config=cfg,
        seed=args.seed, workers=args.workers, checkpoint=checkpoint,
    )
    wall = time.perf_counter() - t0
    index_path, record_path = lib.save(out)
    artifacts = [Path(index_path).name, Path(record_path).name]
    if checkpoint is not None:
        artifacts.append(args.checkpoint)
    digest = input_digest({
        "command": "premotion-build",
        "robot": robot_tag,
        "box": _fmt_floats(args.box),
        "step": repr(args.step),
        "modes": ",".join(modes),
        "seed": args.seed,
        "de_config": repr(cfg),
    })
    RunManifest(
        command="premotion-build",
        argv=_manifest_argv(args.raw_argv),
        config_digest=digest,
        seed=args.seed,
        results={"entries": len(lib), "failures": len(lib.failures)},
        artifacts=tuple(artifacts),
        timings={"build_wall_s": wall},
    ).write(out)
    print(f"premotion build: {len(lib)} entries, {len(lib.failures)} failures")
    return EXIT_OK


def cmd_premotion_stats(args) -> int:
    lib = MotionLibrary.load(args.library)
    stats = lib.stats()
    for key in sorted(stats):
        val = stats[key]
        if isinstance(val, np.ndarray):
            val = _fmt_floats(val)
        print(f"{key} = {val}")
    return EXIT_OK


def cmd_premotion_lookup(args) -> int:
    lib = MotionLibrary.load(args.library)
    hit = lib.lookup(np.asarray(args.target, float), mode=args.mode, r=args.radius)
    if hit is None:
        print("miss")
        return EXIT_MISS
    print(f"entry {hit.entry_id}: target {_fmt_floats(hit.target)} "
          f"fitness {hit.fitness!r} generations {hit.generations}")
    print(f"values = {_fmt_floats(hit.values)}")
    return EXIT_OK


# -- reloc -------------------------------------------------------------


def cmd_reloc(args) -> int:
    patch_map = load_patch_map(args.map)
    points = load_point_cloud(args.cloud)
    out = _ensure_out(args.out)
    t0 = time.perf_counter()
    found = bnb_search(
        points, patch_map, z_star=args.z, eps_r=args.eps,
        min_theta=args.min_theta, min_xy=args.min_xy,
    )
    pose_lines = [
        f"theta = {found.pose.theta!r}",
        f"x = {found.pose.x!r}",
        f"y = {found.pose.y!r}",
        f"z = {found.pose.z_star!r}",
        f"consensus = {found.consensus}",
        f"nodes_expanded = {found.nodes_expanded}",
    ]
    results = {
        "consensus": found.consensus,
        "nodes_expanded": found.nodes_expanded,
        "theta": repr(found.pose.theta),
        "x": repr(found.pose.x),
        "y": repr(found.pose.y),
    }
    if args.refine:
        fine = refine_pose(found.pose, points, patch_map, eps_r=args.eps)
        mat = fine.pose_matrix
        pose_lines.append("refined_pose = " + " ".join(
            repr(float(v)) for v in mat.ravel()))
        pose_lines.append(f"refined_cost = {fine.cost!r}")
        pose_lines.append(f"refined_iterations = {fine.iterations}")
        results["refined_cost"] = repr(fine.cost)
    wall = time.perf_counter() - t0
    (out / "pose.txt").write_text("".join(f"{ln}\n" for ln in pose_lines), encoding="utf-8")
    digest = input_digest({
        "command": "reloc",
        "map": hashlib.sha256(Path(args.map).read_bytes()).hexdigest(),
        "cloud": hashlib.sha256(Path(args.cloud).read_bytes()).hexdigest(),
        "eps": repr(args.eps),
        "z": repr(args.z),
        "refine": args.refine,
    })
    RunManifest(
        command="reloc",
        argv=_manifest_argv(args.raw_argv),
        config_digest=digest,
        seed=None,
        results=results,
        artifacts=("pose.txt",),
        timings={"reloc_wall_s": wall},
    ).write(out)
    print(f"reloc: consensus {found.consensus}/{len(points)} "
          f"pose ({found.pose.theta:.4f}, {found.pose.x:.4f}, {found.pose.y:.4f})")
    return EXIT_OK


# -- parser ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse with the usage-error exit code pinned to 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_robot_flags(p):
    p.add_argument("--robot", help="robot config file or named profile "
                   f"(default: ${ROBOT_ENV} or {DEFAULT_PROFILE})")
    p.add_argument("--de-config", help="differential evolution config file")
    p.add_argument("--profile", choices=("online", "cold", "warm"),
                   help="built-in search profile (default online)")


def build_parser() -> _Parser:
    parser = _Parser(prog="jumpkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"jumpkit {__version__}")
    sub = parser.add_subparsers(dest="cmd", parser_class=_Parser, metavar="command")

    p = sub.add_parser("optimize", help="plan one jump to a target")
    p.add_argument("--target", nargs=3, type=float, required=True, metavar=("X", "Y", "Z"))
    p.add_argument("--yaw", type=float, default=0.0,
                   help="reserved; only 0 is accepted by the reduced model")
    p.add_argument("--mode", choices=MODES, default="omni")
    p.add_argument("--theta-land", type=float, default=0.0)
    p.add_argument("--library", help="warm-start pre-motion library directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--out", required=True, help="output directory (all writes land here)")
    _add_robot_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="verify a recorded plan end to end")
    p.add_argument("--plan", required=True, help="s_opt.txt record from optimize")
    p.add_argument("--obstacle", nargs=2, type=float, metavar=("X_EDGE", "HEIGHT"))
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--out", required=True)
    _add_robot_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="success-rate and timing sweep over a target grid")
    p.add_argument("--grid", nargs=2, type=float, required=True, metavar=("RANGE", "STEP"))
    p.add_argument("--mode", choices=MODES, default="omni")
    p.add_argument("--seeds", type=int, default=1, help="trials per grid cell")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--library", help="pre-motion library for the warm pass")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_robot_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("premotion", help="pre-motion library tools")
    psub = p.add_subparsers(dest="subcmd", parser_class=_Parser, metavar="subcommand")
    b = psub.add_parser("build", help="solve a target grid and save the library")
    b.add_argument("--box", nargs=6, type=float, required=True,
                   metavar=("X0", "X1", "Y0", "Y1", "Z0", "Z1"))
    b.add_argument("--step", type=float, required=True)
    b.add_argument("--modes", default="omni", help="comma-separated jump modes")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--checkpoint", help="checkpoint file name under --out")
    b.add_argument("--out", required=True)
    _add_robot_flags(b)
    b.set_defaults(func=cmd_premotion_build)
    s = psub.add_parser("stats", help="print library statistics")
    s.add_argument("--library", required=True)
    s.set_defaults(func=cmd_premotion_stats)
    lk = psub.add_parser("lookup", help="nearest library entry for a target")
    lk.add_argument("--library", required=True)
    lk.add_argument("--target", nargs=3, type=float, required=True, metavar=("X", "Y", "Z"))
    lk.add_argument("--mode", choices=MODES, default="omni")
    lk.add_argument("--radius", type=float, default=0.05)
    lk.set_defaults(func=cmd_premotion_lookup)

    p = sub.add_parser("reloc", help="relocalize a landed pose against a patch map")
    p.add_argument("--map", required=True, help="planar patch map file (nx ny nz d rows)")
    p.add_argument("--cloud", required=True, help="point cloud file (x y z rows)")
    p.add_argument("--eps", type=float, default=EPS_R, help="inlier distance (m)")
    p.add_argument("--z", type=float, default=0.0, help="known height of the cloud origin")
    p.add_argument("--min-theta", type=float, default=MIN_THETA)
    p.add_argument("--min-xy", type=float, default=MIN_XY)
    p.add_argument("--refine", action="store_true", help="polish the pose with point-to-plane LM")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reloc)

    return parser


def main(argv=None) -> int:
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(raw_argv)
    if not hasattr(args, "func"):
        parser.error("a command is required")
    args.raw_argv = raw_argv
    try:
        return args.func(args)
    except (PlaneError, DegenerateGeometryError) as exc:
        print(f"jumpkit: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, ValueError) as exc:
        print(f"jumpkit: bad input: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
