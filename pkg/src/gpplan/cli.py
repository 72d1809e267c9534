"""Command-line front end: plan, replan, benchmark, sdf and scenarios.

Exit codes: 0 success (feasible plan), 1 infeasible result, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import gpmp, gpmp2, igpmp2
from .errors import InvalidArgumentError, NumericalFailureError
from .plot import write_svg
from .problem import ALGORITHMS, PlanningProblem, PlanResult, load_problem
from .scenarios import export_scenarios
from .workspace import build_sdf, load_scene, rasterize, write_sdf_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2
PARAM_FLAGS = {
    "qc": float, "qc_gpmp": float, "eps": float, "sigma_obs": float, "lam": float, "eta": float,
    "max_iterations": int,
}


def run_planner(problem: PlanningProblem) -> PlanResult:
    if problem.algorithm == "gpmp":
        return gpmp.gpmp_plan(problem)
    if problem.algorithm == "igpmp2":
        return igpmp2.plan(problem)
    return gpmp2.plan(problem)


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1))


def read_trajectory_json(path) -> dict:
    """Load a trajectory file written by ``plan`` (lists become float arrays)."""
    data = json.loads(Path(path).read_text())
    out = {"times": np.array(data["times"]), "states": np.array(data["states"]), "stats": data["stats"]}
    out["upsampled"] = {k: np.array(v) for k, v in data["upsampled"].items()}
    return out


def _overrides(args) -> dict:
    over = {
        "algorithm": getattr(args, "algorithm", None),
        "N": getattr(args, "n_segments", None),
        "n_ip": getattr(args, "n_ip", None),
        "total_time": getattr(args, "total_time", None),
        "params": {k: getattr(args, k, None) for k in PARAM_FLAGS},
    }
    return over


def _load(args) -> PlanningProblem:
    return load_problem(args.problem, _overrides(args), args.cell_size)


def _plot(path, problem: PlanningProblem, result: PlanResult, extra=None, color="blue") -> None:
    if problem.scene is None:
        raise InvalidArgumentError("plotting needs the problem's scene")
    D = problem.robot.dof
    write_svg(path, problem.scene, problem.robot, result.trajectory.states[:, :D],
              result.evaluation.upsampled.states[:, :D], extra, color)


def cmd_plan(args) -> int:
    problem = _load(args)
    result = run_planner(problem)
    write_json(args.out, result.to_json_dict())
    if args.plot:
        _plot(args.plot, problem, result)
    status = "feasible" if result.feasible else "infeasible"
    print(f"{problem.algorithm}: {status} after {result.iterations} iterations "
          f"({result.wall_time:.3f} s), min clearance {result.evaluation.clearance.min():.4f} m")
    return EXIT_OK if result.feasible else EXIT_INFEASIBLE


def cmd_replan(args) -> int:
    problem = _load(args).with_(algorithm="gpmp2")
    if args.new_goal is None and args.fixed_state is None:
        raise InvalidArgumentError("replan needs --new-goal and/or --fixed-state")
    first = gpmp2.plan(problem)
    fixed = None
    if args.fixed_state is not None:
        idx, *q = args.fixed_state
        fixed = (int(idx), np.array(q, dtype=float) if q else None)
    result = igpmp2.replan(problem, first, new_goal=args.new_goal, fixed_state=fixed,
                           iterate=not args.single_update)
    out = {"original": first.to_json_dict(), **result.to_json_dict()}
    write_json(args.out, out)
    if args.plot:
        D = problem.robot.dof
        original = [(first.evaluation.upsampled.states[:, :D], "red")]
        _plot(args.plot, problem, result.incremental, original, "green")
    print(f"incremental update touched {result.touched_cliques} clique(s): "
          f"{result.single_update_time * 1e3:.2f} ms single, {result.incremental.wall_time * 1e3:.1f} ms "
          f"iterated vs {result.batch.wall_time * 1e3:.1f} ms batch re-solve")
    return EXIT_OK if result.incremental.feasible else EXIT_INFEASIBLE


def _benchmark_task(task) -> dict:
    path, algorithm, variant, seed, shift = task
    problem = load_problem(path, {"algorithm": algorithm})
    if variant > 0:
        rng = np.random.default_rng([seed, variant])
        D = problem.robot.dof
        problem = problem.with_(start_q=problem.start_q + rng.uniform(-shift, shift, D),
                                goal_q=problem.goal_q + rng.uniform(-shift, shift, D))
    result = run_planner(problem)
    return {
        "problem": Path(path).stem,
        "variant": variant,
        "algorithm": algorithm,
        "feasible": result.feasible,
        "iterations": result.iterations,
        "time": result.wall_time,
    }


def cmd_benchmark(args) -> int:
    root = Path(args.problems)
    paths = sorted(p for p in root.glob("*.json")
                   if not p.name.endswith((".scene.json", ".robot.json")))
    if not paths:
        raise InvalidArgumentError(f"no problem files in {root}")
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algorithms:
        if a not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {a!r}")
    tasks = [(str(p), a, v, args.seed, args.perturbation)
             for a in algorithms for p in paths for v in range(args.random_variants + 1)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            runs = list(pool.map(_benchmark_task, tasks))
    else:
        runs = [_benchmark_task(t) for t in tasks]
    report = {"seed": args.seed, "problems": [p.stem for p in paths], "algorithms": {}}
    for a in algorithms:
        mine = [r for r in runs if r["algorithm"] == a]
        ok = [r for r in mine if r["feasible"]]
        times = [r["time"] for r in ok]
        report["algorithms"][a] = {
            "success_rate": 100.0 * len(ok) / len(mine),
            "avg_time": float(np.mean(times)) if times else None,
            "max_time": float(np.max(times)) if times else None,
            "avg_iterations": float(np.mean([r["iterations"] for r in mine])),
            "runs": mine,
        }
    write_json(args.out, report)
    for a, rep in report["algorithms"].items():
        avg = f"{rep['avg_time']:.3f} s" if rep["avg_time"] is not None else "n/a"
        print(f"{a:7s} success {rep['success_rate']:5.1f}%  avg time {avg}")
    return EXIT_OK


def cmd_sdf(args) -> int:
    scene, cell = load_scene(args.scene)
    cell = args.cell_size or cell or 0.01
    sdf = build_sdf(rasterize(scene, cell))
    write_sdf_csv(sdf, args.out)
    print(f"wrote {sdf.width}x{sdf.height} field to {args.out}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    written = export_scenarios(args.out_dir)
    print(f"wrote {len(written)} problems to {args.out_dir}")
    return EXIT_OK


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("problem", help="problem JSON file")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--plot", help="optional SVG output path")
    p.add_argument("--n-segments", type=int, help="number of trajectory segments N")
    p.add_argument("--n-ip", type=int, help="interpolated states per segment")
    p.add_argument("--total-time", type=float)
    p.add_argument("--cell-size", type=float, help="occupancy grid resolution (m)")
    for name, typ in PARAM_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one problem")
    _add_problem_flags(p)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("replan", help="batch solve, then replan incrementally")
    _add_problem_flags(p)
    p.add_argument("--new-goal", type=float, nargs="+", metavar="Q")
    p.add_argument("--fixed-state", type=float, nargs="+", metavar="IDX_Q",
                   help="support index followed by an optional configuration")
    p.add_argument("--single-update", action="store_true", help="skip iterating updates")
    p.set_defaults(func=cmd_replan)

    p = sub.add_parser("benchmark", help="run planners over a directory of problems")
    p.add_argument("problems", help="directory of problem JSON files")
    p.add_argument("--algorithms", default="gpmp,gpmp2,igpmp2")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-variants", type=int, default=0,
                   help="extra randomly perturbed start/goal variants per problem")
    p.add_argument("--perturbation", type=float, default=0.1, help="max start/goal perturbation")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sdf", help="dump a scene's signed distance field as CSV")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    p.add_argument("--cell-size", type=float)
    p.set_defaults(func=cmd_sdf)

    p = sub.add_parser("scenarios", help="export the built-in scenario suite")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, NumericalFailureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
