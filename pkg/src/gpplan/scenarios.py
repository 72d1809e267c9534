"""Ten small hand-built planning problems used by tests, benchmarks and the CLI."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .problem import PlannerParams, PlanningProblem
from .robot import PlanarArm, PointRobot
from .workspace import Box, Disk, Scene2D, build_sdf, rasterize

__all__ = ["SCENARIO_NAMES", "make_scenario", "scenario_suite", "export_scenarios"]

CELL = 0.01
ARM_BOUNDS = ((-2.5, -2.5), (2.5, 2.5))

_ARM2 = dict(link_lengths=(1.0, 1.0), joint_limits=[[-np.pi, np.pi], [-2.8, 2.8]])
_ARM3 = dict(link_lengths=(0.8, 0.7, 0.5), joint_limits=[[-np.pi, np.pi], [-2.8, 2.8], [-2.8, 2.8]])

# name -> (robot kind, obstacles, start, goal, parameter overrides)
_SPECS = {
    "arm2_disk": ("arm2", [Disk((1.1, 1.1), 0.25)], (0.0, 0.0), (np.pi / 2, 0.0), {}),
    "arm2_box": ("arm2", [Box((0.0, 1.75), (0.15, 0.2))], (np.pi / 4, 0.5), (3 * np.pi / 4, 0.5), {}),
    "arm2_two_disks": ("arm2", [Disk((1.35, 0.75), 0.2), Disk((-0.6, 1.45), 0.2)],
                       (0.0, 0.3), (2.2, 0.3), {}),
    "arm2_wall": ("arm2", [Box((1.4, 0.9), (0.35, 0.08))], (-0.2, 0.2), (1.2, -0.2), {}),
    "arm2_under_box": ("arm2", [Box((0.6, 1.7), (0.5, 0.15)), Disk((-1.6, 0.4), 0.2)],
                       (0.3, 0.6), (2.4, 0.5), {}),
    "arm3_disk": ("arm3", [Disk((1.15, 1.2), 0.18)], (0.0, 0.3, 0.3), (np.pi / 2, 0.3, 0.3), {}),
    "arm3_boxes": ("arm3", [Box((1.2, 0.45), (0.15, 0.15)), Box((-0.3, 1.45), (0.15, 0.2))],
                   (-0.3, 0.2, 0.2), (1.9, 0.2, 0.2), {}),
    "arm3_mixed": ("arm3", [Disk((0.9, 1.2), 0.18), Box((-1.25, 0.6), (0.2, 0.1))],
                   (0.2, 0.4, -0.3), (2.5, -0.3, 0.3), {}),
    "point_corridor": ("point", [Box((0.0, 0.75), (0.25, 0.75)), Box((0.0, -1.05), (0.25, 0.45))],
                       (-1.2, 0.0), (1.2, 0.0), {}),
    "point_bend": ("point", [Box((-0.5, 0.75), (0.12, 0.75)), Box((0.5, -0.75), (0.12, 0.75))],
                   (-1.4, -0.2), (1.4, 0.2), {}),
}

SCENARIO_NAMES = tuple(_SPECS)


def _robot(kind: str):
    if kind == "arm2":
        return PlanarArm(_ARM2["link_lengths"], joint_limits=_ARM2["joint_limits"])
    if kind == "arm3":
        return PlanarArm(_ARM3["link_lengths"], joint_limits=_ARM3["joint_limits"])
    return PointRobot(0.1, position_limits=[[-1.9, 1.9], [-1.9, 1.9]])


def _scene(kind: str, obstacles) -> Scene2D:
    if kind == "point":
        return Scene2D((-2.0, -2.0), (2.0, 2.0), tuple(obstacles))
    return Scene2D(*ARM_BOUNDS, tuple(obstacles))


def make_scenario(name: str, n_segments: int = 10, n_ip: int = 5, algorithm: str = "gpmp2",
                  sdf_cache: dict | None = None, **param_overrides) -> PlanningProblem:
    """Build one suite problem. ``sdf_cache`` (name -> SDF) avoids rebuilding fields."""
    kind, obstacles, start, goal, overrides = _SPECS[name]
    scene = _scene(kind, obstacles)
    if sdf_cache is not None and name in sdf_cache:
        sdf = sdf_cache[name]
    else:
        sdf = build_sdf(rasterize(scene, CELL))
        if sdf_cache is not None:
            sdf_cache[name] = sdf
    params = PlannerParams(**{**overrides, **param_overrides})
    return PlanningProblem(
        robot=_robot(kind), sdf=sdf, start_q=np.array(start), goal_q=np.array(goal),
        n_segments=n_segments, total_time=5.0, n_ip=n_ip, algorithm=algorithm,
        params=params, scene=scene, name=name,
    )


def scenario_suite(**kwargs) -> list[PlanningProblem]:
    return [make_scenario(name, **kwargs) for name in SCENARIO_NAMES]


def export_scenarios(out_dir, n_segments: int = 10, n_ip: int = 5) -> list[Path]:
    """Write each suite problem as problem/scene/robot JSON files under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in SCENARIO_NAMES:
        kind, obstacles, start, goal, overrides = _SPECS[name]
        scene = _scene(kind, obstacles)
        (out_dir / f"{name}.scene.json").write_text(json.dumps(scene.to_dict(CELL), indent=2))
        (out_dir / f"{name}.robot.json").write_text(json.dumps(_robot(kind).to_dict(), indent=2))
        problem = {
            "name": name,
            "scene": f"{name}.scene.json",
            "robot": f"{name}.robot.json",
            "start_q": list(map(float, start)),
            "goal_q": list(map(float, goal)),
            "N": n_segments,
            "total_time": 5.0,
            "n_ip": n_ip,
            "algorithm": "gpmp2",
            "params": dict(overrides),
        }
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(problem, indent=2))
        written.append(path)
    return written
