"""Planning problems, planner parameters, results and feasibility checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .gp_interp import build_upsample, upsample
from .gp_prior import GaussMarkovModel, PriorKind, Trajectory, TrajectoryPrior, build_prior
from .robot import PlanarArm, PointRobot, load_robot, robot_from_dict
from .workspace import Scene2D, SignedDistanceField2D, build_sdf, load_scene, rasterize, scene_from_dict

__all__ = [
    "ALGORITHMS",
    "PlannerParams",
    "PlanningProblem",
    "PlanResult",
    "Evaluation",
    "evaluate",
    "problem_from_dict",
    "load_problem",
]

ALGORITHMS = ("gpmp", "gpmp2", "igpmp2")
DEFAULT_CELL_SIZE = 0.01
LIMIT_TOL = 1e-9
PARAM_ALIASES = {"q_c": "qc", "lambda": "lam"}


@dataclass(frozen=True)
class PlannerParams:
    qc: float = 1.0
    qc_gpmp: float = 100.0  # the gradient planner needs a looser prior to move
    eps: float = 0.2
    sigma_obs: float = 0.02
    lam: float = 0.005  # gradient planner: prior/obstacle trade-off
    eta: float = 1.0  # gradient planner: step regularization
    k0: float = 1e-4  # endpoint covariances (scaled identity)
    kn: float = 1e-4
    sigma_limit: float = 1e-3
    eps_limit: float = 0.0
    initial_damping: float = 0.01
    max_iterations: int = 100
    rel_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("qc", "qc_gpmp", "eps", "sigma_obs", "lam", "eta", "k0", "kn", "sigma_limit"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be > 0")
        if self.eps_limit < 0 or self.initial_damping < 0:
            raise InvalidArgumentError("eps_limit and initial_damping must be >= 0")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PlanningProblem:
    robot: PlanarArm | PointRobot
    sdf: SignedDistanceField2D
    start_q: np.ndarray
    goal_q: np.ndarray
    n_segments: int = 10
    total_time: float = 5.0
    n_ip: int = 5
    algorithm: str = "gpmp2"
    params: PlannerParams = field(default_factory=PlannerParams)
    start_qdot: np.ndarray | None = None
    goal_qdot: np.ndarray | None = None
    scene: Scene2D | None = None
    name: str = ""

    def __post_init__(self) -> None:
        D = self.robot.dof
        for attr in ("start_q", "goal_q", "start_qdot", "goal_qdot"):
            val = getattr(self, attr)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float)
            if arr.shape != (D,):
                raise InvalidArgumentError(f"{attr} must have length {D}")
            object.__setattr__(self, attr, arr)
        if self.n_segments < 1:
            raise InvalidArgumentError("N must be >= 1")
        if not self.total_time > 0:
            raise InvalidArgumentError("total_time must be > 0")
        if self.n_ip < 0:
            raise InvalidArgumentError("n_ip must be >= 0")
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"algorithm must be one of {ALGORITHMS}")

    def with_(self, **changes) -> "PlanningProblem":
        return replace(self, **changes)

    def model(self, kind: PriorKind | None = None) -> GaussMarkovModel:
        if kind is None:
            kind = PriorKind.CONSTANT_ACCELERATION if self.algorithm == "gpmp" else PriorKind.CONSTANT_VELOCITY
        qc = self.params.qc_gpmp if kind is PriorKind.CONSTANT_ACCELERATION else self.params.qc
        return GaussMarkovModel(kind, self.robot.dof, qc)

    def prior(self, kind: PriorKind | None = None) -> TrajectoryPrior:
        return build_prior(self.model(kind), self.start_q, self.goal_q, self.n_segments,
                           self.total_time, self.params.k0, self.params.kn)

    def endpoint_states(self, prior: TrajectoryPrior) -> tuple[np.ndarray, np.ndarray]:
        """Start/goal target states: the mean's endpoints with any requested velocities."""
        D = self.robot.dof
        start = np.array(prior.mean.states[0])
        goal = np.array(prior.mean.states[-1])
        if self.start_qdot is not None:
            start[D:2 * D] = self.start_qdot
        if self.goal_qdot is not None:
            goal[D:2 * D] = self.goal_qdot
        return start, goal


@dataclass(frozen=True)
class Evaluation:
    upsampled: Trajectory
    clearance: np.ndarray  # min body-circle clearance per up-sampled state
    within_limits: bool
    feasible: bool


def evaluate(problem: PlanningProblem, traj: Trajectory, prior: TrajectoryPrior,
             n_ip: int | None = None) -> Evaluation:
    """Collision and joint-limit check at the up-sampled states."""
    op = build_upsample(prior, problem.n_ip if n_ip is None else n_ip)
    up = upsample(op, traj, prior)
    D = problem.robot.dof
    q = up.states[:, :D]
    centers = problem.robot.fk_circles(q)
    dist = problem.sdf.query(centers.reshape(-1, 2)).reshape(centers.shape[:-1])
    clearance = np.min(dist - problem.robot.radii, axis=-1)
    ok = True
    lim = problem.robot.joint_limits
    if lim is not None:
        ok = bool(np.all(q >= lim[:, 0] - LIMIT_TOL) and np.all(q <= lim[:, 1] + LIMIT_TOL))
    return Evaluation(up, clearance, ok, bool(ok and np.all(clearance > 0)))


@dataclass
class PlanResult:
    trajectory: Trajectory
    prior: TrajectoryPrior
    evaluation: Evaluation
    iterations: int
    converged: bool
    wall_time: float
    algorithm: str
    stats: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.evaluation.feasible

    def to_json_dict(self) -> dict:
        up = self.evaluation.upsampled
        stats = {
            "algorithm": self.algorithm,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
            "wall_time": self.wall_time,
        }
        stats.update(self.stats)
        return {
            "times": self.trajectory.times.tolist(),
            "states": self.trajectory.states.tolist(),
            "upsampled": {
                "times": up.times.tolist(),
                "states": up.states.tolist(),
                "clearance": self.evaluation.clearance.tolist(),
            },
            "stats": stats,
        }


def _pick(overrides: dict, data: dict, key: str, default):
    if overrides.get(key) is not None:
        return overrides[key]
    if data.get(key) is not None:
        return data[key]
    return default


def problem_from_dict(data: dict, base_dir: Path | None = None, overrides: dict | None = None,
                      cell_size: float | None = None) -> PlanningProblem:
    """Build a problem from its JSON form.

    ``scene`` and ``robot`` may be file paths (relative to ``base_dir``) or
    inline objects. Values in ``overrides`` (e.g. from command-line flags)
    take precedence over the JSON, which takes precedence over defaults.
    """
    overrides = overrides or {}
    base_dir = Path(base_dir) if base_dir is not None else Path(".")
    try:
        scene_ref = data["scene"]
        if isinstance(scene_ref, str):
            scene, scene_cs = load_scene(base_dir / scene_ref)
        else:
            scene = scene_from_dict(scene_ref)
            scene_cs = scene_ref.get("cell_size")
        robot_ref = data["robot"]
        robot = load_robot(base_dir / robot_ref) if isinstance(robot_ref, str) else robot_from_dict(robot_ref)
        cs = cell_size or scene_cs or DEFAULT_CELL_SIZE
        sdf = build_sdf(rasterize(scene, float(cs)))

        defaults = PlannerParams()
        pdata = {PARAM_ALIASES.get(k, k): v for k, v in data.get("params", {}).items()}
        unknown = set(pdata) - set(PlannerParams.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown params {sorted(unknown)}")
        pover = overrides.get("params", {})
        kwargs = {}
        for name in PlannerParams.__dataclass_fields__:
            default = getattr(defaults, name)
            val = _pick(pover, pdata, name, default)
            kwargs[name] = type(default)(val)
        params = PlannerParams(**kwargs)
        return PlanningProblem(
            robot=robot,
            sdf=sdf,
            start_q=np.asarray(data["start_q"], dtype=float),
            goal_q=np.asarray(_pick(overrides, data, "goal_q", None), dtype=float),
            n_segments=int(_pick(overrides, data, "N", 10)),
            total_time=float(_pick(overrides, data, "total_time", 5.0)),
            n_ip=int(_pick(overrides, data, "n_ip", 5)),
            algorithm=str(_pick(overrides, data, "algorithm", "gpmp2")),
            params=params,
            start_qdot=data.get("start_qdot"),
            goal_qdot=data.get("goal_qdot"),
            scene=scene,
            name=str(data.get("name", "")),
        )
    except KeyError as exc:
        raise InvalidArgumentError(f"problem is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"malformed problem: {exc}") from exc


def load_problem(path, overrides: dict | None = None, cell_size: float | None = None) -> PlanningProblem:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read problem {path}: {exc}") from exc
    return problem_from_dict(data, path.parent, overrides, cell_size)
