"""Gradient-based GP motion planning with covariant updates.

The objective is F_obs(theta_up) + lam * F_gp(theta). Obstacle gradients are
computed on the up-sampled trajectory, projected to the support states with
M^T and preconditioned by the prior covariance K, which is applied by
solving with the block-tridiagonal precision rather than forming K.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .blocktri import BlockTridiagonalMatrix, cholesky_tridiag, solve_factored
from .errors import InvalidArgumentError
from .gp_interp import UpsampleOperator, build_upsample, project_gradient, upsample, upsample_deviation
from .gp_prior import PriorKind, Trajectory, TrajectoryPrior, gp_prior_cost, precision
from .obstacle_model import ObstacleParams, gpmp_obstacle_cost, gpmp_obstacle_gradient
from .problem import PlanningProblem, PlanResult, evaluate

__all__ = [
    "GpmpConfig",
    "CovariantSolver",
    "gpmp_objective",
    "gpmp_step",
    "project_joint_limits",
    "gpmp_plan",
]

MAX_PROJECTION_PASSES = 10


@dataclass(frozen=True)
class GpmpConfig:
    lam: float = 0.005
    eta: float = 1.0
    max_iterations: int = 100
    min_iterations_before_collision_check: int = 10
    n_ip: int = 5
    obstacle: ObstacleParams = field(default_factory=ObstacleParams)

    def __post_init__(self) -> None:
        if not self.lam > 0 or not self.eta > 0:
            raise InvalidArgumentError("lam and eta must be > 0")
        if self.n_ip < 0 or self.max_iterations < 1:
            raise InvalidArgumentError("n_ip must be >= 0 and max_iterations >= 1")


class CovariantSolver:
    """Applies K = (K^-1)^-1 to support-state vectors via a cached banded factor."""

    def __init__(self, prior: TrajectoryPrior):
        self.precision: BlockTridiagonalMatrix = precision(prior)
        self._factor = cholesky_tridiag(self.precision)

    def apply_kernel(self, v: np.ndarray) -> np.ndarray:
        return solve_factored(self._factor, v)


def _check_order(prior: TrajectoryPrior) -> None:
    if prior.model.order != 3:
        raise InvalidArgumentError("the gradient planner needs a constant-acceleration prior")


def gpmp_objective(traj: Trajectory, prior: TrajectoryPrior, robot, sdf, config: GpmpConfig,
                   op: UpsampleOperator | None = None) -> float:
    """F_obs + lam * F_gp; F_obs sums c * |xdot| * dt_up over circles and up-sampled states."""
    _check_order(prior)
    op = op or build_upsample(prior, config.n_ip)
    up = upsample(op, traj, prior)
    dt_up = prior.dt / (op.n_ip + 1)
    f_obs = float(np.sum(gpmp_obstacle_cost(up.states, robot, sdf, config.obstacle))) * dt_up
    return f_obs + config.lam * gp_prior_cost(traj, prior)


def _obstacle_gradient(traj, prior, robot, sdf, config, op) -> np.ndarray:
    up = upsample(op, traj, prior)
    dt_up = prior.dt / (op.n_ip + 1)
    g_up = gpmp_obstacle_gradient(up.states, robot, sdf, config.obstacle) * dt_up
    return project_gradient(op, g_up)


def gpmp_step(traj: Trajectory, prior: TrajectoryPrior, robot, sdf, config: GpmpConfig,
              op: UpsampleOperator | None = None, solver: CovariantSolver | None = None) -> Trajectory:
    """theta <- theta - (1/eta) K (lam K^-1 (theta - mu) + M^T g_up).

    The prior part K K^-1 (theta - mu) is applied analytically, so with no
    obstacle gradient the deviation contracts by exactly (1 - lam/eta).
    """
    _check_order(prior)
    op = op or build_upsample(prior, config.n_ip)
    solver = solver or CovariantSolver(prior)
    dev = traj.states - prior.mean.states
    g = _obstacle_gradient(traj, prior, robot, sdf, config, op)
    step = -(config.lam / config.eta) * dev
    if np.any(g):
        step -= solver.apply_kernel(g) / config.eta
    return traj.with_states(traj.states + step)


def _violation(states: np.ndarray, limits: np.ndarray, dof: int) -> np.ndarray:
    v = np.zeros_like(states)
    q = states[:, :dof]
    v[:, :dof] = np.clip(q, limits[:, 0], limits[:, 1]) - q
    return v


def project_joint_limits(traj: Trajectory, prior: TrajectoryPrior, robot, op: UpsampleOperator,
                         solver: CovariantSolver | None = None) -> Trajectory:
    """Smoothly pull up-sampled joint-limit violations back inside the limits.

    Each pass computes the clamp-to-limits delta v_up on the up-sampled
    positions and moves the support states along K M^T v_up, scaled so that
    the largest violation is exactly removed. At most ten passes are made;
    support-state positions are clamped at the end.
    """
    limits = robot.joint_limits
    if limits is None:
        return traj
    solver = solver or CovariantSolver(prior)
    D = robot.dof
    theta = np.array(traj.states)
    for _ in range(MAX_PROJECTION_PASSES):
        up = upsample(op, traj.with_states(theta), prior)
        v_up = _violation(up.states, limits, D)
        if not np.any(v_up):
            break
        corr = solver.apply_kernel(project_gradient(op, v_up))
        r, d = np.unravel_index(np.argmax(np.abs(v_up)), v_up.shape)
        achieved = upsample_deviation(op, corr)[r, d]
        scale = v_up[r, d] / achieved if achieved * v_up[r, d] > 0 else 1.0
        theta = theta + scale * corr
    theta[:, :D] = np.clip(theta[:, :D], limits[:, 0], limits[:, 1])
    return traj.with_states(theta)


def gpmp_plan(problem: PlanningProblem, config: GpmpConfig | None = None,
              init: Trajectory | None = None) -> PlanResult:
    """Iterate covariant steps from the straight line until feasible or out of iterations.

    Feasibility (all up-sampled clearances > 0 and joint limits respected) is
    checked from iteration ``min_iterations_before_collision_check`` on.
    """
    t0 = time.perf_counter()
    p = problem.params
    config = config or GpmpConfig(p.lam, p.eta, p.max_iterations, 10, problem.n_ip,
                                  ObstacleParams(p.eps, p.sigma_obs))
    prior = problem.prior(PriorKind.CONSTANT_ACCELERATION)
    op = build_upsample(prior, config.n_ip)
    solver = CovariantSolver(prior)
    traj = init if init is not None else prior.mean
    objective = [gpmp_objective(traj, prior, problem.robot, problem.sdf, config, op)]
    converged = False
    it = 0
    ev = None
    for it in range(1, config.max_iterations + 1):
        traj = gpmp_step(traj, prior, problem.robot, problem.sdf, config, op, solver)
        traj = project_joint_limits(traj, prior, problem.robot, op, solver)
        objective.append(gpmp_objective(traj, prior, problem.robot, problem.sdf, config, op))
        if it >= config.min_iterations_before_collision_check:
            ev = evaluate(problem, traj, prior, config.n_ip)
            if ev.feasible:
                converged = True
                break
    if ev is None or it < config.min_iterations_before_collision_check:
        ev = evaluate(problem, traj, prior, config.n_ip)
    stats = {"objective_trace": objective}
    return PlanResult(traj, prior, ev, it, converged, time.perf_counter() - t0, "gpmp", stats)
