"""Factor-graph MAP trajectory optimization.

Every factor contributes a whitened residual r(theta) with error 0.5 |r|^2.
Factors touch one support state or two adjacent ones, so the Gauss-Newton
system J^T J delta = -J^T r is block-tridiagonal and is solved in O(N).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .blocktri import BlockTridiagonalMatrix, solve_tridiag
from .errors import InvalidArgumentError, NumericalFailureError
from .gp_interp import build_upsample
from .gp_prior import Trajectory, TrajectoryPrior
from .obstacle_model import ObstacleParams, h_batch
from .problem import PlanningProblem, PlanResult, evaluate

__all__ = [
    "FactorKind",
    "Factor",
    "StartPrior",
    "GoalPrior",
    "FixedState",
    "GpPrior",
    "Obstacle",
    "InterpObstacle",
    "JointLimit",
    "VelocityLimit",
    "Equality",
    "FactorGraph",
    "LMSettings",
    "SolveStats",
    "build_graph",
    "linearize",
    "linearize_factorwise",
    "graph_error",
    "residual",
    "optimize",
    "clamp_to_limits",
    "plan",
    "DEFAULT_FIXED_COV",
]

DEFAULT_FIXED_COV = 1e-6
STATIONARY_TOL = 1e-9  # |b|_inf relative to max(1, error) treated as a zero gradient


class FactorKind(enum.Enum):
    START_PRIOR = "StartPrior"
    GOAL_PRIOR = "GoalPrior"
    GP_PRIOR = "GpPrior"
    OBSTACLE = "Obstacle"
    INTERP_OBSTACLE = "InterpObstacle"
    JOINT_LIMIT = "JointLimit"
    VELOCITY_LIMIT = "VelocityLimit"
    EQUALITY = "Equality"
    FIXED_STATE = "FixedState"


def _sqrt_info(cov) -> np.ndarray:
    """W with W^T W = cov^-1 (inverse of the lower Cholesky factor)."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("covariance is not positive-definite") from exc
    return solve_triangular(L, np.eye(len(cov)), lower=True)


@dataclass(frozen=True, eq=False)
class Factor:
    """Base class. ``keys`` are the support-state indices the factor touches."""

    keys: tuple[int, ...]
    kind = None

    def error_vector(self, states) -> np.ndarray:
        """Unwhitened residual."""
        raise NotImplementedError

    def linearize(self, states) -> tuple[np.ndarray, list[np.ndarray]]:
        """Whitened residual and its Jacobian w.r.t. each key's state."""
        raise NotImplementedError

    def error(self, states) -> float:
        r, _ = self.linearize(states)
        return 0.5 * float(r @ r)


@dataclass(frozen=True, eq=False)
class _StatePrior(Factor):
    target: np.ndarray = None
    cov: np.ndarray = None

    def __post_init__(self) -> None:
        if len(self.keys) != 1:
            raise InvalidArgumentError("state priors are unary")
        target = np.asarray(self.target, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(len(target))
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_w", _sqrt_info(cov))

    def error_vector(self, states) -> np.ndarray:
        return np.asarray(states[0]) - self.target

    def linearize(self, states):
        return self._w @ self.error_vector(states), [self._w]


@dataclass(frozen=True, eq=False)
class StartPrior(_StatePrior):
    kind = FactorKind.START_PRIOR


@dataclass(frozen=True, eq=False)
class GoalPrior(_StatePrior):
    kind = FactorKind.GOAL_PRIOR


@dataclass(frozen=True, eq=False)
class FixedState(_StatePrior):
    kind = FactorKind.FIXED_STATE


@dataclass(frozen=True, eq=False)
class GpPrior(Factor):
    """Phi theta_i - theta_{i+1}, whitened by the process-noise block."""

    phi: np.ndarray = None
    q: np.ndarray = None
    kind = FactorKind.GP_PRIOR

    def __post_init__(self) -> None:
        if len(self.keys) != 2 or self.keys[1] != self.keys[0] + 1:
            raise InvalidArgumentError("GP prior factors link adjacent states")
        w = _sqrt_info(self.q)
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_wphi", w @ self.phi)

    def error_vector(self, states) -> np.ndarray:
        return self.phi @ states[0] - states[1]

    def linearize(self, states):
        r = self._wphi @ states[0] - self._w @ states[1]
        return r, [self._wphi, -self._w]


@dataclass(frozen=True, eq=False)
class Obstacle(Factor):
    """Hinge costs of every body circle at one support state, scaled by 1/sigma_obs."""

    robot: object = None
    sdf: object = None
    params: ObstacleParams = None
    kind = FactorKind.OBSTACLE

    def error_vector(self, states) -> np.ndarray:
        D = self.robot.dof
        h, _ = h_batch(np.asarray(states[0])[:D], self.robot, self.sdf, self.params)
        return h

    def linearize(self, states):
        D = self.robot.dof
        s = np.asarray(states[0])
        h, dq = h_batch(s[:D], self.robot, self.sdf, self.params)
        J = np.zeros((len(h), len(s)))
        J[:, :D] = dq
        return h / self.params.sigma_obs, [J / self.params.sigma_obs]


@dataclass(frozen=True, eq=False)
class InterpObstacle(Factor):
    """Obstacle costs at theta(tau) = Lambda theta_i + Psi theta_{i+1}."""

    lam: np.ndarray = None
    psi: np.ndarray = None
    tau: float = 0.0  # offset from the segment start
    robot: object = None
    sdf: object = None
    params: ObstacleParams = None
    kind = FactorKind.INTERP_OBSTACLE

    def __post_init__(self) -> None:
        if len(self.keys) != 2 or self.keys[1] != self.keys[0] + 1:
            raise InvalidArgumentError("interpolated obstacle factors link adjacent states")

    def interpolated(self, states) -> np.ndarray:
        return self.lam @ states[0] + self.psi @ states[1]

    def error_vector(self, states) -> np.ndarray:
        D = self.robot.dof
        h, _ = h_batch(self.interpolated(states)[:D], self.robot, self.sdf, self.params)
        return h

    def linearize(self, states):
        D = self.robot.dof
        x = self.interpolated(states)
        h, dq = h_batch(x[:D], self.robot, self.sdf, self.params)
        Hx = np.zeros((len(h), len(x)))
        Hx[:, :D] = dq
        s = 1.0 / self.params.sigma_obs
        return h * s, [Hx @ self.lam * s, Hx @ self.psi * s]


def _double_hinge(x, lo, hi, eps):
    """Violation of [lo + eps, hi - eps] per dimension and its derivative."""
    below = x < lo + eps
    above = x > hi - eps
    r = np.where(below, lo + eps - x, np.where(above, x - (hi - eps), 0.0))
    dr = np.where(below, -1.0, np.where(above, 1.0, 0.0))
    return r, dr


@dataclass(frozen=True, eq=False)
class JointLimit(Factor):
    limits: np.ndarray = None  # (D, 2)
    eps: float = 0.0
    sigma: float = 1e-3
    kind = FactorKind.JOINT_LIMIT

    def error_vector(self, states) -> np.ndarray:
        D = len(self.limits)
        return _double_hinge(np.asarray(states[0])[:D], self.limits[:, 0], self.limits[:, 1], self.eps)[0]

    def linearize(self, states):
        s = np.asarray(states[0])
        D = len(self.limits)
        r, dr = _double_hinge(s[:D], self.limits[:, 0], self.limits[:, 1], self.eps)
        J = np.zeros((D, len(s)))
        J[:, :D] = np.diag(dr)
        return r / self.sigma, [J / self.sigma]


@dataclass(frozen=True, eq=False)
class VelocityLimit(Factor):
    vmax: np.ndarray = None  # (D,)
    eps: float = 0.0
    sigma: float = 1e-3
    kind = FactorKind.VELOCITY_LIMIT

    def error_vector(self, states) -> np.ndarray:
        D = len(self.vmax)
        return _double_hinge(np.asarray(states[0])[D:2 * D], -self.vmax, self.vmax, self.eps)[0]

    def linearize(self, states):
        s = np.asarray(states[0])
        D = len(self.vmax)
        r, dr = _double_hinge(s[D:2 * D], -self.vmax, self.vmax, self.eps)
        J = np.zeros((D, len(s)))
        J[:, D:2 * D] = np.diag(dr)
        return r / self.sigma, [J / self.sigma]


@dataclass(frozen=True, eq=False)
class Equality(Factor):
    """Planar end-effector position pinned to ``target`` with tightness sigma_c."""

    robot: object = None
    target: np.ndarray = None
    sigma: float = 1e-3
    kind = FactorKind.EQUALITY

    def error_vector(self, states) -> np.ndarray:
        D = self.robot.dof
        return self.robot.end_effector(np.asarray(states[0])[:D]) - np.asarray(self.target, float)

    def linearize(self, states):
        s = np.asarray(states[0])
        D = self.robot.dof
        r = self.error_vector(states)
        J = np.zeros((2, len(s)))
        J[:, :D] = self.robot.end_effector_jacobian(s[:D])
        return r / self.sigma, [J / self.sigma]


def residual(factor: Factor, states) -> tuple[np.ndarray, list[np.ndarray]]:
    """Whitened residual and Jacobian blocks of one factor."""
    return factor.linearize([np.asarray(s, dtype=float) for s in states])


@dataclass
class FactorGraph:
    n_states: int
    state_dim: int
    factors: list[Factor]
    prior: TrajectoryPrior | None = None

    def __post_init__(self) -> None:
        for f in self.factors:
            self._check(f)

    def _check(self, f: Factor) -> None:
        if any(not 0 <= k < self.n_states for k in f.keys):
            raise InvalidArgumentError(f"factor {f.kind} keys {f.keys} out of range")
        if len(f.keys) == 2 and f.keys[1] != f.keys[0] + 1:
            raise InvalidArgumentError("binary factors must link adjacent states")

    def add(self, factor: Factor) -> None:
        self._check(factor)
        self.factors.append(factor)

    def of_kind(self, kind: FactorKind) -> list[Factor]:
        return [f for f in self.factors if f.kind is kind]

    def copy(self) -> "FactorGraph":
        return FactorGraph(self.n_states, self.state_dim, list(self.factors), self.prior)


def build_graph(problem: PlanningProblem, prior: TrajectoryPrior | None = None,
                n_ip: int | None = None) -> FactorGraph:
    """Start/goal priors, GP priors, obstacle factors (support and interpolated), limits."""
    prior = prior if prior is not None else problem.prior()
    n_ip = problem.n_ip if n_ip is None else n_ip
    if prior.mean.states.shape[1] != problem.robot.dof * prior.model.order:
        raise InvalidArgumentError("prior dimension does not match the robot")
    p = problem.params
    N = prior.n_segments
    obs = ObstacleParams(p.eps, p.sigma_obs)
    start, goal = problem.endpoint_states(prior)
    factors: list[Factor] = [
        StartPrior((0,), start, prior.k0),
        GoalPrior((N,), goal, prior.kn),
    ]
    for i in range(N):
        factors.append(GpPrior((i, i + 1), prior.phi_blocks[i], prior.q_blocks[i]))
    for i in range(N + 1):
        factors.append(Obstacle((i,), problem.robot, problem.sdf, obs))
    if n_ip > 0:
        op = build_upsample(prior, n_ip)
        for i in range(N):
            for j in range(n_ip):
                factors.append(InterpObstacle((i, i + 1), op.lambdas[j], op.psis[j], float(op.offsets[j]),
                                              problem.robot, problem.sdf, obs))
    lim = problem.robot.joint_limits
    vlim = problem.robot.velocity_limits
    for i in range(N + 1):
        if lim is not None:
            factors.append(JointLimit((i,), lim, p.eps_limit, p.sigma_limit))
        if vlim is not None and prior.model.order >= 2:
            factors.append(VelocityLimit((i,), vlim, p.eps_limit, p.sigma_limit))
    return FactorGraph(N + 1, prior.state_dim, factors, prior)


def _accumulate(A: BlockTridiagonalMatrix, g: np.ndarray, keys, r, Js, offset: int = 0) -> None:
    """Add one factor's J^T J and J^T r into the block system."""
    keys = tuple(k - offset for k in keys)
    if len(keys) == 1:
        (k,), (J,) = keys, Js
        A.diag[k] += J.T @ J
        g[k] += J.T @ r
    else:
        i, j = keys
        Ji, Jj = Js
        A.diag[i] += Ji.T @ Ji
        A.diag[j] += Jj.T @ Jj
        A.lower[i] += Jj.T @ Ji
        g[i] += Ji.T @ r
        g[j] += Jj.T @ r


def _batched_obstacles(factors: list, states: np.ndarray, A, g, offset: int = 0) -> float:
    """Linearize many (interpolated) obstacle factors with one kinematics call."""
    f0 = factors[0]
    robot, sdf, params = f0.robot, f0.sdf, f0.params
    D = robot.dof
    n = states.shape[1]
    s = 1.0 / params.sigma_obs
    unary = [f for f in factors if f.kind is FactorKind.OBSTACLE]
    binary = [f for f in factors if f.kind is FactorKind.INTERP_OBSTACLE]
    err = 0.0
    if unary:
        idx = np.array([f.keys[0] for f in unary]) - offset
        h, dq = h_batch(states[idx, :D], robot, sdf, params)
        h, dq = h * s, dq * s
        err += 0.5 * float(np.sum(h * h))
        JtJ = np.einsum("bmi,bmj->bij", dq, dq)
        Jtr = np.einsum("bmi,bm->bi", dq, h)
        np.add.at(A.diag, (idx, slice(0, D), slice(0, D)), JtJ)
        np.add.at(g, (idx, slice(0, D)), Jtr)
    if binary:
        i_idx = np.array([f.keys[0] for f in binary]) - offset
        lam = np.stack([f.lam for f in binary])
        psi = np.stack([f.psi for f in binary])
        x = np.einsum("bij,bj->bi", lam, states[i_idx]) + np.einsum("bij,bj->bi", psi, states[i_idx + 1])
        h, dq = h_batch(x[:, :D], robot, sdf, params)
        h, dq = h * s, dq * s
        err += 0.5 * float(np.sum(h * h))
        Hi = np.einsum("bmd,bdn->bmn", dq, lam[:, :D, :])
        Hj = np.einsum("bmd,bdn->bmn", dq, psi[:, :D, :])
        np.add.at(A.diag, i_idx, np.einsum("bmi,bmj->bij", Hi, Hi))
        np.add.at(A.diag, i_idx + 1, np.einsum("bmi,bmj->bij", Hj, Hj))
        np.add.at(A.lower, i_idx, np.einsum("bmi,bmj->bij", Hj, Hi))
        np.add.at(g, i_idx, np.einsum("bmi,bm->bi", Hi, h))
        np.add.at(g, i_idx + 1, np.einsum("bmi,bm->bi", Hj, h))
    return err


def _is_obstacle(f: Factor) -> bool:
    return f.kind in (FactorKind.OBSTACLE, FactorKind.INTERP_OBSTACLE)


def _group_obstacles(factors) -> tuple[dict, list]:
    groups: dict = {}
    rest = []
    for f in factors:
        if _is_obstacle(f):
            groups.setdefault((id(f.robot), id(f.sdf), f.params), []).append(f)
        else:
            rest.append(f)
    return groups, rest


def linearize_factors(factors, states: np.ndarray, n_states: int, state_dim: int, offset: int = 0):
    """(A, b, error) for a list of factors, with obstacle factors evaluated in batches.

    ``states`` holds variables ``offset .. offset + n_states - 1``; the
    returned system is over that window only.
    """
    states = np.asarray(states, dtype=float)
    A = BlockTridiagonalMatrix.zeros(n_states, state_dim)
    g = np.zeros((n_states, state_dim))
    groups, rest = _group_obstacles(factors)
    err = 0.0
    for grp in groups.values():
        err += _batched_obstacles(grp, states, A, g, offset)
    for f in rest:
        r, Js = f.linearize([states[k - offset] for k in f.keys])
        err += 0.5 * float(r @ r)
        _accumulate(A, g, f.keys, r, Js, offset)
    return A, -g, err


def linearize(graph: FactorGraph, traj: Trajectory | np.ndarray):
    """Normal equations at ``traj``: A = J^T J (block-tridiagonal), b = -J^T r.

    Returns:
        (A, b, error) with b shaped (N + 1, n) and error = 0.5 sum |r|^2.
    """
    states = traj.states if isinstance(traj, Trajectory) else traj
    return linearize_factors(graph.factors, states, graph.n_states, graph.state_dim)


def linearize_factorwise(graph: FactorGraph, traj: Trajectory | np.ndarray):
    """Same as :func:`linearize` but one factor at a time (reference path)."""
    states = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, dtype=float)
    A = BlockTridiagonalMatrix.zeros(graph.n_states, graph.state_dim)
    g = np.zeros((graph.n_states, graph.state_dim))
    err = 0.0
    for f in graph.factors:
        r, Js = f.linearize([states[k] for k in f.keys])
        err += 0.5 * float(r @ r)
        _accumulate(A, g, f.keys, r, Js)
    return A, -g, err


def _factors_error(factors, states: np.ndarray) -> float:
    groups, rest = _group_obstacles(factors)
    err = 0.0
    for grp in groups.values():
        f0 = grp[0]
        D = f0.robot.dof
        xs = []
        for f in grp:
            if f.kind is FactorKind.OBSTACLE:
                xs.append(states[f.keys[0], :D])
            else:
                xs.append(f.interpolated([states[f.keys[0]], states[f.keys[1]]])[:D])
        h, _ = h_batch(np.array(xs), f0.robot, f0.sdf, f0.params)
        err += 0.5 * float(np.sum(h * h)) / f0.params.sigma_obs**2
    for f in rest:
        err += f.error([states[k] for k in f.keys])
    return err


def graph_error(graph: FactorGraph, traj: Trajectory | np.ndarray) -> float:
    """Total error 0.5 * sum of squared whitened residuals."""
    states = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, dtype=float)
    return _factors_error(graph.factors, states)


@dataclass(frozen=True)
class LMSettings:
    initial_damping: float = 0.01
    max_iterations: int = 100
    rel_tol: float = 1e-4
    max_retries: int = 10
    max_damping: float = 1e6
    clamp: bool = True


@dataclass
class SolveStats:
    iterations: int = 0
    initial_error: float = 0.0
    final_error: float = 0.0
    converged: bool = False
    error_trace: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    damping_overflow: bool = False
    gradient_norm: float = 0.0  # |b|_inf at the last linearization

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "initial_error": self.initial_error,
            "final_error": self.final_error,
            "converged": self.converged,
            "error_trace": list(self.error_trace),
            "wall_time": self.wall_time,
            "damping_overflow": self.damping_overflow,
            "gradient_norm": self.gradient_norm,
        }


def clamp_to_limits(states: np.ndarray, robot) -> np.ndarray:
    """Clip positions (and velocities, if limited) into the robot's limits."""
    out = np.array(states, dtype=float)
    D = robot.dof
    lim = robot.joint_limits
    if lim is not None:
        out[:, :D] = np.clip(out[:, :D], lim[:, 0], lim[:, 1])
    vlim = robot.velocity_limits
    if vlim is not None and out.shape[1] >= 2 * D:
        out[:, D:2 * D] = np.clip(out[:, D:2 * D], -vlim, vlim)
    return out


def _robot_of(graph: FactorGraph):
    for f in graph.factors:
        robot = getattr(f, "robot", None)
        if robot is not None:
            return robot
    return None


def optimize(graph: FactorGraph, init: Trajectory, settings: LMSettings | None = None,
             robot=None) -> tuple[Trajectory, SolveStats]:
    """Levenberg-Marquardt on the factor graph.

    Each iteration solves (A + damping * diag(A)) delta = b. A step is
    accepted only if the total error decreases, after which the damping is
    divided by 10; otherwise it is multiplied by 10 and the step retried.
    Iteration stops when the relative error decrease drops below
    ``rel_tol``, after ``max_iterations``, or when damping exceeds
    ``max_damping`` (reported as non-convergence). Positions are finally
    clamped into the joint limits.
    """
    settings = settings or LMSettings()
    t0 = time.perf_counter()
    theta = np.array(init.states, dtype=float)
    if theta.shape != (graph.n_states, graph.state_dim):
        raise InvalidArgumentError("initial trajectory does not match the graph")
    damping = settings.initial_damping
    A, b, err = linearize(graph, theta)
    stats = SolveStats(initial_error=err, error_trace=[err])
    stats.gradient_norm = float(np.max(np.abs(b)))

    while stats.iterations < settings.max_iterations:
        if err == 0.0 or stats.gradient_norm <= STATIONARY_TOL * max(1.0, err):
            stats.converged = True
            break
        accepted = False
        for _ in range(settings.max_retries):
            try:
                delta = solve_tridiag(A.add_to_diagonal(damping), b)
                cand = theta + delta
                cand_err = graph_error(graph, cand)
            except NumericalFailureError:
                cand_err = np.inf
            if np.isfinite(cand_err) and cand_err < err:
                accepted = True
                break
            damping = max(damping, 1e-12) * 10.0
            if damping > settings.max_damping:
                break
        stats.iterations += 1
        if not accepted:
            stats.damping_overflow = damping > settings.max_damping
            # no descent left: stationary to working precision counts as converged
            stats.converged = stats.gradient_norm <= STATIONARY_TOL * max(1.0, err)
            break
        rel = (err - cand_err) / err
        theta, err = cand, cand_err
        stats.error_trace.append(err)
        damping /= 10.0
        A, b, _ = linearize(graph, theta)
        stats.gradient_norm = float(np.max(np.abs(b)))
        if rel < settings.rel_tol:
            stats.converged = True
            break

    robot = robot if robot is not None else _robot_of(graph)
    if settings.clamp and robot is not None:
        theta = clamp_to_limits(theta, robot)
    stats.final_error = graph_error(graph, theta)
    stats.wall_time = time.perf_counter() - t0
    return init.with_states(theta), stats


def plan(problem: PlanningProblem, init: Trajectory | None = None,
         settings: LMSettings | None = None) -> PlanResult:
    """Solve ``problem`` from the straight-line initialization (or ``init``)."""
    t0 = time.perf_counter()
    prior = problem.prior()
    graph = build_graph(problem, prior)
    p = problem.params
    settings = settings or LMSettings(p.initial_damping, p.max_iterations, p.rel_tol)
    traj, stats = optimize(graph, init if init is not None else prior.mean, settings, problem.robot)
    ev = evaluate(problem, traj, prior)
    return PlanResult(traj, prior, ev, stats.iterations, stats.converged,
                      time.perf_counter() - t0, "gpmp2", stats.to_dict())
