"""Obstacle costs on body circles and their derivatives.

Two cost families are provided. The hinge loss feeds the factor-graph
planner as a residual; the smooth piecewise-quadratic cost feeds the
gradient planner's arc-length weighted objective.

``sdf`` arguments accept any object with ``query_and_gradient(points)``
returning (distances, gradients); :class:`~gpplan.workspace.SignedDistanceField2D`
is the usual one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .gp_interp import lambda_psi, mean_at
from .gp_prior import TrajectoryPrior

__all__ = [
    "ObstacleParams",
    "hinge",
    "smooth_cost",
    "circle_clearance",
    "h_batch",
    "h_state",
    "h_jacobian",
    "h_interp",
    "gpmp_obstacle_gradient",
    "gpmp_obstacle_cost",
]

KINK_TOL = 1e-12
MIN_SPEED = 1e-8


@dataclass(frozen=True)
class ObstacleParams:
    eps: float = 0.2
    sigma_obs: float = 0.02

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise InvalidArgumentError("eps must be > 0")
        if not self.sigma_obs > 0:
            raise InvalidArgumentError("sigma_obs must be > 0")


def hinge(d, eps: float):
    """c = max(eps - d, 0) and dc/dd (-1, -0.5 at the kink, 0)."""
    d = np.asarray(d, dtype=float)
    c = np.maximum(eps - d, 0.0)
    dc = np.where(d < eps, -1.0, 0.0)
    dc = np.where(np.abs(d - eps) <= KINK_TOL, -0.5, dc)
    if d.ndim == 0:
        return float(c), float(dc)
    return c, dc


def smooth_cost(d, eps: float):
    """Piecewise-quadratic penalty, continuously differentiable at 0 and eps."""
    d = np.asarray(d, dtype=float)
    inside = d < 0
    band = (d >= 0) & (d <= eps)
    c = np.where(inside, -d + 0.5 * eps, np.where(band, (d - eps) ** 2 / (2 * eps), 0.0))
    dc = np.where(inside, -1.0, np.where(band, (d - eps) / eps, 0.0))
    if d.ndim == 0:
        return float(c), float(dc)
    return c, dc


def circle_clearance(q, robot, sdf):
    """Signed clearance of each body circle, ``(..., M)``, and its workspace gradient."""
    centers = robot.fk_circles(q)
    dist, grad = sdf.query_and_gradient(centers)
    return dist - robot.radii, grad


def h_batch(q, robot, sdf, params: ObstacleParams):
    """Hinge costs ``(..., M)`` and their configuration Jacobians ``(..., M, D)``."""
    d, grad = circle_clearance(q, robot, sdf)
    c, dc = hinge(d, params.eps)
    J = robot.jacobians(q)  # (..., M, 2, D)
    dq = np.einsum("...m,...mk,...mkd->...md", dc, grad, J)
    return np.asarray(c), dq


def h_state(q, robot, sdf, params: ObstacleParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)[: robot.dof]
    d, _ = circle_clearance(q, robot, sdf)
    return np.asarray(hinge(d, params.eps)[0])


def h_jacobian(q, robot, sdf, params: ObstacleParams, order: int = 2) -> np.ndarray:
    """Jacobian of :func:`h_state` w.r.t. the full state (position block only nonzero)."""
    q = np.asarray(q, dtype=float)[: robot.dof]
    _, dq = h_batch(q, robot, sdf, params)
    out = np.zeros((robot.n_circles, robot.dof * order))
    out[:, : robot.dof] = dq
    return out


def h_interp(state_i, state_j, prior: TrajectoryPrior, tau: float, robot, sdf,
             params: ObstacleParams, segment: int = 0):
    """Hinge costs at the interpolated state and Jacobians w.r.t. both support states.

    ``tau`` is an absolute time inside segment ``segment``.

    Returns:
        (h, H_i, H_j) with H_* shaped (M, D * p).
    """
    times = prior.times
    if not 0 <= segment < prior.n_segments:
        raise InvalidArgumentError(f"segment {segment} out of range")
    t_i, t_j = times[segment], times[segment + 1]
    coeffs = lambda_psi(prior.model, t_i, t_j, tau, segment)
    mu = prior.mean.states
    x = mean_at(prior, tau) \
        + coeffs.lam @ (np.asarray(state_i, float) - mu[segment]) \
        + coeffs.psi @ (np.asarray(state_j, float) - mu[segment + 1])
    h = h_state(x, robot, sdf, params)
    Hx = h_jacobian(x, robot, sdf, params, prior.model.order)
    return h, Hx @ coeffs.lam, Hx @ coeffs.psi


def _split_state(state, dof: int):
    s = np.asarray(state, dtype=float)
    if s.shape[-1] != 3 * dof:
        raise InvalidArgumentError("the gradient planner needs position/velocity/acceleration states")
    return s[..., :dof], s[..., dof:2 * dof], s[..., 2 * dof:]


def gpmp_obstacle_gradient(state, robot, sdf, params: ObstacleParams) -> np.ndarray:
    """Arc-length weighted obstacle gradient for one or many (..., 3D) states.

    Per body circle, with v = |xdot|, xhat = xdot / v, P = I - xhat xhat^T and
    kappa = P xddot / v^2:

        position block     J^T v (P grad c - c kappa)
        velocity block     J^T c xhat
        acceleration block 0

    Circles moving slower than ``MIN_SPEED`` contribute nothing.
    """
    D = robot.dof
    q, qd, qdd = _split_state(state, D)
    d, grad_d = circle_clearance(q, robot, sdf)
    c, dc = smooth_cost(d, params.eps)
    c = np.asarray(c)
    grad_c = np.asarray(dc)[..., None] * grad_d
    xd, xdd = robot.workspace_vel_acc(q, qd, qdd)
    J = robot.jacobians(q)

    v = np.linalg.norm(xd, axis=-1)
    moving = v >= MIN_SPEED
    safe_v = np.where(moving, v, 1.0)
    xhat = xd / safe_v[..., None]
    proj = lambda w: w - np.sum(xhat * w, axis=-1, keepdims=True) * xhat  # noqa: E731
    kappa = proj(xdd) / (safe_v**2)[..., None]
    ws_pos = safe_v[..., None] * (proj(grad_c) - c[..., None] * kappa)
    ws_vel = c[..., None] * xhat
    ws_pos = np.where(moving[..., None], ws_pos, 0.0)
    ws_vel = np.where(moving[..., None], ws_vel, 0.0)

    out = np.zeros(np.shape(state))
    out[..., :D] = np.einsum("...mkd,...mk->...d", J, ws_pos)
    out[..., D:2 * D] = np.einsum("...mkd,...mk->...d", J, ws_vel)
    return out


def gpmp_obstacle_cost(state, robot, sdf, params: ObstacleParams) -> np.ndarray:
    """Integrand sum_m c(x_m) |xdot_m| for one or many (..., 3D) states."""
    D = robot.dof
    q, qd, qdd = _split_state(state, D)
    d, _ = circle_clearance(q, robot, sdf)
    c, _ = smooth_cost(d, params.eps)
    xd, _ = robot.workspace_vel_acc(q, qd, qdd)
    return np.sum(np.asarray(c) * np.linalg.norm(xd, axis=-1), axis=-1)
