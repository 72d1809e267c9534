"""Gauss-Markov trajectory priors generated by linear SDEs.

A trajectory is a stack of support states ``theta_i = [q; qdot; (qddot)]`` at
equidistant times. The white-noise-on-the-highest-derivative models used here
give closed-form transition matrices ``Phi`` and process-noise blocks ``Q``,
and the resulting prior has an exactly block-tridiagonal precision
``K^-1 = B^T Q^-1 B``. A dense kernel is also available as a test oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .blocktri import BlockTridiagonalMatrix
from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "PriorKind",
    "GaussMarkovModel",
    "Trajectory",
    "TrajectoryPrior",
    "transition",
    "q_block",
    "build_prior",
    "precision",
    "unconditioned_kernel",
    "dense_kernel_oracle",
    "gp_prior_cost",
    "gp_residual",
    "DEFAULT_ENDPOINT_COV",
]

DEFAULT_ENDPOINT_COV = 1e-4


class PriorKind(enum.Enum):
    """Which derivative is driven by white noise; the value is the state order p."""

    RANDOM_WALK = 1  # position-only; the finite-difference (CHOMP-style) degenerate case
    CONSTANT_VELOCITY = 2
    CONSTANT_ACCELERATION = 3


@dataclass(frozen=True)
class GaussMarkovModel:
    kind: PriorKind
    dof: int
    qc: float = 1.0

    def __post_init__(self) -> None:
        if self.dof < 1:
            raise InvalidArgumentError("dof must be >= 1")
        if not self.qc > 0:
            raise InvalidArgumentError("qc must be > 0")

    @property
    def order(self) -> int:
        return self.kind.value

    @property
    def state_dim(self) -> int:
        return self.dof * self.order

    @classmethod
    def constant_velocity(cls, dof: int, qc: float = 1.0) -> "GaussMarkovModel":
        return cls(PriorKind.CONSTANT_VELOCITY, dof, qc)

    @classmethod
    def constant_acceleration(cls, dof: int, qc: float = 1.0) -> "GaussMarkovModel":
        return cls(PriorKind.CONSTANT_ACCELERATION, dof, qc)


@dataclass(frozen=True)
class Trajectory:
    """Support states (rows) at strictly increasing, equidistant times."""

    states: np.ndarray  # (N + 1, D * p)
    times: np.ndarray  # (N + 1,)

    def __post_init__(self) -> None:
        states = np.array(self.states, dtype=float)
        times = np.array(self.times, dtype=float)
        if states.ndim != 2 or times.ndim != 1 or len(times) != len(states):
            raise InvalidArgumentError("states must be (N+1, n) and times (N+1,)")
        if len(times) < 2:
            raise InvalidArgumentError("a trajectory needs at least two states")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise InvalidArgumentError("times must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-12 * max(abs(times[-1]), steps[0]) * len(steps):
            raise InvalidArgumentError("times must be equidistant")
        states.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)

    @property
    def n_segments(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return (self.times[-1] - self.times[0]) / self.n_segments

    def with_states(self, states: np.ndarray) -> "Trajectory":
        return Trajectory(states, self.times)

    def positions(self, dof: int) -> np.ndarray:
        return self.states[:, :dof]


def _scalar_transition(order: int, dt: float) -> np.ndarray:
    phi = np.zeros((order, order))
    for a in range(order):
        for b in range(a, order):
            phi[a, b] = dt ** (b - a) / factorial(b - a)
    return phi


def _scalar_q(order: int, dt: float) -> np.ndarray:
    # integral of Phi F F^T Phi^T over [0, dt] for white noise on derivative (order - 1)
    q = np.empty((order, order))
    for a in range(order):
        for b in range(order):
            power = 2 * order - 1 - a - b
            q[a, b] = dt**power / (power * factorial(order - 1 - a) * factorial(order - 1 - b))
    return q


def transition(model: GaussMarkovModel, dt: float) -> np.ndarray:
    """State transition matrix Phi(t + dt, t)."""
    if dt < 0:
        raise InvalidArgumentError(f"dt must be >= 0, got {dt}")
    return np.kron(_scalar_transition(model.order, dt), np.eye(model.dof))


def _q_closed(model: GaussMarkovModel, dt: float) -> np.ndarray:
    if dt == 0:
        return np.zeros((model.state_dim, model.state_dim))
    return model.qc * np.kron(_scalar_q(model.order, dt), np.eye(model.dof))


def q_block(model: GaussMarkovModel, dt: float) -> np.ndarray:
    """Process-noise covariance accumulated over an interval of length dt."""
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be > 0, got {dt}")
    return _q_closed(model, dt)


@dataclass(frozen=True)
class TrajectoryPrior:
    model: GaussMarkovModel
    mean: Trajectory
    phi_blocks: np.ndarray  # (N, n, n)
    q_blocks: np.ndarray  # (N, n, n)
    k0: np.ndarray
    kn: np.ndarray
    _q_chol: list = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = self.mean.states.shape[1]
        N = self.mean.n_segments
        if self.phi_blocks.shape != (N, n, n) or self.q_blocks.shape != (N, n, n):
            raise InvalidArgumentError("phi/q blocks must be (N, n, n) matching the mean")
        if self.k0.shape != (n, n) or self.kn.shape != (n, n):
            raise InvalidArgumentError("endpoint covariances must be (n, n)")
        chols = []
        for i, q in enumerate(self.q_blocks):
            try:
                chols.append(cho_factor(q, lower=True))
            except np.linalg.LinAlgError as exc:
                raise NumericalFailureError(f"q block {i} is not positive-definite") from exc
        object.__setattr__(self, "_q_chol", chols)

    @property
    def n_segments(self) -> int:
        return self.mean.n_segments

    @property
    def state_dim(self) -> int:
        return self.mean.states.shape[1]

    @property
    def dt(self) -> float:
        return self.mean.dt

    @property
    def times(self) -> np.ndarray:
        return self.mean.times

    def q_solve(self, i: int, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._q_chol[i], rhs)


def _as_position(vec, model: GaussMarkovModel, name: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float).ravel()
    if len(v) == model.dof:
        return v
    if len(v) == model.state_dim:
        return v[: model.dof]
    raise InvalidArgumentError(
        f"{name} has length {len(v)}; expected {model.dof} or {model.state_dim}"
    )


def build_prior(
    model: GaussMarkovModel,
    start,
    goal,
    n_segments: int,
    total_time: float,
    k0: np.ndarray | float | None = None,
    kn: np.ndarray | float | None = None,
) -> TrajectoryPrior:
    """Prior whose mean is the constant-velocity straight line from start to goal.

    ``start``/``goal`` may be configurations (length D) or full states; only
    the position block is used. ``k0``/``kn`` accept a matrix or a scalar
    multiple of the identity and default to ``1e-4 * I``.
    """
    if n_segments < 1:
        raise InvalidArgumentError("n_segments must be >= 1")
    if not total_time > 0:
        raise InvalidArgumentError("total_time must be > 0")
    q0 = _as_position(start, model, "start")
    qn = _as_position(goal, model, "goal")
    n = model.state_dim
    D = model.dof

    times = np.linspace(0.0, total_time, n_segments + 1)
    frac = times / total_time
    mean = np.zeros((n_segments + 1, n))
    mean[:, :D] = q0 + np.outer(frac, qn - q0)
    if model.order >= 2:
        mean[:, D:2 * D] = (qn - q0) / total_time

    dt = total_time / n_segments
    phi = transition(model, dt)
    q = q_block(model, dt)

    def _cov(value):
        if value is None:
            return DEFAULT_ENDPOINT_COV * np.eye(n)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return float(arr) * np.eye(n)
        return arr

    return TrajectoryPrior(
        model=model,
        mean=Trajectory(mean, times),
        phi_blocks=np.repeat(phi[None], n_segments, axis=0),
        q_blocks=np.repeat(q[None], n_segments, axis=0),
        k0=_cov(k0),
        kn=_cov(kn),
    )


def _spd_inverse(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        c = cho_factor(mat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"{what} is not positive-definite") from exc
    return cho_solve(c, np.eye(len(mat)))


def precision(prior: TrajectoryPrior) -> BlockTridiagonalMatrix:
    """Inverse kernel B^T Q^-1 B assembled block by block (B never formed)."""
    N, n = prior.n_segments, prior.state_dim
    out = BlockTridiagonalMatrix.zeros(N + 1, n)
    out.diag[0] += _spd_inverse(prior.k0, "k0")
    out.diag[N] += _spd_inverse(prior.kn, "kN")
    for i in range(N):
        phi = prior.phi_blocks[i]
        qinv_phi = prior.q_solve(i, phi)
        out.diag[i] += phi.T @ qinv_phi
        out.diag[i + 1] += prior.q_solve(i, np.eye(n))
        out.lower[i] = -qinv_phi
    # symmetrize away round-off so downstream Cholesky sees an exactly symmetric matrix
    out.diag = 0.5 * (out.diag + np.transpose(out.diag, (0, 2, 1)))
    return out


def unconditioned_kernel(model: GaussMarkovModel, k0: np.ndarray, times) -> np.ndarray:
    """Dense SDE kernel K~(t_i, t_j) for sorted ``times`` starting at the initial time.

    For t_i <= t_j: Phi(t_i,t0) K0 Phi(t_j,t0)^T + Q(t0,t_i) Phi(t_j,t_i)^T.
    """
    times = np.asarray(times, dtype=float)
    n = model.state_dim
    t0 = times[0]
    m = len(times)
    K = np.zeros((m * n, m * n))
    phis = [transition(model, t - t0) for t in times]
    for i in range(m):
        qi = _q_closed(model, times[i] - t0)
        for j in range(i, m):
            blk = phis[i] @ k0 @ phis[j].T + qi @ transition(model, times[j] - times[i]).T
            K[i * n:(i + 1) * n, j * n:(j + 1) * n] = blk
            K[j * n:(j + 1) * n, i * n:(i + 1) * n] = blk.T
    return K


def dense_kernel_oracle(prior: TrajectoryPrior) -> np.ndarray:
    """Dense prior covariance: the SDE kernel conditioned on a goal observation.

    O(N^3); intended for tests on small problems.
    """
    n = prior.state_dim
    Kt = unconditioned_kernel(prior.model, prior.k0, prior.times)
    cross = Kt[-n:, :]  # K~(t_N, t)
    gain = np.linalg.solve(Kt[-n:, -n:] + prior.kn, cross)
    K = Kt - cross.T @ gain
    return 0.5 * (K + K.T)


def gp_residual(state_i, state_j, prior: TrajectoryPrior, i: int) -> np.ndarray:
    """Phi(t_{i+1}, t_i) theta_i - theta_{i+1} (the control term is zero)."""
    if not 0 <= i < prior.n_segments:
        raise InvalidArgumentError(f"segment index {i} out of range")
    return prior.phi_blocks[i] @ np.asarray(state_i, dtype=float) - np.asarray(state_j, dtype=float)


def gp_prior_cost(traj: Trajectory, prior: TrajectoryPrior) -> float:
    """0.5 * ||theta - mu||^2_K evaluated through the factored precision."""
    theta = np.asarray(traj.states)
    if theta.shape != prior.mean.states.shape:
        raise InvalidArgumentError(
            f"trajectory shape {theta.shape} does not match prior {prior.mean.states.shape}"
        )
    dev = theta - prior.mean.states
    cost = dev[0] @ np.linalg.solve(prior.k0, dev[0]) + dev[-1] @ np.linalg.solve(prior.kn, dev[-1])
    for i in range(prior.n_segments):
        r = prior.phi_blocks[i] @ dev[i] - dev[i + 1]
        cost += r @ prior.q_solve(i, r)
    return 0.5 * float(cost)
