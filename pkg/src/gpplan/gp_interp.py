"""Constant-time GP interpolation between support states and the up-sampling map.

For a Gauss-Markov prior the posterior mean at ``t_i < tau < t_{i+1}`` only
depends on the two adjacent support states::

    theta(tau) = mu(tau) + Lambda(tau) (theta_i - mu_i) + Psi(tau) (theta_{i+1} - mu_{i+1})

Since segments are equidistant, one (Lambda, Psi) table serves every segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .gp_prior import GaussMarkovModel, Trajectory, TrajectoryPrior, _q_closed, transition

__all__ = [
    "InterpCoeffs",
    "UpsampleOperator",
    "lambda_psi",
    "mean_at",
    "interpolate_state",
    "build_upsample",
    "upsample",
    "upsample_deviation",
    "project_gradient",
]


@dataclass(frozen=True)
class InterpCoeffs:
    lam: np.ndarray
    psi: np.ndarray
    segment_index: int
    tau: float


def lambda_psi(model: GaussMarkovModel, t_i: float, t_ip1: float, tau: float,
               segment_index: int = 0) -> InterpCoeffs:
    """Interpolation coefficients for ``t_i <= tau <= t_ip1``.

    Psi = Q(t_i, tau) Phi(t_{i+1}, tau)^T Q(t_i, t_{i+1})^-1 and
    Lambda = Phi(tau, t_i) - Psi Phi(t_{i+1}, t_i).
    """
    if not t_i < t_ip1:
        raise InvalidArgumentError("t_i must be < t_ip1")
    if not t_i <= tau <= t_ip1:
        raise InvalidArgumentError(f"tau={tau} outside [{t_i}, {t_ip1}]")
    n = model.state_dim
    if tau == t_i:
        return InterpCoeffs(np.eye(n), np.zeros((n, n)), segment_index, tau)
    if tau == t_ip1:
        return InterpCoeffs(np.zeros((n, n)), np.eye(n), segment_index, tau)
    dt = t_ip1 - t_i
    q_tau = _q_closed(model, tau - t_i)
    q_full = _q_closed(model, dt)
    # Psi = q_tau Phi_rem^T q_full^-1, computed as a solve on the transpose
    rhs = (q_tau @ transition(model, t_ip1 - tau).T).T
    psi = np.linalg.solve(q_full, rhs).T
    lam = transition(model, tau - t_i) - psi @ transition(model, dt)
    return InterpCoeffs(lam, psi, segment_index, tau)


def _segment_of(times: np.ndarray, tau: float) -> int:
    if not times[0] <= tau <= times[-1]:
        raise InvalidArgumentError(f"tau={tau} outside [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, tau, side="right")) - 1
    return min(max(i, 0), len(times) - 2)


def mean_at(prior: TrajectoryPrior, tau: float) -> np.ndarray:
    """Prior mean propagated from the support state at or before ``tau``."""
    times = prior.times
    i = _segment_of(times, tau)
    return transition(prior.model, tau - times[i]) @ prior.mean.states[i]


def interpolate_state(traj: Trajectory, prior: TrajectoryPrior, tau: float) -> np.ndarray:
    times = traj.times
    i = _segment_of(times, tau)
    if tau == times[i]:
        return np.array(traj.states[i])
    if tau == times[i + 1]:
        return np.array(traj.states[i + 1])
    c = lambda_psi(prior.model, times[i], times[i + 1], tau, i)
    mu = prior.mean.states
    return (
        mean_at(prior, tau)
        + c.lam @ (traj.states[i] - mu[i])
        + c.psi @ (traj.states[i + 1] - mu[i + 1])
    )


@dataclass(frozen=True)
class UpsampleOperator:
    """The tall map M from support-state deviations to dense-trajectory deviations.

    Stored as the shared per-segment coefficient table; M is never formed.
    """

    n_ip: int
    n_segments: int
    state_dim: int
    dt: float
    lambdas: np.ndarray  # (n_ip, n, n)
    psis: np.ndarray  # (n_ip, n, n)
    offsets: np.ndarray  # (n_ip,) times after segment start

    @property
    def n_source(self) -> int:
        return self.n_segments + 1

    @property
    def n_target(self) -> int:
        return self.n_segments + 1 + self.n_segments * self.n_ip

    def support_rows(self) -> np.ndarray:
        """Row index of each support state in the up-sampled trajectory."""
        return np.arange(self.n_segments + 1) * (self.n_ip + 1)

    def times(self, t0: float = 0.0) -> np.ndarray:
        return t0 + np.arange(self.n_target) * (self.dt / (self.n_ip + 1))

    def coeffs(self) -> list[InterpCoeffs]:
        """Coefficient entries for every interpolated row, in up-sampled order."""
        return [
            InterpCoeffs(self.lambdas[j], self.psis[j], i, i * self.dt + self.offsets[j])
            for i in range(self.n_segments)
            for j in range(self.n_ip)
        ]

    def to_dense(self) -> np.ndarray:
        """Explicit M, for tests."""
        n, step = self.state_dim, self.n_ip + 1
        M = np.zeros((self.n_target * n, self.n_source * n))
        for i in range(self.n_source):
            r = i * step
            M[r * n:(r + 1) * n, i * n:(i + 1) * n] = np.eye(n)
        for i in range(self.n_segments):
            for j in range(self.n_ip):
                r = i * step + j + 1
                M[r * n:(r + 1) * n, i * n:(i + 1) * n] = self.lambdas[j]
                M[r * n:(r + 1) * n, (i + 1) * n:(i + 2) * n] = self.psis[j]
        return M


def build_upsample(prior: TrajectoryPrior, n_ip: int) -> UpsampleOperator:
    """Operator inserting ``n_ip`` equidistant states strictly inside each segment."""
    if n_ip < 0:
        raise InvalidArgumentError("n_ip must be >= 0")
    n = prior.state_dim
    dt = prior.dt
    offsets = dt * np.arange(1, n_ip + 1) / (n_ip + 1)
    lambdas = np.empty((n_ip, n, n))
    psis = np.empty((n_ip, n, n))
    for j, off in enumerate(offsets):
        c = lambda_psi(prior.model, 0.0, dt, float(off))
        lambdas[j], psis[j] = c.lam, c.psi
    return UpsampleOperator(n_ip, prior.n_segments, n, dt, lambdas, psis, offsets)


def upsample_deviation(op: UpsampleOperator, dev: np.ndarray) -> np.ndarray:
    """M @ dev with ``dev`` shaped (N + 1, n); returns (n_target, n)."""
    dev = np.asarray(dev, dtype=float)
    if dev.shape != (op.n_source, op.state_dim):
        raise InvalidArgumentError(f"expected deviation shape {(op.n_source, op.state_dim)}")
    step = op.n_ip + 1
    out = np.empty((op.n_target, op.state_dim))
    out[::step] = dev
    if op.n_ip:
        # (segments, n_ip, n)
        inner = (np.einsum("jab,ib->ija", op.lambdas, dev[:-1])
                 + np.einsum("jab,ib->ija", op.psis, dev[1:]))
        for j in range(op.n_ip):
            out[j + 1::step] = inner[:, j]
    return out


def _mean_up(op: UpsampleOperator, prior: TrajectoryPrior) -> np.ndarray:
    mu = prior.mean.states
    step = op.n_ip + 1
    out = np.empty((op.n_target, op.state_dim))
    out[::step] = mu
    for j, off in enumerate(op.offsets):
        phi = transition(prior.model, float(off))
        out[j + 1::step] = mu[:-1] @ phi.T
    return out


def upsample(op: UpsampleOperator, traj: Trajectory, prior: TrajectoryPrior) -> Trajectory:
    """Dense trajectory M (theta - mu) + mu_up; support rows are copied exactly."""
    dev = traj.states - prior.mean.states
    states = upsample_deviation(op, dev) + _mean_up(op, prior)
    states[::op.n_ip + 1] = traj.states
    return Trajectory(states, op.times(traj.times[0]))


def project_gradient(op: UpsampleOperator, g_up: np.ndarray) -> np.ndarray:
    """M^T g_up: fold a gradient over the dense trajectory onto support states."""
    g_up = np.asarray(g_up, dtype=float)
    if g_up.shape != (op.n_target, op.state_dim):
        raise InvalidArgumentError(f"expected gradient shape {(op.n_target, op.state_dim)}")
    step = op.n_ip + 1
    g = np.array(g_up[::step])
    for j in range(op.n_ip):
        rows = g_up[j + 1::step]
        g[:-1] += rows @ op.lambdas[j]
        g[1:] += rows @ op.psis[j]
    return g
