"""Planar robots approximated by body circles.

Both robot types expose the same vectorized interface over configurations
shaped ``(..., D)``:

* ``fk_circles(q)`` -> circle centres ``(..., M, 2)``
* ``jacobians(q)`` -> positional Jacobians ``(..., M, 2, D)``
* ``workspace_vel_acc(q, qdot, qddot)`` -> centre velocities and accelerations
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["BodyCircle", "PlanarArm", "PointRobot", "robot_from_dict", "load_robot"]


@dataclass(frozen=True)
class BodyCircle:
    link: int
    offset: float
    radius: float


def _perp(v: np.ndarray) -> np.ndarray:
    """Rotate 2-vectors (last axis) by +90 degrees."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _limits(arr, dof: int, name: str) -> np.ndarray | None:
    if arr is None:
        return None
    out = np.asarray(arr, dtype=float)
    if out.shape != (dof, 2) or np.any(out[:, 0] >= out[:, 1]):
        raise InvalidArgumentError(f"{name} must be {dof} pairs with min < max")
    return out


@dataclass(frozen=True)
class PlanarArm:
    """Serial revolute chain in the plane.

    Joint ``k`` rotates link ``k``; absolute link angles are the base angle plus
    the running sum of joint angles.
    """

    link_lengths: tuple[float, ...]
    base: tuple[float, float, float] = (0.0, 0.0, 0.0)
    joint_limits: np.ndarray | None = None  # (D, 2)
    velocity_limits: np.ndarray | None = None  # (D,)
    circles: tuple[BodyCircle, ...] = ()
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        lengths = tuple(float(x) for x in self.link_lengths)
        if not lengths or any(L <= 0 for L in lengths):
            raise InvalidArgumentError("link lengths must be > 0")
        object.__setattr__(self, "link_lengths", lengths)
        if len(self.base) != 3:
            raise InvalidArgumentError("base must be (x, y, angle)")
        D = len(lengths)
        object.__setattr__(self, "joint_limits", _limits(self.joint_limits, D, "joint_limits"))
        if self.velocity_limits is not None:
            vl = np.asarray(self.velocity_limits, dtype=float)
            if vl.shape != (D,) or np.any(vl <= 0):
                raise InvalidArgumentError("velocity_limits must be D positive values")
            object.__setattr__(self, "velocity_limits", vl)
        circles = tuple(self.circles) or self.default_circles(lengths)
        covered = set()
        for c in circles:
            if not 0 <= c.link < D:
                raise InvalidArgumentError(f"circle link index {c.link} out of range")
            if not -1e-12 <= c.offset <= lengths[c.link] + 1e-12:
                raise InvalidArgumentError("circle offset must lie on its link")
            if c.radius < 0:
                raise InvalidArgumentError("circle radius must be >= 0")
            covered.add(c.link)
        if len(covered) != D:
            raise InvalidArgumentError("every link needs at least one body circle")
        object.__setattr__(self, "circles", circles)
        # W[m, l]: length of link l contributing to circle m's centre
        W = np.zeros((len(circles), D))
        for m, c in enumerate(circles):
            W[m, :c.link] = lengths[:c.link]
            W[m, c.link] = c.offset
        object.__setattr__(self, "_weights", W)

    @staticmethod
    def default_circles(lengths, radius: float = 0.05) -> tuple[BodyCircle, ...]:
        """Circles spaced at most one radius apart along every link."""
        out = []
        for k, L in enumerate(lengths):
            n = max(int(np.ceil(L / radius)), 1)
            out.extend(BodyCircle(k, float(o), radius) for o in np.linspace(0.0, L, n + 1)[1:])
        return tuple(out)

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    @property
    def n_circles(self) -> int:
        return len(self.circles)

    @property
    def radii(self) -> np.ndarray:
        return np.array([c.radius for c in self.circles])

    def _angles(self, q: np.ndarray) -> np.ndarray:
        return self.base[2] + np.cumsum(q, axis=-1)

    def _dirs(self, q: np.ndarray) -> np.ndarray:
        phi = self._angles(q)
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)  # (..., D, 2)

    def joint_positions(self, q) -> np.ndarray:
        """Joint origins plus the tip, ``(..., D + 1, 2)``."""
        q = np.asarray(q, dtype=float)
        steps = self._dirs(q) * np.asarray(self.link_lengths)[:, None]
        base = np.broadcast_to(np.asarray(self.base[:2], dtype=float), steps[..., :1, :].shape)
        return np.concatenate([base, base + np.cumsum(steps, axis=-2)], axis=-2)

    def end_effector(self, q) -> np.ndarray:
        return self.joint_positions(q)[..., -1, :]

    def end_effector_jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        p = self.joint_positions(q)
        J = _perp(p[..., -1:, :] - p[..., :-1, :])  # (..., D, 2)
        return np.swapaxes(J, -1, -2)

    def fk_circles(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.asarray(self.base[:2]) + np.einsum("ml,...lk->...mk", self._weights, self._dirs(q))

    def jacobians(self, q) -> np.ndarray:
        """dx_m/dq_j = sum over links l >= j of W[m, l] * perp(u_l)."""
        q = np.asarray(q, dtype=float)
        pu = _perp(self._dirs(q))  # (..., D, 2)
        terms = self._weights[:, :, None] * pu[..., None, :, :]  # (..., M, D, 2)
        # reverse cumulative sum over links gives the contribution of joint j
        J = np.flip(np.cumsum(np.flip(terms, axis=-2), axis=-2), axis=-2)
        return np.swapaxes(J, -1, -2)  # (..., M, 2, D)

    def jacobian(self, q, circle_index: int) -> np.ndarray:
        if not 0 <= circle_index < self.n_circles:
            raise InvalidArgumentError(f"circle index {circle_index} out of range")
        return self.jacobians(q)[..., circle_index, :, :]

    def workspace_vel_acc(self, q, qdot, qddot) -> tuple[np.ndarray, np.ndarray]:
        """Circle-centre velocities and accelerations, each ``(..., M, 2)``.

        xdot = J qdot and xddot = J qddot + Jdot qdot, where the second term
        is the centripetal part -sum_l W[m, l] * phidot_l^2 * u_l.
        """
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        qddot = np.asarray(qddot, dtype=float)
        J = self.jacobians(q)
        xdot = np.einsum("...mkd,...d->...mk", J, qdot)
        phidot = np.cumsum(qdot, axis=-1)
        centripetal = np.einsum("ml,...l,...lk->...mk", self._weights, phidot**2, self._dirs(q))
        xddot = np.einsum("...mkd,...d->...mk", J, qddot) - centripetal
        return xdot, xddot

    def to_dict(self) -> dict:
        out = {
            "type": "planar_arm",
            "link_lengths": list(self.link_lengths),
            "base": list(self.base),
            "circles": [{"link": c.link, "offset": c.offset, "radius": c.radius} for c in self.circles],
        }
        if self.joint_limits is not None:
            out["joint_limits"] = self.joint_limits.tolist()
        if self.velocity_limits is not None:
            out["velocity_limits"] = self.velocity_limits.tolist()
        return out


@dataclass(frozen=True)
class PointRobot:
    """A disk moving freely in the plane; the configuration is its centre."""

    radius: float
    position_limits: np.ndarray | None = None  # (2, 2): [[xmin, xmax], [ymin, ymax]]
    velocity_limits: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise InvalidArgumentError("radius must be >= 0")
        object.__setattr__(self, "position_limits", _limits(self.position_limits, 2, "position_limits"))
        if self.velocity_limits is not None:
            vl = np.asarray(self.velocity_limits, dtype=float)
            if vl.shape != (2,) or np.any(vl <= 0):
                raise InvalidArgumentError("velocity_limits must be 2 positive values")
            object.__setattr__(self, "velocity_limits", vl)

    dof = 2
    n_circles = 1

    @property
    def joint_limits(self) -> np.ndarray | None:
        return self.position_limits

    @property
    def radii(self) -> np.ndarray:
        return np.array([self.radius])

    def fk_circles(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float)[..., None, :]

    def jacobians(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(np.eye(2), q.shape[:-1] + (1, 2, 2)).copy()

    def jacobian(self, q, circle_index: int = 0) -> np.ndarray:
        if circle_index != 0:
            raise InvalidArgumentError("a point robot has one circle")
        return self.jacobians(q)[..., 0, :, :]

    def workspace_vel_acc(self, q, qdot, qddot) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(qdot, float)[..., None, :], np.asarray(qddot, float)[..., None, :]

    def end_effector(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float)

    def end_effector_jacobian(self, q) -> np.ndarray:
        return self.jacobians(q)[..., 0, :, :]

    def joint_positions(self, q) -> np.ndarray:
        return self.fk_circles(q)

    def to_dict(self) -> dict:
        out = {"type": "point", "radius": self.radius}
        if self.position_limits is not None:
            out["position_limits"] = self.position_limits.tolist()
        if self.velocity_limits is not None:
            out["velocity_limits"] = self.velocity_limits.tolist()
        return out


def robot_from_dict(data: dict):
    kind = data.get("type", "planar_arm")
    if kind == "planar_arm":
        circles = tuple(
            BodyCircle(int(c["link"]), float(c["offset"]), float(c["radius"]))
            for c in data.get("circles", [])
        )
        return PlanarArm(
            tuple(data["link_lengths"]),
            tuple(float(x) for x in data.get("base", (0.0, 0.0, 0.0))),
            data.get("joint_limits"),
            data.get("velocity_limits"),
            circles,
        )
    if kind == "point":
        return PointRobot(float(data["radius"]), data.get("position_limits"), data.get("velocity_limits"))
    raise InvalidArgumentError(f"unknown robot type {kind!r}")


def load_robot(path):
    return robot_from_dict(json.loads(Path(path).read_text()))
