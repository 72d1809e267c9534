import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fd_jacobian, rel_err
from gpplan.errors import InvalidArgumentError
from gpplan.robot import BodyCircle, PlanarArm, PointRobot, load_robot, robot_from_dict

angles = st.floats(-np.pi, np.pi)


def tip_arm():
    return PlanarArm((1.0, 1.0), circles=(BodyCircle(0, 1.0, 0.05), BodyCircle(1, 1.0, 0.05)))


def test_fk_examples():
    arm = tip_arm()
    np.testing.assert_allclose(arm.fk_circles([0, 0])[1], [2, 0], atol=1e-15)
    np.testing.assert_allclose(arm.fk_circles([np.pi / 2, 0])[1], [0, 2], atol=1e-15)
    np.testing.assert_allclose(arm.fk_circles([np.pi / 2, -np.pi / 2])[1], [1, 1], atol=1e-15)


def test_jacobian_examples():
    arm = PlanarArm((0.7,), circles=(BodyCircle(0, 0.7, 0.05),))
    np.testing.assert_allclose(arm.jacobian([0.0], 0), [[0.0], [0.7]], atol=1e-15)
    arm = tip_arm()
    J = arm.jacobian([0.3, -0.2], 0)
    np.testing.assert_array_equal(J[:, 1], 0)


def test_jacobians_match_finite_differences(arm3):
    rng = np.random.default_rng(0)
    worst = 0.0
    for q in rng.uniform(-np.pi, np.pi, size=(100, 3)):
        J = arm3.jacobians(q)
        for m in range(arm3.n_circles):
            fd = fd_jacobian(lambda x: arm3.fk_circles(x)[m], q)
            worst = max(worst, rel_err(J[m], fd))
    assert worst <= 1e-5


def test_workspace_velocity_acceleration_examples():
    arm = PlanarArm((1.0,), circles=(BodyCircle(0, 1.0, 0.05),))
    xd, xdd = arm.workspace_vel_acc([0.0], [0.0], [0.0])
    np.testing.assert_array_equal(xd, 0)
    np.testing.assert_array_equal(xdd, 0)
    xd, xdd = arm.workspace_vel_acc([0.0], [2.0], [0.0])
    np.testing.assert_allclose(xd[0], [0, 2], atol=1e-15)
    np.testing.assert_allclose(xdd[0], [-4, 0], atol=1e-15)


def test_workspace_acceleration_matches_finite_differences(arm3):
    rng = np.random.default_rng(1)
    h = 1e-4
    for _ in range(20):
        q, qd, qdd = rng.normal(size=(3, 3))
        path = lambda t: arm3.fk_circles(q + qd * t + 0.5 * qdd * t * t)  # noqa: E731
        xd, xdd = arm3.workspace_vel_acc(q, qd, qdd)
        fd_v = (path(h) - path(-h)) / (2 * h)
        fd_a = (path(h) - 2 * path(0.0) + path(-h)) / h**2
        assert rel_err(xd, fd_v) <= 1e-4
        assert rel_err(xdd, fd_a) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(q=st.lists(angles, min_size=3, max_size=3))
def test_link_lengths_preserved(q):
    arm = PlanarArm((0.8, 0.7, 0.5), base=(0.3, -1.0, 0.4))
    joints = arm.joint_positions(q)
    np.testing.assert_allclose(np.linalg.norm(np.diff(joints, axis=0), axis=1), arm.link_lengths, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(q=st.lists(angles, min_size=2, max_size=2), dx=st.floats(-5, 5), dy=st.floats(-5, 5))
def test_base_translation_equivariance(q, dx, dy):
    a = PlanarArm((1.0, 0.5))
    b = PlanarArm((1.0, 0.5), base=(dx, dy, 0.0))
    np.testing.assert_allclose(b.fk_circles(q), a.fk_circles(q) + [dx, dy], atol=1e-12)
    np.testing.assert_allclose(b.jacobians(q), a.jacobians(q), atol=1e-12)


def test_batched_shapes(arm3):
    q = np.zeros((4, 5, 3))
    assert arm3.fk_circles(q).shape == (4, 5, arm3.n_circles, 2)
    assert arm3.jacobians(q).shape == (4, 5, arm3.n_circles, 2, 3)


def test_default_circles_spacing():
    arm = PlanarArm((1.0, 0.33))
    for k, L in enumerate(arm.link_lengths):
        offs = np.array([0.0] + [c.offset for c in arm.circles if c.link == k])
        assert np.max(np.diff(offs)) <= 0.05 + 1e-12
        assert offs[-1] == pytest.approx(L)


def test_validation():
    with pytest.raises(InvalidArgumentError):
        PlanarArm((1.0, -1.0))
    with pytest.raises(InvalidArgumentError):
        PlanarArm((1.0,), joint_limits=[[1.0, -1.0]])
    with pytest.raises(InvalidArgumentError):
        PlanarArm((1.0, 1.0), circles=(BodyCircle(0, 0.5, 0.1),))
    with pytest.raises(InvalidArgumentError):
        PlanarArm((1.0,), circles=(BodyCircle(0, 1.5, 0.1),))
    with pytest.raises(InvalidArgumentError):
        PointRobot(-0.1)


def test_point_robot(point_robot):
    q = np.array([0.3, -0.4])
    np.testing.assert_array_equal(point_robot.fk_circles(q), [[0.3, -0.4]])
    np.testing.assert_array_equal(point_robot.jacobian(q), np.eye(2))
    xd, xdd = point_robot.workspace_vel_acc(q, [1.0, 2.0], [3.0, 4.0])
    np.testing.assert_array_equal(xd, [[1.0, 2.0]])
    np.testing.assert_array_equal(xdd, [[3.0, 4.0]])


def test_json_round_trip(tmp_path, arm2, point_robot):
    for robot in (arm2, point_robot):
        path = tmp_path / "r.json"
        path.write_text(json.dumps(robot.to_dict()))
        back = load_robot(path)
        np.testing.assert_array_equal(back.fk_circles(np.ones(2)), robot.fk_circles(np.ones(2)))
        np.testing.assert_array_equal(back.radii, robot.radii)
    with pytest.raises(InvalidArgumentError):
        robot_from_dict({"type": "hexapod"})
