import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpplan.errors import InvalidArgumentError
from gpplan.gp_prior import (
    GaussMarkovModel,
    PriorKind,
    Trajectory,
    build_prior,
    dense_kernel_oracle,
    gp_prior_cost,
    gp_residual,
    precision,
    q_block,
    transition,
    unconditioned_kernel,
)

CV, CA = PriorKind.CONSTANT_VELOCITY, PriorKind.CONSTANT_ACCELERATION


def test_transition_closed_forms():
    np.testing.assert_array_equal(transition(GaussMarkovModel(CV, 2), 0.5),
                                  np.block([[np.eye(2), 0.5 * np.eye(2)], [np.zeros((2, 2)), np.eye(2)]]))
    np.testing.assert_array_equal(transition(GaussMarkovModel(CV, 1), 0.0), np.eye(2))
    np.testing.assert_array_equal(transition(GaussMarkovModel(CA, 1), 2.0),
                                  [[1, 2, 2], [0, 1, 2], [0, 0, 1]])


def test_transition_rejects_negative_dt():
    with pytest.raises(InvalidArgumentError):
        transition(GaussMarkovModel(CV, 1), -0.1)


def test_q_block_constant_velocity():
    np.testing.assert_allclose(q_block(GaussMarkovModel(CV, 1, 1.0), 1.0), [[1 / 3, 1 / 2], [1 / 2, 1]])
    np.testing.assert_allclose(q_block(GaussMarkovModel(CV, 1, 1.0), 0.5), [[1 / 24, 1 / 8], [1 / 8, 1 / 2]])


def test_q_block_constant_acceleration_matches_quadrature():
    # frozen from numerical quadrature of Phi F Qc F^T Phi^T over [0, 1] with qc = 2
    expected = [[0.1, 0.25, 1 / 3], [0.25, 2 / 3, 1.0], [1 / 3, 1.0, 2.0]]
    np.testing.assert_allclose(q_block(GaussMarkovModel(CA, 1, 2.0), 1.0), expected, rtol=1e-12)


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_q_block_rejects_nonpositive_dt(dt):
    with pytest.raises(InvalidArgumentError):
        q_block(GaussMarkovModel(CV, 1), dt)


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from([CV, CA]), dof=st.integers(1, 3), qc=st.floats(0.1, 10.0),
       dt=st.floats(1e-3, 10.0))
def test_q_block_is_spd(kind, dof, qc, dt):
    q = q_block(GaussMarkovModel(kind, dof, qc), dt)
    np.testing.assert_array_equal(q, q.T)
    np.linalg.cholesky(q)


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(list(PriorKind)), a=st.integers(0, 8), b=st.integers(0, 8))
def test_transition_semigroup(kind, a, b):
    # dyadic steps keep every product exact in floating point
    m = GaussMarkovModel(kind, 2)
    dt1, dt2 = a / 4, b / 4
    np.testing.assert_array_equal(transition(m, dt1) @ transition(m, dt2), transition(m, dt1 + dt2))


def test_build_prior_mean_is_straight_line():
    m = GaussMarkovModel(CA, 2)
    prior = build_prior(m, [0.0, 1.0], [2.0, -1.0], 4, 2.0)
    mu = prior.mean.states
    np.testing.assert_allclose(mu[:, :2], np.linspace([0, 1], [2, -1], 5))
    np.testing.assert_allclose(mu[:, 2:4], np.tile([1.0, -1.0], (5, 1)))
    np.testing.assert_array_equal(mu[:, 4:], 0.0)
    assert prior.phi_blocks.shape == (4, 6, 6)
    np.testing.assert_allclose(prior.q_blocks[0], q_block(m, 0.5))
    np.testing.assert_array_equal(prior.k0, 1e-4 * np.eye(6))


def test_build_prior_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        build_prior(GaussMarkovModel(CV, 2), [0.0, 1.0, 2.0], [1.0, 1.0], 3, 1.0)


def test_chomp_reduction_n2():
    m = GaussMarkovModel(PriorKind.RANDOM_WALK, 1, 1.0)
    prior = build_prior(m, [0.0], [1.0], 2, 2.0, k0=1.0, kn=1.0)
    np.testing.assert_array_equal(precision(prior).to_dense(), [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])


def test_precision_frozen_constant_velocity():
    # frozen from inverting an independently built dense kernel (quadrature Q, goal conditioning)
    prior = build_prior(GaussMarkovModel(CV, 1, 1.0), [0.0], [1.0], 3, 3.0)
    P = precision(prior)
    np.testing.assert_allclose(P.block(0, 0), [[10012.0, 6.0], [6.0, 10004.0]], rtol=1e-10)
    np.testing.assert_allclose(P.block(1, 0), [[-12.0, -6.0], [6.0, 2.0]], rtol=1e-10)
    np.testing.assert_allclose(P.block(1, 1), [[24.0, 0.0], [0.0, 8.0]], atol=1e-10)
    np.testing.assert_allclose(P.to_dense() @ dense_kernel_oracle(prior), np.eye(8), atol=1e-8)


def test_precision_single_segment_symmetric():
    prior = build_prior(GaussMarkovModel(CV, 2), [0, 0], [1, 1], 1, 1.0)
    P = precision(prior).to_dense()
    assert P.shape == (8, 8)
    np.testing.assert_array_equal(P, P.T)


def test_precision_is_structurally_tridiagonal():
    prior = build_prior(GaussMarkovModel(CA, 2), [0, 0], [1, 1], 6, 3.0)
    P = precision(prior)
    assert P.allocated_blocks() == {(i, j) for i in range(7) for j in range(7) if abs(i - j) <= 1}


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from([CV, CA]), dof=st.integers(1, 3), n=st.integers(1, 10),
       qc=st.floats(0.1, 10.0), dt=st.floats(0.1, 1.0))
def test_precision_inverts_dense_oracle(kind, dof, n, qc, dt):
    prior = build_prior(GaussMarkovModel(kind, dof, qc), np.zeros(dof), np.ones(dof), n, n * dt)
    err = np.max(np.abs(precision(prior).to_dense() @ dense_kernel_oracle(prior) - np.eye((n + 1) * dof * kind.value)))
    assert err <= 1e-6


def test_dense_oracle_spd_and_weak_goal_limit():
    m = GaussMarkovModel(CV, 1)
    prior = build_prior(m, [0.0], [1.0], 3, 3.0, kn=1e12)
    K = dense_kernel_oracle(prior)
    np.linalg.cholesky(K)
    Kt = unconditioned_kernel(m, prior.k0, prior.times)
    np.testing.assert_allclose(K, Kt, atol=1e-9)


def test_gp_prior_cost_examples():
    prior = build_prior(GaussMarkovModel(CV, 1), [0.0], [1.0], 1, 1.0, kn=1e-2)
    assert gp_prior_cost(prior.mean, prior) == 0.0
    theta = np.array(prior.mean.states)
    theta[1, 0] += 0.1
    traj = prior.mean.with_states(theta)
    # frozen from the dense quadratic form with an independently built kernel
    assert gp_prior_cost(traj, prior) == pytest.approx(0.56, rel=1e-8)
    doubled = prior.mean.with_states(prior.mean.states + 2 * (theta - prior.mean.states))
    assert gp_prior_cost(doubled, prior) == pytest.approx(4 * gp_prior_cost(traj, prior), rel=1e-14)


def test_gp_prior_cost_matches_dense_form():
    rng = np.random.default_rng(3)
    prior = build_prior(GaussMarkovModel(CA, 2, 0.7), [0, 0], [1, 2], 5, 2.5)
    dev = rng.normal(size=prior.mean.states.shape) * 0.1
    traj = prior.mean.with_states(prior.mean.states + dev)
    dense = 0.5 * dev.ravel() @ precision(prior).to_dense() @ dev.ravel()
    assert gp_prior_cost(traj, prior) == pytest.approx(dense, rel=1e-10)


def test_gp_residual_examples():
    prior = build_prior(GaussMarkovModel(CV, 1), [0.0], [1.0], 1, 1.0)
    np.testing.assert_array_equal(gp_residual([0, 1], [1, 1], prior, 0), [0, 0])
    np.testing.assert_array_equal(gp_residual([0, 1], [0.5, 1], prior, 0), [0.5, 0])
    with pytest.raises(InvalidArgumentError):
        gp_residual([0, 1], [1, 1], prior, 1)


def test_trajectory_validation():
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((3, 2)), [0.0, 1.0, 1.5])
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((3, 2)), [0.0, 1.0, 1.0])
    t = Trajectory(np.zeros((3, 2)), [0.0, 0.5, 1.0])
    assert not t.states.flags.writeable
