"""Motion priors: transition matrices, interval covariances, the coupling
matrix R, and the two algebraically equal energy routes.

The quadrature oracle integrates the defining covariance integral
W(dt) = int_0^dt Phi(dt, s) L Q_C L' Phi(dt, s)' ds with the trapezoid rule,
independent of the closed forms under test.
"""

import numpy as np
import pytest

from rangecert.prior import (
    KIND_CONSTANT_VELOCITY,
    KIND_NONE,
    KIND_ZERO_VELOCITY,
    MotionPrior,
    assemble_R,
    interval_covariance,
    interval_covariance_inverse,
    prior_energy,
    transition,
)

ALL_KINDS = (KIND_NONE, KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY)


def _quadrature_w(kind, q_c, dt, nodes=10_000):
    d = q_c.shape[0]
    s = np.linspace(0.0, dt, nodes)
    if kind == KIND_ZERO_VELOCITY:
        # Phi = I and L = I: the integrand is constant.
        vals = np.repeat(q_c[None, :, :], nodes, axis=0)
        k = d
    else:
        k = 2 * d
        vals = np.empty((nodes, k, k))
        for i, si in enumerate(s):
            rem = dt - si
            phi_l = np.vstack([rem * np.eye(d), np.eye(d)])
            vals[i] = phi_l @ q_c @ phi_l.T
    return np.trapezoid(vals, s, axis=0) if hasattr(np, "trapezoid") \
        else np.trapz(vals, s, axis=0)


def test_transition_constant_velocity_half_step():
    phi = transition(KIND_CONSTANT_VELOCITY, 0.5, 0.0, 2)
    expected = np.block([[np.eye(2), 0.5 * np.eye(2)],
                         [np.zeros((2, 2)), np.eye(2)]])
    np.testing.assert_allclose(phi, expected)


def test_transition_zero_lag_is_identity():
    for kind, k in ((KIND_ZERO_VELOCITY, 2), (KIND_CONSTANT_VELOCITY, 4)):
        np.testing.assert_allclose(transition(kind, 3.0, 3.0, 2), np.eye(k))


def test_transition_zero_velocity_is_identity():
    np.testing.assert_allclose(transition(KIND_ZERO_VELOCITY, 7.0, 2.0, 3),
                               np.eye(3))


def test_transition_backwards_interval_rejected():
    with pytest.raises(ValueError):
        transition(KIND_CONSTANT_VELOCITY, 0.0, 1.0, 2)


def test_interval_covariance_zero_velocity_closed_form():
    sigma_a = 0.7
    w = interval_covariance(KIND_ZERO_VELOCITY, sigma_a * np.eye(2), 2.0)
    np.testing.assert_allclose(w, 2.0 * sigma_a * np.eye(2))


def test_interval_covariance_constant_velocity_unit_case():
    w = interval_covariance(KIND_CONSTANT_VELOCITY, np.eye(1), 1.0)
    np.testing.assert_allclose(w, np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]]))


@pytest.mark.parametrize("dt", [0.01, 0.1, 1.0, 10.0])
@pytest.mark.parametrize("kind", [KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY])
def test_interval_covariance_matches_quadrature(kind, dt):
    rng = np.random.default_rng(5)
    a = rng.normal(size=(2, 2))
    q_c = a @ a.T + 0.5 * np.eye(2)
    w = interval_covariance(kind, q_c, dt)
    oracle = _quadrature_w(kind, q_c, dt)
    err = np.abs(w - oracle).max() / np.abs(oracle).max()
    assert err < 1e-6


@pytest.mark.parametrize("kind", [KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY])
def test_interval_covariance_positive_definite_shrinking(kind):
    q_c = np.diag([0.3, 1.2])
    prev = None
    for dt in (1.0, 1e-2, 1e-4):
        w = interval_covariance(kind, q_c, dt)
        eigs = np.linalg.eigvalsh(w)
        assert eigs[0] > 0
        if prev is not None:
            assert eigs[-1] < prev
        prev = eigs[-1]


def test_interval_covariance_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        interval_covariance(KIND_ZERO_VELOCITY, np.eye(2), 0.0)


def test_interval_covariance_inverse_consistent():
    q_c = np.array([[0.5, 0.1], [0.1, 0.4]])
    for kind in (KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY):
        w = interval_covariance(kind, q_c, 0.7)
        w_inv = interval_covariance_inverse(kind, q_c, 0.7)
        np.testing.assert_allclose(w @ w_inv, np.eye(w.shape[0]), atol=1e-10)


def test_assemble_R_two_step_zero_velocity():
    sigma = 1.7
    prior = MotionPrior(KIND_ZERO_VELOCITY, sigma**2 * np.eye(2), 2)
    rmat = assemble_R(prior, np.array([0.0, 1.0]))
    dense = rmat.to_dense()
    eye = np.eye(2)
    expected = np.block([[eye, -eye], [-eye, eye]]) / sigma**2
    np.testing.assert_allclose(dense, expected)


def test_quadratic_route_equals_factor_route():
    prior = MotionPrior.isotropic(KIND_CONSTANT_VELOCITY, 0.2, 2)
    times = np.array([0.0, 0.4, 1.1, 1.9, 3.0])
    rmat = assemble_R(prior, times)
    rng = np.random.default_rng(21)
    for _ in range(100):
        theta = rng.normal(size=5 * 4)
        quad = rmat.quadratic(theta) / 5
        factor = prior_energy(prior, times, theta)
        assert abs(quad - factor) < 1e-12 * (1 + abs(factor))


def test_R_positive_semidefinite():
    rng = np.random.default_rng(3)
    for trial in range(20):
        kind = (KIND_ZERO_VELOCITY, KIND_CONSTANT_VELOCITY)[trial % 2]
        n = int(rng.integers(2, 9))
        times = np.cumsum(rng.uniform(0.05, 2.0, n))
        prior = MotionPrior.isotropic(kind, float(rng.uniform(0.05, 2.0)), 2)
        dense = assemble_R(prior, times).to_dense()
        eigs = np.linalg.eigvalsh(dense)
        assert eigs[0] > -1e-8 * max(1.0, eigs[-1])


def test_prior_energy_on_mean_flow_is_zero():
    prior = MotionPrior.isotropic(KIND_CONSTANT_VELOCITY, 0.5, 2)
    times = np.array([0.0, 0.5, 1.25, 2.0])
    theta = np.empty((4, 4))
    theta[0] = [0.3, -0.2, 1.0, 0.4]
    for i in range(1, 4):
        phi = transition(KIND_CONSTANT_VELOCITY, times[i], times[i - 1], 2)
        theta[i] = phi @ theta[i - 1]
    assert prior_energy(prior, times, theta.reshape(-1)) < 1e-25


def test_prior_energy_two_point_example():
    prior = MotionPrior(KIND_ZERO_VELOCITY, np.eye(2), 2)
    theta = np.array([0.0, 0.0, 1.0, 0.0])
    energy = prior_energy(prior, np.array([0.0, 1.0]), theta)
    assert energy == pytest.approx(0.5)


def test_kind_none_prior_is_inert():
    prior = MotionPrior.isotropic(KIND_NONE, 0.2, 2)
    times = np.array([0.0, 1.0, 2.0])
    rmat = assemble_R(prior, times)
    theta = np.arange(6.0)
    assert rmat.quadratic(theta) == 0.0
    assert prior_energy(prior, times, theta) == 0.0
    np.testing.assert_array_equal(rmat.matvec(theta), np.zeros(6))


def test_invalid_spectral_density_rejected():
    with pytest.raises(ValueError):
        MotionPrior(KIND_CONSTANT_VELOCITY, np.array([[1.0, 2.0],
                                                      [2.0, 1.0]]), 2)
    with pytest.raises(ValueError):
        MotionPrior(KIND_CONSTANT_VELOCITY, np.eye(3), 2)


def test_state_dimensions():
    assert MotionPrior.isotropic(KIND_NONE, 0.1, 3).state_dim == 3
    assert MotionPrior.isotropic(KIND_ZERO_VELOCITY, 0.1, 3).state_dim == 3
    assert MotionPrior.isotropic(KIND_CONSTANT_VELOCITY, 0.1, 3).state_dim == 6
