"""Tests for the projected Bellman error problem (A, b, C)."""

import warnings

import numpy as np
import pytest

from gtd_lab.exceptions import OracleError
from gtd_lab.mdp import FeatureMap, stationary_distribution
from gtd_lab.oracle.bellman import bellman_state_dependent
from gtd_lab.oracle.problem import (
    ProjectedProblem,
    RegularizerSpec,
    build_projected_problem,
    check_unconstrained_regularity,
    eta_scaled_problem,
    grad_J,
    grad_J_expression_a,
    grad_J_expression_b,
    k_bar,
    objective_J,
    objective_Jp,
    projected_bellman_error,
    psi_o,
    solve_x_theta,
    sufficient_x_radius,
)
from gtd_lab.schemas import RegularizerConfig
from gtd_lab.types import RegularizerKind


def _problem(model, lam=None, **kwargs):
    mdp, features = model
    lam = np.zeros(mdp.n_states) if lam is None else lam
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return build_projected_problem(
            mdp, features, bellman_state_dependent(mdp, lam), **kwargs
        )


def test_mdp_a_scalar_problem(mdp_a):
    """Test MDP-A at λ ≡ 0: A = −0.1, b = 1, C = 1 and J(0) = 0.5."""
    prob = _problem(mdp_a)
    np.testing.assert_allclose(prob.A, [[-0.1]], atol=1e-14)
    np.testing.assert_allclose(prob.b, [1.0], atol=1e-14)
    np.testing.assert_allclose(prob.C, [[1.0]], atol=1e-14)
    assert objective_J(prob, np.zeros(1)) == pytest.approx(0.5, abs=1e-14)
    assert objective_J(prob, np.array([10.0])) == pytest.approx(0.0, abs=1e-12)


def test_mdp_a_monte_carlo_b_is_value(mdp_a):
    """Test that λ ≡ 1 gives b = ΦᵀΞv_π = 10 on MDP-A."""
    prob = _problem(mdp_a, lam=np.ones(2))
    np.testing.assert_allclose(prob.b, [10.0], atol=1e-12)
    np.testing.assert_allclose(prob.A, [[-1.0]], atol=1e-12)


def test_mdp_b_problem_values(mdp_b):
    """Test the hand-computed (A, b, C) of MDP-B at λ ≡ 0."""
    prob = _problem(mdp_b)
    np.testing.assert_allclose(prob.A, [[-0.2, -0.1], [-0.1, -0.14]], atol=1e-12)
    np.testing.assert_allclose(prob.b, [1.5, 0.95], atol=1e-12)
    np.testing.assert_allclose(prob.C, [[1.0, 0.5], [0.5, 0.5]], atol=1e-12)


def test_problem_invariants(random_models):
    """Test C symmetric PSD and b, A inside the column space of C."""
    rng = np.random.default_rng(1)
    for model in random_models:
        prob = _problem(model, lam=rng.uniform(size=model[0].n_states))
        res = prob.invariant_residuals()
        assert res["C_asymmetry"] == 0.0
        assert res["C_min_eigenvalue"] >= -1e-12
        assert res["b_outside_columns"] <= 1e-10
        assert res["A_outside_columns"] <= 1e-10


def test_gradient_expressions_agree(random_models):
    """Test that Aᵀx_θ and −(Aθ+b) + (A+C)ᵀx_θ agree and match finite differences."""
    rng = np.random.default_rng(2)
    h = 1e-5
    for model in random_models:
        prob = _problem(model, lam=rng.uniform(size=model[0].n_states))
        theta = rng.normal(size=prob.d)
        ga = grad_J_expression_a(prob, theta)
        gb = grad_J_expression_b(prob, theta)
        assert np.linalg.norm(ga - gb) <= 1e-10 * (1.0 + np.linalg.norm(ga))
        np.testing.assert_array_equal(grad_J(prob, theta), ga)
        fd = np.array(
            [
                (objective_J(prob, theta + h * e) - objective_J(prob, theta - h * e))
                / (2 * h)
                for e in np.eye(prob.d)
            ]
        )
        assert np.linalg.norm(fd - ga) <= 1e-6 * (1.0 + np.linalg.norm(ga))


def test_J_matches_state_space_projection(random_models):
    """Test J(θ) against ½‖Π_ξ(Tv_θ − v_θ)‖²_ξ computed in state space."""
    rng = np.random.default_rng(4)
    for mdp, features in random_models:
        lam = rng.uniform(size=mdp.n_states)
        op = bellman_state_dependent(mdp, lam)
        prob = _problem((mdp, features), lam=lam)
        theta = rng.normal(size=features.d)
        expected = projected_bellman_error(mdp, features, op, theta)
        assert objective_J(prob, theta) == pytest.approx(expected, rel=1e-8, abs=1e-12)


def test_dependent_features_use_the_pseudo_inverse(mdp_b):
    """Test that duplicated feature columns still give a consistent x_θ."""
    mdp, _ = mdp_b
    features = FeatureMap(np.array([[1.0, 1.0], [2.0, 2.0]]))
    prob = _problem((mdp, features))
    x = solve_x_theta(prob, np.array([0.3, -0.1]))
    assert np.linalg.norm(x - prob.column_projector @ x) < 1e-12
    assert np.linalg.matrix_rank(prob.C) == 1


def test_rhs_outside_column_space_raises():
    """Test that an inconsistent system is reported, not silently solved."""
    prob = ProjectedProblem(
        A=np.zeros((2, 2)), b=np.array([0.0, 1.0]), C=np.diag([1.0, 0.0])
    )
    with pytest.raises(OracleError, match="column space"):
        solve_x_theta(prob, np.zeros(2))


def test_saddle_function_identities(mdp_b):
    """Test ψ^o(θ, x_θ) = J(θ) and k̄(θ, x_θ) = 0 without a regularizer."""
    prob = _problem(mdp_b, lam=np.array([0.3, 0.6]))
    theta = np.array([1.0, -2.0])
    x = solve_x_theta(prob, theta)
    assert psi_o(prob, theta, x) == pytest.approx(objective_J(prob, theta), rel=1e-12)
    np.testing.assert_allclose(k_bar(prob, theta, x), 0.0, atol=1e-12)


def test_regularizer(mdp_a):
    """Test the quadratic regularizer value, gradient and asymptotic part."""
    reg = RegularizerSpec(RegularizerKind.QUADRATIC, 0.5, np.array([2.0]))
    assert reg.active
    assert reg.value(np.array([4.0])) == pytest.approx(1.0)
    np.testing.assert_allclose(reg.grad(np.array([4.0])), [1.0])
    assert reg.asymptotic(np.array([4.0])) == pytest.approx(4.0)
    prob = _problem(mdp_a, regularizer=reg)
    assert objective_Jp(prob, np.array([4.0])) == pytest.approx(
        objective_J(prob, np.array([4.0])) + 1.0
    )
    with pytest.raises(OracleError, match="nonnegative"):
        RegularizerSpec(RegularizerKind.QUADRATIC, -1.0)
    with pytest.raises(OracleError, match="center"):
        RegularizerSpec.from_config(
            RegularizerConfig(kind="quadratic", weight=1.0, center=[1.0, 2.0]), 1
        )


def test_eta_scaling_maps_x_coordinates(mdp_b):
    """Test ψ^o_η(θ, x/√η) = ψ^o(θ, x) and the scaled x-ball."""
    prob = _problem(mdp_b, r_x=4.0)
    scaled = eta_scaled_problem(prob, 4.0)
    assert scaled.r_x == pytest.approx(2.0)
    theta, x = np.array([0.5, 1.0]), np.array([-0.3, 0.7])
    assert psi_o(scaled, theta, x / 2.0) == pytest.approx(psi_o(prob, theta, x), rel=1e-12)
    assert eta_scaled_problem(prob, 1.0) is prob
    with pytest.raises(OracleError, match="positive"):
        eta_scaled_problem(prob, 0.0)


def test_small_x_radius_warns(mdp_b):
    """Test the warning when B_x is below the sufficient radius."""
    mdp, features = mdp_b
    op = bellman_state_dependent(mdp, np.zeros(2))
    with pytest.warns(UserWarning, match="sufficient radius"):
        prob = build_projected_problem(mdp, features, op, r_theta=10.0, r_x=0.1)
    assert sufficient_x_radius(prob) > 0.1


def test_sufficient_radius_contains_x_theta(random_models):
    """Test ‖x_θ‖ ≤ sufficient radius for θ on the sphere of radius r_theta."""
    rng = np.random.default_rng(5)
    for model in random_models:
        prob = _problem(model, r_theta=3.0)
        bound = sufficient_x_radius(prob)
        for _ in range(5):
            theta = rng.normal(size=prob.d)
            theta *= 3.0 / np.linalg.norm(theta)
            assert np.linalg.norm(solve_x_theta(prob, theta)) <= bound * (1 + 1e-9)


def test_unconstrained_regularity(mdp_b):
    """Test the regularity condition with and without a quadratic regularizer."""
    plain = _problem(mdp_b)
    assert not check_unconstrained_regularity(plain).passed
    reg = RegularizerSpec(RegularizerKind.QUADRATIC, 0.1)
    result = check_unconstrained_regularity(plain.with_regularizer(reg))
    assert result.passed, result.detail


def test_custom_state_weighting(mdp_a):
    """Test that passing ξ explicitly reproduces the default weighting."""
    mdp, features = mdp_a
    op = bellman_state_dependent(mdp, np.zeros(2))
    default = build_projected_problem(mdp, features, op, r_x=10.0)
    explicit = build_projected_problem(
        mdp, features, op, r_x=10.0, xi=stationary_distribution(mdp)
    )
    np.testing.assert_array_equal(default.A, explicit.A)
