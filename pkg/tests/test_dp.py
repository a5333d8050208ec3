import numpy as np
import pytest

from conftest import random_mdp, two_class_mdp
from rsmdp import oracle
from rsmdp.dp import (face_relative_values, relative_value_iteration,
                      verify_multichain)
from rsmdp.model import Mdp, Policy


def test_single_state_picks_cheaper_action():
    m = Mdp(1, 2, np.ones((1, 2, 1)), np.array([[0.5, 0.2]]))
    sol = relative_value_iteration(m)
    assert sol.lambda_star == pytest.approx(0.2, abs=1e-12)
    assert sol.policy.argmax_actions() == (1,)


def test_zero_cost_gives_zero_growth():
    m = random_mdp(50, n_states=4, n_actions=2, cost_range=(0.0, 0.0))
    sol = relative_value_iteration(m)
    assert sol.lambda_star == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.zeta, 1.0, atol=1e-8)


def test_matches_enumeration_oracle():
    for seed in (51, 52, 53):
        m = random_mdp(seed, n_states=2, n_actions=2)
        sol = relative_value_iteration(m, tol=1e-11)
        rep = oracle.enumerate_policies(m)
        assert sol.lambda_star == pytest.approx(rep.lambda_star, abs=1e-6)


def test_lambda_star_vs_enumeration_four_states():
    m = random_mdp(54, n_states=4, n_actions=4)
    sol = relative_value_iteration(m, tol=1e-11)
    rep = oracle.enumerate_policies(m)   # 4^4 policies
    assert sol.lambda_star == pytest.approx(rep.lambda_star, abs=1e-6)


def test_span_contraction_after_burn_in():
    m = random_mdp(55, n_states=4, n_actions=3)
    sol = relative_value_iteration(m)
    spans = sol.spans[10:]
    assert all(s2 <= s1 + 1e-12 for s1, s2 in zip(spans, spans[1:]))


def test_policy_invariant_under_cost_shift():
    m = random_mdp(56, n_states=3, n_actions=3)
    base = relative_value_iteration(m)
    shifted = relative_value_iteration(
        Mdp(m.n_states, m.n_actions, m.p, m.c + 0.83))
    assert base.policy.argmax_actions() == shifted.policy.argmax_actions()
    assert shifted.lambda_star == pytest.approx(base.lambda_star + 0.83,
                                                abs=1e-8)


def test_reducible_model_warns():
    m = two_class_mdp(57, with_transient=False)
    with pytest.warns(UserWarning, match="reducible"):
        relative_value_iteration(m)


def test_verify_self_consistency():
    m = random_mdp(58, n_states=3, n_actions=2)
    sol = relative_value_iteration(m, tol=1e-11)
    report = verify_multichain(m, sol.psi, sol.v)
    assert report.max_residual < 1e-6


def test_verify_flags_perturbation():
    # cycle: state 1 has no self-mass, so a bump in V[1] lands fully in the
    # residual at state 1
    p = np.zeros((2, 1, 2))
    p[0, 0, 1] = 1.0
    p[1, 0, 0] = 1.0
    m = Mdp(2, 1, p, np.array([[0.2], [0.8]]))
    lam = np.array([0.5, 0.5])
    v = face_relative_values(m, lam, policy=(0, 0))
    clean = verify_multichain(m, lam, v)
    assert clean.max_residual < 1e-9
    bumped = v.copy()
    bumped[1] += 0.1
    report = verify_multichain(m, lam, bumped)
    assert report.max_residual >= 0.1 - 1e-9
    flagged = [c.state for c in report.checks if c.residual_value >= 0.1 - 1e-9]
    assert 1 in flagged


def test_verify_multichain_lp_solution():
    from rsmdp.game_lp import solve_with_generation
    m = two_class_mdp(59)
    sol = solve_with_generation(m)
    report = verify_multichain(m, sol.beta, sol.v)
    assert report.max_residual < 1e-5
    # growth values split by class
    assert abs(sol.beta[0] - sol.beta[2]) > 0.1


def test_face_relative_values_policy_form():
    m = random_mdp(60, n_states=3, n_actions=2)
    pol = (0, 1, 0)
    from rsmdp.spectral import evaluate_policy
    lam = evaluate_policy(m, Policy.deterministic(pol)).lam
    v = face_relative_values(m, lam, policy=pol)
    # evaluation form: the pinned action attains the equation exactly
    for i in range(3):
        u = pol[i]
        val = float(m.c[i, u]) + np.log(float(m.p[i, u] @ np.exp(v)))
        assert val - lam[i] == pytest.approx(v[i], abs=1e-8)
