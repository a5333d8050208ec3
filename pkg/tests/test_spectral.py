import math

import numpy as np
import pytest

from conftest import random_mdp, two_class_mdp
from rsmdp import oracle
from rsmdp.errors import ValidationError
from rsmdp.model import Mdp, Policy
from rsmdp.spectral import (build_kernel, evaluate_policy, perron_root,
                            scc_condensation)


def cycle_mdp(costs=(0.2, 0.8)):
    p = np.zeros((2, 1, 2))
    p[0, 0, 1] = 1.0
    p[1, 0, 0] = 1.0
    return Mdp(2, 1, p, np.array([[costs[0]], [costs[1]]]))


# -- build_kernel ---------------------------------------------------------------

def test_kernel_single_state():
    m = Mdp(1, 1, np.ones((1, 1, 1)), np.array([[0.5]]))
    kern = build_kernel(m, Policy.deterministic([0]))
    assert kern.mat[0, 0] == pytest.approx(math.exp(0.5), abs=1e-14)


def test_kernel_cycle():
    kern = build_kernel(cycle_mdp(), Policy.deterministic([0, 0]))
    expected = np.array([[0.0, math.exp(0.2)], [math.exp(0.8), 0.0]])
    assert np.allclose(kern.mat, expected, atol=1e-14)


def test_kernel_randomized_mixture():
    m = Mdp(1, 2, np.ones((1, 2, 1)), np.array([[0.0, 1.0]]))
    kern = build_kernel(m, Policy.randomized([[0.5, 0.5]]))
    assert kern.mat[0, 0] == pytest.approx(0.5 * (1.0 + math.e), abs=1e-14)


def test_kernel_missing_constraint_cost():
    m = cycle_mdp()
    with pytest.raises(ValidationError):
        build_kernel(m, Policy.deterministic([0, 0]), "constraint_k")


def test_kernel_overflow_guard():
    m = Mdp(1, 1, np.ones((1, 1, 1)), np.array([[400.0]]))
    kern = build_kernel(m, Policy.deterministic([0]))
    assert kern.log_scale == 400.0
    res = evaluate_policy(m, Policy.deterministic([0]))
    assert res.lam[0] == pytest.approx(400.0, abs=1e-12)


# -- scc_condensation -----------------------------------------------------------

def test_scc_identity_support():
    p = np.zeros((3, 1, 3))
    for i in range(3):
        p[i, 0, i] = 1.0
    m = Mdp(3, 1, p, np.zeros((3, 1)))
    cond = scc_condensation(build_kernel(m, Policy.deterministic([0, 0, 0])))
    assert len(cond.classes) == 3
    assert all(len(c) == 1 for c in cond.classes)


def test_scc_irreducible_single_class():
    m = random_mdp(1, n_states=4)
    cond = scc_condensation(build_kernel(m, Policy.deterministic([0] * 4)))
    assert len(cond.classes) == 1
    assert cond.classes[0] == (0, 1, 2, 3)


def test_scc_chain_reverse_topological():
    p = np.zeros((2, 1, 2))
    p[0, 0, 1] = 1.0
    p[1, 0, 1] = 1.0
    m = Mdp(2, 1, p, np.zeros((2, 1)))
    cond = scc_condensation(build_kernel(m, Policy.deterministic([0, 0])))
    # sinks first: state 1's class precedes upstream state 0's class
    assert cond.classes == ((1,), (0,))
    assert cond.successors[1] == frozenset({0})


# -- perron_root ------------------------------------------------------------------

def test_perron_scalar():
    assert perron_root(np.array([[2.0]])) == 2.0


def test_perron_periodic_cycle():
    a = np.array([[0.0, math.exp(0.2)], [math.exp(0.8), 0.0]])
    assert perron_root(a) == pytest.approx(math.exp(0.5), rel=1e-12)


def _char_poly_bisection(a):
    """Largest root of det(xI - A): sign-change bisection from the row-sum
    bracket, refined to 1e-12."""
    lo = float(a.sum(axis=1).min())
    hi = float(a.sum(axis=1).max())
    if hi - lo < 1e-9:
        return hi
    def f(x):
        return float(np.linalg.det(x * np.eye(a.shape[0]) - a))
    lo0 = lo
    while f(lo) > 0 and lo > lo0 - 10:   # ensure sign change
        lo -= 0.01
    hi += 1e-9
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_perron_matches_bisection_oracle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = rng.uniform(0.1, 2.0, size=(3, 3))
        assert perron_root(a) == pytest.approx(_char_poly_bisection(a), abs=1e-9)


# -- evaluate_policy ---------------------------------------------------------------

def test_evaluate_cycle_average():
    res = evaluate_policy(cycle_mdp(), Policy.deterministic([0, 0]))
    assert np.allclose(res.lam, [0.5, 0.5], atol=1e-12)
    assert len(res.partition) == 1


def test_evaluate_iid_factorization():
    rng = np.random.default_rng(10)
    pi = rng.dirichlet(np.ones(3))
    cvec = rng.uniform(0, 1, 3)
    p = np.broadcast_to(pi, (3, 2, 3)).copy()
    m = Mdp(3, 2, p, np.column_stack([cvec, cvec]))
    res = evaluate_policy(m, Policy.deterministic([0, 1, 0]))
    expected = math.log(float(np.sum(pi * np.exp(cvec))))
    assert np.allclose(res.lam, expected, atol=1e-12)


def test_evaluate_matches_finite_horizon_oracle():
    m = random_mdp(20, n_states=3, n_actions=2)
    pol = Policy.deterministic([1, 0, 1])
    res = evaluate_policy(m, pol)
    est, _ = oracle.growth_rate_estimate(m, pol, "primary_c", 4000)
    assert np.max(np.abs(res.lam - est)) <= 1e-3
    assert np.max(np.abs(res.lam - est)) <= 10.0 / 4000 + 1e-9


def test_shift_covariance():
    m = random_mdp(21, n_states=4, n_actions=2)
    pol = Policy.randomized(np.random.default_rng(3).dirichlet(np.ones(2), size=4))
    base = evaluate_policy(m, pol).lam
    delta = 0.37
    shifted_m = Mdp(m.n_states, m.n_actions, m.p, m.c + delta)
    shifted = evaluate_policy(shifted_m, pol).lam
    assert np.max(np.abs(shifted - base - delta)) <= 1e-12


def test_cost_monotonicity():
    m = random_mdp(22, n_states=3, n_actions=2)
    pol = Policy.deterministic([0, 1, 0])
    base = evaluate_policy(m, pol).lam
    bigger = Mdp(m.n_states, m.n_actions, m.p,
                 m.c + np.abs(np.random.default_rng(4).uniform(0, 0.5, m.c.shape)))
    assert np.all(evaluate_policy(bigger, pol).lam >= base - 1e-12)


def test_reachability_dominance_multichain():
    m = two_class_mdp(30)
    pol = Policy.deterministic([0] * m.n_states)
    res = evaluate_policy(m, pol)
    kern = build_kernel(m, pol)
    reach = kern.support | np.eye(m.n_states, dtype=bool)
    for _ in range(m.n_states):
        reach = reach | (reach @ reach)
    for i in range(m.n_states):
        for j in range(m.n_states):
            if reach[i, j]:
                assert res.lam[i] >= res.lam[j] - 1e-12


def test_multichain_partition_cells():
    m = two_class_mdp(31)
    res = evaluate_policy(m, Policy.deterministic([0] * m.n_states))
    assert len(res.partition) >= 2
    states = sorted(s for cell in res.partition for s in cell)
    assert states == list(range(m.n_states))
    # transient state carries the worse class's growth
    assert res.lam[4] == pytest.approx(max(res.lam[0], res.lam[2]), abs=1e-12)


def test_deterministic_across_runs():
    m = random_mdp(23, n_states=5, n_actions=3)
    pol = Policy.deterministic([2, 0, 1, 2, 0])
    a = evaluate_policy(m, pol)
    b = evaluate_policy(m, pol)
    assert np.array_equal(a.lam, b.lam)
    assert a.classes == b.classes
