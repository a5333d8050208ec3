import json

import numpy as np
import pytest

from rsmdp.model import Mdp


def random_mdp(seed, n_states=3, n_actions=2, constrained=False,
               cost_range=(0.0, 1.0), floor=0.02, bound=0.6):
    """Dense full-support instance; every action's support is the full state
    set, so the admissible-kernel structure is action-uniform."""
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    p = np.maximum(p, floor)
    p = p / p.sum(axis=2, keepdims=True)
    c = rng.uniform(*cost_range, size=(n_states, n_actions))
    k = rng.uniform(*cost_range, size=(n_states, n_actions)) if constrained else None
    return Mdp(n_states=n_states, n_actions=n_actions, p=p, c=c, k=k,
               bound=bound if constrained else None)


def two_class_mdp(seed, low=0.2, high=0.8, with_transient=True):
    """Two closed classes with different growth, optional transient feeder.

    Supports are action-uniform: within each class every action stays inside
    the class, and the transient state reaches both classes under every
    action, so the one-step support union is policy-independent.
    """
    rng = np.random.default_rng(seed)
    n = 5 if with_transient else 4
    a = 2
    p = np.zeros((n, a, n))
    for u in range(a):
        for i in (0, 1):
            row = rng.dirichlet(np.ones(2))
            row = np.maximum(row, 0.05)
            p[i, u, :2] = row / row.sum()
        for i in (2, 3):
            row = rng.dirichlet(np.ones(2))
            row = np.maximum(row, 0.05)
            p[i, u, 2:4] = row / row.sum()
        if with_transient:
            row = rng.dirichlet(np.ones(4))
            row = np.maximum(row, 0.05)
            p[4, u, :4] = row / row.sum()
    c = np.empty((n, a))
    c[:2] = high + rng.uniform(-0.05, 0.05, size=(2, a))
    c[2:4] = low + rng.uniform(-0.05, 0.05, size=(2, a))
    if with_transient:
        c[4] = rng.uniform(0.0, 1.0, size=a)
    return Mdp(n_states=n, n_actions=a, p=p, c=c)


def benchmark_instance():
    """Single state, two actions, antagonistic costs, active constraint."""
    return Mdp(n_states=1, n_actions=2, p=np.ones((1, 2, 1)),
               c=np.array([[0.0, 1.0]]), k=np.array([[1.0, 0.0]]), bound=0.5)


@pytest.fixture
def tmp_problem(tmp_path):
    def write(doc, name="problem.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path
    return write
