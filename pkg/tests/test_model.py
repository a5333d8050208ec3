import json

import numpy as np
import pytest

from conftest import random_mdp
from rsmdp.errors import ProblemFormatError, ValidationError
from rsmdp.model import (Mdp, Policy, canonical_json, load_problem,
                         problem_digest, problem_to_dict, save_problem,
                         support_union)


def test_smallest_legal_instance(tmp_problem):
    path = tmp_problem({"states": 1, "actions": 1, "p": [[[1.0]]],
                        "cost": [[0.5]]})
    m = load_problem(path)
    assert m.n_states == 1 and m.n_actions == 1
    assert m.c[0, 0] == 0.5


def test_non_stochastic_row_names_index(tmp_problem):
    path = tmp_problem({"states": 2, "actions": 1,
                        "p": [[[0.5, 0.48]], [[0.5, 0.5]]],
                        "cost": [[0.1], [0.2]]})
    with pytest.raises(ValidationError, match=r"i=0.*u=0"):
        load_problem(path)


def test_negative_probability_names_index():
    p = np.array([[[1.2, -0.2]], [[0.5, 0.5]]])
    with pytest.raises(ValidationError, match=r"p\[0\]\[0\]\[1\]"):
        Mdp(2, 1, p, np.zeros((2, 1)))


def test_shape_mismatch_rejected():
    with pytest.raises(ValidationError, match="shape"):
        Mdp(2, 1, np.ones((2, 1, 2)) * 0.5, np.zeros((3, 1)))


def test_bound_requires_constraint_cost():
    with pytest.raises(ValidationError, match="constraint_cost"):
        Mdp(1, 1, np.ones((1, 1, 1)), np.zeros((1, 1)), bound=1.0)


def test_round_trip_bit_identical(tmp_path):
    m = random_mdp(5, n_states=2, n_actions=2, constrained=True)
    path = tmp_path / "round.json"
    save_problem(m, path)
    m2 = load_problem(path)
    assert np.array_equal(m.p, m2.p)
    assert np.array_equal(m.c, m2.c)
    assert np.array_equal(m.k, m2.k)
    assert m.bound == m2.bound


def test_non_numeric_entry_rejected(tmp_problem):
    path = tmp_problem({"states": 1, "actions": 1, "p": [[["x"]]],
                        "cost": [[0.0]]})
    with pytest.raises(ProblemFormatError):
        load_problem(path)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ProblemFormatError):
        load_problem(path)


def test_support_union_cycle():
    p = np.zeros((2, 1, 2))
    p[0, 0, 1] = 1.0
    p[1, 0, 0] = 1.0
    m = Mdp(2, 1, p, np.zeros((2, 1)))
    assert support_union(m, 0) == frozenset({1})
    assert support_union(m, 1) == frozenset({0})


def test_support_union_full_and_definition():
    m = random_mdp(7, n_states=4, n_actions=3)
    for i in range(4):
        su = support_union(m, i)
        assert su == frozenset(range(4))
        for j in range(4):
            assert (j in su) == (np.max(m.p[i, :, j]) > 1e-15)


def test_policy_roundtrip_and_validation():
    pol = Policy.deterministic([1, 0, 2])
    rand = pol.to_randomized(3)
    assert rand.kind == "randomized"
    assert rand.argmax_actions() == (1, 0, 2)
    with pytest.raises(ValidationError):
        Policy.randomized([[0.5, 0.3]])        # row does not sum to 1
    with pytest.raises(ValidationError):
        Policy(det=(0,), y=np.array([[1.0]]))  # both kinds at once


def test_policy_matrix_is_point_mass():
    pol = Policy.deterministic([1])
    assert np.array_equal(pol.matrix(2), [[0.0, 1.0]])


def test_digest_stable_under_key_reordering():
    m = random_mdp(11, n_states=2, n_actions=2)
    doc = problem_to_dict(m)
    reordered = dict(reversed(list(doc.items())))
    assert problem_digest(doc) == problem_digest(reordered)
    assert canonical_json(doc) == canonical_json(reordered)


def test_mdp_arrays_locked():
    m = random_mdp(3)
    with pytest.raises(ValueError):
        m.p[0, 0, 0] = 0.5
