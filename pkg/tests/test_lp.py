import itertools

import numpy as np
import pytest

from rsmdp.errors import SolverError
from rsmdp.lp import StandardLp, solve_lp


def test_min_x_subject_to_one():
    sol = solve_lp(StandardLp.build([1.0], a_ge=[[1.0]], b_ge=[1.0]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.objective_value == pytest.approx(1.0, abs=1e-12)


def test_textbook_vertex():
    # min -3x - 2y  s.t.  x + y <= 4, x <= 2  ->  -10 at (2, 2)
    sol = solve_lp(StandardLp.build([-3.0, -2.0],
                                    a_ge=[[-1.0, -1.0], [-1.0, 0.0]],
                                    b_ge=[-4.0, -2.0]))
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(-10.0, abs=1e-10)
    assert np.allclose(sol.x, [2.0, 2.0], atol=1e-10)


def test_infeasible():
    sol = solve_lp(StandardLp.build([0.0], a_ge=[[1.0], [-1.0]], b_ge=[1.0, 0.0]))
    assert sol.status == "infeasible"


def test_unbounded():
    sol = solve_lp(StandardLp.build([-1.0], a_ge=[[1.0]], b_ge=[0.0]))
    assert sol.status == "unbounded"


def test_equality_and_free_variable():
    # min y  s.t.  x + y = 3,  y >= x - 5,  x free, y >= 0:
    # y = 0 with x = 3 satisfies everything
    sol = solve_lp(StandardLp.build([0.0, 1.0], a_eq=[[1.0, 1.0]], b_eq=[3.0],
                                    a_ge=[[-1.0, 1.0]], b_ge=[-5.0],
                                    free_vars=[0]))
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(0.0, abs=1e-10)
    assert sol.x[0] == pytest.approx(3.0, abs=1e-10)


def test_upper_bound_support():
    sol = solve_lp(StandardLp.build([-1.0], upper=[2.5]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(2.5, abs=1e-10)


def _vertex_enumeration_optimum(c, a_ge, b_ge):
    """Brute force: every choice of n active constraints among ge rows and
    nonnegativity bounds; minimize over feasible vertices."""
    n = len(c)
    rows = [(np.asarray(r, dtype=float), float(b)) for r, b in zip(a_ge, b_ge)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append((e, 0.0))
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        a = np.vstack([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            continue
        feas = all(float(r @ x) >= bb - 1e-9 for r, bb in rows)
        if feas:
            val = float(np.dot(c, x))
            if best is None or val < best:
                best = val
    return best


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(42)
    solved = 0
    for _ in range(60):
        n = int(rng.integers(2, 5))
        mrows = int(rng.integers(n, 9))
        c = rng.integers(-5, 6, size=n).astype(float)
        a = rng.integers(-5, 6, size=(mrows, n)).astype(float)
        b = rng.integers(-5, 1, size=mrows).astype(float)   # origin feasible
        lp = StandardLp.build(c, a_ge=a, b_ge=b)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            continue
        expected = _vertex_enumeration_optimum(c, a, b)
        assert expected is not None
        assert sol.objective_value == pytest.approx(expected, abs=1e-7)
        solved += 1
    assert solved >= 20


def test_strong_duality_on_returns():
    rng = np.random.default_rng(43)
    for _ in range(30):
        n = int(rng.integers(2, 5))
        mrows = int(rng.integers(2, 8))
        c = rng.uniform(-3, 3, size=n)
        a = rng.uniform(-2, 2, size=(mrows, n))
        b = rng.uniform(-2, 2, size=mrows)
        sol = solve_lp(StandardLp.build(c, a_ge=a, b_ge=b))
        if sol.status != "optimal":
            continue
        dual_obj = float(b @ sol.dual_ge)
        assert dual_obj == pytest.approx(sol.objective_value, abs=1e-8)
        assert np.all(sol.dual_ge >= -1e-9)


def test_row_permutation_invariance():
    rng = np.random.default_rng(44)
    n, mrows = 3, 6
    c = rng.uniform(-2, 2, size=n)
    a = rng.uniform(-2, 2, size=(mrows, n))
    b = rng.uniform(-2, 0, size=mrows)
    base = solve_lp(StandardLp.build(c, a_ge=a, b_ge=b))
    assert base.status == "optimal"
    perm = rng.permutation(mrows)
    permuted = solve_lp(StandardLp.build(c, a_ge=a[perm], b_ge=b[perm]))
    assert permuted.objective_value == pytest.approx(base.objective_value,
                                                     abs=1e-10)


def test_nonfinite_coefficients_rejected():
    from rsmdp.errors import ValidationError
    with pytest.raises(ValidationError):
        StandardLp.build([float("inf")])
