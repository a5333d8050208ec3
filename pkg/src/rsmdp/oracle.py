"""Brute-force ground truth, written against the raw definitions.

Everything here is deliberately independent of the solver modules: the
finite-horizon recursion works straight from the exponentiated-sum
definition, policy enumeration evaluates growth rates through dense
eigenvalues and reachability closures rather than the condensation-based
evaluator, and Monte Carlo simulates trajectories.  Only
`constrained_grid_search` borrows the spectral evaluator, for speed; one test
cross-checks it against the recursion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rsmdp.errors import GuardExceeded, ValidationError
from rsmdp.model import Mdp, Policy

ENUMERATION_GUARD = 10 ** 6
GRID_GUARD = 10 ** 6


@dataclass(frozen=True)
class EnumerationReport:
    """Exhaustive deterministic-policy table for small instances."""

    per_policy_lam: np.ndarray          # [policy_index][state]
    policies: tuple[tuple[int, ...], ...]
    min_lam: np.ndarray                 # min over policies, per state
    argmin_policy: tuple[int, ...]      # first policy index attaining the min
    lambda_star: float                  # max_i min_v

@dataclass(frozen=True)
class GridSearchReport:
    feasible: bool
    best_policy: Policy | None
    best_cost: float | None             # max-state primary log-growth
    best_constraint: float | None       # max-state constraint log-growth
    evaluated: int = 0


def _policy_rows(m: Mdp, pol: Policy) -> np.ndarray:
    pol.validate_for(m)
    return pol.matrix(m.n_actions)


def finite_horizon_value(m: Mdp, pol: Policy, cost_tag: str, n_steps: int) -> np.ndarray:
    """log E_i[exp(sum of the first N per-stage costs)] for every start state.

    Backward recursion u_{n+1} = A u_n on the multiplicative kernel, run with
    per-step renormalization so the log value never overflows for |c| <= 700.
    """
    if n_steps < 1:
        raise ValidationError("horizon must be >= 1")
    cost = m.cost_matrix(cost_tag)
    y = _policy_rows(m, pol)
    top = float(np.max(cost))
    kernel = np.einsum("iu,iuj->ij", y * np.exp(cost - top), m.p)
    vec = np.ones(m.n_states)
    total = 0.0
    for _ in range(n_steps):
        vec = kernel @ vec
        s = float(vec.max())
        vec /= s
        total += math.log(s) + top
    with np.errstate(divide="ignore"):
        return total + np.log(vec)


def growth_rate_estimate(m: Mdp, pol: Policy, cost_tag: str, n_steps: int):
    """(1/N) log of the finite-horizon value, plus a tail-slope bracket.

    The slope over the last ceil(N/10) steps sheds the O(1/N) transient and
    is reported alongside.
    """
    if n_steps < 100:
        raise ValidationError("growth estimates need N >= 100")
    delta = -(-n_steps // 10)
    v_full = finite_horizon_value(m, pol, cost_tag, n_steps)
    v_early = finite_horizon_value(m, pol, cost_tag, n_steps - delta)
    return v_full / n_steps, (v_full - v_early) / delta


def _reach_closure(adj: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure of a boolean adjacency matrix."""
    n = adj.shape[0]
    reach = adj | np.eye(n, dtype=bool)
    for _ in range(n):
        nxt = reach | (reach @ reach)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    return reach

def _lam_by_eigvals(kernel: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Per-state growth rates via dense eigenvalues on reachable submatrices."""
    n = kernel.shape[0]
    reach = _reach_closure(support)
    lam = np.empty(n)
    for i in range(n):
        idx = np.nonzero(reach[i])[0]
        sub = kernel[np.ix_(idx, idx)]
        rho = float(np.max(np.abs(np.linalg.eigvals(sub))))
        lam[i] = math.log(rho) if rho > 0.0 else float("-inf")
    return lam


def policy_growth_rates(m: Mdp, pol: Policy, cost_tag: str) -> np.ndarray:
    """Exact per-state log-growth rates from the raw kernel spectrum."""
    cost = m.cost_matrix(cost_tag)
    y = _policy_rows(m, pol)
    kernel = np.einsum("iu,iuj->ij", y * np.exp(cost), m.p)
    support = np.einsum("iu,iuj->ij", (y > 1e-15).astype(float),
                        (m.p > 1e-15).astype(float)) > 0.0
    return _lam_by_eigvals(kernel, support)


def enumerate_policies(m: Mdp, cost_tag: str = "primary_c") -> EnumerationReport:
    """Evaluate every deterministic stationary policy; record per-state minima
    and the max-over-states of those minima."""
    count = m.n_actions ** m.n_states
    if count > ENUMERATION_GUARD:
        raise GuardExceeded(
            f"{count} deterministic policies exceed the {ENUMERATION_GUARD} guard")
    policies = list(itertools.product(range(m.n_actions), repeat=m.n_states))
    table = np.empty((count, m.n_states))
    for pi, assignment in enumerate(policies):
        table[pi] = policy_growth_rates(m, Policy.deterministic(assignment), cost_tag)
    min_lam = table.min(axis=0)
    argmin = tuple(int(np.argmin(table[:, i])) for i in range(m.n_states))
    return EnumerationReport(
        per_policy_lam=table, policies=tuple(policies), min_lam=min_lam,
        argmin_policy=argmin, lambda_star=float(min_lam.max()))


def monte_carlo_cost(m: Mdp, pol: Policy, cost_tag: str, n_steps: int,
                     n_paths: int, seed: int):
    """(1/N) log mean exp(path cost sums) and a delta-method CI half-width."""
    cost = m.cost_matrix(cost_tag)
    y = _policy_rows(m, pol)
    rng = np.random.default_rng(seed)
    cum_actions = np.cumsum(y, axis=1)
    cum_next = np.cumsum(m.p, axis=2)
    # all paths start from state 0; other starts are a relabeling away
    states = np.zeros(n_paths, dtype=np.intp)
    sums = np.zeros(n_paths)
    for _ in range(n_steps):
        ru = rng.random(n_paths)
        actions = np.empty(n_paths, dtype=np.intp)
        for i in np.unique(states):
            mask = states == i
            actions[mask] = np.searchsorted(cum_actions[i], ru[mask])
        np.clip(actions, 0, m.n_actions - 1, out=actions)
        sums += cost[states, actions]
        rj = rng.random(n_paths)
        nxt = np.empty(n_paths, dtype=np.intp)
        for i, u in set(zip(states.tolist(), actions.tolist())):
            mask = (states == i) & (actions == u)
            nxt[mask] = np.searchsorted(cum_next[i, u], rj[mask])
        np.clip(nxt, 0, m.n_states - 1, out=nxt)
        states = nxt
    top = float(sums.max())
    w = np.exp(sums - top)
    mean_w = float(w.mean())
    estimate = (top + math.log(mean_w)) / n_steps
    sd_w = float(w.std(ddof=1)) if n_paths > 1 else 0.0
    half_width = 1.96 * sd_w / (math.sqrt(n_paths) * mean_w) / n_steps
    return estimate, half_width


def _simplex_grid(n_points: int, dim: int):
    """Integer compositions of n_points into dim parts, scaled to the simplex."""
    for comp in itertools.combinations(range(n_points + dim - 1), dim - 1):
        parts = []
        prev = -1
        for cut in comp:
            parts.append(cut - prev - 1)
            prev = cut
        parts.append(n_points + dim - 2 - prev)
        yield np.array(parts, dtype=float) / n_points


def constrained_grid_search(m: Mdp, mesh: int) -> GridSearchReport:
    """Best randomized stationary policy on a per-state simplex mesh subject
    to the constraint-cost growth bound; spectral evaluation per grid point."""
    from rsmdp.spectral import evaluate_policy   # allowed shortcut, cross-checked

    if m.k is None or m.bound is None:
        raise ValidationError("grid search needs constraint_cost and bound")
    per_state = math.comb(mesh + m.n_actions - 1, m.n_actions - 1)
    total = per_state ** m.n_states
    if total > GRID_GUARD:
        raise GuardExceeded(f"grid of {total} policies exceeds {GRID_GUARD}")
    rows = list(_simplex_grid(mesh, m.n_actions))
    best = None
    evaluated = 0
    for combo in itertools.product(rows, repeat=m.n_states):
        pol = Policy.randomized(np.vstack(combo))
        lam_k = float(evaluate_policy(m, pol, "constraint_k").lam.max())
        evaluated += 1
        if lam_k > m.bound + 1e-12:
            continue
        lam_c = float(evaluate_policy(m, pol, "primary_c").lam.max())
        if best is None or lam_c < best[0]:
            best = (lam_c, lam_k, pol)
    if best is None:
        return GridSearchReport(feasible=False, best_policy=None, best_cost=None,
                                best_constraint=None, evaluated=evaluated)
    return GridSearchReport(feasible=True, best_policy=best[2], best_cost=best[0],
                            best_constraint=best[1], evaluated=evaluated)
