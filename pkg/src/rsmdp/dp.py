"""Risk-sensitive dynamic programming in log-sum-exp form.

`relative_value_iteration` solves the unichain optimality equation
``lambda + V(i) = min_u [c(i,u) + log sum_j p(j|i,u) e^{V(j)}]`` by span-
contracting iteration with a reference-state offset.  The multichain
equations are not iterated directly; `verify_multichain` measures their
residuals for value pairs produced elsewhere (typically the game LP), using
the support-union restriction for the kernel player's admissible rows and
the equal-value faces as the argmax sets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from rsmdp.errors import SolverError
from rsmdp.model import SUPPORT_EPS, Mdp, Policy, support_union
from rsmdp.spectral import _group_by_value


@dataclass(frozen=True)
class DpSolution:
    """Optimality-equation solution: log values, relative values and the
    multiplicative forms zeta = e^V (max-entry 1 per cell), Lambda = e^Psi."""

    psi: np.ndarray
    v: np.ndarray
    zeta: np.ndarray
    big_lambda: np.ndarray
    lambda_star: float
    policy: Policy
    partition: tuple[tuple[int, ...], ...]
    iterations: int
    residual: float
    spans: tuple[float, ...] = ()


@dataclass(frozen=True)
class StateCheck:
    state: int
    residual_growth: float       # eq. for Psi against the one-step face max
    residual_value: float        # eq. for Psi_i + V_i at the min action
    face: tuple[int, ...]
    argmin_action: int
    skipped_actions: tuple[int, ...]


@dataclass(frozen=True)
class MultichainReport:
    checks: tuple[StateCheck, ...]
    max_residual: float


def _log_p(m: Mdp) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(m.p > 0.0, np.log(np.maximum(m.p, 1e-300)), -np.inf)


def _bellman(cost: np.ndarray, log_p: np.ndarray, v: np.ndarray):
    """T(V)(i) = min_u [c(i,u) + lse_j(log p + V_j)]; returns values and argmins."""
    inner = log_p + v[None, None, :]
    top = inner.max(axis=2)
    safe = np.where(np.isfinite(top), top, 0.0)
    lse = safe + np.log(np.sum(np.exp(inner - safe[:, :, None]), axis=2))
    q = cost + lse
    actions = np.argmin(q, axis=1)
    return q.min(axis=1), actions


def relative_value_iteration(m: Mdp, cost_tag: str = "primary_c",
                             tol: float = 1e-9, max_iter: int = 100_000) -> DpSolution:
    """Unichain solver; the offset at reference state 0 converges to lambda*.

    Reducible support graphs trigger a warning; the result is still returned
    and callers are expected to cross-check it.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    _warn_if_reducible(m)
    cost = m.cost_matrix(cost_tag)
    log_p = _log_p(m)
    v = np.zeros(m.n_states)
    span_history: list[float] = []
    offset = 0.0
    for it in range(1, max_iter + 1):
        tv, actions = _bellman(cost, log_p, v)
        diff = tv - v
        span = float(diff.max() - diff.min())
        span_history.append(span)
        offset = float(tv[0])
        v = tv - offset
        if span < tol:
            break
    else:
        raise SolverError(
            f"relative value iteration did not reach span {tol} in {max_iter} "
            f"iterations", payload={"span_history": span_history[-20:]})
    lam = offset
    _, actions = _bellman(cost, log_p, v)
    policy = Policy.deterministic(actions).to_randomized(m.n_actions)
    zeta = np.exp(v - v.max())
    residual = _poisson_residual(m, cost, lam, zeta)
    if residual > 10.0 * tol:
        raise SolverError(f"optimality-equation residual {residual:.3e} "
                          f"exceeds 10*tol after convergence")
    psi = np.full(m.n_states, lam)
    return DpSolution(psi=psi, v=v, zeta=zeta, big_lambda=np.exp(psi),
                      lambda_star=lam, policy=policy,
                      partition=_group_by_value(psi), iterations=it,
                      residual=residual, spans=tuple(span_history))


def _poisson_residual(m: Mdp, cost: np.ndarray, lam: float, zeta: np.ndarray) -> float:
    """max_i |e^lam zeta_i - min_u sum_j p e^{c} zeta_j| (relative)."""
    vals = np.einsum("iuj,j->iu", m.p, zeta) * np.exp(cost)
    lhs = np.exp(lam) * zeta
    rhs = vals.min(axis=1)
    return float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-12)))


def _warn_if_reducible(m: Mdp) -> None:
    union = np.max(m.p, axis=1) > SUPPORT_EPS
    reach = union | np.eye(m.n_states, dtype=bool)
    for _ in range(m.n_states):
        reach = reach | (reach @ reach)
    if not np.all(reach & reach.T):
        warnings.warn("support-union graph is reducible; relative value "
                      "iteration assumes a unichain model", stacklevel=2)


def equal_value_face(m: Mdp, psi: np.ndarray, i: int,
                     tol: float = 1e-9) -> tuple[int, ...]:
    """One-step-reachable states attaining max psi_j over the support union."""
    su = sorted(support_union(m, i))
    top = max(psi[j] for j in su)
    cut = tol * max(1.0, abs(top))
    return tuple(j for j in su if psi[j] >= top - cut)


def verify_multichain(m: Mdp, psi, v, tol: float = 1e-9,
                      cost_tag: str = "primary_c") -> MultichainReport:
    """Residuals of the two-level optimality equations at a candidate (psi, V).

    Level one: psi_i must equal the best one-step psi over admissible rows
    (rows supported on the support union).  Level two: psi_i + V_i must equal
    the min over actions of the exact kernel-player maximization restricted to
    the level-one argmax face; actions with no mass on the face would hand the
    kernel player payoff -inf and are skipped (reported per state).
    """
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    cost = m.cost_matrix(cost_tag)
    checks = []
    worst = 0.0
    for i in range(m.n_states):
        su = sorted(support_union(m, i))
        top = max(psi[j] for j in su)
        res_a = abs(psi[i] - top)
        face = equal_value_face(m, psi, i, tol)
        idx = np.asarray(face)
        vals = {}
        for u in range(m.n_actions):
            mass_terms = m.p[i, u, idx] * np.exp(v[idx])
            total = float(mass_terms.sum())
            if total <= 0.0:
                continue
            vals[u] = float(cost[i, u]) + float(np.log(total))
        skipped = tuple(u for u in range(m.n_actions) if u not in vals)
        argmin_u = min(vals, key=lambda u: (vals[u], u))
        res_b = abs(psi[i] + v[i] - vals[argmin_u])
        worst = max(worst, res_a, res_b)
        checks.append(StateCheck(state=i, residual_growth=res_a,
                                 residual_value=res_b, face=face,
                                 argmin_action=argmin_u,
                                 skipped_actions=skipped))
    return MultichainReport(checks=tuple(checks), max_residual=worst)


def face_relative_values(m: Mdp, psi, cost_tag: str = "primary_c",
                         v_init=None, policy=None, tol: float = 1e-10,
                         max_iter: int = 50_000) -> np.ndarray:
    """Solve the level-two equations for V given psi by damped iteration.

    The equations couple V only within equal-psi faces, so the damping kills
    periodic oscillation and each face converges to its fixed point; additive
    offsets stay near the initialization, which callers pick to remain on
    their LP optimal face.  With `policy` (a state->action tuple) the per-state
    minimization is pinned to that action: the evaluation form of the system.
    """
    psi = np.asarray(psi, dtype=float)
    cost = m.cost_matrix(cost_tag)
    v = np.zeros(m.n_states) if v_init is None else np.asarray(v_init, float).copy()
    if not np.all(np.isfinite(v)):
        v = np.zeros(m.n_states)
    actions = [range(m.n_actions)] * m.n_states if policy is None else \
        [(int(policy[i]),) for i in range(m.n_states)]
    faces = []
    for i in range(m.n_states):
        if policy is None:
            faces.append(np.asarray(equal_value_face(m, psi, i)))
        else:
            # face of the pinned action's own support
            supp = np.nonzero(m.p[i, int(policy[i])] > SUPPORT_EPS)[0]
            top = float(psi[supp].max())
            cut = 1e-9 * max(1.0, abs(top))
            faces.append(supp[psi[supp] >= top - cut])
    for _ in range(max_iter):
        tv = np.empty(m.n_states)
        for i in range(m.n_states):
            idx = faces[i]
            best = np.inf
            for u in actions[i]:
                total = float((m.p[i, u, idx] * np.exp(v[idx])).sum())
                if total <= 0.0:
                    continue
                best = min(best, float(cost[i, u]) + float(np.log(total)))
            tv[i] = best - psi[i]
        if not np.all(np.isfinite(tv)):
            raise SolverError("face-restricted values diverged; psi is not "
                              "the growth vector of this system")
        if float(np.max(np.abs(tv - v))) < tol:
            return tv
        v = 0.5 * v + 0.5 * tv
    raise SolverError("face-restricted value iteration did not converge",
                      payload={"v": v})
