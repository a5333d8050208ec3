"""Constrained risk-sensitive control: multiplier-parametrized programs, the
product-chain reduction, and projected subgradient ascent on the multiplier.

For a fixed multiplier the parametrized objective decouples into a primary
block and a constraint block joined only through the policy, so each
evaluation is a pure-policy minimization of
``sum(lam_c) + gamma*(sum(lam_k) - C*|S|)`` certified by pinned block LPs.
The resulting multiplier function is a minimum of finitely many affine
functions of gamma, hence exactly concave, and its one-sided derivative (the
constraint-block value minus the bound) is computed both from the primal
block and from the dual block weights as a consistency check.

The ascent's last program typically alternates between a cheaper
constraint-violating policy and a dearer feasible one; the returned policy
tightens the constraint exactly by mixing that pair per state, evaluated
spectrally, which is what a multiplier method can certify here (the
underlying problem is not convex in the per-state action weights, so the
multiplier path alone ends at the vertex policies).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from rsmdp.errors import SolverError, ValidationError
from rsmdp.game_lp import (CandidateSet, GameSolution, payoff_floor,
                           seed_candidates, solve_with_generation)
from rsmdp.lp import StandardLp, solve_lp
from rsmdp.model import SUPPORT_EPS, Mdp, Policy
from rsmdp.spectral import evaluate_policy
from rsmdp.variational import TiltResult, dv_tilt, kl_divergence

DANSKIN_TOL = 1e-6
COMBINE_TOL = 1e-8


@dataclass(frozen=True)
class ProductChain:
    """Doubled-state model: coordinates move independently under the shared
    action; the stage cost charges the primary cost on the first coordinate
    and gamma times the constraint cost on the second."""

    mdp: Mdp
    gamma: float
    base_states: int

    def flat(self, i: int, j: int) -> int:
        return i * self.base_states + j

    def unflat(self, s: int) -> tuple[int, int]:
        return divmod(s, self.base_states)


def product_chain(m: Mdp, gamma: float) -> ProductChain:
    """S^2-state model with h((i,j),u) = c(i,u) + gamma*k(j,u)."""
    if m.k is None:
        raise ValidationError("product chain needs constraint_cost")
    n, a = m.n_states, m.n_actions
    p = np.zeros((n * n, a, n * n))
    h = np.zeros((n * n, a))
    for i in range(n):
        for j in range(n):
            s = i * n + j
            h[s] = m.c[i] + gamma * m.k[j]
            for u in range(a):
                p[s, u] = np.outer(m.p[i, u], m.p[j, u]).reshape(-1)
    return ProductChain(mdp=Mdp(n_states=n * n, n_actions=a, p=p, c=h),
                        gamma=float(gamma), base_states=n)


def build_constrained_lps(m: Mdp, gamma: float, seed: int = 0):
    """Multiplier-parametrized primal/dual pair on seeded candidate sets.

    Thin wrapper over the game builders with the doubled blocks; callers
    normally go through `psi_of_gamma`, which also runs the generation loop.
    """
    from rsmdp.game_lp import build_dual, build_primal
    if m.k is None or m.bound is None:
        raise ValidationError("constrained programs need constraint_cost and bound")
    if gamma < 0.0:
        raise ValidationError("gamma must be nonnegative")
    cands = seed_candidates(m, "primary_c", seed)
    cands_k = seed_candidates(m, "constraint_k", seed)
    primal, _ = build_primal(m, cands, "primary_c", gamma, cands_k)
    dual, _, _ = build_dual(m, cands, "primary_c", gamma, cands_k)
    return primal, dual


@dataclass(frozen=True)
class CombinedValues:
    """Product-chain point assembled from component solutions."""

    beta_check: np.ndarray          # [i][j] = beta_i + gamma*beta'_j
    v_check: np.ndarray
    growth_residual: float          # worst violation of the product growth rows
    value_residual: float


def combine_values(m: Mdp, sol: GameSolution) -> CombinedValues:
    """beta_check/v_check from a multiplier solve, with feasibility residuals
    over every product row built from the stored component candidates.

    The product rows are sums of component rows, so the residuals separate;
    a violation beyond tolerance raises with the offending block and state.
    """
    if sol.gamma is None or sol.beta_k is None:
        raise ValidationError("combine_values needs a multiplier solve")
    gamma = float(sol.gamma)
    beta_check = sol.beta[:, None] + gamma * sol.beta_k[None, :]
    v_check = sol.v[:, None] + gamma * sol.v_k[None, :]

    def block_residuals(beta, vvals, cands: CandidateSet, tag: str):
        cost = m.cost_matrix(tag)
        worst_g, worst_v = 0.0, 0.0
        witness = None
        for i in range(m.n_states):
            u = int(sol.policy_det[i])
            supp = set(np.nonzero(m.p[i, u] > SUPPORT_EPS)[0])
            for ci, q in enumerate(cands.rows[i]):
                g = float(np.dot(q, beta) - beta[i])
                if g > worst_g:
                    worst_g, witness = g, (tag, "growth", i, ci)
                if not set(np.nonzero(q > 0.0)[0]) <= supp:
                    continue        # payoff -inf: vacuous value row
                ct = float(cost[i, u]) - kl_divergence(q, m.p[i, u])
                vres = ct + float(np.dot(q, vvals)) - beta[i] - vvals[i]
                if vres > worst_v:
                    worst_v, witness = vres, (tag, "value", i, ci)
        return worst_g, worst_v, witness

    g_c, v_c, wit_c = block_residuals(sol.beta, sol.v, sol.candidates, "primary_c")
    g_k, v_k, wit_k = block_residuals(sol.beta_k, sol.v_k, sol.candidates_k,
                                      "constraint_k")
    growth_residual = g_c + gamma * g_k
    value_residual = v_c + gamma * v_k
    if max(growth_residual, value_residual) > COMBINE_TOL:
        raise SolverError(
            f"combined product point violates a row by "
            f"{max(growth_residual, value_residual):.3e} "
            f"(witness {wit_c if v_c + g_c >= v_k + g_k else wit_k})")
    return CombinedValues(beta_check=beta_check, v_check=v_check,
                          growth_residual=growth_residual,
                          value_residual=value_residual)


# -- direct product-chain program ---------------------------------------------

def _pair_tilt(m: Mdp, i: int, j: int, u_c: int, u_k: int, gamma: float,
               vmat: np.ndarray, q0: np.ndarray, qk0: np.ndarray):
    """Coordinate-ascent maximization of
    c~(i,u_c,q) + gamma*k~(j,u_k,q') + q^T Vmat q' over admissible (q, q')."""
    c0 = float(m.c[i, u_c])
    k0 = float(m.k[j, u_k])
    pc = m.p[i, u_c]
    pk = m.p[j, u_k]
    q, qk = q0, qk0
    val = -np.inf
    for _ in range(60):
        tilt_q = dv_tilt(pc, vmat @ qk)
        q = tilt_q.q_star
        w = vmat.T @ q
        if gamma > 0.0:
            tilt_k = dv_tilt(pk, w / gamma)
            qk = tilt_k.q_star
            new_val = c0 + tilt_q.value - float(np.dot(q, vmat @ qk)) \
                + gamma * (k0 + tilt_k.value) \
                + float(np.dot(q, vmat @ qk))
            # equivalent direct evaluation keeps the bookkeeping honest
            new_val = (c0 - kl_divergence(q, pc)
                       + gamma * (k0 - kl_divergence(qk, pk))
                       + float(q @ vmat @ qk))
        else:
            supp = np.nonzero(pk > SUPPORT_EPS)[0]
            best = supp[int(np.argmax(w[supp]))]
            qk = np.zeros(m.n_states)
            qk[best] = 1.0
            new_val = (c0 - kl_divergence(q, pc) + float(q @ vmat @ qk))
        if new_val <= val + 1e-13:
            val = max(val, new_val)
            break
        val = new_val
    return val, q, qk


def product_program_value(m: Mdp, gamma: float, policy_det, eps: float = 1e-8,
                          max_rounds: int = 200, seed: int = 0) -> float:
    """Optimum of the product-chain program at a pinned pure policy, solved
    directly on the doubled state space by constraint generation.

    Candidates are pairs of component rows; separation maximizes the paired
    payoff by coordinate ascent with closed-form tilts from vertex-pair and
    model-row starts (exact at desk dimensions).  Intended for |S| <= 3.
    """
    if m.k is None:
        raise ValidationError("product program needs constraint_cost")
    n = m.n_states
    nn = n * n
    policy_det = tuple(int(u) for u in policy_det)
    rng = np.random.default_rng([seed, 77])

    pairs: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(nn)]
    supports = []
    for i in range(n):
        for j in range(n):
            s = i * n + j
            u_c, u_k = policy_det[i], policy_det[j]
            sc = np.nonzero(m.p[i, u_c] > SUPPORT_EPS)[0]
            sk = np.nonzero(m.p[j, u_k] > SUPPORT_EPS)[0]
            supports.append((sc, sk))
            def unit(idx):
                e = np.zeros(n)
                e[idx] = 1.0
                return e
            pairs[s].append((m.p[i, u_c].copy(), m.p[j, u_k].copy()))
            for a in sc:
                for b in sk:
                    pairs[s].append((unit(a), unit(b)))
            for _ in range(2):
                qa = np.zeros(n)
                qa[sc] = rng.dirichlet(np.ones(len(sc)))
                qb = np.zeros(n)
                qb[sk] = rng.dirichlet(np.ones(len(sk)))
                pairs[s].append((qa, qb))

    def payoff(s, q, qk):
        i, j = divmod(s, n)
        u_c, u_k = policy_det[i], policy_det[j]
        return (float(m.c[i, u_c]) - kl_divergence(q, m.p[i, u_c])
                + gamma * (float(m.k[j, u_k]) - kl_divergence(qk, m.p[j, u_k])))

    for _ in range(max_rounds):
        rows, rhs = [], []
        for s in range(nn):
            for q, qk in pairs[s]:
                prod = np.outer(q, qk).reshape(-1)
                r1 = np.zeros(2 * nn)
                r1[s] += 1.0
                r1[:nn] -= prod
                rows.append(r1)
                rhs.append(0.0)
                r2 = np.zeros(2 * nn)
                r2[s] += 1.0
                r2[nn + s] += 1.0
                r2[nn:] -= prod
                rows.append(r2)
                rhs.append(payoff(s, q, qk))
        obj = np.concatenate([np.ones(nn), np.zeros(nn)])
        lp = StandardLp.build(obj, a_ge=np.vstack(rows), b_ge=np.array(rhs),
                              free_vars=range(2 * nn))
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise SolverError(f"product program relaxation is {sol.status}")
        beta = sol.x[:nn]
        vvals = sol.x[nn:]
        vmat = vvals.reshape(n, n)
        bmat = beta.reshape(n, n)
        added = 0
        for s in range(nn):
            i, j = divmod(s, n)
            sc, sk = supports[s]
            sub = bmat[np.ix_(sc, sk)]
            best = float(sub.max())
            if best > beta[s] + eps:
                a, b = np.unravel_index(int(np.argmax(sub)), sub.shape)
                qa = np.zeros(n)
                qa[sc[a]] = 1.0
                qb = np.zeros(n)
                qb[sk[b]] = 1.0
                if _add_pair(pairs[s], qa, qb):
                    added += 1
            best_val, best_q, best_qk = -np.inf, None, None
            u_c, u_k = policy_det[i], policy_det[j]
            starts = [(m.p[i, u_c], m.p[j, u_k])]
            for a in sc:
                for b in sk:
                    qa = np.zeros(n)
                    qa[a] = 1.0
                    qb = np.zeros(n)
                    qb[b] = 1.0
                    starts.append((qa, qb))
            for q0, qk0 in starts:
                val, q, qk = _pair_tilt(m, i, j, u_c, u_k, gamma, vmat, q0, qk0)
                if val > best_val:
                    best_val, best_q, best_qk = val, q, qk
            if best_val > beta[s] + vvals[s] + eps:
                if _add_pair(pairs[s], best_q, best_qk):
                    added += 1
        if added == 0:
            return float(sol.objective_value)
    raise SolverError("product program generation did not terminate")


def _add_pair(store, q, qk) -> bool:
    for eq, ek in store:
        if float(np.abs(eq - q).sum()) + float(np.abs(ek - qk).sum()) <= 1e-9:
            return False
    store.append((q.copy(), qk.copy()))
    return True


# -- multiplier function and ascent --------------------------------------------

@dataclass(frozen=True)
class PsiResult:
    gamma: float
    psi: float
    subgradient: float              # primal form: sum(beta') - C*|S|
    subgradient_dual: float         # dual form from constraint-block weights
    solution: GameSolution
    constraint_value: float         # max-state constraint growth of the policy


def psi_of_gamma(m: Mdp, gamma: float, eps: float = 1e-9, seed: int = 0,
                 cands: CandidateSet | None = None,
                 cands_k: CandidateSet | None = None) -> PsiResult:
    """Parametrized optimum and its derivative in the multiplier.

    The derivative comes out of the constraint block twice: as sum(beta')
    minus C*|S|, and as the weighted perturbed constraint payoff under the
    block's dual weights; the two must agree to DANSKIN_TOL.
    """
    if gamma < 0.0:
        raise ValidationError("gamma must be nonnegative")
    if m.k is None or m.bound is None:
        raise ValidationError("psi_of_gamma needs constraint_cost and bound")
    sol = solve_with_generation(m, "primary_c", gamma=float(gamma), eps=eps,
                                seed=seed, cands=cands, cands_k=cands_k)
    n = m.n_states
    g_primal = float(np.sum(sol.beta_k)) - float(m.bound) * n
    floor = payoff_floor(m)
    g_dual = -float(m.bound) * n
    for i in range(n):
        u = int(sol.policy_det[i])
        for ci, q in enumerate(sol.candidates_k.rows[i]):
            wgt = float(sol.mu_k[i][ci])
            if wgt <= 0.0:
                continue
            d = kl_divergence(q, m.p[i, u])
            kt = floor if d == float("inf") else float(m.k[i, u]) - d
            g_dual += wgt * max(kt, floor)
    if abs(g_primal - g_dual) > DANSKIN_TOL:
        raise SolverError(
            f"subgradient forms disagree: {g_primal!r} vs {g_dual!r}")
    lam_k = evaluate_policy(m, sol.policy, "constraint_k").lam
    return PsiResult(gamma=float(gamma), psi=float(sol.primal_obj),
                     subgradient=g_primal, subgradient_dual=g_dual,
                     solution=sol, constraint_value=float(lam_k.max()))


@dataclass(frozen=True)
class AscentConfig:
    gamma0: float = 0.0
    a0: float = 1.0
    max_steps: int = 200
    window: int = 10
    window_tol: float = 1e-6
    eps: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.gamma0 < 0.0 or self.a0 <= 0.0 or self.max_steps < 1:
            raise ValidationError("invalid ascent configuration")

    def stepsize(self, n: int) -> float:
        return self.a0 / (1.0 + n)


@dataclass(frozen=True)
class AscentRow:
    n: int
    gamma: float
    psi: float
    subgrad: float
    primal_obj: float
    dual_obj: float
    constraint_value: float


@dataclass(frozen=True)
class AscentResult:
    rows: tuple[AscentRow, ...]
    final_gamma: float
    policy: Policy                    # constraint-tightened mix
    last_lp_policy: Policy
    final_cost: float                 # max-state primary growth of `policy`
    final_constraint: float
    feasible: bool
    mix_weight: float                 # weight on the infeasible endpoint


def subgradient_ascent(m: Mdp, config: AscentConfig = AscentConfig()) -> AscentResult:
    """Projected ascent gamma <- [gamma + a(n) g(gamma)]+ with shared candidate
    pools, followed by constraint-tightening policy extraction.

    Terminates when the step range over `window` consecutive steps falls below
    `window_tol` or at max_steps.  The final policy mixes the most recent
    infeasible and feasible program policies per state, with the weight chosen
    by bisection on the exact constraint growth; trace rows keep the raw
    program output for auditability.
    """
    if m.k is None or m.bound is None:
        raise ValidationError("subgradient ascent needs constraint_cost and bound")
    cands = seed_candidates(m, "primary_c", config.seed)
    cands_k = seed_candidates(m, "constraint_k", config.seed)
    gamma = float(config.gamma0)
    rows: list[AscentRow] = []
    deltas: list[float] = []
    last_feasible: Policy | None = None
    last_infeasible: Policy | None = None
    last_pol: Policy | None = None
    bound = float(m.bound)
    for n_step in range(config.max_steps):
        res = psi_of_gamma(m, gamma, eps=config.eps, seed=config.seed,
                           cands=cands, cands_k=cands_k)
        rows.append(AscentRow(n=n_step, gamma=gamma, psi=res.psi,
                              subgrad=res.subgradient,
                              primal_obj=res.solution.primal_obj,
                              dual_obj=res.solution.dual_obj,
                              constraint_value=res.constraint_value))
        last_pol = res.solution.policy
        if res.constraint_value <= bound + 1e-12:
            last_feasible = last_pol
        else:
            last_infeasible = last_pol
        nxt = max(0.0, gamma + config.stepsize(n_step) * res.subgradient)
        deltas.append(abs(nxt - gamma))
        gamma = nxt
        if len(deltas) >= config.window and \
                max(deltas[-config.window:]) < config.window_tol:
            break

    policy, alpha, feasible = _tighten_constraint(
        m, last_infeasible, last_feasible, bound)
    lam_c = evaluate_policy(m, policy, "primary_c").lam
    lam_k = evaluate_policy(m, policy, "constraint_k").lam
    return AscentResult(rows=tuple(rows), final_gamma=gamma, policy=policy,
                        last_lp_policy=last_pol, final_cost=float(lam_c.max()),
                        final_constraint=float(lam_k.max()), feasible=feasible,
                        mix_weight=alpha)


def _tighten_constraint(m: Mdp, infeasible: Policy | None,
                        feasible: Policy | None, bound: float):
    """Per-state mix of the two terminal program policies with the constraint
    growth driven to the bound by bisection on the exact evaluation."""
    if infeasible is None and feasible is None:
        raise SolverError("ascent produced no program solutions")
    if infeasible is None:
        return feasible, 0.0, True
    if feasible is None:
        return infeasible, 1.0, False
    y_bad = infeasible.matrix(m.n_actions)
    y_good = feasible.matrix(m.n_actions)

    def lam_k(alpha: float) -> float:
        pol = Policy.randomized(alpha * y_bad + (1.0 - alpha) * y_good)
        return float(evaluate_policy(m, pol, "constraint_k").lam.max())

    lo, hi = 0.0, 1.0
    if lam_k(1.0) <= bound + 1e-12:
        return infeasible, 1.0, True
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if lam_k(mid) <= bound:
            lo = mid
        else:
            hi = mid
    alpha = lo
    return Policy.randomized(alpha * y_bad + (1.0 - alpha) * y_good), alpha, True


def write_trace_csv(path, rows) -> None:
    """Ascent trace: header row then one row per step."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "gamma", "psi", "subgrad", "primal_obj",
                         "dual_obj", "constraint_value"])
        for r in rows:
            writer.writerow([r.n, repr(r.gamma), repr(r.psi), repr(r.subgrad),
                             repr(r.primal_obj), repr(r.dual_obj),
                             repr(r.constraint_value)])
