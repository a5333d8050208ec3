"""Primal/dual linear programs of the single-controller game, solved by
candidate-kernel constraint generation.

The kernel player's action sets are whole probability simplices, so the
programs are semi-infinite: we keep finitely many candidate rows per state,
solve the finite relaxation, and use exact closed-form separation (vertex
checks for the growth block, log-sum-exp tilts for the value block) to either
certify eps-feasibility over the full simplex or produce a violated row.

One structural caution, established numerically during development: with the
control policy entering the payoff rows as per-state mixture weights, the
joint program prices a mixed policy by the weighted *sum* of divergences,
which undervalues mixing (Jensen), and its optimum can drop strictly below
the control optimum over implementable policies.  The acceptance anchor here
is the control value - the max-over-states of per-state minima over
deterministic stationary policies - so `solve_with_generation` minimizes over
pure policies in an outer loop (exhaustively at desk scale, by two-level
policy improvement beyond the guard) and certifies the winner with
policy-pinned Kallenberg-style block LPs plus exact separation and a
transposed dual.  The mixed-weight builders remain available and tested;
their optimum coincides with the pure one exactly when mixing cannot help.

Payoff coefficients are cost minus KL divergence.  A candidate row admissible
at a state (support inside the one-step support union) can still sit off the
support of an individual action, where its payoff is -inf; such entries are
clamped to a floor far below every finite payoff.  Certified results never
rest on clamped rows: the exact separation check handles infinities properly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rsmdp.errors import GuardExceeded, SolverError, ValidationError
from rsmdp.lp import StandardLp, solve_lp
from rsmdp.model import SUPPORT_EPS, Mdp, Policy, support_union
from rsmdp.spectral import _tarjan, evaluate_policy
from rsmdp.variational import kl_divergence, mixture_tilt

DEDUP_L1 = 1e-9
SEED_RANDOM_ROWS = 8
# Clamp distance for -inf payoffs, below the smallest cost entry.
FLOOR_GAP = 1e3
GAP_TOL = 1e-7
POLICY_ENUM_GUARD = 4096


@dataclass
class CandidateSet:
    """Per-state candidate kernel rows with provenance tags."""

    rows: list[list[np.ndarray]]
    provenance: list[list[str]]
    support: list[frozenset]

    @staticmethod
    def empty(m: Mdp) -> "CandidateSet":
        return CandidateSet(rows=[[] for _ in range(m.n_states)],
                            provenance=[[] for _ in range(m.n_states)],
                            support=[support_union(m, i) for i in range(m.n_states)])

    def add(self, i: int, row, provenance: str) -> bool:
        """Admissibility-checked, deduplicated insert; True if stored."""
        q = np.asarray(row, dtype=float)
        total = float(q.sum())
        if abs(total - 1.0) > 1e-9 or np.any(q < -1e-12):
            raise ValidationError(f"candidate at state {i} is not a distribution")
        q = np.clip(q, 0.0, None) / total
        bad = [j for j in np.nonzero(q > 0.0)[0] if j not in self.support[i]]
        if bad:
            raise ValidationError(
                f"candidate at state {i} puts mass outside the support union "
                f"(state {bad[0]})")
        for existing in self.rows[i]:
            if float(np.abs(existing - q).sum()) <= DEDUP_L1:
                return False
        self.rows[i].append(q)
        self.provenance[i].append(provenance)
        return True

    def counts(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.rows)

    def total(self) -> int:
        return sum(len(r) for r in self.rows)


@dataclass(frozen=True)
class GameSolution:
    """Certified solve: values, recovered policy, dual weights, duality gap."""

    beta: np.ndarray
    v: np.ndarray
    y: np.ndarray
    mu: tuple[np.ndarray, ...]        # value-block dual weights per state
    nu: tuple[np.ndarray, ...]        # growth-block dual weights per state
    w: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    rounds: int
    round_objectives: tuple[float, ...]
    candidates: CandidateSet
    lambda_star: float
    policy_det: tuple[int, ...]
    gamma: float | None = None
    beta_k: np.ndarray | None = None
    v_k: np.ndarray | None = None
    mu_k: tuple[np.ndarray, ...] | None = None
    nu_k: tuple[np.ndarray, ...] | None = None
    w_k: np.ndarray | None = None
    candidates_k: CandidateSet | None = None

    @property
    def policy(self) -> Policy:
        return Policy.randomized(self.y)


def payoff_floor(m: Mdp) -> float:
    """Finite stand-in for -inf payoff entries."""
    lo = float(min(np.min(m.c), 0.0))
    if m.k is not None:
        lo = min(lo, float(np.min(m.k)))
    return lo - FLOOR_GAP


def seed_candidates(m: Mdp, cost_tag: str = "primary_c", seed: int = 0,
                    n_random: int = SEED_RANDOM_ROWS) -> CandidateSet:
    """Model rows, admissible vertices, and seeded random admissible rows."""
    m.cost_matrix(cost_tag)     # validates k presence for the constraint tag
    cands = CandidateSet.empty(m)
    for i in range(m.n_states):
        su = sorted(cands.support[i])
        for u in range(m.n_actions):
            cands.add(i, m.p[i, u], "seed")
        for j in su:
            row = np.zeros(m.n_states)
            row[j] = 1.0
            cands.add(i, row, "vertex")
        rng = np.random.default_rng([seed, i])
        for _ in range(n_random):
            row = np.zeros(m.n_states)
            row[su] = rng.dirichlet(np.ones(len(su)))
            cands.add(i, row, "seed")
    return cands


def _ctilde_table(m: Mdp, cands: CandidateSet, cost_tag: str,
                  floor: float) -> list[np.ndarray]:
    """Per state: array [candidate][action] of clamped payoffs."""
    cost = m.cost_matrix(cost_tag)
    out = []
    for i in range(m.n_states):
        tab = np.empty((len(cands.rows[i]), m.n_actions))
        for ci, q in enumerate(cands.rows[i]):
            for u in range(m.n_actions):
                d = kl_divergence(q, m.p[i, u])
                tab[ci, u] = floor if d == float("inf") else float(cost[i, u]) - d
        out.append(np.maximum(tab, floor))
    return out


def _pinned_lists(m: Mdp, cands: CandidateSet, policy) -> list[list[int]]:
    """Candidate indices whose support fits the pinned action's support.

    The kernel player facing a fixed action never leaves that action's
    support (anything else earns -inf), so pinned blocks see only these rows.
    """
    keep: list[list[int]] = []
    for i in range(m.n_states):
        supp = set(np.nonzero(m.p[i, int(policy[i])] > SUPPORT_EPS)[0])
        keep.append([ci for ci, q in enumerate(cands.rows[i])
                     if set(np.nonzero(q > 0.0)[0]) <= supp])
    return keep


@dataclass(frozen=True)
class _Layout:
    """Variable offsets for the mixed-weight (displayed) primal."""

    n_states: int
    n_actions: int
    with_k: bool

    @property
    def beta0(self) -> int:
        return 0

    @property
    def v0(self) -> int:
        return self.n_states

    @property
    def beta_k0(self) -> int:
        return 2 * self.n_states

    @property
    def v_k0(self) -> int:
        return 3 * self.n_states

    @property
    def y0(self) -> int:
        return (4 if self.with_k else 2) * self.n_states

    @property
    def n_vars(self) -> int:
        return self.y0 + self.n_states * self.n_actions


def build_primal(m: Mdp, cands: CandidateSet, cost_tag: str = "primary_c",
                 gamma: float | None = None,
                 cands_k: CandidateSet | None = None):
    """Finite relaxation of the displayed primal: variables (beta, V, y),
    doubled value blocks when a multiplier gamma is given.

    Returns (StandardLp, layout).  The objective carries sum(beta)
    (+ gamma * sum(beta')); the constant -gamma*C*|S| of the parametrized
    objective is left to callers reporting objective values.
    """
    if gamma is not None and cands_k is None:
        raise ValidationError("gamma requires a constraint-block candidate set")
    lay = _Layout(m.n_states, m.n_actions, gamma is not None)
    n, a = m.n_states, m.n_actions
    floor = payoff_floor(m)

    obj = np.zeros(lay.n_vars)
    obj[lay.beta0:lay.beta0 + n] = 1.0
    if gamma is not None:
        obj[lay.beta_k0:lay.beta_k0 + n] = gamma

    rows, rhs = [], []

    def block(cset: CandidateSet, tag: str, b0: int, v0: int):
        table = _ctilde_table(m, cset, tag, floor)
        for i in range(n):
            for ci, q in enumerate(cset.rows[i]):
                r1 = np.zeros(lay.n_vars)
                r1[b0 + i] += 1.0
                r1[b0:b0 + n] -= q
                rows.append(r1)
                rhs.append(0.0)
                r2 = np.zeros(lay.n_vars)
                r2[b0 + i] += 1.0
                r2[v0 + i] += 1.0
                r2[v0:v0 + n] -= q
                r2[lay.y0 + i * a:lay.y0 + (i + 1) * a] = -table[i][ci]
                rows.append(r2)
                rhs.append(0.0)

    block(cands, cost_tag, lay.beta0, lay.v0)
    if gamma is not None:
        block(cands_k, "constraint_k", lay.beta_k0, lay.v_k0)

    a_eq = np.zeros((n, lay.n_vars))
    for i in range(n):
        a_eq[i, lay.y0 + i * a:lay.y0 + (i + 1) * a] = 1.0
    lp = StandardLp.build(obj, a_eq=a_eq, b_eq=np.ones(n),
                          a_ge=np.vstack(rows), b_ge=np.array(rhs),
                          free_vars=range(lay.y0))
    return lp, lay


def build_dual(m: Mdp, cands: CandidateSet, cost_tag: str = "primary_c",
               gamma: float | None = None,
               cands_k: CandidateSet | None = None):
    """Mechanical transpose of `build_primal` on the same candidate sets.

    Variables: growth-block weights nu(i,q), value-block weights mu(i,q) per
    block, and free per-state w; maximize sum(w).  The value-block weights
    integrate to the state count (gamma times it on the doubled block) - that
    normalization is implied by the stationarity rows, not added separately,
    since adding a conflicting row would break the zero-gap certificates.
    """
    if gamma is not None and cands_k is None:
        raise ValidationError("gamma requires a constraint-block candidate set")
    n, a = m.n_states, m.n_actions
    floor = payoff_floor(m)
    blocks = [(cands, cost_tag, 1.0)]
    if gamma is not None:
        blocks.append((cands_k, "constraint_k", float(gamma)))

    sizes = [[len(cset.rows[i]) for i in range(n)] for cset, _, _ in blocks]
    offs = []
    pos = 0
    for bi in range(len(blocks)):
        nu_off = [0] * n
        mu_off = [0] * n
        for i in range(n):
            nu_off[i] = pos
            pos += sizes[bi][i]
        for i in range(n):
            mu_off[i] = pos
            pos += sizes[bi][i]
        offs.append((nu_off, mu_off))
    w0 = pos
    n_vars = w0 + n

    obj = np.zeros(n_vars)
    obj[w0:w0 + n] = -1.0               # maximize sum w

    eq_rows, eq_rhs = [], []
    for bi, (cset, tag, mass) in enumerate(blocks):
        nu_off, mu_off = offs[bi]
        for j in range(n):
            r = np.zeros(n_vars)
            for i in range(n):
                for ci, q in enumerate(cset.rows[i]):
                    r[nu_off[i] + ci] += (1.0 if i == j else 0.0) - q[j]
            for ci in range(sizes[bi][j]):
                r[mu_off[j] + ci] += 1.0
            eq_rows.append(r)
            eq_rhs.append(mass)
        for j in range(n):
            r = np.zeros(n_vars)
            for i in range(n):
                for ci, q in enumerate(cset.rows[i]):
                    r[mu_off[i] + ci] += (1.0 if i == j else 0.0) - q[j]
            eq_rows.append(r)
            eq_rhs.append(0.0)

    tables = [_ctilde_table(m, cset, tag, floor) for cset, tag, _ in blocks]
    ge_rows, ge_rhs = [], []
    for i in range(n):
        for u in range(a):
            r = np.zeros(n_vars)
            for bi in range(len(blocks)):
                _, mu_off = offs[bi]
                tab = tables[bi][i]
                for ci in range(sizes[bi][i]):
                    r[mu_off[i] + ci] = tab[ci, u]
            r[w0 + i] = -1.0
            ge_rows.append(r)
            ge_rhs.append(0.0)

    lp = StandardLp.build(obj, a_eq=np.vstack(eq_rows), b_eq=np.array(eq_rhs),
                          a_ge=np.vstack(ge_rows), b_ge=np.array(ge_rhs),
                          free_vars=range(w0, w0 + n))
    return lp, offs, w0


def separation_oracle(m: Mdp, cands: CandidateSet, beta, v, y,
                      cost_tag: str = "primary_c", eps: float = 1e-9,
                      supports=None):
    """Most-violated admissible rows at the current relaxation point.

    Growth block: the best vertex over the admissible support.  Value block:
    the closed-form mixture tilt at the current policy row.  Violation
    magnitudes are reported with each emitted row.  `supports` overrides the
    per-state admissible sets (pinned-policy solves pass the pinned action's
    support; the kernel player never profitably leaves it).
    """
    beta = np.asarray(beta, dtype=float)
    v = np.asarray(v, dtype=float)
    cost = m.cost_matrix(cost_tag)
    found = []
    for i in range(m.n_states):
        su = sorted(supports[i] if supports is not None else cands.support[i])
        j_best = max(su, key=lambda j: (beta[j], -j))
        viol = float(beta[j_best] - beta[i])
        if viol > eps:
            row = np.zeros(m.n_states)
            row[j_best] = 1.0
            found.append((i, row, viol, "vertex"))
        tilt = mixture_tilt(y[i], m.p[i], v)
        total = float(np.dot(y[i], cost[i])) + tilt.value
        viol = total - float(beta[i]) - float(v[i])
        if viol > eps:
            found.append((i, tilt.q_star, viol, "mixture_tilt"))
    return found


# -- pure-policy outer minimization ------------------------------------------

def _pure_values(m: Mdp, pol_det, cost_tag: str):
    """Exact per-state growth and face-relative values of a pure policy."""
    from rsmdp.dp import face_relative_values
    lam = evaluate_policy(m, Policy.deterministic(pol_det), cost_tag).lam
    vvals = face_relative_values(m, lam, cost_tag, policy=pol_det)
    return lam, vvals


def _improve_policy(m: Mdp, beta, vvals, pol_det, cost_tag: str):
    """Two-level improvement: minimize the reachable growth the kernel player
    can force, then the face-restricted value; keep the current action on ties."""
    cost = m.cost_matrix(cost_tag)
    out = []
    for i in range(m.n_states):
        scores = {}
        for u in range(m.n_actions):
            supp = np.nonzero(m.p[i, u] > SUPPORT_EPS)[0]
            growth = float(np.max(beta[supp]))
            face = supp[beta[supp] >= growth - 1e-10]
            val = float(cost[i, u]) + math.log(
                float((m.p[i, u, face] * np.exp(vvals[face])).sum()))
            scores[u] = (growth, val)
        cur = int(pol_det[i])
        best = min(scores, key=lambda u: (round(scores[u][0], 12),
                                          round(scores[u][1], 12), u))
        g_c, v_c = scores[cur]
        g_b, v_b = scores[best]
        if g_c <= g_b + 1e-10 and v_c <= v_b + 1e-10:
            best = cur
        out.append(best)
    return tuple(out)


def optimal_pure_policy(m: Mdp, cost_tag: str = "primary_c",
                        guard: int = POLICY_ENUM_GUARD):
    """Minimizing pure stationary policy for the adversarial growth criterion.

    Exhaustive below the guard (exact); policy improvement to a fixed point
    beyond it.  Ties break lexicographically, so the result is deterministic.
    """
    count = m.n_actions ** m.n_states
    if count <= guard:
        best = None
        for assignment in itertools.product(range(m.n_actions),
                                            repeat=m.n_states):
            lam = evaluate_policy(m, Policy.deterministic(assignment),
                                  cost_tag).lam
            key = (round(float(lam.sum()), 12), assignment)
            if best is None or key < best[0]:
                best = (key, assignment, lam)
        return tuple(best[1])
    pol = tuple(int(u) for u in np.argmin(m.cost_matrix(cost_tag), axis=1))
    seen = {pol}
    for _ in range(100):
        beta, vvals = _pure_values(m, pol, cost_tag)
        nxt = _improve_policy(m, beta, vvals, pol, cost_tag)
        if nxt == pol:
            return pol
        if nxt in seen:
            return min(seen | {nxt})     # cycle: deterministic fallback
        seen.add(nxt)
        pol = nxt
    return pol


# -- pinned block LPs ---------------------------------------------------------

def _build_pinned_primal(m: Mdp, cands: CandidateSet, cost_tag: str,
                         pol_det, keep: list[list[int]]):
    """Kallenberg-style block at a pinned pure policy: variables (beta, V)."""
    n = m.n_states
    floor = payoff_floor(m)
    cost = m.cost_matrix(cost_tag)
    rows, rhs = [], []
    for i in range(n):
        u = int(pol_det[i])
        for ci in keep[i]:
            q = cands.rows[i][ci]
            r1 = np.zeros(2 * n)
            r1[i] += 1.0
            r1[:n] -= q
            rows.append(r1)
            rhs.append(0.0)
            d = kl_divergence(q, m.p[i, u])
            ct = floor if d == float("inf") else float(cost[i, u]) - d
            r2 = np.zeros(2 * n)
            r2[i] += 1.0
            r2[n + i] += 1.0
            r2[n:] -= q
            rows.append(r2)
            rhs.append(max(ct, floor))
    obj = np.concatenate([np.ones(n), np.zeros(n)])
    return StandardLp.build(obj, a_ge=np.vstack(rows), b_ge=np.array(rhs),
                            free_vars=range(2 * n))


def _build_pinned_dual(m: Mdp, cands: CandidateSet, cost_tag: str,
                       pol_det, keep: list[list[int]]):
    """Transpose of the pinned block: weights nu, mu per kept candidate, w free."""
    n = m.n_states
    floor = payoff_floor(m)
    cost = m.cost_matrix(cost_tag)
    sizes = [len(k) for k in keep]
    nu_off, mu_off = [0] * n, [0] * n
    pos = 0
    for i in range(n):
        nu_off[i] = pos
        pos += sizes[i]
    for i in range(n):
        mu_off[i] = pos
        pos += sizes[i]
    w0 = pos
    n_vars = w0 + n
    obj = np.zeros(n_vars)
    obj[w0:] = -1.0

    eq_rows, eq_rhs = [], []
    for j in range(n):
        r = np.zeros(n_vars)
        for i in range(n):
            for si, ci in enumerate(keep[i]):
                q = cands.rows[i][ci]
                r[nu_off[i] + si] += (1.0 if i == j else 0.0) - q[j]
        for si in range(sizes[j]):
            r[mu_off[j] + si] += 1.0
        eq_rows.append(r)
        eq_rhs.append(1.0)
    for j in range(n):
        r = np.zeros(n_vars)
        for i in range(n):
            for si, ci in enumerate(keep[i]):
                q = cands.rows[i][ci]
                r[mu_off[i] + si] += (1.0 if i == j else 0.0) - q[j]
        eq_rows.append(r)
        eq_rhs.append(0.0)

    ge_rows, ge_rhs = [], []
    for i in range(n):
        u = int(pol_det[i])
        r = np.zeros(n_vars)
        for si, ci in enumerate(keep[i]):
            q = cands.rows[i][ci]
            d = kl_divergence(q, m.p[i, u])
            ct = floor if d == float("inf") else float(cost[i, u]) - d
            r[mu_off[i] + si] = max(ct, floor)
        r[w0 + i] = -1.0
        ge_rows.append(r)
        ge_rhs.append(0.0)

    lp = StandardLp.build(obj, a_eq=np.vstack(eq_rows), b_eq=np.array(eq_rhs),
                          a_ge=np.vstack(ge_rows), b_ge=np.array(ge_rhs),
                          free_vars=range(w0, w0 + n))
    return lp, nu_off, mu_off, w0, sizes


def _pinned_block_solve(m: Mdp, pol_det, cost_tag: str, cands: CandidateSet,
                        eps: float, max_rounds: int):
    """Generation loop on one pinned block, then its transposed dual."""
    from rsmdp.dp import face_relative_values
    n = m.n_states
    y = Policy.deterministic(pol_det).matrix(m.n_actions)
    supports = [frozenset(int(j) for j in
                          np.nonzero(m.p[i, int(pol_det[i])] > SUPPORT_EPS)[0])
                for i in range(n)]
    rounds = 0
    round_objs: list[float] = []
    while True:
        rounds += 1
        keep = _pinned_lists(m, cands, pol_det)
        lp = _build_pinned_primal(m, cands, cost_tag, pol_det, keep)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise SolverError(f"pinned block relaxation is {sol.status}")
        beta, vvals = sol.x[:n], sol.x[n:]
        round_objs.append(float(sol.objective_value))
        viols = separation_oracle(m, cands, beta, vvals, y, cost_tag, eps,
                                  supports=supports)
        if not viols:
            break
        added = 0
        for i, row, _, prov in viols:
            added += cands.add(i, row, prov)
        if added == 0 or rounds >= max_rounds:
            worst = max(vv for (_, _, vv, _) in viols)
            raise SolverError(
                f"constraint generation stalled after {rounds} rounds "
                f"(max outstanding violation {worst:.3e})",
                payload={"beta": beta, "v": vvals, "violations": viols})

    # canonical relative values, kept only if they stay on the optimal face
    try:
        v_can = face_relative_values(m, beta, cost_tag, v_init=vvals,
                                     policy=pol_det)
        x2 = np.concatenate([beta, v_can])
        if float((lp.a_ge @ x2 - lp.b_ge).min()) >= -1e-9:
            vvals = v_can
    except SolverError:
        pass

    dual_lp, nu_off, mu_off, w0, sizes = _build_pinned_dual(
        m, cands, cost_tag, pol_det, keep)
    dsol = solve_lp(dual_lp)
    if dsol.status != "optimal":
        raise SolverError(f"pinned block dual is {dsol.status}")
    gap = abs(sol.objective_value - (-dsol.objective_value))
    if gap > GAP_TOL * max(1.0, abs(sol.objective_value)):
        raise SolverError(f"duality gap {gap:.3e} exceeds {GAP_TOL}")
    # scatter kept-candidate weights back to full candidate indexing
    nu = tuple(np.zeros(len(cands.rows[i])) for i in range(n))
    mu = tuple(np.zeros(len(cands.rows[i])) for i in range(n))
    for i in range(n):
        for si, ci in enumerate(keep[i]):
            nu[i][ci] = dsol.x[nu_off[i] + si]
            mu[i][ci] = dsol.x[mu_off[i] + si]
    w = dsol.x[w0:w0 + n].copy()
    return {"beta": beta, "v": vvals, "nu": nu, "mu": mu, "w": w,
            "primal": float(sol.objective_value),
            "dual": float(-dsol.objective_value), "gap": float(gap),
            "rounds": rounds, "round_objectives": tuple(round_objs)}


def solve_with_generation(m: Mdp, cost_tag: str = "primary_c",
                          gamma: float | None = None, eps: float = 1e-7,
                          max_rounds: int = 200, seed: int = 0,
                          cands: CandidateSet | None = None,
                          cands_k: CandidateSet | None = None,
                          policy_det=None) -> GameSolution:
    """Outer pure-policy minimization, inner eps-certified block LPs.

    With `gamma`, the pinned blocks decouple completely, so the primary and
    constraint blocks are solved separately and combined into the parametrized
    objective sum(beta) + gamma*(sum(beta') - C*|S|).  Candidate sets passed
    in are extended in place, letting callers share pools across solves.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if gamma is not None and (m.k is None or m.bound is None):
        raise ValidationError("gamma requires constraint_cost and bound")
    if cands is None:
        cands = seed_candidates(m, cost_tag, seed)
    if gamma is not None and cands_k is None:
        cands_k = seed_candidates(m, "constraint_k", seed)

    n = m.n_states
    if policy_det is None:
        if gamma is None:
            policy_det = optimal_pure_policy(m, cost_tag)
        else:
            policy_det = _lagrangian_pure_policy(m, gamma, cost_tag)
    policy_det = tuple(int(u) for u in policy_det)

    main = _pinned_block_solve(m, policy_det, cost_tag, cands, eps, max_rounds)
    y = Policy.deterministic(policy_det).matrix(m.n_actions)
    if gamma is None:
        return GameSolution(
            beta=main["beta"], v=main["v"], y=y, mu=main["mu"], nu=main["nu"],
            w=main["w"], primal_obj=main["primal"], dual_obj=main["dual"],
            gap=main["gap"], rounds=main["rounds"],
            round_objectives=main["round_objectives"], candidates=cands,
            lambda_star=float(np.max(main["beta"])), policy_det=policy_det)

    side = _pinned_block_solve(m, policy_det, "constraint_k", cands_k, eps,
                               max_rounds)
    const = float(gamma) * float(m.bound) * n
    primal = main["primal"] + gamma * side["primal"] - const
    dual = main["dual"] + gamma * side["dual"] - const
    return GameSolution(
        beta=main["beta"], v=main["v"], y=y, mu=main["mu"], nu=main["nu"],
        w=main["w"], primal_obj=float(primal), dual_obj=float(dual),
        gap=float(abs(primal - dual)),
        rounds=main["rounds"] + side["rounds"],
        round_objectives=main["round_objectives"], candidates=cands,
        lambda_star=float(np.max(main["beta"])), policy_det=policy_det,
        gamma=float(gamma), beta_k=side["beta"], v_k=side["v"],
        mu_k=side["mu"], nu_k=side["nu"], w_k=side["w"], candidates_k=cands_k)


def _lagrangian_pure_policy(m: Mdp, gamma: float, cost_tag: str = "primary_c",
                            guard: int = POLICY_ENUM_GUARD):
    """argmin over pure policies of sum lam_c + gamma*(sum lam_k - C|S|)."""
    count = m.n_actions ** m.n_states
    if count > guard:
        raise GuardExceeded(
            f"{count} pure policies exceed the Lagrangian search guard {guard}")
    best = None
    for assignment in itertools.product(range(m.n_actions), repeat=m.n_states):
        pol = Policy.deterministic(assignment)
        val = float(evaluate_policy(m, pol, cost_tag).lam.sum()) + \
            gamma * float(evaluate_policy(m, pol, "constraint_k").lam.sum())
        key = (round(val, 12), assignment)
        if best is None or key < best[0]:
            best = (key, assignment)
    return tuple(best[1])


def phi_hat(m: Mdp, q_rows, pol: Policy, cost_tag: str = "primary_c"):
    """Game payoff of a kernel/policy pair: the best stationary average of the
    perturbed payoff over the kernel's recurrent classes.

    Returns (value, witness stationary distribution padded with zeros).
    """
    q_rows = np.asarray(q_rows, dtype=float)
    y = pol.matrix(m.n_actions)
    cost = m.cost_matrix(cost_tag)
    payoff = np.empty(m.n_states)
    for i in range(m.n_states):
        val = 0.0
        for u in range(m.n_actions):
            if y[i, u] <= 0.0:
                continue
            d = kl_divergence(q_rows[i], m.p[i, u])
            if d == float("inf"):
                val = float("-inf")
                break
            val += y[i, u] * (float(cost[i, u]) - d)
        payoff[i] = val
    adj = [[int(j) for j in np.nonzero(q_rows[i] > 1e-15)[0]]
           for i in range(m.n_states)]
    comps = _tarjan(adj)
    class_of = {}
    for ci, comp in enumerate(comps):
        for s in comp:
            class_of[s] = ci
    best_val = float("-inf")
    best_pi = np.zeros(m.n_states)
    for ci, comp in enumerate(comps):
        if any(class_of[j] != ci for s in comp for j in adj[s]):
            continue                        # not a sink class
        idx = np.asarray(comp)
        qc = q_rows[np.ix_(idx, idx)]
        a_sys = np.vstack([qc.T - np.eye(len(comp)), np.ones(len(comp))])
        b_sys = np.concatenate([np.zeros(len(comp)), [1.0]])
        pi, *_ = np.linalg.lstsq(a_sys, b_sys, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum()
        val = float(np.dot(pi, payoff[idx])) if np.all(np.isfinite(payoff[idx])) \
            else float("-inf")
        if val > best_val:
            best_val = val
            best_pi = np.zeros(m.n_states)
            best_pi[idx] = pi
    return best_val, best_pi


def recover_adversarial_kernel(m: Mdp, sol: GameSolution) -> np.ndarray:
    """Optimal kernel rows: dual-weight averages where the value-block weights
    carry mass, exact tilt best responses elsewhere."""
    rows = np.zeros((m.n_states, m.n_states))
    for i in range(m.n_states):
        mass = float(sol.mu[i].sum())
        if mass > 1e-12:
            for ci, q in enumerate(sol.candidates.rows[i]):
                rows[i] += sol.mu[i][ci] * q
            rows[i] /= mass
        else:
            rows[i] = mixture_tilt(sol.y[i], m.p[i], sol.v).q_star
    return rows
