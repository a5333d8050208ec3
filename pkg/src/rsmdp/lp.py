"""Dense two-phase primal simplex with Bland's rule; no external solver.

Instance sizes in this toolkit stay in the hundreds of rows, so a dense
tableau with exact basis certificates beats sparse machinery: every Optimal
return is checked for primal feasibility, dual feasibility, complementary
slackness and a zero primal-dual objective gap before it leaves the solver.
Bland's rule is always on; determinism matters more than pivot counts here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rsmdp.errors import SolverError, ValidationError

PIVOT_TOL = 1e-10
ENTER_TOL = 1e-9
CERT_TOL = 1e-8
RATIO_TIE_TOL = 1e-9
REFRESH_EVERY = 64
REFACTOR_EVERY = 200
DEGENERATE_LIMIT = 1000


@dataclass(frozen=True)
class StandardLp:
    """min objective . x  s.t.  a_eq x = b_eq,  a_ge x >= b_ge,
    lower <= x <= upper with lower in {0, -inf} and upper in {+inf, finite}."""

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ge: np.ndarray
    b_ge: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @staticmethod
    def build(objective, a_eq=None, b_eq=None, a_ge=None, b_ge=None,
              free_vars=(), upper=None) -> "StandardLp":
        c = np.asarray(objective, dtype=float)
        n = c.shape[0]
        a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
        a_ge = np.zeros((0, n)) if a_ge is None else np.asarray(a_ge, dtype=float)
        b_ge = np.zeros(0) if b_ge is None else np.asarray(b_ge, dtype=float)
        lower = np.zeros(n)
        lower[list(free_vars)] = float("-inf")
        up = np.full(n, float("inf")) if upper is None else np.asarray(upper, dtype=float)
        lp = StandardLp(objective=c, a_eq=a_eq, b_eq=b_eq, a_ge=a_ge,
                        b_ge=b_ge, lower=lower, upper=up)
        lp.check_shapes()
        return lp

    def check_shapes(self) -> None:
        n = self.objective.shape[0]
        if self.a_eq.shape != (self.b_eq.shape[0], n):
            raise ValidationError("a_eq/b_eq dimensions inconsistent")
        if self.a_ge.shape != (self.b_ge.shape[0], n):
            raise ValidationError("a_ge/b_ge dimensions inconsistent")
        for arr in (self.objective, self.a_eq, self.b_eq, self.a_ge, self.b_ge):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValidationError("LP coefficients must be finite")


@dataclass(frozen=True)
class LpSolution:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective_value: float | None
    dual_eq: np.ndarray | None
    dual_ge: np.ndarray | None
    pivots: int = 0


class _Tableau:
    """Equality-form tableau; rows with the right sign start on their slack."""

    def __init__(self, lp: StandardLp):
        c = lp.objective
        n = c.shape[0]
        free = np.nonzero(~np.isfinite(lp.lower))[0]
        # free variables split into differences of nonnegatives
        self.pos_col = np.arange(n)
        self.neg_col = np.full(n, -1)
        nxt = n
        for j in free:
            self.neg_col[j] = nxt
            nxt += 1
        self.n_orig = n
        self.n_exp = nxt
        self.c_exp = np.zeros(self.n_exp)
        self.c_exp[self.pos_col] = c
        for j in free:
            self.c_exp[self.neg_col[j]] = -c[j]

        rows = []          # (expanded vec, rhs >= 0, flipped, tag, orig index)
        for i in range(lp.b_eq.shape[0]):
            vec, b = self._expand(lp.a_eq[i]), float(lp.b_eq[i])
            flip = b < 0
            rows.append((-vec if flip else vec, -b if flip else b, flip, "eq", i))
        ge_rows = [(lp.a_ge[i], float(lp.b_ge[i]), "ge", i)
                   for i in range(lp.b_ge.shape[0])]
        for j in np.nonzero(np.isfinite(lp.upper))[0]:
            vec = np.zeros(n)
            vec[j] = -1.0
            ge_rows.append((vec, -float(lp.upper[j]), "ub", int(j)))
        for a, b, tag, i in ge_rows:
            vec = self._expand(np.asarray(a, dtype=float))
            if b <= 0.0:
                rows.append((-vec, -b, True, tag, i))    # becomes <= with slack
            else:
                rows.append((vec, b, False, tag, i))     # keeps >= with surplus
        self.row_flip = np.array([r[2] for r in rows], dtype=bool)
        self.row_tag = [(r[3], r[4]) for r in rows]
        m = len(rows)

        self.slack_col = np.full(m, -1)
        self.art_col = np.full(m, -1)
        surplus = []
        col = self.n_exp
        for r, (_, _, flip, tag, _) in enumerate(rows):
            if tag != "eq" and flip:
                self.slack_col[r] = col
                col += 1
            elif tag != "eq":
                surplus.append((r, col))
                col += 1
        self.first_art = col
        for r in range(m):
            if self.slack_col[r] < 0:
                self.art_col[r] = col
                col += 1
        self.n_cols = col

        T = np.zeros((m, self.n_cols + 1))
        for r, (vec, b, _, _, _) in enumerate(rows):
            T[r, :self.n_exp] = vec
            T[r, -1] = b
        for r in range(m):
            if self.slack_col[r] >= 0:
                T[r, self.slack_col[r]] = 1.0
            if self.art_col[r] >= 0:
                T[r, self.art_col[r]] = 1.0
        for r, cidx in surplus:
            T[r, cidx] = -1.0
        self.T = T
        # pristine copy for final basis refactorization
        self.a0 = T[:, :-1].copy()
        self.b0 = T[:, -1].copy()
        self.basis = np.where(self.slack_col >= 0, self.slack_col, self.art_col)
        self.in_basis = np.zeros(self.n_cols, dtype=bool)
        self.in_basis[self.basis] = True
        self.dropped = np.zeros(m, dtype=bool)
        self.pivots = 0
        self.max_pivots = 10 * (m + self.n_cols) ** 2

    def _expand(self, a: np.ndarray) -> np.ndarray:
        vec = np.zeros(self.n_exp)
        vec[self.pos_col] = a
        for j in np.nonzero(self.neg_col >= 0)[0]:
            vec[self.neg_col[j]] = -a[j]
        return vec

    def _pivot(self, r: int, q: int, z: np.ndarray) -> None:
        T = self.T
        T[r] = T[r] / T[r, q]
        colvals = T[:, q].copy()
        colvals[r] = 0.0
        hit = np.nonzero(colvals)[0]
        if hit.size:
            T[hit] -= np.outer(colvals[hit], T[r])
        z -= z[q] * T[r]
        self.in_basis[self.basis[r]] = False
        self.in_basis[q] = True
        self.basis[r] = q
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise SolverError(f"simplex stalled after {self.pivots} pivots")

    def _refresh(self, z: np.ndarray, cost: np.ndarray) -> None:
        """Recompute the reduced-cost row from scratch to shed pivot drift."""
        z[:] = 0.0
        z[:self.n_cols] = cost
        for r in range(self.T.shape[0]):
            if not self.dropped[r]:
                cb = cost[self.basis[r]]
                if cb != 0.0:
                    z -= cb * self.T[r]

    def _refactorize(self, z: np.ndarray, cost: np.ndarray,
                     clamp: bool = True) -> None:
        """Rebuild the tableau from the pristine matrix under the current
        basis.  Long degenerate pivot sequences otherwise accumulate enough
        elimination error to steer the walk onto an infeasible basis.  With
        `clamp`, drift-scale negative rhs entries are zeroed so the primal
        walk can continue; end-of-phase callers pass clamp=False and hand any
        real negatives to the dual restoration instead."""
        live = np.nonzero(~self.dropped)[0]
        if live.size == 0:
            return
        bmat = self.a0[np.ix_(live, self.basis[live])]
        rhs = np.hstack([self.a0[live], self.b0[live, None]])
        try:
            fresh = np.linalg.solve(bmat, rhs)
        except np.linalg.LinAlgError:
            return
        if not np.all(np.isfinite(fresh)):
            return
        self.T[live, :self.n_cols] = fresh[:, :-1]
        self.T[live, -1] = np.maximum(fresh[:, -1], 0.0) if clamp else fresh[:, -1]
        self._refresh(z, cost)

    def _dual_restore(self, z: np.ndarray, cost: np.ndarray,
                      allowed: np.ndarray) -> None:
        """Dual simplex steps clearing residual negative rhs entries at a
        dual-feasible basis: optimality is preserved, feasibility restored."""
        live_rows = np.nonzero(~self.dropped)[0]
        for _ in range(200):
            rhs = self.T[live_rows, -1]
            worst = int(np.argmin(rhs))
            if rhs[worst] >= -1e-11 * max(1.0, float(np.abs(self.b0).max(initial=0.0))):
                break
            r = int(live_rows[worst])
            row = self.T[r, :self.n_cols]
            cand = np.nonzero(allowed & ~self.in_basis & (row < -PIVOT_TOL))[0]
            if cand.size == 0:
                raise SolverError("dual restoration found no pivot; "
                                  "basis is numerically infeasible")
            ratios = z[cand] / (-row[cand])
            q = int(cand[np.argmin(ratios)])
            self._pivot(r, q, z)
        np.maximum(self.T[:, -1], 0.0, out=self.T[:, -1])

    def _iterate(self, z: np.ndarray, allowed: np.ndarray,
                 cost: np.ndarray) -> str:
        """Entering: Bland (lowest negative reduced cost).  Leaving: largest
        pivot among ratio ties for stability, switching to strict Bland after
        a long degenerate stretch so cycling stays impossible in principle."""
        T = self.T
        live = ~self.dropped
        since_refresh = 0
        since_refactor = 0
        degenerate_run = 0
        while True:
            eligible = allowed & ~self.in_basis
            neg = np.nonzero(eligible & (z[:self.n_cols] < -ENTER_TOL))[0]
            if neg.size == 0:
                self._refactorize(z, cost)
                neg = np.nonzero(eligible & (z[:self.n_cols] < -ENTER_TOL))[0]
                if neg.size == 0:
                    return "optimal"
            q = int(neg[0])
            col = T[:, q]
            ok = live & (col > PIVOT_TOL)
            if not np.any(ok):
                self._refactorize(z, cost)
                if z[q] < -ENTER_TOL and not np.any(live & (T[:, q] > PIVOT_TOL)):
                    return "unbounded"
                continue
            # Harris-style two-pass ratio test: a small feasibility slack in
            # the first pass buys a much larger pivot in the second, which is
            # what keeps elimination drift in check; negative ratios are
            # roundoff on degenerate rows and step zero
            ratios = np.where(ok, T[:, -1] / np.where(ok, col, 1.0), np.inf)
            ratios = np.maximum(ratios, 0.0)
            relaxed = np.where(ok, (T[:, -1] + 1e-7) / np.where(ok, col, 1.0),
                               np.inf)
            theta = max(float(relaxed.min()), 0.0)
            best = float(ratios.min())
            tied = np.nonzero(ok & (ratios <= theta))[0]
            if tied.size == 0:
                tied = np.nonzero(ok & (ratios <= best + RATIO_TIE_TOL))[0]
            if degenerate_run > DEGENERATE_LIMIT:
                leave = int(tied[np.argmin(self.basis[tied])])
            else:
                leave = int(tied[np.argmax(col[tied])])
            degenerate_run = degenerate_run + 1 if best <= 1e-12 else 0
            self._pivot(leave, q, z)
            since_refresh += 1
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self._refactorize(z, cost)
                since_refactor = 0
                since_refresh = 0
            elif since_refresh >= REFRESH_EVERY:
                self._refresh(z, cost)
                since_refresh = 0


def solve_lp(lp: StandardLp) -> LpSolution:
    """Two-phase simplex; Optimal results carry certified duals."""
    lp.check_shapes()
    tb = _Tableau(lp)
    m = tb.T.shape[0]

    # phase 1: drive the artificial sum to zero
    cost1 = np.zeros(tb.n_cols)
    cost1[tb.first_art:] = 1.0
    z = np.zeros(tb.n_cols + 1)
    tb._refresh(z, cost1)
    allowed = np.ones(tb.n_cols, dtype=bool)
    allowed[tb.first_art:] = False
    status = tb._iterate(z, allowed, cost1)
    if status != "optimal":
        raise SolverError(f"phase-1 simplex returned {status}")
    rhs_scale = max(1.0, float(np.abs(tb.T[:, -1]).max(initial=0.0)))
    if -z[-1] > CERT_TOL * rhs_scale:
        return LpSolution("infeasible", None, None, None, None, tb.pivots)

    # pivot leftover artificials out on the stablest eligible entry; rows
    # with no usable entry are redundant and dropped
    for r in range(m):
        if tb.basis[r] >= tb.first_art and not tb.dropped[r]:
            entries = np.abs(tb.T[r, :tb.first_art])
            entries[tb.in_basis[:tb.first_art]] = 0.0
            q = int(np.argmax(entries))
            if entries[q] > 1e-8:
                tb._pivot(r, q, z)
            else:
                tb.dropped[r] = True

    # phase 2, started from a freshly refactorized tableau; after each
    # optimal sweep, clear residual infeasibility by dual steps and resweep
    cfull = np.zeros(tb.n_cols)
    cfull[:tb.n_exp] = tb.c_exp
    z = np.zeros(tb.n_cols + 1)
    tb._refactorize(z, cfull)
    tb._refresh(z, cfull)
    rhs_tol = 1e-11 * max(1.0, float(np.abs(tb.b0).max(initial=0.0)))
    for _ in range(4):
        status = tb._iterate(z, allowed, cfull)
        if status == "unbounded":
            return LpSolution("unbounded", None, None, None, None, tb.pivots)
        tb._refactorize(z, cfull, clamp=False)
        live_rows = np.nonzero(~tb.dropped)[0]
        if float(tb.T[live_rows, -1].min(initial=0.0)) >= -rhs_tol:
            break
        tb._dual_restore(z, cfull, allowed)
    np.maximum(tb.T[:, -1], 0.0, out=tb.T[:, -1])

    # two extraction routes: a refactorized basis solve from the pristine
    # matrix (sheds tableau drift, but a near-singular basis can spoil it) and
    # the raw tableau values; keep whichever certifies better
    live = np.nonzero(~tb.dropped)[0]
    basis_live = tb.basis[live]
    routes = []
    try:
        bmat = tb.a0[np.ix_(live, basis_live)]
        b_live = tb.b0[live]
        c_basis = cfull[basis_live]
        x_basic = np.linalg.solve(bmat, b_live)
        y_rows = np.linalg.solve(bmat.T, c_basis)
        for _ in range(2):      # iterative refinement sharpens both solves
            x_basic += np.linalg.solve(bmat, b_live - bmat @ x_basic)
            y_rows += np.linalg.solve(bmat.T, c_basis - bmat.T @ y_rows)
        if np.all(np.isfinite(x_basic)) and np.all(np.isfinite(y_rows)):
            routes.append((x_basic, y_rows))
    except np.linalg.LinAlgError:
        pass
    routes.append((np.array([tb.T[r, -1] for r in live]), None))

    best = None
    for x_basic, y_rows in routes:
        x_exp = np.zeros(tb.n_cols)
        x_exp[basis_live] = x_basic
        x = x_exp[tb.pos_col].copy()
        for j in np.nonzero(tb.neg_col >= 0)[0]:
            x[j] -= x_exp[tb.neg_col[j]]
        obj = float(lp.objective @ x)
        dual_eq = np.zeros(lp.b_eq.shape[0])
        dual_ge = np.zeros(lp.b_ge.shape[0])
        dual_ub = np.zeros(lp.objective.shape[0])
        for pos, r in enumerate(live):
            if y_rows is not None:
                y = float(y_rows[pos])
            else:
                marker = tb.slack_col[r] if tb.slack_col[r] >= 0 else tb.art_col[r]
                y = -float(z[marker])
            if tb.row_flip[r]:
                y = -y
            tag, idx = tb.row_tag[r]
            if tag == "eq":
                dual_eq[idx] = y
            elif tag == "ge":
                dual_ge[idx] = y
            else:
                dual_ub[idx] = y
        residual = _certificate_residual(lp, x, obj, dual_eq, dual_ge, dual_ub)
        if best is None or residual < best[0]:
            best = (residual, x, obj, dual_eq, dual_ge, dual_ub)

    residual, x, obj, dual_eq, dual_ge, dual_ub = best
    scale = max(1.0, float(np.abs(x).max(initial=0.0)),
                float(np.abs(lp.b_eq).max(initial=0.0)),
                float(np.abs(lp.b_ge).max(initial=0.0)), abs(obj))
    if residual > CERT_TOL * scale:
        raise SolverError(
            f"optimality certificate residual {residual:.3e} exceeds tolerance")
    return LpSolution("optimal", x, obj, dual_eq, dual_ge, tb.pivots)


def _certificate_residual(lp: StandardLp, x, obj, dual_eq, dual_ge, dual_ub) -> float:
    """Worst violation across primal/dual feasibility, complementary slackness
    and the primal-dual objective gap."""
    worst = 0.0
    if lp.b_eq.size:
        worst = max(worst, float(np.abs(lp.a_eq @ x - lp.b_eq).max()))
    slack = lp.a_ge @ x - lp.b_ge if lp.b_ge.size else np.zeros(0)
    if slack.size:
        worst = max(worst, -float(slack.min()))
    bounded = np.isfinite(lp.lower)
    if np.any(bounded):
        worst = max(worst, -float(x[bounded].min(initial=0.0)))
    cap = np.isfinite(lp.upper)
    if np.any(cap):
        worst = max(worst, float((x[cap] - lp.upper[cap]).max(initial=0.0)))
    if dual_ge.size:
        worst = max(worst, -float(dual_ge.min()))
    red = lp.objective.copy()
    if lp.b_eq.size:
        red -= lp.a_eq.T @ dual_eq
    if lp.b_ge.size:
        red -= lp.a_ge.T @ dual_ge
    red += dual_ub          # upper bounds enter as rows -x_j >= -u_j
    if np.any(bounded):
        worst = max(worst, -float(red[bounded].min(initial=0.0)))
    if np.any(~bounded):
        worst = max(worst, float(np.abs(red[~bounded]).max(initial=0.0)))
    if slack.size:
        worst = max(worst, float(np.abs(dual_ge * slack).max()))
    if np.any(bounded):
        worst = max(worst, float(np.abs(red[bounded] * x[bounded]).max(initial=0.0)))
    dual_obj = float(lp.b_eq @ dual_eq) + float(lp.b_ge @ dual_ge)
    dual_obj -= float(np.sum(dual_ub * np.where(cap, lp.upper, 0.0)))
    return max(worst, abs(dual_obj - obj))
