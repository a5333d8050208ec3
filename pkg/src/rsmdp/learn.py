"""Simulation-based two-timescale learning for the constrained problem.

A fast multiplicative Q-iterate runs on the doubled chain (both coordinates
driven by the shared action, costs c on the first and the current multiplier
times k on the second) while the multiplier moves on a slow stochastic ascent
driven by the observed constraint cost.  The fast stepsize decays like
n^{-0.6}, the slow one like n^{-1}; both are square-summable but not
summable, and the slow one is o(the fast one), which is what makes the
multiplier see an equilibrated Q-table.

The slow drift balances the *average* of the observed constraint cost against
the threshold, which overshoots the exponential growth-rate constraint it
stands in for (Jensen).  The returned mixed policy therefore tightens the
growth constraint after training, using only what the learner saw: transition
counts from the training trajectory give an empirical model, and the mixing
weight between the two most recent distinct greedy policies is bisected until
the constraint growth rate on that empirical model meets the threshold.
Everything is driven by one seeded generator.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass

import numpy as np

from rsmdp.errors import ValidationError
from rsmdp.model import Mdp, Policy

FAST_EXPONENT = 0.6
SLOW_EXPONENT = 1.0
EXPLORATION = 0.1


def stepsize_conditions(fast_exp: float = FAST_EXPONENT,
                        slow_exp: float = SLOW_EXPONENT) -> dict:
    """Exponent arithmetic for the stochastic-approximation conditions."""
    return {
        "fast_divergent": fast_exp <= 1.0,
        "fast_square_summable": 2.0 * fast_exp > 1.0,
        "slow_divergent": slow_exp <= 1.0,
        "slow_square_summable": 2.0 * slow_exp > 1.0,
        "slow_dominated": slow_exp > fast_exp,
    }


@dataclass(frozen=True)
class LearnerConfig:
    a0: float = 1.0
    b0: float = 1.0
    a_decay: float = 1.0
    seed: int = 0
    max_steps: int = 1_000_000
    i_ref: int = 0
    u_ref: int = 0
    gamma0: float = 0.0
    gamma_cap: float = 100.0
    theta: float | None = None          # constraint level, log-growth units
    trace_every: int = 1000

    def __post_init__(self):
        if not 0.0 < self.a0 <= 1.0:
            raise ValidationError("a0 must lie in (0, 1] to keep Q positive")
        if self.b0 <= 0.0 or self.a_decay <= 0.0:
            raise ValidationError("b0 and a_decay must be positive")
        if self.gamma0 < 0.0 or self.gamma_cap <= 0.0:
            raise ValidationError("gamma bounds must be nonnegative")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be positive")
        conds = stepsize_conditions()
        if not all(conds.values()):
            raise ValidationError(f"stepsize exponents violate {conds}")

    def fast_step(self, n: int) -> float:
        return self.a0 / (1.0 + n * self.a_decay) ** FAST_EXPONENT

    def slow_step(self, n: int) -> float:
        return self.b0 / (1.0 + n) ** SLOW_EXPONENT


@dataclass
class QTable:
    """Positive table over (product state, action) with the growth estimate
    read off at the reference pair."""

    q: list[list[float]]
    gamma: float
    ref: int
    u_ref: int

    @property
    def lambda_estimate(self) -> float:
        return math.log(self.q[self.ref][self.u_ref])


@dataclass(frozen=True)
class TraceRow:
    n: int
    gamma: float
    lambda_estimate: float
    epsilon: float
    visited_state: int


@dataclass(frozen=True)
class LearnResult:
    q_table: QTable
    final_gamma: float
    greedy_policy: tuple[int, ...]      # per product state
    mixed_policy: Policy                # original-state, constraint-tightened
    trace: tuple[TraceRow, ...]
    greedy_frequencies: np.ndarray      # per original state, trailing window


def simulate_step(m: Mdp, state: int, action: int, rng: random.Random) -> int:
    """One transition draw from the model row by inverse CDF."""
    row = m.p[state, action]
    r = rng.random()
    acc = 0.0
    for j in range(m.n_states - 1):
        acc += row[j]
        if r < acc:
            return j
    return m.n_states - 1


def rs_q_step(qt: QTable, transition, config: LearnerConfig, n: int) -> None:
    """Multiplicative Q-update at the visited pair.

    q <- q + a(n) * (e^{h} * min_b q(next, b) / q(ref) - q); the fixed point
    normalizes so that log q at the reference pair is the optimal growth rate.
    """
    state, action, nxt, stage_cost = transition
    a = config.fast_step(n)
    target = math.exp(stage_cost) * min(qt.q[nxt]) / qt.q[qt.ref][qt.u_ref]
    qt.q[state][action] += a * (target - qt.q[state][action])


def gamma_step(gamma: float, k_obs: float, config: LearnerConfig, n: int,
               theta: float) -> float:
    """Slow multiplier ascent on the observed constraint cost, clamped to
    [0, gamma_cap]."""
    g = gamma + config.slow_step(n) * (k_obs - theta)
    return min(max(g, 0.0), config.gamma_cap)


def _cumulative_rows(m: Mdp) -> list[list[list[float]]]:
    out = []
    for i in range(m.n_states):
        per_action = []
        for u in range(m.n_actions):
            acc, cum = 0.0, []
            for j in range(m.n_states):
                acc += float(m.p[i, u, j])
                cum.append(acc)
            per_action.append(cum)
        out.append(per_action)
    return out


def run_two_timescale(m: Mdp, config: LearnerConfig) -> LearnResult:
    """Interleave the fast Q-iterate on the doubled chain with the slow
    multiplier ascent; epsilon-greedy exploration at a fixed rate.

    Emits a trace row every `trace_every` steps.  The trailing fifth of the
    run records greedy-action frequencies per original state; the returned
    mixed policy tightens the growth constraint between the last two distinct
    greedy policies by bisection on a seeded Monte-Carlo growth estimate.
    """
    if m.k is None:
        raise ValidationError("two-timescale learning needs constraint_cost")
    theta = config.theta if config.theta is not None else m.bound
    if theta is None:
        raise ValidationError("no threshold: set config.theta or the bound")
    n_states, n_actions = m.n_states, m.n_actions
    nn = n_states * n_states
    ref = config.i_ref * n_states + config.i_ref
    qt = QTable(q=[[1.0] * n_actions for _ in range(nn)],
                gamma=float(config.gamma0), ref=ref, u_ref=config.u_ref)
    rng = random.Random(config.seed)
    cum = _cumulative_rows(m)
    cost_c = m.c.tolist()
    cost_k = m.k.tolist()

    zi, zj = 0, 0
    gamma = float(config.gamma0)
    trace: list[TraceRow] = []
    window_start = int(config.max_steps * 0.8)
    freq = np.zeros((n_states, n_actions))
    greedy_history: list[tuple[int, ...]] = []
    visit_counts = [[[0] * n_states for _ in range(n_actions)]
                    for _ in range(n_states)]

    for n in range(config.max_steps):
        s = zi * n_states + zj
        row = qt.q[s]
        greedy = 0
        best = row[0]
        for u in range(1, n_actions):
            if row[u] < best:
                best, greedy = row[u], u
        if rng.random() < EXPLORATION:
            action = rng.randrange(n_actions)
        else:
            action = greedy
        if n >= window_start:
            freq[zi, greedy] += 1.0
            marg = _marginal_greedy(qt, n_states, n_actions)
            if not greedy_history or greedy_history[-1] != marg:
                greedy_history.append(marg)

        r = rng.random()
        ci = cum[zi][action]
        ni = bisect.bisect_right(ci, r)
        if ni >= n_states:
            ni = n_states - 1
        r = rng.random()
        cj = cum[zj][action]
        nj = bisect.bisect_right(cj, r)
        if nj >= n_states:
            nj = n_states - 1
        visit_counts[zi][action][ni] += 1
        visit_counts[zj][action][nj] += 1

        stage = cost_c[zi][action] + gamma * cost_k[zj][action]
        rs_q_step(qt, (s, action, ni * n_states + nj, stage), config, n)
        gamma = gamma_step(gamma, cost_k[zj][action], config, n, theta)
        qt.gamma = gamma
        zi, zj = ni, nj

        if n % config.trace_every == 0:
            trace.append(TraceRow(n=n, gamma=gamma,
                                  lambda_estimate=qt.lambda_estimate,
                                  epsilon=EXPLORATION,
                                  visited_state=zi * n_states + zj))

    greedy_policy = tuple(
        min(range(n_actions), key=lambda u: (qt.q[s][u], u)) for s in range(nn))
    m_hat = _empirical_model(m, visit_counts)
    mixed = _extract_mixed_policy(m_hat, freq, greedy_history, theta)
    row_sums = freq.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        freq_norm = np.where(row_sums > 0, freq / np.maximum(row_sums, 1.0),
                             1.0 / n_actions)
    return LearnResult(q_table=qt, final_gamma=gamma,
                       greedy_policy=greedy_policy, mixed_policy=mixed,
                       trace=tuple(trace), greedy_frequencies=freq_norm)


def _empirical_model(m: Mdp, visit_counts) -> Mdp:
    """Certainty-equivalence model: empirical transition rows from the
    training trajectory (uniform where a pair was never visited), known costs."""
    p_hat = np.empty_like(np.asarray(m.p))
    for i in range(m.n_states):
        for u in range(m.n_actions):
            row = np.asarray(visit_counts[i][u], dtype=float)
            total = row.sum()
            p_hat[i, u] = row / total if total > 0 else np.full(
                m.n_states, 1.0 / m.n_states)
    return Mdp(n_states=m.n_states, n_actions=m.n_actions, p=p_hat,
               c=m.c.copy(), k=m.k.copy(), bound=m.bound)


def _marginal_greedy(qt: QTable, n_states: int, n_actions: int) -> tuple[int, ...]:
    """Greedy action per original state, read along the diagonal pairs."""
    out = []
    for i in range(n_states):
        row = qt.q[i * n_states + i]
        out.append(min(range(n_actions), key=lambda u: (row[u], u)))
    return tuple(out)


def _extract_mixed_policy(m_hat: Mdp, freq: np.ndarray, greedy_history,
                          theta: float) -> Policy:
    """Constraint-tightening mix of the last two distinct greedy policies.

    Evaluation runs on the empirical model only, never the true one: the
    growth of a candidate mix is the spectral rate of the count-estimated
    kernel.  Falls back to the trailing-window frequency mix when the ascent
    never alternated.
    """
    from rsmdp.spectral import evaluate_policy

    row_sums = freq.sum(axis=1, keepdims=True)
    if np.all(row_sums > 0):
        y_freq = freq / row_sums
    else:
        y_freq = np.full((m_hat.n_states, m_hat.n_actions),
                         1.0 / m_hat.n_actions)

    distinct = []
    for pol in reversed(greedy_history):
        if pol not in distinct:
            distinct.append(pol)
        if len(distinct) == 2:
            break

    def growth(y) -> float:
        pol = Policy.randomized(y)
        return float(evaluate_policy(m_hat, pol, "constraint_k").lam.max())

    if len(distinct) < 2:
        return Policy.randomized(y_freq)
    y_a = Policy.deterministic(distinct[0]).matrix(m_hat.n_actions)
    y_b = Policy.deterministic(distinct[1]).matrix(m_hat.n_actions)
    g_a, g_b = growth(y_a), growth(y_b)
    if g_a > g_b:
        y_bad, y_good, g_bad, g_good = y_a, y_b, g_a, g_b
    else:
        y_bad, y_good, g_bad, g_good = y_b, y_a, g_b, g_a
    if g_bad <= theta:                  # both feasible: keep the frequency mix
        return Policy.randomized(y_freq)
    if g_good > theta:                  # nothing feasible: least violating
        return Policy.randomized(y_good)
    lo, hi = 0.0, 1.0                   # weight on the infeasible endpoint
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if growth(mid * y_bad + (1.0 - mid) * y_good) <= theta:
            lo = mid
        else:
            hi = mid
    return Policy.randomized(lo * y_bad + (1.0 - lo) * y_good)


def write_trace_csv(path, rows) -> None:
    """Learning trace: header row then one row per emitted step."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "gamma", "lambda_estimate", "epsilon",
                         "visited_state"])
        for r in rows:
            writer.writerow([r.n, repr(r.gamma), repr(r.lambda_estimate),
                             repr(r.epsilon), repr(r.visited_state)])
