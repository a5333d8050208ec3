"""Exact risk-sensitive evaluation of stationary policies.

Fixing a (possibly randomized) stationary policy turns the exponentiated-cost
dynamics into a nonnegative multiplicative kernel
``a[i][j] = sum_u y[i][u] e^{c(i,u)} p(j|i,u)``.  The per-state log-growth
rate of ``(A^N 1)_i`` equals the log of the largest Perron root among the
kernel's communicating classes reachable from ``i``.  This module builds the
kernel, decomposes its support digraph into strongly connected classes,
computes per-class Perron roots by power iteration, and assembles the
per-state rates and the grouping of states by equal rate.

Kernels are stored as ``e^{log_scale} * mat``; the scale is nonzero only when
some cost exceeds the overflow guard, so small instances pay nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rsmdp.errors import SolverError, ValidationError
from rsmdp.model import SUPPORT_EPS, Mdp, Policy

# Switch to a scaled representation once any cost exceeds this.
OVERFLOW_GUARD = 300.0
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000


@dataclass(frozen=True)
class MultiplicativeKernel:
    """Nonnegative kernel ``e^{log_scale} * mat`` with its support digraph."""

    mat: np.ndarray
    log_scale: float
    support: np.ndarray            # boolean [i][j]
    cost_tag: str

    @property
    def n(self) -> int:
        return self.mat.shape[0]


@dataclass(frozen=True)
class Condensation:
    """SCC decomposition, classes listed sinks-first (reverse topological)."""

    classes: tuple[tuple[int, ...], ...]
    class_of: tuple[int, ...]
    successors: tuple[frozenset, ...]   # edges between distinct classes


@dataclass(frozen=True)
class SpectralResult:
    """Per-state log-growth rates and the class structure producing them."""

    lam: np.ndarray
    classes: tuple[tuple[int, ...], ...]
    class_rho: tuple[float, ...]
    class_log_rho: tuple[float, ...]
    partition: tuple[tuple[int, ...], ...]


def build_kernel(m: Mdp, pol: Policy, cost_tag: str = "primary_c") -> MultiplicativeKernel:
    """Multiplicative kernel of `pol` under the selected cost."""
    pol.validate_for(m)
    cost = m.cost_matrix(cost_tag)
    y = pol.matrix(m.n_actions)
    log_scale = float(np.max(cost)) if np.max(cost) > OVERFLOW_GUARD else 0.0
    # mat[i][j] = sum_u y[i][u] e^{c(i,u)-K} p[i][u][j]
    w = y * np.exp(cost - log_scale)               # [i][u]
    mat = np.einsum("iu,iuj->ij", w, m.p)
    support = np.einsum("iu,iuj->ij", (y > SUPPORT_EPS).astype(float),
                        (m.p > SUPPORT_EPS).astype(float)) > 0.0
    return MultiplicativeKernel(mat=mat, log_scale=log_scale,
                                support=support, cost_tag=cost_tag)


def _tarjan(adj: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan; components are emitted sinks-first."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for out_i in range(pi, len(adj[v])):
                w = adj[v][out_i]
                if index[w] == -1:
                    work[-1] = (v, out_i + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def scc_condensation(kern: MultiplicativeKernel) -> Condensation:
    """Strongly connected classes of the support digraph, sinks first."""
    n = kern.n
    adj = [[int(j) for j in np.nonzero(kern.support[i])[0]] for i in range(n)]
    comps = _tarjan(adj)
    class_of = [0] * n
    for ci, comp in enumerate(comps):
        for v in comp:
            class_of[v] = ci
    succ = [set() for _ in comps]
    for i in range(n):
        for j in adj[i]:
            if class_of[i] != class_of[j]:
                succ[class_of[i]].add(class_of[j])
    return Condensation(classes=tuple(tuple(c) for c in comps),
                        class_of=tuple(class_of),
                        successors=tuple(frozenset(s) for s in succ))


def _class_period(sub_support: np.ndarray) -> int:
    """Period of an irreducible class: gcd of level defects over its edges."""
    n = sub_support.shape[0]
    level = [-1] * n
    level[0] = 0
    queue = [0]
    while queue:
        v = queue.pop(0)
        for w in np.nonzero(sub_support[v])[0]:
            if level[w] == -1:
                level[w] = level[v] + 1
                queue.append(int(w))
    g = 0
    for v in range(n):
        for w in np.nonzero(sub_support[v])[0]:
            g = math.gcd(g, level[v] + 1 - level[w])
    return max(abs(g), 1)


def perron_root(sub: np.ndarray) -> float:
    """Spectral radius of a nonnegative class matrix.

    Normalized power iteration started from all-ones; the root estimate is a
    geometric mean of the per-step growth factors over one period window, so
    periodic classes converge too.  1x1 classes return the entry directly.
    """
    sub = np.asarray(sub, dtype=float)
    if sub.ndim != 2 or sub.shape[0] != sub.shape[1]:
        raise ValidationError("perron_root expects a square matrix")
    if np.any(sub < 0.0):
        raise ValidationError("perron_root expects a nonnegative matrix")
    n = sub.shape[0]
    if n == 1:
        return float(sub[0, 0])
    period = _class_period(sub > 0.0)
    x = np.ones(n)
    factors: list[float] = []
    estimate = float("nan")
    for it in range(POWER_MAX_ITER):
        x = sub @ x
        s = float(np.sum(x))
        if s <= 0.0:
            return 0.0
        x /= s
        factors.append(s)
        if len(factors) < period:
            continue
        window = factors[-period:]
        new_est = math.exp(sum(math.log(f) for f in window) / period)
        if it >= period + 1 and np.isfinite(estimate):
            if abs(new_est - estimate) <= POWER_TOL * max(abs(new_est), 1e-300):
                return new_est
        estimate = new_est
    raise SolverError(
        f"power iteration did not converge in {POWER_MAX_ITER} iterations",
        payload={"estimate": estimate})


def evaluate_policy(m: Mdp, pol: Policy, cost_tag: str = "primary_c") -> SpectralResult:
    """Per-state risk-sensitive log-growth rates of a fixed stationary policy.

    lambda_i = log max { rho(B) : class B reachable from i }; transient
    singleton classes contribute their diagonal entry as rho.
    """
    kern = build_kernel(m, pol, cost_tag)
    cond = scc_condensation(kern)
    log_rho: list[float] = []
    for comp in cond.classes:
        idx = np.asarray(comp)
        if len(comp) == 1 and not kern.support[comp[0], comp[0]]:
            d = float(kern.mat[comp[0], comp[0]])
            log_rho.append(kern.log_scale + (math.log(d) if d > 0.0 else float("-inf")))
            continue
        rho = perron_root(kern.mat[np.ix_(idx, idx)])
        log_rho.append(kern.log_scale + (math.log(rho) if rho > 0.0 else float("-inf")))
    # classes arrive sinks-first, so successors are already folded in
    best = list(log_rho)
    for ci in range(len(cond.classes)):
        for sj in cond.successors[ci]:
            if best[sj] > best[ci]:
                best[ci] = best[sj]
    lam = np.array([best[cond.class_of[i]] for i in range(m.n_states)])
    if not np.all(np.isfinite(lam)):
        raise SolverError("non-finite growth rate; kernel has a dead end")
    partition = _group_by_value(lam)
    return SpectralResult(
        lam=lam, classes=cond.classes,
        class_rho=tuple(math.exp(lr) if lr < 700 else float("inf") for lr in log_rho),
        class_log_rho=tuple(log_rho), partition=partition)


def _group_by_value(lam: np.ndarray, tol: float = 1e-12) -> tuple[tuple[int, ...], ...]:
    """Group states by equal value; cells ordered by their smallest state."""
    cells: list[list[int]] = []
    anchors: list[float] = []
    for i, v in enumerate(lam):
        for ci, a in enumerate(anchors):
            if abs(v - a) <= tol * max(1.0, abs(a)):
                cells[ci].append(i)
                break
        else:
            anchors.append(float(v))
            cells.append([i])
    return tuple(tuple(c) for c in cells)
