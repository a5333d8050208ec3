"""KL divergence, perturbed payoffs, and closed-form tilted maximizers.

The adversary in the equivalent game picks a kernel row q and pays the KL
divergence to the model row; the exact maximizers of ``q . V - D(q || p)``
and of its action-mixture analogue are log-sum-exp tilts.  These serve as
separation oracles for the game LPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rsmdp.errors import ValidationError
from rsmdp.model import Mdp

# Probabilities below this are clamped to zero in tilt denominators
# (denormal-range stability), with renormalization.
PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class TiltResult:
    """Maximized objective and the kernel row achieving it."""

    value: float
    q_star: np.ndarray


def kl_divergence(q, p) -> float:
    """D(q || p) = sum q log(q/p), with 0 log 0 = 0; +inf off the support of p."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValidationError(f"length mismatch: {q.shape} vs {p.shape}")
    pos = q > 0.0
    if np.any(pos & (p <= 0.0)):
        return float("inf")
    qq = q[pos]
    return float(np.sum(qq * np.log(qq / p[pos])))


def c_tilde(m: Mdp, i: int, u: int, q, cost_tag: str = "primary_c") -> float:
    """Perturbed payoff cost(i,u) - D(q || p(.|i,u)); -inf when q is off-support."""
    cost = m.cost_matrix(cost_tag)
    d = kl_divergence(q, m.p[i, u])
    return float("-inf") if d == float("inf") else float(cost[i, u]) - d


def _normalize_tilt(logits: np.ndarray) -> TiltResult:
    top = float(np.max(logits))
    if top == float("-inf"):
        raise ValidationError("tilt has empty support")
    w = np.exp(logits - top)
    w[w < PROB_FLOOR] = 0.0
    z = float(np.sum(w))
    return TiltResult(value=top + float(np.log(z)), q_star=w / z)


def dv_tilt(p, v) -> TiltResult:
    """Exact maximizer of q.V - D(q||p): value log sum p e^V, q* prop. to p e^V.

    Computed with max-subtraction so large V are safe.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != v.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {v.shape}")
    with np.errstate(divide="ignore"):
        logits = np.where(p > 0.0, np.log(np.maximum(p, PROB_FLOOR)) + v,
                          float("-inf"))
    return _normalize_tilt(logits)


def mixture_tilt(y, rows, v) -> TiltResult:
    """Maximize q.V - sum_u y_u D(q || p_u) in closed form.

    The maximizer lives on the geometric-mean support (states covered by every
    action with positive weight): q*_j prop. to e^{V_j} prod_u p_u(j)^{y_u}.
    Reduces to dv_tilt when y is a point mass.  Raises when the common support
    is empty (the constraint row is vacuous; callers skip it).
    """
    y = np.asarray(y, dtype=float)
    rows = np.asarray(rows, dtype=float)
    v = np.asarray(v, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != y.shape[0] or rows.shape[1] != v.shape[0]:
        raise ValidationError("mixture_tilt shapes are inconsistent")
    active = y > 0.0
    with np.errstate(divide="ignore"):
        logrows = np.where(rows > 0.0, np.log(np.maximum(rows, PROB_FLOOR)),
                           float("-inf"))
    # sum_u y_u log p_u(j); -inf wherever an active action has no mass
    geo = np.full(v.shape, 0.0)
    for u in np.nonzero(active)[0]:
        geo = geo + y[u] * logrows[u]
    logits = v + geo
    if np.max(logits) == float("-inf"):
        raise ValidationError("empty common support in mixture_tilt")
    return _normalize_tilt(logits)
