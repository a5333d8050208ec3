"""Problem definition, validation and file I/O for risk-sensitive MDP instances.

An instance is a finite controlled Markov chain: transition tensor
``p[i][u][j]``, running cost ``c[i][u]`` in natural-log units, and optionally a
second cost ``k[i][u]`` with a bound ``C`` on its log-growth rate.  All types
are immutable after construction; arrays are locked against writes.

Problem files are UTF-8 JSON objects with fields

    "states"           list of names, or an integer count
    "actions"          same
    "p"                nested array [i][u][j]
    "cost"             nested array [i][u]
    "constraint_cost"  optional nested array [i][u]
    "bound"            optional number (log-growth units)

Numbers survive a save/load round trip bit-identically (shortest round-trip
decimal representation).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from rsmdp.errors import ProblemFormatError, ValidationError

# Row-sum slack allowed on transition rows.
ROW_SUM_TOL = 1e-9
# Transition entries below this are exact zeros for support computations.
SUPPORT_EPS = 1e-15


def _locked(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mdp:
    """Finite-state, finite-action model with exponential-of-sum cost semantics.

    `c` (and `k` when present) are per-stage costs whose cumulative sums are
    exponentiated; all growth rates derived from them are log-growth rates.
    """

    n_states: int
    n_actions: int
    p: np.ndarray                      # [i][u][j]
    c: np.ndarray                      # [i][u]
    k: np.ndarray | None = None        # [i][u]
    bound: float | None = None         # C, log-growth units
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", _locked(self.p))
        object.__setattr__(self, "c", _locked(self.c))
        if self.k is not None:
            object.__setattr__(self, "k", _locked(self.k))
        self.validate()

    def validate(self) -> None:
        n, m = self.n_states, self.n_actions
        if n < 1 or m < 1:
            raise ValidationError("n_states and n_actions must be positive")
        if self.p.shape != (n, m, n):
            raise ValidationError(
                f"p has shape {self.p.shape}, expected {(n, m, n)}")
        if self.c.shape != (n, m):
            raise ValidationError(
                f"cost has shape {self.c.shape}, expected {(n, m)}")
        if np.any(self.p < 0.0):
            i, u, j = np.unravel_index(int(np.argmin(self.p)), self.p.shape)
            raise ValidationError(f"p[{i}][{u}][{j}] = {self.p[i, u, j]} < 0")
        sums = self.p.sum(axis=2)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            i, u = [int(x[0]) for x in np.nonzero(bad)]
            raise ValidationError(
                f"transition row (i={i}, u={u}) sums to {sums[i, u]!r}, not 1")
        if not np.all(np.isfinite(self.c)):
            i, u = [int(x[0]) for x in np.nonzero(~np.isfinite(self.c))]
            raise ValidationError(f"cost[{i}][{u}] is not finite")
        if self.k is not None:
            if self.k.shape != (n, m):
                raise ValidationError(
                    f"constraint_cost has shape {self.k.shape}, expected {(n, m)}")
            if not np.all(np.isfinite(self.k)):
                i, u = [int(x[0]) for x in np.nonzero(~np.isfinite(self.k))]
                raise ValidationError(f"constraint_cost[{i}][{u}] is not finite")
        if self.bound is not None:
            if self.k is None:
                raise ValidationError(
                    "bound is set but constraint_cost is missing")
            if not np.isfinite(self.bound):
                raise ValidationError("bound must be finite")

    def cost_matrix(self, cost_tag: str) -> np.ndarray:
        """Select `c` or `k` by tag ('primary_c' / 'constraint_k')."""
        if cost_tag in ("primary_c", "c"):
            return self.c
        if cost_tag in ("constraint_k", "k"):
            if self.k is None:
                raise ValidationError(
                    "cost_tag asks for constraint cost but k is missing")
            return self.k
        raise ValidationError(f"unknown cost_tag {cost_tag!r}")


@dataclass(frozen=True)
class Policy:
    """Stationary policy: a state->action map or per-state action distributions.

    `det` holds the action index per state; `y` holds row distributions
    ``y[i][u]``.  Exactly one of the two is set.
    """

    det: tuple[int, ...] | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        if (self.det is None) == (self.y is None):
            raise ValidationError("policy must be deterministic xor randomized")
        if self.y is not None:
            object.__setattr__(self, "y", _locked(self.y))
            if np.any(self.y < 0.0):
                i, u = [int(x[0]) for x in np.nonzero(self.y < 0.0)]
                raise ValidationError(f"y[{i}][{u}] < 0")
            sums = self.y.sum(axis=1)
            bad = np.abs(sums - 1.0) > ROW_SUM_TOL
            if np.any(bad):
                i = int(np.nonzero(bad)[0][0])
                raise ValidationError(
                    f"policy row i={i} sums to {sums[i]!r}, not 1")
        else:
            object.__setattr__(self, "det", tuple(int(a) for a in self.det))

    @property
    def kind(self) -> str:
        return "deterministic" if self.det is not None else "randomized"

    @staticmethod
    def deterministic(actions) -> "Policy":
        return Policy(det=tuple(int(a) for a in actions))

    @staticmethod
    def randomized(y) -> "Policy":
        return Policy(y=np.asarray(y, dtype=float))

    def matrix(self, n_actions: int) -> np.ndarray:
        """Action-distribution rows; deterministic policies become point masses."""
        if self.y is not None:
            return self.y
        rows = np.zeros((len(self.det), n_actions))
        for i, a in enumerate(self.det):
            if not 0 <= a < n_actions:
                raise ValidationError(f"action index {a} at state {i} out of range")
            rows[i, a] = 1.0
        return rows

    def to_randomized(self, n_actions: int) -> "Policy":
        return Policy.randomized(self.matrix(n_actions))

    def argmax_actions(self) -> tuple[int, ...]:
        """Most likely action per state (recovers `det` from point masses)."""
        if self.det is not None:
            return self.det
        return tuple(int(a) for a in np.argmax(self.y, axis=1))

    def validate_for(self, m: Mdp) -> None:
        rows = self.matrix(m.n_actions)
        if rows.shape != (m.n_states, m.n_actions):
            raise ValidationError(
                f"policy shape {rows.shape} does not match model "
                f"{(m.n_states, m.n_actions)}")


def support_union(m: Mdp, i: int) -> frozenset[int]:
    """States reachable from `i` in one step under some action.

    The admissibility domain for adversarial kernel rows at `i`: rows with
    support outside this set earn payoff -inf and are never candidates.
    """
    if not 0 <= i < m.n_states:
        raise ValidationError(f"state index {i} out of range")
    return frozenset(int(j) for j in
                     np.nonzero(np.max(m.p[i], axis=0) > SUPPORT_EPS)[0])


# -- file I/O ---------------------------------------------------------------

def _names_or_count(entry, what: str):
    if isinstance(entry, int):
        if entry < 1:
            raise ValidationError(f"{what} count must be positive")
        return entry, None
    if isinstance(entry, list) and all(isinstance(s, str) for s in entry):
        if not entry:
            raise ValidationError(f"{what} list must be nonempty")
        return len(entry), tuple(entry)
    raise ProblemFormatError(f'"{what}" must be an integer count or a list of names')


def problem_to_dict(m: Mdp) -> dict:
    doc = {
        "states": list(m.state_names) if m.state_names else m.n_states,
        "actions": list(m.action_names) if m.action_names else m.n_actions,
        "p": m.p.tolist(),
        "cost": m.c.tolist(),
    }
    if m.k is not None:
        doc["constraint_cost"] = m.k.tolist()
    if m.bound is not None:
        doc["bound"] = m.bound
    return doc


def problem_from_dict(doc: dict) -> Mdp:
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    for key in ("states", "actions", "p", "cost"):
        if key not in doc:
            raise ProblemFormatError(f'missing required field "{key}"')
    n, state_names = _names_or_count(doc["states"], "states")
    a, action_names = _names_or_count(doc["actions"], "actions")
    try:
        p = np.asarray(doc["p"], dtype=float)
        c = np.asarray(doc["cost"], dtype=float)
        k = (np.asarray(doc["constraint_cost"], dtype=float)
             if "constraint_cost" in doc else None)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"non-numeric array entry: {exc}") from exc
    bound = doc.get("bound")
    if bound is not None and not isinstance(bound, (int, float)):
        raise ProblemFormatError('"bound" must be a number')
    return Mdp(n_states=n, n_actions=a, p=p, c=c, k=k,
               bound=None if bound is None else float(bound),
               state_names=state_names, action_names=action_names)


def load_problem(path) -> Mdp:
    """Load and validate a problem file; errors name the offending index."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ProblemFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path} is not valid JSON: {exc}") from exc
    return problem_from_dict(doc)


def save_problem(m: Mdp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(m), fh, indent=1)
        fh.write("\n")


def load_policy(path, m: Mdp | None = None) -> Policy:
    """Policy file: {"kind": "deterministic", "actions": [...]} or
    {"kind": "randomized", "y": [[...]]}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ProblemFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ProblemFormatError('policy file must be an object with "kind"')
    if doc["kind"] == "deterministic":
        pol = Policy.deterministic(doc.get("actions", ()))
    elif doc["kind"] == "randomized":
        pol = Policy.randomized(doc.get("y", []))
    else:
        raise ProblemFormatError(f'unknown policy kind {doc["kind"]!r}')
    if m is not None:
        pol.validate_for(m)
    return pol


def canonical_json(doc) -> str:
    """Canonical JSON text: sorted keys, compact separators, shortest
    round-trip floats.  Stable under key reordering of the input."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def problem_digest(doc_or_mdp) -> str:
    """SHA-256 of the canonicalized problem JSON."""
    doc = problem_to_dict(doc_or_mdp) if isinstance(doc_or_mdp, Mdp) else doc_or_mdp
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
