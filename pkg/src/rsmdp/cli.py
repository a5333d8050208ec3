"""Command-line entry point: evaluate, solve, constrain, brute-force, learn.

Every command reads a problem file, runs one pipeline, and prints a JSON
report to stdout (or --report-out).  Reports embed a SHA-256 digest of the
canonicalized problem so runs can be audited, and all randomness flows from
--seed, so identical inputs give byte-identical reports apart from the
wall-time field.  Exit codes: 0 success, 2 input validation, 3 numeric
failure, 4 size guard exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from rsmdp import constrained, dp, game_lp, learn, oracle, spectral
from rsmdp.errors import (GuardExceeded, ProblemFormatError, RsmdpError,
                          SolverError, ValidationError)
from rsmdp.model import (Mdp, Policy, canonical_json, load_policy,
                         load_problem, problem_digest, problem_to_dict)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_GUARD = 4


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, float) and obj != obj:
        return "nan"
    return obj


def _policy_block(pol: Policy, n_actions: int) -> dict:
    return {"kind": pol.kind,
            "y": _jsonable(pol.matrix(n_actions)),
            "argmax_actions": list(pol.argmax_actions())}


def cmd_eval(args) -> dict:
    m = load_problem(args.problem)
    pol = load_policy(args.policy, m)
    tag = "constraint_k" if args.cost == "k" else "primary_c"
    result = spectral.evaluate_policy(m, pol, tag)
    return {
        "lambda": _jsonable(result.lam),
        "classes": _jsonable(result.classes),
        "class_log_rho": _jsonable(result.class_log_rho),
        "partition": _jsonable(result.partition),
    }


def cmd_solve(args) -> dict:
    m = load_problem(args.problem)
    if args.mode == "dp":
        sol = dp.relative_value_iteration(m, tol=args.eps)
        report = dp.verify_multichain(m, sol.psi, sol.v)
        return {
            "mode": "dp",
            "psi": _jsonable(sol.psi),
            "v": _jsonable(sol.v),
            "lambda_star": sol.lambda_star,
            "policy": _policy_block(sol.policy, m.n_actions),
            "iterations": sol.iterations,
            "residual": sol.residual,
            "verify_residual": report.max_residual,
        }
    sol = game_lp.solve_with_generation(m, eps=args.eps,
                                        max_rounds=args.max_rounds,
                                        seed=args.seed)
    report = dp.verify_multichain(m, sol.beta, sol.v)
    return {
        "mode": "lp",
        "beta": _jsonable(sol.beta),
        "v": _jsonable(sol.v),
        "lambda_star": sol.lambda_star,
        "policy": _policy_block(sol.policy, m.n_actions),
        "primal_obj": sol.primal_obj,
        "dual_obj": sol.dual_obj,
        "gap": sol.gap,
        "rounds": sol.rounds,
        "candidates": list(sol.candidates.counts()),
        "verify_residual": report.max_residual,
    }


def cmd_constrained(args) -> dict:
    m = load_problem(args.problem)
    cfg = constrained.AscentConfig(gamma0=args.gamma0, a0=args.a0,
                                   max_steps=args.steps, seed=args.seed)
    res = constrained.subgradient_ascent(m, cfg)
    constrained.write_trace_csv(args.trace_out, res.rows)
    return {
        "final_gamma": res.final_gamma,
        "policy": _policy_block(res.policy, m.n_actions),
        "final_cost": res.final_cost,
        "final_constraint": res.final_constraint,
        "feasible": res.feasible,
        "mix_weight": res.mix_weight,
        "steps": len(res.rows),
        "trace_csv": str(args.trace_out),
    }


def cmd_oracle(args) -> dict:
    m = load_problem(args.problem)
    out: dict = {}
    if args.horizon:
        if args.policy:
            pol = load_policy(args.policy, m)
        else:
            pol = Policy.randomized(np.full((m.n_states, m.n_actions),
                                            1.0 / m.n_actions))
        estimate, bracket = oracle.growth_rate_estimate(
            m, pol, "primary_c", args.horizon)
        out["growth_estimate"] = _jsonable(estimate)
        out["growth_bracket"] = _jsonable(bracket)
    if args.enumerate:
        rep = oracle.enumerate_policies(m)
        out["enumeration"] = {
            "min_lambda": _jsonable(rep.min_lam),
            "lambda_star": rep.lambda_star,
            "argmin_policy_index": list(rep.argmin_policy),
            "n_policies": len(rep.policies),
        }
    if args.grid:
        rep = oracle.constrained_grid_search(m, args.grid)
        out["grid_search"] = {
            "feasible": rep.feasible,
            "best_cost": rep.best_cost,
            "best_constraint": rep.best_constraint,
            "best_policy": (_policy_block(rep.best_policy, m.n_actions)
                            if rep.best_policy else None),
            "evaluated": rep.evaluated,
        }
    if not out:
        raise ValidationError("nothing to do: pass --horizon, --enumerate "
                              "or --grid")
    return out


def cmd_learn(args) -> dict:
    m = load_problem(args.problem)
    cfg = learn.LearnerConfig(seed=args.seed, max_steps=args.steps,
                              theta=args.theta, gamma0=args.gamma0)
    res = learn.run_two_timescale(m, cfg)
    learn.write_trace_csv(args.trace_out, res.trace)
    return {
        "final_gamma": res.final_gamma,
        "lambda_estimate": res.q_table.lambda_estimate,
        "greedy_policy_product": list(res.greedy_policy),
        "mixed_policy": _policy_block(res.mixed_policy, m.n_actions),
        "greedy_frequencies": _jsonable(res.greedy_frequencies),
        "steps": cfg.max_steps,
        "trace_csv": str(args.trace_out),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmdp",
        description="Risk-sensitive MDP toolkit: spectral evaluation, game "
                    "LP solves, constrained control, oracles, learning.")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for all randomized components (default 0)")
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; solves run single-threaded")
    parser.add_argument("--report-out", default=None,
                        help="write the JSON report here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate a fixed policy spectrally")
    p.add_argument("--problem", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--cost", choices=["c", "k"], default="c")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("solve", help="solve the unconstrained problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--mode", choices=["dp", "lp"], default="lp")
    p.add_argument("--eps", type=float, default=1e-7)
    p.add_argument("--max-rounds", type=int, default=200)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("constrained", help="multiplier ascent for the "
                                           "constrained problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--gamma0", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--trace-out", default="constrained_trace.csv")
    p.set_defaults(func=cmd_constrained)

    p = sub.add_parser("oracle", help="brute-force ground-truth computations")
    p.add_argument("--problem", required=True)
    p.add_argument("--horizon", type=int, default=0)
    p.add_argument("--policy", default=None)
    p.add_argument("--enumerate", action="store_true")
    p.add_argument("--grid", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("learn", help="two-timescale tabular learning")
    p.add_argument("--problem", required=True)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--gamma0", type=float, default=0.0)
    p.add_argument("--trace-out", default="learn_trace.csv")
    p.set_defaults(func=cmd_learn)
    return parser


def run_command(args) -> dict:
    started = time.perf_counter()
    try:
        with open(args.problem, "r", encoding="utf-8") as fh:
            digest = problem_digest(json.load(fh))
    except OSError as exc:
        raise ProblemFormatError(f"cannot read {args.problem}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{args.problem} is not valid JSON: {exc}") from exc
    results = args.func(args)
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "report_out") and v is not None}
    return {
        "command": args.command,
        "problem_digest": digest,
        "parameters": _jsonable(params),
        "results": results,
        "wall_time_s": time.perf_counter() - started,
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = run_command(args)
    except (ProblemFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GuardExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (SolverError, RsmdpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    text = canonical_json(report)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
