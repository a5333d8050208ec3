"""Risk-sensitive control of finite MDPs.

Evaluation of stationary policies through Perron roots of multiplicative
kernels, exact solution of the equivalent single-controller game by linear
programming with constraint generation, a Lagrangian primal-dual scheme for
risk-sensitive constraints, brute-force oracles for desk-scale validation,
and a two-timescale tabular learner.
"""

from rsmdp.model import Mdp, Policy, load_problem, save_problem, support_union

__all__ = ["Mdp", "Policy", "load_problem", "save_problem", "support_union"]
__version__ = "0.1.0"
