"""Learned Chvátal-Gomory cut selection for branch-and-cut on pure ILPs."""

from .bnc import BncResult, SolveBudget, SolvePolicy, branch_and_bound, f_cg, f_cg_k, f_row, f_s
from .cuts import Cut, candidate_pool, cg_cut, cut_is_valid, gmi_cut
from .ilp import GeneratorConfig, IlpInstance, decode, encode, generate_dataset, read_dataset, write_dataset
from .simplex import LpProblem, solve_lp

__version__ = "0.1.0"

__all__ = [
    "BncResult", "Cut", "GeneratorConfig", "IlpInstance", "LpProblem", "SolveBudget", "SolvePolicy",
    "branch_and_bound", "candidate_pool", "cg_cut", "cut_is_valid", "decode", "encode", "f_cg", "f_cg_k",
    "f_row", "f_s", "generate_dataset", "gmi_cut", "read_dataset", "solve_lp", "write_dataset",
]
