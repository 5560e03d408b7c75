"""Lie symmetry classification and verification for the nonlinear radial heat equation

    C(u) u_t = z^(-nu) (K(u) z^nu u_z)_z.
"""

from .expr import SymbolTable, check_zero, diff, parse, simplify, unparse
from .flows import check_group_axioms, closed_flow, flow_closed, flow_fidelity, flow_numeric, map_solution
from .model import CoefficientModel, build_model, load_model_file
from .solutions import InvariantSolution, build_solution
from .symmetry import Generator, check_determining, classify, commutator_table, lie_bracket
from .verify import Grid, ResidualReport, convergence_study, fd_solve, residual_linear, residual_pde

__version__ = "0.1.0"

__all__ = [
    "CoefficientModel",
    "Generator",
    "Grid",
    "InvariantSolution",
    "ResidualReport",
    "SymbolTable",
    "build_model",
    "build_solution",
    "check_determining",
    "check_group_axioms",
    "check_zero",
    "classify",
    "closed_flow",
    "commutator_table",
    "convergence_study",
    "diff",
    "fd_solve",
    "flow_closed",
    "flow_fidelity",
    "flow_numeric",
    "lie_bracket",
    "load_model_file",
    "map_solution",
    "parse",
    "residual_linear",
    "residual_pde",
    "simplify",
    "unparse",
]
