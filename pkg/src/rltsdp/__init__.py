"""RLT-strengthened SDP relaxations for sparse box-constrained QPs."""

from .instance import QpInstance, parse_instance, emit_instance, read_instance, write_instance, objective_value, build_graph
from .graph import LoopGraph, TreeDecomp, check_poly_conditions, has_connected_plus_triplet
from .rlt import LinearForm, Monomial, Square, Weight, ell, rho
from .relax import (
    LmiBlock,
    Psd2Config,
    RelaxationProgram,
    build_exact_hull,
    build_psd2,
    build_relaxation,
    build_shor,
)
from .sdp import SdpStandard, SolveResult, lower, solve, solve_program, export_sdpa, import_sdpa

__version__ = "0.1.0"
