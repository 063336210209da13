"""Graph-native AC power flow toolkit.

Cases are parsed into :class:`NetworkCase`, lowered onto a vertex-centric
graph, and solved by a staged pipeline: zero-impedance contraction, a
damped bi-level sweep for a cheap warm start, then conjugate-gradient
refinement of the fast-decoupled equations. A dense Newton-Raphson
reference ships alongside for validation. :func:`hybrid_solve` runs the
whole pipeline; :func:`solve_method` and :func:`compare_methods` pick
stages apart.
"""
from gridgraph._kernels import active_backend, set_backend, set_threads
from gridgraph.assembly import build_decoupled, build_ybus
from gridgraph.bipr import (BiprConfig, bilevel_solve, damped_jacobi_step,
                            partition_levels, single_level_partition)
from gridgraph.caseio import (BUNDLED_CASES, load_case, parse_case,
                              serialize_case)
from gridgraph.contraction import (ContractionMap, contract_zero_impedance,
                                   expand_state)
from gridgraph.dcg import (DcgConfig, DcgResult, FdConfig, dcg_solve,
                           fast_decoupled_solve)
from gridgraph.engine import SuperstepProgram, pagerank
from gridgraph.errors import (CaseNotFoundError, CaseParseError,
                              ConditioningError, DivergenceError,
                              GraphStructureError, GridGraphError,
                              ModelError, NotSpdError)
from gridgraph.graph import build_graph
from gridgraph.model import Branch, Bus, BusKind, NetworkCase, case_totals
from gridgraph.pipeline import (METHODS, HybridConfig, MethodComparison,
                                SolveReport, VoltageState, compare_methods,
                                hybrid_solve, method_config,
                                newton_raphson_reference, solve_method)
from gridgraph.trace import TRACE_COLUMNS, TraceRecord, trace_csv, zero_millis

__version__ = "0.1.0"

__all__ = [
    "BUNDLED_CASES", "METHODS", "TRACE_COLUMNS",
    "BiprConfig", "Branch", "Bus", "BusKind", "CaseNotFoundError",
    "CaseParseError", "ConditioningError", "ContractionMap", "DcgConfig",
    "DcgResult", "DivergenceError", "FdConfig", "GraphStructureError",
    "GridGraphError", "HybridConfig", "MethodComparison", "ModelError",
    "NetworkCase", "NotSpdError", "SolveReport", "SuperstepProgram",
    "TraceRecord", "VoltageState",
    "active_backend", "bilevel_solve", "build_decoupled", "build_graph",
    "build_ybus", "case_totals", "compare_methods",
    "contract_zero_impedance", "damped_jacobi_step", "dcg_solve",
    "expand_state", "fast_decoupled_solve", "hybrid_solve", "load_case",
    "method_config", "newton_raphson_reference", "pagerank",
    "parse_case", "partition_levels", "serialize_case", "set_backend",
    "set_threads", "single_level_partition", "solve_method", "trace_csv",
    "zero_millis",
]
