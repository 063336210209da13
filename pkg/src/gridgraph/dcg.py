"""Diagonal-preconditioned conjugate gradient on graph-carried systems,
and the fast-decoupled power-flow outer loop that uses it.

A GraphSystem is one symmetric positive-definite operator stored on a
PropertyGraph: vertex column a_ii, half-edge column a_ij, and a boolean row
mask naming the index set. Vertices outside the set hold zero right-hand
side, unit diagonal and zeroed coupling, so the solver runs on the full
graph under its active mask and simply never moves them.

Each CG iteration is two supersteps. The first gathers A.p along edges
(tempAP), reduces p'Ap globally at the edge-to-vertex handoff, then updates
x, r, z and reduces r'z and r'r at the barrier. The second forms the new
search direction p from the finalized globals. All per-vertex work is data
parallel; every scalar the iteration needs exists only as a barrier-reduced
global, which is what makes the method graph-native.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kn
from . import engine
from .assembly import AdmittanceGraph, DecoupledGraph, compute_mismatch
from .errors import GraphStructureError, NotSpdError
from .graph import PropertyGraph
from .model import NetworkCase, require_connected
from .trace import TraceRecord

DCG_TOL_DEFAULT = 1e-8
DCG_MAX_ITERS_DEFAULT = 500
FD_TOL_DEFAULT = 5e-2
FD_MAX_OUTER_DEFAULT = 100


@dataclass(frozen=True, eq=False)
class GraphSystem:
    """One SPD operator slice of a DecoupledGraph plus its right-hand side."""

    graph: PropertyGraph
    diag_name: str
    off_name: str
    rows: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = self.graph.n_vertices
        if self.rows.shape != (n,) or self.b.shape != (n,):
            raise GraphStructureError(
                f"rows/b must have shape ({n},), got {self.rows.shape} "
                f"and {self.b.shape}")


def bprime_system(dg: DecoupledGraph, b: np.ndarray) -> GraphSystem:
    """The angle-correction system B' dtheta = b over non-slack buses."""
    return GraphSystem(graph=dg.graph, diag_name="bp_diag",
                       off_name="bp_off", rows=dg.p_rows, b=b)


def bdouble_system(dg: DecoupledGraph, b: np.ndarray) -> GraphSystem:
    """The magnitude-correction system B'' dVm = b over PQ buses."""
    return GraphSystem(graph=dg.graph, diag_name="bpp_diag",
                       off_name="bpp_off", rows=dg.q_rows, b=b)


@dataclass(frozen=True)
class DcgConfig:
    tol: float = DCG_TOL_DEFAULT
    max_iters: int = DCG_MAX_ITERS_DEFAULT

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass(frozen=True)
class FdConfig:
    tol_p: float = FD_TOL_DEFAULT
    tol_q: float = FD_TOL_DEFAULT
    max_outer: int = FD_MAX_OUTER_DEFAULT
    inner: DcgConfig | None = None

    def __post_init__(self):
        if self.tol_p <= 0 or self.tol_q <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 0:
            raise ValueError("max_outer must be >= 0")

    def inner_config(self) -> DcgConfig:
        """Inner residual threshold tight enough not to mask the outer one."""
        if self.inner is not None:
            return self.inner
        return DcgConfig(tol=min(1e-8, 0.01 * min(self.tol_p, self.tol_q)))


@dataclass(frozen=True, eq=False)
class DcgResult:
    """Unpacks as (x, iterations, residual); history kept for diagnostics."""

    x: np.ndarray
    iterations: int
    residual: float
    reason: str
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    rnorms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.x, self.iterations, self.residual))


def _apply_operator(system: GraphSystem, x: np.ndarray) -> np.ndarray:
    """A.x in one superstep; zero outside the index set."""
    g = system.graph
    g.set_vertex("cg_in", x)
    diag = g.vertex_column(system.diag_name)
    out: dict[str, np.ndarray] = {}

    def vertex_phase(ctx):
        out["ax"] = np.where(system.rows, diag * ctx.value("cg_in")
                             + ctx.acc("ax_off"), 0.0)

    program = engine.SuperstepProgram(
        name="operator-apply",
        accumulators=[engine.Accumulator("ax_off", "sum")],
        edge_phase=lambda ctx: ctx.emit_gather("ax_off", system.off_name, "cg_in"),
        vertex_phase=vertex_phase,
        active=lambda graph, step: system.rows,
    )
    engine.run_supersteps(g, program, max_steps=1)
    return out["ax"]


def dcg_solve(system: GraphSystem, x0: np.ndarray | None, config: DcgConfig,
              preconditioned: bool = True,
              keep_iterates: bool = False) -> DcgResult:
    """Preconditioned CG with M = diag(A); stops when the 2-norm of r <= tol.

    On budget exhaustion the best iterate (smallest residual norm) is
    returned. A non-positive p'Ap reduction aborts with NotSpdError since
    the search directions are meaningless on an indefinite operator.
    keep_iterates records every x_k (diagnostics; off by default).
    """
    g = system.graph
    n = g.n_vertices
    rows = system.rows
    idx = np.flatnonzero(rows)
    diag = g.vertex_column(system.diag_name)
    if np.any(diag[idx] == 0.0):
        raise NotSpdError("operator has a zero diagonal entry in its index set")

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    if x.shape != (n,):
        raise GraphStructureError(f"x0 has shape {x.shape}, expected ({n},)")
    r = system.b.copy() if not x.any() else system.b - _apply_operator(system, x)
    r[~rows] = 0.0
    z = r / diag if preconditioned else r.copy()
    p = z.copy()
    for name, col in (("x", x), ("r", r), ("z", z), ("p", p),
                      ("tempAP", np.zeros(n))):
        g.set_vertex(name, col)

    def masked_sum(values: np.ndarray) -> float:
        return float(kn.total_sum(values[idx]))

    rz = masked_sum(r * z)
    rnorm = float(np.sqrt(masked_sum(r * r)))
    best_x, best_rnorm = x.copy(), rnorm
    alphas: list[float] = []
    betas: list[float] = []
    rnorms: list[float] = [rnorm]
    iterates: list[np.ndarray] = [x.copy()] if keep_iterates else []
    if rnorm <= config.tol:
        return DcgResult(x=x, iterations=0, residual=rnorm, reason="converged",
                         alphas=alphas, betas=betas, rnorms=rnorms,
                         iterates=iterates)

    def gather_update_edge(ctx: engine.EdgePhase) -> None:
        ctx.emit_gather("ap_off", system.off_name, "p")
        ctx.emit("pAp", ctx.owner("p") * ctx.half(system.off_name) * ctx.nbr("p"))
        pcol = ctx.value("p")
        ctx.emit_self("pAp", diag * pcol * pcol)

    def gather_update_vertex(ctx: engine.VertexPhase) -> None:
        pap = ctx.g("pAp")
        if not pap > 0.0:
            raise NotSpdError(
                f"p'Ap = {pap}; operator is not positive definite")
        alpha = ctx.g("rz") / pap
        pcol, rcol, xcol, zcol = (ctx.value(c) for c in ("p", "r", "x", "z"))
        ap = np.where(rows, diag * pcol + ctx.acc("ap_off"), 0.0)
        xn = xcol + alpha * pcol
        rn = rcol - alpha * ap
        zn = rn / diag if preconditioned else rn
        ctx.set("tempAP", ap)
        ctx.set("x", xn)
        ctx.set("r", rn)
        ctx.set("z", zn)
        ctx.emit_global("rz", rn * zn)
        ctx.emit_global("rr", rn * rn)
        ctx.set_global("alpha", alpha)

    gather_update = engine.SuperstepProgram(
        name="dcg-gather-update",
        accumulators=[
            engine.Accumulator("ap_off", "sum"),
            engine.Accumulator("pAp", "sum", scope="global"),
            engine.Accumulator("rz", "sum", scope="global"),
            engine.Accumulator("rr", "sum", scope="global"),
        ],
        edge_phase=gather_update_edge,
        vertex_phase=gather_update_vertex,
        active=lambda graph, step: rows,
    )

    def direction_vertex(ctx: engine.VertexPhase) -> None:
        beta = ctx.g("rz") / ctx.g("rz_prev")
        ctx.set("p", ctx.value("z") + beta * ctx.value("p"))
        ctx.set_global("beta", beta)

    direction = engine.SuperstepProgram(
        name="dcg-direction",
        accumulators=[],
        vertex_phase=direction_vertex,
        active=lambda graph, step: rows,
    )

    iterations = 0
    reason = "budget exhausted"
    for _ in range(config.max_iters):
        res = engine.run_supersteps(g, gather_update, max_steps=1,
                                    globals_init={"rz": rz})
        iterations += 1
        rz_prev, rz = rz, float(res.globals["rz"])
        rnorm = float(np.sqrt(res.globals["rr"]))
        alphas.append(float(res.globals["alpha"]))
        rnorms.append(rnorm)
        if keep_iterates:
            iterates.append(g.vertex_column("x").copy())
        if rnorm < best_rnorm:
            best_rnorm = rnorm
            best_x = g.vertex_column("x").copy()
        if rnorm <= config.tol:
            reason = "converged"
            break
        res = engine.run_supersteps(g, direction, max_steps=1,
                                    globals_init={"rz": rz, "rz_prev": rz_prev})
        betas.append(float(res.globals["beta"]))

    if reason == "converged":
        final_x, final_rnorm = g.vertex_column("x").copy(), rnorm
    else:
        final_x, final_rnorm = best_x, best_rnorm
    return DcgResult(x=final_x, iterations=iterations, residual=final_rnorm,
                     reason=reason, alphas=alphas, betas=betas, rnorms=rnorms,
                     iterates=iterates)


def fast_decoupled_solve(case: NetworkCase,
                         graphs: tuple[AdmittanceGraph, DecoupledGraph],
                         state0: np.ndarray, config: FdConfig
                         ) -> tuple[np.ndarray, list[TraceRecord], str]:
    """Alternate B' angle and B'' magnitude corrections until mismatches pass.

    Each outer iteration solves B' dtheta = dP/Vm over non-slack buses,
    refreshes the reactive mismatch, then solves B'' dVm = dQ/Vm over PQ
    buses; both inner solves start from a zero correction. The trace gets
    one "fd" row per outer iteration and one "dcg" row per inner solve with
    cumulative inner-iteration counts (theta residuals in d_p, magnitude
    residuals in d_q).
    """
    ag, dg = graphs
    require_connected(case)
    state0 = np.asarray(state0)
    if state0.shape != (ag.n,):
        raise GraphStructureError(
            f"state0 has shape {state0.shape}, expected ({ag.n},)")
    vm = np.abs(state0).astype(np.float64)
    va = np.angle(state0)
    inner_cfg = config.inner_config()

    trace: list[TraceRecord] = []
    inner_total = 0
    outer = 0
    mm = compute_mismatch(ag, vm * np.exp(1j * va))
    while True:
        max_dp = float(np.abs(mm.dp).max())
        max_dq = float(np.abs(mm.dq).max())
        if max_dp < config.tol_p and max_dq < config.tol_q:
            reason = "converged"
            break
        if outer == config.max_outer:
            reason = "budget exhausted"
            break
        outer += 1
        t0 = time.perf_counter()

        sol = dcg_solve(bprime_system(dg, mm.dp / vm), None, inner_cfg)
        inner_total += sol.iterations
        trace.append(TraceRecord(iteration=inner_total, stage="dcg",
                                 d_p=sol.residual,
                                 millis=(time.perf_counter() - t0) * 1e3))
        va = va + sol.x

        t1 = time.perf_counter()
        mm = compute_mismatch(ag, vm * np.exp(1j * va))
        max_dq = float(np.abs(mm.dq).max())
        sol = dcg_solve(bdouble_system(dg, mm.dq / vm), None, inner_cfg)
        inner_total += sol.iterations
        trace.append(TraceRecord(iteration=inner_total, stage="dcg",
                                 d_q=sol.residual,
                                 millis=(time.perf_counter() - t1) * 1e3))
        vm = vm + sol.x

        mm = compute_mismatch(ag, vm * np.exp(1j * va))
        trace.append(TraceRecord(
            iteration=outer, stage="fd", d_p=max_dp, d_q=max_dq,
            mbpim=mm.mbpim, millis=(time.perf_counter() - t0) * 1e3))

    return vm * np.exp(1j * va), trace, reason
