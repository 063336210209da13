"""Electrical coefficient graphs and power mismatch.

Builds the bus admittance matrix and the fast-decoupled B'/B'' coefficient
matrices directly in graph form: diagonals live on vertices, off-diagonals on
half-edges, so a row-times-vector product is one edge-phase gather. Assembly
itself runs as a single superstep (edge phase emits per-branch-end partial
sums, vertex phase folds in the bus shunt), matching how the solvers consume
the result.

Branch model is the standard pi section with the off-nominal tap on the from
side: series admittance y = 1/(r+jx), tap t, shift phi give

    Y_ft = -y / (t e^{-j phi})      Y_tf = -y / (t e^{+j phi})
    diagonal at from += y/t^2 + j b/2,  at to += y + j b/2

and the bus shunt Gs + jBs lands on the diagonal. The decoupled pair uses the
XB convention: B' from 1/x alone over non-slack buses, B'' = -Im(Ybus with
phase shifts zeroed) over PQ buses, shunts and charging included.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import ConditioningError, GraphStructureError, ModelError
from .graph import PropertyGraph, build_graph
from .model import BusKind, NetworkCase


@dataclass(frozen=True)
class AdmittanceGraph:
    """Network as a PropertyGraph ready for vertex-centric sweeps.

    Vertex columns: y_diag (complex), v (complex working state), p_net, q_net
    (per-unit injections Pg-Pd, Qg-Qd), kind (0 slack, 1 PV, 2 PQ), vm_target.
    Half column y_off holds the directed off-diagonal Y_ij on the half owned
    by i, so gathering y_off * v over a vertex's halves is sum_j Y_ij V_j.
    """

    graph: PropertyGraph
    case: NetworkCase
    slack: int
    branch_index: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    def triplets(self):
        """Yield (row_bus_id, col_bus_id, Y) including diagonal entries."""
        ids = self.case.bus_ids()
        ydiag = self.graph.vertex_column("y_diag")
        yoff = self.graph.half_column("y_off")
        for i in range(self.n):
            yield ids[i], ids[i], complex(ydiag[i])
            lo, hi = self.graph.indptr[i], self.graph.indptr[i + 1]
            for p in range(lo, hi):
                yield ids[i], ids[self.graph.he_nbr[p]], complex(yoff[p])


@dataclass(frozen=True)
class DecoupledGraph:
    """B' and B'' stored on one PropertyGraph.

    Vertex columns bp_diag / bpp_diag, half columns bp_off / bpp_off. Rows
    and columns outside each matrix's bus set are zeroed with a unit diagonal,
    so solves can run on the full graph under an active-row mask.
    """

    graph: PropertyGraph
    case: NetworkCase
    p_rows: np.ndarray
    q_rows: np.ndarray


@dataclass(frozen=True)
class MismatchResult:
    """Per-bus power mismatch against specified injections.

    dp is zero at the slack bus, dq is zero at slack and PV buses; mbpim is
    the largest checked magnitude (max bus power injection mismatch).
    """

    dp: np.ndarray
    dq: np.ndarray
    mbpim: float


def _service_arrays(case: NetworkCase):
    """Dense endpoint positions and parameters of in-service branches."""
    pos = case.bus_index()
    rows = [(pos[br.from_bus], pos[br.to_bus], k, br)
            for k, br in enumerate(case.branches) if br.status]
    ef = np.array([r[0] for r in rows], dtype=np.int64)
    et = np.array([r[1] for r in rows], dtype=np.int64)
    bidx = np.array([r[2] for r in rows], dtype=np.int64)
    branches = [r[3] for r in rows]

    def col(get):
        return np.array([get(b) for b in branches], dtype=np.float64)

    return ef, et, bidx, col


def _reject_isolated(case: NetworkCase, ef: np.ndarray, et: np.ndarray) -> None:
    deg = np.bincount(np.concatenate([ef, et]), minlength=case.n_buses)
    if deg.size == 0 or deg.min() == 0:
        i = int(np.argmin(deg)) if deg.size else 0
        raise ModelError(
            f"bus {case.buses[i].id} is isolated (no in-service branch)")


def _base_graph(case: NetworkCase, ef: np.ndarray, et: np.ndarray) -> PropertyGraph:
    g = build_graph(case.n_buses, list(zip(ef.tolist(), et.tolist())))
    g.set_vertex("kind", case.kinds())
    return g


def build_ybus(case: NetworkCase) -> AdmittanceGraph:
    """Assemble the admittance graph in one vertex-centric pass."""
    case.slack_position()
    ef, et, bidx, col = _service_arrays(case)
    _reject_isolated(case, ef, et)

    r, x = col(lambda b: b.r), col(lambda b: b.x)
    for k in np.flatnonzero(np.hypot(r, x) == 0.0):
        br = case.branches[bidx[k]]
        raise ConditioningError(
            f"branch {br.from_bus}-{br.to_bus} has zero series impedance")
    ys = 1.0 / (r + 1j * x)
    tap = col(lambda b: b.tap)
    shift = col(lambda b: b.shift)
    half_b = 0.5j * col(lambda b: b.b_charging)

    g = _base_graph(case, ef, et)
    g.set_half("y_off", -ys / (tap * np.exp(-1j * shift)),
               -ys / (tap * np.exp(1j * shift)))
    g.set_half("y_end", ys / tap**2 + half_b, ys + half_b)
    g.set_vertex("p_net", case.p_net())
    g.set_vertex("q_net", case.q_net())
    g.set_vertex("vm_target", case.vm_targets())
    vm0, va0 = (np.array([getattr(b, f) for b in case.buses])
                for f in ("vm_init", "va_init"))
    g.set_vertex("v", vm0 * np.exp(1j * va0))
    g.set_vertex("y_diag", np.zeros(case.n_buses, dtype=np.complex128))

    shunt = case.shunts()

    program = engine.SuperstepProgram(
        name="ybus-assembly",
        accumulators=[engine.Accumulator("y_partial", "sum", np.complex128)],
        edge_phase=lambda ctx: ctx.emit("y_partial", ctx.half("y_end")),
        vertex_phase=lambda ctx: ctx.set("y_diag", ctx.acc("y_partial") + shunt),
    )
    engine.run_supersteps(g, program, max_steps=1)
    del g.half["y_end"]
    return AdmittanceGraph(graph=g, case=case, slack=case.slack_position(),
                           branch_index=bidx)


def build_decoupled(case: NetworkCase) -> DecoupledGraph:
    """Assemble B' and B'' (XB scheme) in one vertex-centric pass."""
    case.slack_position()
    ef, et, bidx, col = _service_arrays(case)
    _reject_isolated(case, ef, et)

    r, x = col(lambda b: b.r), col(lambda b: b.x)
    for k in np.flatnonzero((np.hypot(r, x) == 0.0) | (x == 0.0)):
        br = case.branches[bidx[k]]
        raise ConditioningError(
            f"branch {br.from_bus}-{br.to_bus} has zero reactance; "
            f"B' coefficient 1/x is undefined")
    ys = 1.0 / (r + 1j * x)
    tap = col(lambda b: b.tap)
    half_b = 0.5 * col(lambda b: b.b_charging)

    kinds = case.kinds()
    p_rows = kinds != 0
    q_rows = kinds == 2

    g = _base_graph(case, ef, et)

    # off-diagonals vanish when either endpoint leaves the matrix's bus set
    bp = 1.0 / x
    in_p = p_rows[ef] & p_rows[et]
    g.set_half("bp_off", np.where(in_p, -bp, 0.0))
    g.set_half("bp_end", bp)

    # B'' from the shift-zeroed Ybus: off-diagonal -Im(-y/t) = Im(y)/t
    in_q = q_rows[ef] & q_rows[et]
    g.set_half("bpp_off", np.where(in_q, ys.imag / tap, 0.0))
    g.set_half("bpp_end", -(ys.imag / tap**2 + half_b), -(ys.imag + half_b))

    g.set_vertex("bp_diag", np.zeros(case.n_buses))
    g.set_vertex("bpp_diag", np.zeros(case.n_buses))
    bs = case.shunts().imag

    def vertex_phase(ctx: engine.VertexPhase) -> None:
        ctx.set("bp_diag", np.where(p_rows, ctx.acc("bp_partial"), 1.0))
        ctx.set("bpp_diag", np.where(q_rows, ctx.acc("bpp_partial") - bs, 1.0))

    def edge_phase(ctx: engine.EdgePhase) -> None:
        ctx.emit("bp_partial", ctx.half("bp_end"))
        ctx.emit("bpp_partial", ctx.half("bpp_end"))

    program = engine.SuperstepProgram(
        name="decoupled-assembly",
        accumulators=[engine.Accumulator("bp_partial", "sum"),
                      engine.Accumulator("bpp_partial", "sum")],
        edge_phase=edge_phase,
        vertex_phase=vertex_phase,
    )
    engine.run_supersteps(g, program, max_steps=1)
    del g.half["bp_end"], g.half["bpp_end"]
    return DecoupledGraph(graph=g, case=case, p_rows=p_rows, q_rows=q_rows)


def compute_mismatch(ag: AdmittanceGraph, state: np.ndarray) -> MismatchResult:
    """Mismatch dP, dQ and their worst magnitude at the given voltage state.

    dP_i = P_i - Re(V_i conj(sum_j Y_ij V_j)) at PV and PQ buses, dQ_i the
    imaginary counterpart at PQ buses only. One gather pass over the graph.
    """
    g = ag.graph
    state = np.asarray(state)
    if state.shape != (g.n_vertices,):
        raise GraphStructureError(
            f"state has shape {state.shape}, expected ({g.n_vertices},)")
    g.set_vertex("v", state.astype(np.complex128, copy=False))

    kinds = g.vertex_column("kind")
    p_checked = kinds != 0
    q_checked = kinds == 2
    ydiag = g.vertex_column("y_diag")
    p_net = g.vertex_column("p_net")
    q_net = g.vertex_column("q_net")
    out: dict[str, np.ndarray] = {}

    def vertex_phase(ctx: engine.VertexPhase) -> None:
        v = ctx.value("v")
        s = v * np.conj(ydiag * v + ctx.acc("yv"))
        out["dp"] = np.where(p_checked, p_net - s.real, 0.0)
        out["dq"] = np.where(q_checked, q_net - s.imag, 0.0)
        ctx.emit_global("worst", np.abs(out["dp"]))
        ctx.emit_global("worst", np.abs(out["dq"]))

    program = engine.SuperstepProgram(
        name="mismatch",
        accumulators=[engine.Accumulator("yv", "sum", np.complex128),
                      engine.Accumulator("worst", "max", scope="global")],
        edge_phase=lambda ctx: ctx.emit_gather("yv", "y_off", "v"),
        vertex_phase=vertex_phase,
    )
    result = engine.run_supersteps(g, program, max_steps=1)
    return MismatchResult(dp=out["dp"], dq=out["dq"],
                          mbpim=float(result.globals["worst"]))
