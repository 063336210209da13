"""Vertex-centric bulk-synchronous execution.

A superstep runs two phases over the active vertex set:

* **edge phase** — one work item per half-edge owned by an active vertex.
  Work items emit contributions into declared accumulators (per-vertex or
  global) through associative-commutative combiners (sum, max, min). Per-vertex
  self-contributions are allowed (diagonal terms). Everything emitted here is
  finalized when the edge phase ends, so the same superstep's vertex phase can
  read it.
* **vertex phase** — one work item per active vertex. Reads the vertex's
  attributes, its finalized accumulators, and global values; stages attribute
  updates and emits global contributions. Staged updates and vertex-phase
  globals become visible at the superstep barrier, never earlier.

Work items are logically concurrent: phase callbacks receive whole-column
views and must express per-item work elementwise. Contributions combine in a
fixed order (half-edges sorted by owner, neighbor, edge id; sequential within
each vertex segment), so runs are bit-identical regardless of backend or
thread count.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels as kn
from .errors import GraphStructureError
from .graph import GatherPlan, PropertyGraph

_COMBINES = ("sum", "max", "min")


@dataclass(frozen=True)
class Accumulator:
    """Declared reduction slot: per-vertex ('vertex') or scalar ('global')."""
    name: str
    combine: str = "sum"
    dtype: object = np.float64
    scope: str = "vertex"

    def __post_init__(self):
        if self.combine not in _COMBINES:
            raise GraphStructureError(
                f"accumulator {self.name!r}: combiner must be one of {_COMBINES}")
        if self.scope not in ("vertex", "global"):
            raise GraphStructureError(
                f"accumulator {self.name!r}: scope must be 'vertex' or 'global'")
        object.__setattr__(self, "dtype", np.dtype(self.dtype))
        if self.combine != "sum" and np.dtype(self.dtype).kind == "c":
            raise GraphStructureError(
                f"accumulator {self.name!r}: complex values have no max/min")


@dataclass(frozen=True)
class SuperstepProgram:
    """A bulk-synchronous program: phase callbacks plus declarations.

    active: optional callable (graph, step) -> bool mask over vertices; None
    activates every vertex. Inactive vertices own no edge-phase work, receive
    no attribute updates, and contribute nothing to vertex-phase globals.
    """
    name: str
    accumulators: tuple[Accumulator, ...] = ()
    edge_phase: Callable | None = None
    vertex_phase: Callable | None = None
    active: Callable | None = None

    def __post_init__(self):
        names = [a.name for a in self.accumulators]
        if len(set(names)) != len(names):
            raise GraphStructureError(
                f"program {self.name!r}: duplicate accumulator names in {names}")
        if self.edge_phase is None and self.vertex_phase is None:
            raise GraphStructureError(f"program {self.name!r} declares no phases")

    def accumulator(self, name: str) -> Accumulator:
        for a in self.accumulators:
            if a.name == name:
                return a
        raise GraphStructureError(
            f"program {self.name!r}: accumulator {name!r} is not declared "
            f"(declared: {[a.name for a in self.accumulators]})")


@dataclass
class SuperstepResult:
    steps: int
    reason: str           # "stopped" | "budget exhausted"
    globals: dict = field(default_factory=dict)


def _checked(values, acc: Accumulator, size: int | None, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if size is not None and arr.shape != (size,):
        raise GraphStructureError(
            f"{what} for {acc.name!r}: shape {arr.shape}, expected ({size},)")
    if not np.can_cast(arr.dtype, acc.dtype, "same_kind"):
        raise GraphStructureError(
            f"{what} for {acc.name!r}: dtype {arr.dtype} does not fit "
            f"declared {acc.dtype}")
    return arr.astype(acc.dtype, copy=False)


class _Phase:
    """State shared by both phase contexts within one superstep."""

    def __init__(self, graph: PropertyGraph, program: SuperstepProgram,
                 plan: GatherPlan, step: int, globals_: dict):
        self.graph = graph
        self.program = program
        self.plan = plan
        self.step = step
        self._globals = globals_
        n = graph.n_vertices
        self._vertex_acc = {
            a.name: np.full(n, kn.identity_for(a.combine, a.dtype), dtype=a.dtype)
            for a in program.accumulators if a.scope == "vertex"}
        self._global_acc: dict[str, object] = {}

    # shared read API ------------------------------------------------------

    def value(self, name: str) -> np.ndarray:
        """Current (pre-barrier) vertex attribute column."""
        return self.graph.vertex_column(name)

    def g(self, name: str):
        """A finalized global: prior barriers or this step's edge phase."""
        try:
            return self._globals[name]
        except KeyError:
            raise GraphStructureError(
                f"global {name!r} has no finalized value yet "
                f"(known: {sorted(self._globals)})") from None

    # emission plumbing ------------------------------------------------------

    def _combine_global(self, acc: Accumulator, reduced) -> None:
        cur = self._global_acc.get(acc.name)
        if cur is None:
            self._global_acc[acc.name] = reduced
        elif acc.combine == "sum":
            self._global_acc[acc.name] = cur + reduced
        elif acc.combine == "max":
            self._global_acc[acc.name] = max(cur, reduced)
        else:
            self._global_acc[acc.name] = min(cur, reduced)

    def _reduce_global(self, acc: Accumulator, values) -> None:
        arr = np.atleast_1d(_checked(values, acc, None, "global emission"))
        if acc.combine == "sum":
            self._combine_global(acc, kn.total_sum(arr))
        else:
            self._combine_global(acc, kn.total_extreme(arr, acc.combine))

    def _scatter_vertex(self, acc: Accumulator, seg: np.ndarray) -> None:
        buf = self._vertex_acc[acc.name]
        verts = self.plan.vertices
        if acc.combine == "sum":
            buf[verts] += seg
        elif acc.combine == "max":
            np.fmax(buf[verts], seg, out=seg)
            buf[verts] = seg
        else:
            np.fmin(buf[verts], seg, out=seg)
            buf[verts] = seg


class EdgePhase(_Phase):
    """Context for the edge phase: plan-aligned reads, accumulator emits."""

    def half(self, name: str) -> np.ndarray:
        """Half-edge attribute, one value per active work item."""
        return self.graph.half_column(name)[self.plan.hidx]

    def nbr(self, name: str) -> np.ndarray:
        """Neighbor's vertex attribute, one value per active work item."""
        return self.graph.vertex_column(name)[self.plan.nbr]

    def owner(self, name: str) -> np.ndarray:
        """Owner's vertex attribute, one value per active work item."""
        return self.graph.vertex_column(name)[self.plan.owner]

    def emit(self, name: str, values) -> None:
        """Plan-aligned per-half-edge contributions into an accumulator."""
        acc = self.program.accumulator(name)
        if acc.scope == "global":
            self._reduce_global(acc, values)
            return
        arr = _checked(values, acc, self.plan.hidx.size, "edge emission")
        if acc.combine == "sum":
            seg = kn.seg_sum(arr, self.plan.indptr, self.plan.owner_slot,
                             self.plan.n_active)
        else:
            seg = kn.seg_extreme(arr, self.plan.indptr, self.plan.n_active,
                                 acc.combine)
        self._scatter_vertex(acc, seg)

    def emit_gather(self, name: str, half_name: str, vertex_name: str) -> None:
        """Fused sum emission of half[h] * vertex[nbr(h)] per work item."""
        acc = self.program.accumulator(name)
        if acc.combine != "sum":
            raise GraphStructureError(
                f"emit_gather targets sum accumulators; {name!r} is {acc.combine}")
        w = self.graph.half_column(half_name)
        x = self.graph.vertex_column(vertex_name)
        seg = kn.gather_sum(self.plan.indptr, self.plan.hidx, self.graph.he_nbr,
                            w, x, self.plan.owner_slot, self.plan.n_active)
        seg = _checked(seg, acc, self.plan.n_active, "gather emission")
        if acc.scope == "global":
            self._reduce_global(acc, seg)
        else:
            self._scatter_vertex(acc, seg)

    def emit_self(self, name: str, values) -> None:
        """Per-vertex self contribution (diagonal terms): full-length column,
        one contribution per active vertex."""
        acc = self.program.accumulator(name)
        arr = _checked(values, acc, self.graph.n_vertices, "self emission")
        sel = arr[self.plan.vertices]
        if acc.scope == "global":
            self._reduce_global(acc, sel)
        elif acc.combine == "sum":
            self._vertex_acc[acc.name][self.plan.vertices] += sel
        else:
            self._scatter_vertex(acc, sel.copy())


class VertexPhase(_Phase):
    """Context for the vertex phase: finalized accumulators, staged writes."""

    def __init__(self, shared: _Phase):
        self.__dict__.update(shared.__dict__)
        self._staged: dict[str, np.ndarray] = {}
        self._derived: dict[str, object] = {}

    def acc(self, name: str) -> np.ndarray:
        """Finalized per-vertex accumulator (identity at inactive vertices)."""
        acc = self.program.accumulator(name)
        if acc.scope != "vertex":
            raise GraphStructureError(f"accumulator {name!r} is global; use g()")
        return self._vertex_acc[name]

    def set(self, name: str, values) -> None:
        """Stage an attribute update, applied to active vertices at the barrier."""
        col = self.graph.vertex_column(name)
        arr = np.asarray(values)
        if arr.shape != col.shape:
            raise GraphStructureError(
                f"staged write to {name!r}: shape {arr.shape}, expected {col.shape}")
        if not np.can_cast(arr.dtype, col.dtype, "same_kind"):
            raise GraphStructureError(
                f"staged write to {name!r}: dtype {arr.dtype} does not fit {col.dtype}")
        self._staged[name] = arr.astype(col.dtype, copy=False)

    def emit_global(self, name: str, values) -> None:
        """Global contribution, reduced over active vertices, finalized at the
        barrier. Full-length columns are masked to the active set; scalars
        combine as given."""
        acc = self.program.accumulator(name)
        if acc.scope != "global":
            raise GraphStructureError(f"accumulator {name!r} is per-vertex")
        arr = np.asarray(values)
        if arr.ndim == 1 and arr.shape == (self.graph.n_vertices,):
            arr = arr[self.plan.vertices]
        self._reduce_global(acc, arr)

    def set_global(self, name: str, value) -> None:
        """Store a derived global scalar (finalized at the barrier)."""
        self._derived[name] = value


def run_supersteps(graph: PropertyGraph, program: SuperstepProgram,
                   max_steps: int, stop: Callable | None = None,
                   globals_init: Mapping | None = None) -> SuperstepResult:
    """Drive supersteps until `stop(globals, step)` or the budget runs out.

    `stop` is evaluated at each barrier with the finalized globals and the
    0-based index of the step just completed. Budget exhaustion is a normal
    termination ("budget exhausted"), not an error.
    """
    if max_steps < 0:
        raise GraphStructureError(f"max_steps must be >= 0, got {max_steps}")
    globals_: dict = dict(globals_init or {})
    step = 0
    for step in range(max_steps):
        mask = program.active(graph, step) if program.active is not None else None
        plan = graph.gather_plan(mask)
        ectx = EdgePhase(graph, program, plan, step, globals_)
        if program.edge_phase is not None:
            program.edge_phase(ectx)
            # handoff: edge-phase emissions finalize before the vertex phase
            globals_.update(ectx._global_acc)
            ectx._global_acc = {}
        vctx = VertexPhase(ectx)
        if program.vertex_phase is not None:
            program.vertex_phase(vctx)
        # barrier: staged writes and vertex-phase globals become visible
        for name, arr in vctx._staged.items():
            col = graph.vertex_column(name)
            col[plan.vertices] = arr[plan.vertices]
        globals_.update(vctx._global_acc)
        globals_.update(vctx._derived)
        if stop is not None and stop(globals_, step):
            return SuperstepResult(step + 1, "stopped", globals_)
    ran = step + 1 if max_steps > 0 else 0
    return SuperstepResult(ran, "budget exhausted", globals_)


def pagerank(graph: PropertyGraph, d: float = 0.85, max_iters: int = 200,
             tol: float = 1e-12) -> np.ndarray:
    """Damped PageRank over undirected edges (degree = out-degree).

    rank_i = (1-d)/N + d * sum over neighbors j of rank_j / degree(j),
    iterated Jacobi-style from the uniform vector until the max-norm change
    drops below tol. Degree-0 vertices contribute nothing and settle at
    (1-d)/N; the rank sum then falls below 1, which is left as-is.
    """
    if graph.n_vertices == 0:
        raise GraphStructureError("pagerank needs a nonempty graph")
    if not 0.0 < d < 1.0:
        raise ValueError(f"damping factor must lie in (0, 1), got {d}")
    n = graph.n_vertices
    deg = graph.degrees.astype(np.float64)
    invdeg = np.zeros(n)
    np.divide(1.0, deg, out=invdeg, where=deg > 0)
    graph.set_half("pr_invdeg_nbr", invdeg[graph.edge_to], invdeg[graph.edge_from])
    graph.set_vertex("pr_rank", np.full(n, 1.0 / n))
    base = (1.0 - d) / n

    def edge_phase(ctx: EdgePhase) -> None:
        ctx.emit_gather("pr_in", "pr_invdeg_nbr", "pr_rank")

    def vertex_phase(ctx: VertexPhase) -> None:
        new = base + d * ctx.acc("pr_in")
        ctx.emit_global("pr_delta", np.abs(new - ctx.value("pr_rank")))
        ctx.set("pr_rank", new)

    program = SuperstepProgram(
        name="pagerank",
        accumulators=(Accumulator("pr_in", "sum", np.float64, "vertex"),
                      Accumulator("pr_delta", "max", np.float64, "global")),
        edge_phase=edge_phase,
        vertex_phase=vertex_phase,
    )
    run_supersteps(graph, program, max_iters,
                   stop=lambda g, step: g["pr_delta"] <= tol)
    return graph.vertex["pr_rank"].copy()
