"""Damped-Jacobi power flow with a two-level sweep schedule.

The update at each non-slack bus i is the convex combination

    V_i <- (1-d) V_i + (d / Y_ii) [ (P_i - jQ_i)/conj(V_i) - sum_{j!=i} Y_ij V_j ]

which at d=1 is exactly the plain fixed-point update. PV buses first replace
Q_i by the reactive power implied by the present state, apply the update,
then rescale back to their setpoint magnitude; the slack bus never moves.

Run over all buses at once this is damped Jacobi. The bi-level variant
splits buses into levels A and B so that few edges stay inside a level,
then sweeps A and B in turn: B's sweep sees A's fresh values, so intra-
iteration information flows like Gauss-Seidel while every half-sweep stays
embarrassingly parallel (one superstep each).

Convergence is declared on the max absolute change of Re(V) and Im(V)
between iterations, checked against tol_vr and tol_va.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import engine
from .assembly import AdmittanceGraph, compute_mismatch
from .errors import ConditioningError, DivergenceError, GraphStructureError
from .trace import TraceRecord

D_DEFAULT = 0.85
TOL_V_DEFAULT = 2e-4
MAX_ITERS_DEFAULT = 5000

# a bus voltage this small makes the 1/conj(V) term meaningless
V_COLLAPSE = 1e-6
DIVERGENCE_GROWTH = 1e3


@dataclass(frozen=True, eq=False)
class LevelPartition:
    """Two-level bus split plus how many edges it failed to separate."""

    level_of: dict[int, str]
    intra_level_edge_count: int
    intra_level_edge_fraction: float
    a_mask: np.ndarray


@dataclass(frozen=True)
class BiprConfig:
    d: float = D_DEFAULT
    tol_vr: float = TOL_V_DEFAULT
    tol_va: float = TOL_V_DEFAULT
    max_iters: int = MAX_ITERS_DEFAULT

    def __post_init__(self):
        if not 0.0 < self.d <= 1.0:
            raise ValueError(f"damping d must be in (0, 1], got {self.d}")
        if self.tol_vr <= 0 or self.tol_va <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


def partition_levels(ag: AdmittanceGraph) -> LevelPartition:
    """Greedy BFS 2-coloring from the slack bus.

    Each visited vertex takes the level opposite to the majority among its
    already-assigned neighbors, ties going to A (so the slack starts in A).
    Zero intra-level edges on bipartite graphs; deterministic everywhere.
    """
    g = ag.graph
    n = g.n_vertices
    level = np.full(n, -1, dtype=np.int8)
    for root in (ag.slack, *range(n)):
        if level[root] != -1:
            continue
        queue = deque([root])
        while queue:
            u = queue.popleft()
            if level[u] != -1:
                continue
            in_a = in_b = 0
            for p in range(g.indptr[u], g.indptr[u + 1]):
                w = level[g.he_nbr[p]]
                in_a += w == 0
                in_b += w == 1
            level[u] = 1 if in_a > in_b else 0
            for p in range(g.indptr[u], g.indptr[u + 1]):
                if level[g.he_nbr[p]] == -1:
                    queue.append(g.he_nbr[p])
    intra = int(np.count_nonzero(level[g.edge_from] == level[g.edge_to]))
    fraction = intra / g.n_edges if g.n_edges else 0.0
    ids = ag.case.bus_ids()
    return LevelPartition(
        level_of={ids[k]: "AB"[level[k]] for k in range(n)},
        intra_level_edge_count=intra,
        intra_level_edge_fraction=fraction,
        a_mask=level == 0,
    )


def single_level_partition(ag: AdmittanceGraph) -> LevelPartition:
    """Degenerate all-in-A split: bi-level solve becomes plain damped Jacobi."""
    g = ag.graph
    return LevelPartition(
        level_of={bus_id: "A" for bus_id in ag.case.bus_ids()},
        intra_level_edge_count=g.n_edges,
        intra_level_edge_fraction=1.0 if g.n_edges else 0.0,
        a_mask=np.ones(g.n_vertices, dtype=bool),
    )


def _half_sweep(ag: AdmittanceGraph, mask: np.ndarray, d: float) -> None:
    """One superstep updating the masked buses from the graph's v column."""
    g = ag.graph
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return
    ydiag = g.vertex_column("y_diag")
    if np.any(ydiag[idx] == 0):
        bad = idx[np.argmax(ydiag[idx] == 0)]
        raise ConditioningError(
            f"bus {ag.case.buses[bad].id} has zero admittance diagonal")
    p_net = g.vertex_column("p_net")
    q_net = g.vertex_column("q_net")
    kinds = g.vertex_column("kind")
    vm_target = g.vertex_column("vm_target")
    is_pv = kinds[idx] == 1

    def vertex_phase(ctx: engine.VertexPhase) -> None:
        v = ctx.value("v")
        vi = v[idx]
        if np.any(np.abs(vi) < V_COLLAPSE):
            bad = idx[np.argmax(np.abs(vi) < V_COLLAPSE)]
            raise DivergenceError(
                f"voltage collapsed at bus {ag.case.buses[bad].id} "
                f"(|V| < {V_COLLAPSE})")
        yv = ctx.acc("yv")[idx]
        q_spec = q_net[idx]
        if is_pv.any():
            q_implied = -np.imag(np.conj(vi) * (ydiag[idx] * vi + yv))
            q_spec = np.where(is_pv, q_implied, q_spec)
        bracket = (p_net[idx] - 1j * q_spec) / np.conj(vi) - yv
        vnew = (1.0 - d) * vi + d * (bracket / ydiag[idx])
        if is_pv.any():
            mag = np.abs(vnew)
            if np.any(mag[is_pv] < V_COLLAPSE):
                raise DivergenceError("PV bus voltage collapsed during rescale")
            vnew = np.where(is_pv, vnew * (vm_target[idx] / np.where(mag == 0, 1.0, mag)), vnew)
        staged = v.copy()
        staged[idx] = vnew
        ctx.set("v", staged)

    program = engine.SuperstepProgram(
        name="damped-jacobi-sweep",
        accumulators=[engine.Accumulator("yv", "sum", np.complex128)],
        edge_phase=lambda ctx: ctx.emit_gather("yv", "y_off", "v"),
        vertex_phase=vertex_phase,
        active=lambda graph, step: mask,
    )
    engine.run_supersteps(g, program, max_steps=1)


def _nonslack(ag: AdmittanceGraph) -> np.ndarray:
    mask = np.ones(ag.n, dtype=bool)
    mask[ag.slack] = False
    return mask


def damped_jacobi_step(ag: AdmittanceGraph, state: np.ndarray,
                       d: float = D_DEFAULT) -> np.ndarray:
    """One damped-Jacobi update of every non-slack bus; returns the new state."""
    state = np.asarray(state)
    if state.shape != (ag.n,):
        raise GraphStructureError(
            f"state has shape {state.shape}, expected ({ag.n},)")
    ag.graph.set_vertex("v", state.astype(np.complex128, copy=True))
    _half_sweep(ag, _nonslack(ag), d)
    return ag.graph.vertex_column("v").copy()


def bilevel_solve(ag: AdmittanceGraph, state0: np.ndarray,
                  partition: LevelPartition, config: BiprConfig
                  ) -> tuple[np.ndarray, list[TraceRecord], str]:
    """Iterate two half-sweeps (A then B) until both voltage deltas pass.

    Returns (state, trace, reason); reason is "converged" or "budget
    exhausted", the latter carrying the best state seen (smallest mbpim).
    Raises DivergenceError if the mismatch grows a thousandfold over its
    starting value or any voltage magnitude collapses.
    """
    state0 = np.asarray(state0)
    if state0.shape != (ag.n,):
        raise GraphStructureError(
            f"state0 has shape {state0.shape}, expected ({ag.n},)")
    g = ag.graph
    g.set_vertex("v", state0.astype(np.complex128, copy=True))

    nonslack = _nonslack(ag)
    sweep_a = partition.a_mask & nonslack
    sweep_b = ~partition.a_mask & nonslack

    m0 = compute_mismatch(ag, g.vertex_column("v")).mbpim
    best_v = g.vertex_column("v").copy()
    best_m = m0
    trace: list[TraceRecord] = []

    for k in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        v_prev = g.vertex_column("v").copy()
        _half_sweep(ag, sweep_a, config.d)
        _half_sweep(ag, sweep_b, config.d)
        v = g.vertex_column("v")
        delta = v - v_prev
        d_vr = float(np.abs(delta.real).max())
        d_va = float(np.abs(delta.imag).max())
        mbpim = compute_mismatch(ag, v).mbpim
        trace.append(TraceRecord(
            iteration=k, stage="bipr", d_vr=d_vr, d_va=d_va, mbpim=mbpim,
            millis=(time.perf_counter() - t0) * 1e3))
        if mbpim < best_m:
            best_m = mbpim
            best_v = v.copy()
        if (m0 > 0 and mbpim > DIVERGENCE_GROWTH * m0) or \
                (m0 == 0 and mbpim > 1e-6):
            raise DivergenceError(
                f"mismatch grew from {m0:.3e} to {mbpim:.3e} "
                f"by iteration {k}")
        if d_vr < config.tol_vr and d_va < config.tol_va:
            return v.copy(), trace, "converged"
    return best_v, trace, "budget exhausted"
