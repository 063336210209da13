"""Superstep engine: barrier semantics, accumulators, globals, termination."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridgraph import engine
from gridgraph.engine import Accumulator, SuperstepProgram, run_supersteps
from gridgraph.errors import GraphStructureError
from gridgraph.graph import build_graph


def test_copy_program_single_step():
    g = build_graph(3, [(0, 1), (1, 2)])
    g.set_vertex("value", [3.0, 5.0, 7.0])
    g.set_vertex("prev", np.zeros(3))
    program = SuperstepProgram(
        name="copy",
        vertex_phase=lambda ctx: ctx.set("prev", ctx.value("value")))
    result = run_supersteps(g, program, max_steps=1)
    assert result.steps == 1
    assert g.vertex["prev"].tolist() == g.vertex["value"].tolist()


def test_neighbor_sum_two_vertices():
    g = build_graph(2, [(0, 1)])
    g.set_vertex("value", [3.0, 5.0])
    g.set_vertex("result", np.zeros(2))
    program = SuperstepProgram(
        name="nsum",
        accumulators=(Accumulator("acc", "sum"),),
        edge_phase=lambda ctx: ctx.emit("acc", ctx.nbr("value")),
        vertex_phase=lambda ctx: ctx.set("result", ctx.acc("acc")))
    run_supersteps(g, program, max_steps=1)
    assert g.vertex["result"].tolist() == [5.0, 3.0]


def _diffusion_program():
    def vertex_phase(ctx):
        deg = np.maximum(ctx.value("deg"), 1.0)
        ctx.set("v", 0.5 * ctx.value("v") + 0.5 * ctx.acc("nsum") / deg)

    return SuperstepProgram(
        name="diffusion",
        accumulators=(Accumulator("nsum", "sum"),),
        edge_phase=lambda ctx: ctx.emit("nsum", ctx.nbr("v")),
        vertex_phase=vertex_phase)


def test_diffusion_is_bit_reproducible():
    def run_once():
        g = build_graph(6, [(k, k + 1) for k in range(5)])
        g.set_vertex("v", [1.0, 0.0, 0.0, 4.0, 0.0, 2.0])
        g.set_vertex("deg", g.degrees.astype(float))
        run_supersteps(g, _diffusion_program(), max_steps=10)
        return g.vertex["v"].tobytes()

    assert run_once() == run_once()


def test_barrier_isolates_updates_within_a_step():
    """Vertex updates land at the barrier: within a step every vertex sees
    only previous-step values (Jacobi, not Gauss-Seidel)."""
    g = build_graph(2, [(0, 1)])
    g.set_vertex("v", [0.0, 1.0])
    program = SuperstepProgram(
        name="swap",
        accumulators=(Accumulator("nsum", "sum"),),
        edge_phase=lambda ctx: ctx.emit("nsum", ctx.nbr("v")),
        vertex_phase=lambda ctx: ctx.set("v", ctx.acc("nsum")))
    run_supersteps(g, program, max_steps=1)
    assert g.vertex["v"].tolist() == [1.0, 0.0]
    run_supersteps(g, program, max_steps=1)
    assert g.vertex["v"].tolist() == [0.0, 1.0]


def test_budget_exhaustion_is_reported_not_raised():
    g = build_graph(2, [(0, 1)])
    g.set_vertex("v", [1.0, 1.0])
    program = SuperstepProgram(
        name="noop", vertex_phase=lambda ctx: ctx.set("v", ctx.value("v")))
    result = run_supersteps(g, program, max_steps=7)
    assert result.steps == 7
    assert result.reason == "budget exhausted"
    assert run_supersteps(g, program, max_steps=0).steps == 0


def test_stop_predicate_sees_finalized_globals():
    g = build_graph(3, [(0, 1), (1, 2)])
    g.set_vertex("v", [1.0, 2.0, 3.0])

    def vertex_phase(ctx):
        ctx.set("v", ctx.value("v") + 1.0)
        ctx.emit_global("vmax", ctx.value("v") + 1.0)

    program = SuperstepProgram(
        name="count",
        accumulators=(Accumulator("vmax", "max", scope="global"),),
        vertex_phase=vertex_phase)
    result = run_supersteps(g, program, max_steps=50,
                            stop=lambda gl, step: gl["vmax"] >= 7.0)
    assert result.reason == "stopped"
    # new max after step k (0-based) is 4+k, so the stop fires on step 3
    assert result.steps == 4
    assert result.globals["vmax"] == 7.0
    assert g.vertex["v"].tolist() == [5.0, 6.0, 7.0]


def test_active_mask_limits_updates_and_globals():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    g.set_vertex("v", [1.0, 1.0, 1.0, 1.0])
    mask = np.array([True, False, True, False])

    def vertex_phase(ctx):
        ctx.set("v", ctx.value("v") + 10.0)
        ctx.emit_global("total", ctx.value("v"))

    program = SuperstepProgram(
        name="masked",
        accumulators=(Accumulator("total", "sum", scope="global"),),
        vertex_phase=vertex_phase,
        active=lambda graph, step: mask)
    result = run_supersteps(g, program, max_steps=1)
    assert g.vertex["v"].tolist() == [11.0, 1.0, 11.0, 1.0]
    # only active vertices contribute to the global reduction
    assert result.globals["total"] == 2.0


def test_edge_phase_globals_visible_to_vertex_phase():
    g = build_graph(2, [(0, 1)])
    g.set_vertex("v", [2.0, 3.0])
    seen = {}

    def edge_phase(ctx):
        ctx.emit("nsum", ctx.nbr("v"))
        ctx.emit("half_total", ctx.owner("v") * ctx.nbr("v"))

    def vertex_phase(ctx):
        seen["value"] = ctx.g("half_total")

    program = SuperstepProgram(
        name="handoff",
        accumulators=(Accumulator("nsum", "sum"),
                      Accumulator("half_total", "sum", scope="global")),
        edge_phase=edge_phase,
        vertex_phase=vertex_phase)
    run_supersteps(g, program, max_steps=1)
    assert seen["value"] == 12.0  # both half products of 2*3


def test_integer_accumulators_are_exactly_associative():
    @given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=30))
    def inner(values):
        n = len(values)
        g = build_graph(n + 1, [(k, n) for k in range(n)])
        g.set_vertex("v", np.array(values + [0], dtype=np.int64))
        g.set_vertex("out", np.zeros(n + 1, dtype=np.int64))
        program = SuperstepProgram(
            name="isum",
            accumulators=(Accumulator("acc", "sum", np.int64),),
            edge_phase=lambda ctx: ctx.emit("acc", ctx.nbr("v")),
            vertex_phase=lambda ctx: ctx.set("out", ctx.acc("acc")))
        run_supersteps(g, program, max_steps=1)
        assert int(g.vertex["out"][n]) == sum(values)

    inner()


def test_program_validation():
    with pytest.raises(GraphStructureError, match="no phases"):
        SuperstepProgram(name="empty")
    with pytest.raises(GraphStructureError, match="duplicate"):
        SuperstepProgram(name="dup",
                         accumulators=(Accumulator("a"), Accumulator("a")),
                         vertex_phase=lambda ctx: None)
    with pytest.raises(GraphStructureError, match="combiner"):
        Accumulator("bad", "median")
    g = build_graph(2, [(0, 1)])
    program = SuperstepProgram(name="x", vertex_phase=lambda ctx: None)
    with pytest.raises(GraphStructureError, match="max_steps"):
        run_supersteps(g, program, max_steps=-1)


def test_undeclared_accumulator_is_an_error():
    g = build_graph(2, [(0, 1)])
    g.set_vertex("v", [1.0, 2.0])
    program = SuperstepProgram(
        name="oops",
        edge_phase=lambda ctx: ctx.emit("ghost", ctx.nbr("v")),
        vertex_phase=lambda ctx: None)
    with pytest.raises(GraphStructureError, match="ghost"):
        run_supersteps(g, program, max_steps=1)


def test_gather_emission_requires_sum_combiner():
    g = build_graph(2, [(0, 1)])
    g.set_vertex("v", [1.0, 2.0])
    g.set_half("w", [1.0])
    program = SuperstepProgram(
        name="maxgather",
        accumulators=(Accumulator("m", "max"),),
        edge_phase=lambda ctx: ctx.emit_gather("m", "w", "v"),
        vertex_phase=lambda ctx: None)
    with pytest.raises(GraphStructureError, match="sum"):
        run_supersteps(g, program, max_steps=1)
