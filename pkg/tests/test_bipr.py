"""Level partitioning and the damped-Jacobi / bi-level voltage iteration."""
from __future__ import annotations

import numpy as np
import pytest

import builders
from gridgraph import engine
from gridgraph.assembly import build_ybus, compute_mismatch
from gridgraph.bipr import (BiprConfig, bilevel_solve, damped_jacobi_step,
                            partition_levels, single_level_partition)
from gridgraph.errors import (ConditioningError, DivergenceError,
                              GraphStructureError)
from gridgraph.model import Branch, Bus, BusKind, NetworkCase


def triangle_case():
    return NetworkCase(name="triangle", base_mva=100.0, buses=(
        Bus(id=1, kind=BusKind.SLACK, vm_setpoint=1.0),
        Bus(id=2, kind=BusKind.PQ, pd=0.1),
        Bus(id=3, kind=BusKind.PQ, pd=0.1),
    ), branches=(
        Branch(from_bus=1, to_bus=2, r=0.01, x=0.1),
        Branch(from_bus=2, to_bus=3, r=0.01, x=0.1),
        Branch(from_bus=1, to_bus=3, r=0.01, x=0.1),
    ))


def gather_yv(ag, state):
    """Sum_j Y_ij V_j for every bus, through the public engine only."""
    g = ag.graph
    g.set_vertex("v", np.asarray(state, dtype=np.complex128).copy())
    out = {}
    program = engine.SuperstepProgram(
        name="yv-gather",
        accumulators=[engine.Accumulator("yv", "sum", np.complex128)],
        edge_phase=lambda ctx: ctx.emit_gather("yv", "y_off", "v"),
        vertex_phase=lambda ctx: out.__setitem__("yv", ctx.acc("yv").copy()),
    )
    engine.run_supersteps(g, program, max_steps=1)
    return out["yv"]


def plain_update(ag, state):
    """Undamped Jacobi step written directly from the update formula."""
    g = ag.graph
    v = np.asarray(state, dtype=np.complex128).copy()
    idx = np.flatnonzero(np.arange(ag.n) != ag.slack)
    yv = gather_yv(ag, v)[idx]
    ydiag = g.vertex_column("y_diag")[idx]
    p = g.vertex_column("p_net")[idx]
    q_spec = g.vertex_column("q_net")[idx]
    vm_target = g.vertex_column("vm_target")[idx]
    is_pv = g.vertex_column("kind")[idx] == 1
    vi = v[idx]
    if is_pv.any():
        q_implied = -np.imag(np.conj(vi) * (ydiag * vi + yv))
        q_spec = np.where(is_pv, q_implied, q_spec)
    vnew = ((p - 1j * q_spec) / np.conj(vi) - yv) / ydiag
    if is_pv.any():
        mag = np.abs(vnew)
        vnew = np.where(is_pv, vnew * (vm_target / np.where(mag == 0, 1.0, mag)),
                        vnew)
    v[idx] = vnew
    return v


# ---------------------------------------------------------------- partitions

def test_star_partition_separates_every_edge():
    ag = build_ybus(builders.zero_injection_star(n_leaves=5))
    part = partition_levels(ag)
    assert part.level_of[1] == "A"
    assert all(part.level_of[leaf] == "B" for leaf in (2, 3, 4, 5, 6))
    assert part.intra_level_edge_count == 0
    assert part.intra_level_edge_fraction == 0.0


def test_triangle_partition_leaves_one_edge_inside():
    part = partition_levels(build_ybus(triangle_case()))
    assert part.intra_level_edge_count == 1
    assert part.intra_level_edge_fraction == pytest.approx(1 / 3)


def test_partition_is_deterministic_and_self_consistent(ieee14):
    ag = build_ybus(ieee14)
    part = partition_levels(ag)
    again = partition_levels(build_ybus(ieee14))
    assert part.level_of == again.level_of
    assert np.array_equal(part.a_mask, again.a_mask)

    # recount intra-level edges straight from the level map
    intra = sum(1 for _, br in ieee14.in_service_branches()
                if part.level_of[br.from_bus] == part.level_of[br.to_bus])
    assert part.intra_level_edge_count == intra
    n_edges = len(ieee14.in_service_branches())
    assert part.intra_level_edge_fraction == pytest.approx(intra / n_edges)
    assert part.intra_level_edge_fraction <= \
        single_level_partition(ag).intra_level_edge_fraction


def test_single_level_puts_everything_in_a(ieee14):
    ag = build_ybus(ieee14)
    part = single_level_partition(ag)
    assert set(part.level_of.values()) == {"A"}
    assert part.a_mask.all()
    assert part.intra_level_edge_fraction == 1.0


# ---------------------------------------------------------- update identities

def test_unit_damping_is_the_plain_update_bitwise(ieee14):
    ag = build_ybus(ieee14)
    state = damped_jacobi_step(ag, ieee14.flat_start())  # move off flat first
    got = damped_jacobi_step(ag, state, d=1.0)
    want = plain_update(ag, state)
    assert got.tobytes() == want.tobytes()


def test_empty_level_b_reduces_to_one_damped_step(ieee14):
    ag = build_ybus(ieee14)
    flat = ieee14.flat_start()
    cfg = BiprConfig(tol_vr=1e9, tol_va=1e9, max_iters=7)
    state, trace, reason = bilevel_solve(ag, flat, single_level_partition(ag),
                                         cfg)
    assert reason == "converged" and len(trace) == 1
    assert state.tobytes() == damped_jacobi_step(ag, flat).tobytes()


def test_flat_start_is_an_exact_fixed_point_without_injections():
    case = builders.zero_injection_star()
    ag = build_ybus(case)
    flat = case.flat_start()
    assert damped_jacobi_step(ag, flat).tobytes() == flat.tobytes()
    state, trace, reason = bilevel_solve(ag, flat, partition_levels(ag),
                                         BiprConfig())
    assert reason == "converged" and len(trace) == 1
    assert state.tobytes() == flat.tobytes()
    assert (trace[0].d_vr, trace[0].d_va, trace[0].mbpim) == (0.0, 0.0, 0.0)


# ------------------------------------------------------------------- solving

def test_two_bus_solution_matches_newton(nr_solution):
    case = builders.two_bus(pd=0.1, qd=0.02)
    ag = build_ybus(case)
    cfg = BiprConfig(tol_vr=1e-10, tol_va=1e-10)
    state, _, reason = bilevel_solve(ag, case.flat_start(),
                                     partition_levels(ag), cfg)
    reference, _ = nr_solution(case)
    assert reason == "converged"
    assert np.max(np.abs(state - reference.v)) < 1e-8


def test_bilevel_needs_no_more_iterations_than_single_level(ieee14):
    ag = build_ybus(ieee14)
    flat = ieee14.flat_start()
    _, tr_bi, r1 = bilevel_solve(ag, flat, partition_levels(ag), BiprConfig())
    _, tr_all, r2 = bilevel_solve(ag, flat, single_level_partition(ag),
                                  BiprConfig())
    assert r1 == r2 == "converged"
    assert len(tr_bi) <= len(tr_all)


def test_tight_tolerance_lands_on_a_true_fixed_point(ieee14):
    ag = build_ybus(ieee14)
    cfg = BiprConfig(tol_vr=1e-10, tol_va=1e-10)
    state, trace, reason = bilevel_solve(ag, ieee14.flat_start(),
                                         partition_levels(ag), cfg)
    assert reason == "converged"
    assert trace[-1].mbpim <= 1e-6
    assert compute_mismatch(ag, state).mbpim <= 1e-6


def test_voltage_deltas_shrink_from_the_start(ieee14):
    ag = build_ybus(ieee14)
    _, trace, _ = bilevel_solve(ag, ieee14.flat_start(), partition_levels(ag),
                                BiprConfig())
    deltas = [max(r.d_vr, r.d_va) for r in trace[:5]]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))


def test_slack_voltage_never_moves(ieee14):
    ag = build_ybus(ieee14)
    flat = ieee14.flat_start()
    state, _, _ = bilevel_solve(ag, flat, partition_levels(ag), BiprConfig())
    assert state[ag.slack] == flat[ag.slack]
    assert state[ag.slack].tobytes() == flat[ag.slack].tobytes()


def test_trace_agrees_with_an_independent_mismatch(ieee14):
    ag = build_ybus(ieee14)
    state, trace, _ = bilevel_solve(ag, ieee14.flat_start(),
                                    partition_levels(ag), BiprConfig())
    assert [r.iteration for r in trace] == list(range(1, len(trace) + 1))
    assert {r.stage for r in trace} == {"bipr"}
    assert trace[-1].mbpim == pytest.approx(
        compute_mismatch(ag, state).mbpim, abs=1e-14)


def test_budget_exhaustion_returns_the_best_state(ieee14):
    ag = build_ybus(ieee14)
    flat = ieee14.flat_start()
    m0 = compute_mismatch(ag, flat).mbpim
    cfg = BiprConfig(tol_vr=1e-14, tol_va=1e-14, max_iters=3)
    state, trace, reason = bilevel_solve(ag, flat, partition_levels(ag), cfg)
    assert reason == "budget exhausted" and len(trace) == 3
    best = min(m0, min(r.mbpim for r in trace))
    assert compute_mismatch(ag, state).mbpim == best


def test_unsolvable_load_raises_divergence():
    case = builders.two_bus(pd=50.0, qd=50.0)
    ag = build_ybus(case)
    with pytest.raises(DivergenceError, match="mismatch grew"):
        bilevel_solve(ag, case.flat_start(), partition_levels(ag),
                      BiprConfig())


def test_collapsed_voltage_is_detected():
    case = builders.two_bus()
    ag = build_ybus(case)
    state = case.flat_start()
    state[1] = 1e-9 + 0j
    with pytest.raises(DivergenceError, match="voltage collapsed"):
        damped_jacobi_step(ag, state)


def test_zero_diagonal_is_a_conditioning_error():
    case = builders.two_bus()
    ag = build_ybus(case)
    ag.graph.set_vertex("y_diag", np.zeros(2, dtype=np.complex128))
    with pytest.raises(ConditioningError, match="zero admittance diagonal"):
        damped_jacobi_step(ag, case.flat_start())


def test_state_shape_is_checked(ieee14):
    ag = build_ybus(ieee14)
    with pytest.raises(GraphStructureError, match="state"):
        damped_jacobi_step(ag, np.ones(3, dtype=complex))
    with pytest.raises(GraphStructureError, match="state0"):
        bilevel_solve(ag, np.ones(3, dtype=complex), partition_levels(ag),
                      BiprConfig())


@pytest.mark.parametrize("bad, msg", [
    (dict(d=0.0), "damping d"),
    (dict(d=1.5), "damping d"),
    (dict(tol_vr=0.0), "tolerances"),
    (dict(tol_va=-1e-3), "tolerances"),
    (dict(max_iters=-1), "max_iters"),
])
def test_config_validation(bad, msg):
    with pytest.raises(ValueError, match=msg):
        BiprConfig(**bad)
