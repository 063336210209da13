"""Admittance and decoupled-matrix assembly against dense references."""
from __future__ import annotations

import numpy as np
import pytest

import builders
import oracles
from gridgraph.assembly import build_decoupled, build_ybus, compute_mismatch
from gridgraph.errors import ConditioningError, GraphStructureError, ModelError
from gridgraph.model import Branch, Bus, BusKind, NetworkCase

IEEE_NAMES = ("ieee14", "ieee30", "ieee118")


def densify_ybus(ag):
    index = {bid: k for k, bid in enumerate(ag.case.bus_ids())}
    out = np.zeros((ag.n, ag.n), dtype=complex)
    for rid, cid, y in ag.triplets():
        out[index[rid], index[cid]] += y
    return out


def densify_decoupled(dg):
    g = dg.graph
    n = g.n_vertices
    mats = []
    for diag_name, off_name in (("bp_diag", "bp_off"), ("bpp_diag", "bpp_off")):
        m = np.zeros((n, n))
        np.fill_diagonal(m, g.vertex_column(diag_name))
        off = g.half_column(off_name)
        for i in range(n):
            for p in range(g.indptr[i], g.indptr[i + 1]):
                m[i, g.he_nbr[p]] += off[p]
        mats.append(m)
    return mats


def test_single_branch_admittance():
    ag = build_ybus(builders.two_bus(x=0.1))
    y = densify_ybus(ag)
    assert y[0, 0] == y[1, 1] == -10j
    assert y[0, 1] == y[1, 0] == 10j


def test_line_charging_shifts_the_diagonal():
    ag = build_ybus(builders.two_bus(x=0.1, b_charging=0.2))
    y = densify_ybus(ag)
    assert y[0, 0] == pytest.approx(-9.9j)
    assert y[0, 1] == 10j  # charging never touches off-diagonals


def test_decoupled_single_branch():
    dg = build_decoupled(builders.two_bus(x=0.1, b_charging=0.2))
    bp, bpp = densify_decoupled(dg)
    assert dg.p_rows.tolist() == [False, True]
    assert dg.q_rows.tolist() == [False, True]
    assert bp[1, 1] == pytest.approx(10.0)
    assert bpp[1, 1] == pytest.approx(9.9)
    assert bp[0, 0] == bpp[0, 0] == 1.0  # masked rows keep a unit diagonal
    assert bp[0, 1] == bpp[0, 1] == 0.0


@pytest.mark.parametrize("name", IEEE_NAMES)
def test_ybus_matches_dense_assembly(name, request):
    case = request.getfixturevalue(name)
    got = densify_ybus(build_ybus(case))
    want = oracles.dense_ybus(case)
    assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.parametrize("name", IEEE_NAMES)
def test_decoupled_matches_dense_assembly(name, request):
    case = request.getfixturevalue(name)
    bp, bpp = densify_decoupled(build_decoupled(case))
    assert np.max(np.abs(bp - oracles.dense_bprime(case))) < 1e-12
    assert np.max(np.abs(bpp - oracles.dense_bdouble(case))) < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_random_cases_match_dense_assembly(seed):
    case = builders.random_case(seed)
    got = densify_ybus(build_ybus(case))
    assert np.max(np.abs(got - oracles.dense_ybus(case))) < 1e-12
    bp, bpp = densify_decoupled(build_decoupled(case))
    assert np.max(np.abs(bp - oracles.dense_bprime(case))) < 1e-12
    assert np.max(np.abs(bpp - oracles.dense_bdouble(case))) < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_row_sums_vanish_without_shunt_terms(seed):
    case = builders.random_case(seed, plain=True)
    y = densify_ybus(build_ybus(case))
    assert np.max(np.abs(y.sum(axis=1))) < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_symmetric_when_no_phase_shift(seed):
    case = builders.random_case(seed, plain=True)
    y = densify_ybus(build_ybus(case))
    assert np.max(np.abs(y - y.T)) == 0.0


def test_zero_impedance_branch_is_rejected():
    with pytest.raises(ConditioningError, match="zero series impedance"):
        build_ybus(builders.two_bus(r=0.0, x=0.0))


def test_zero_reactance_breaks_decoupling_only():
    case = builders.two_bus(r=0.05, x=0.0)
    build_ybus(case)  # resistive-only branches are fine for Ybus
    with pytest.raises(ConditioningError, match="zero reactance"):
        build_decoupled(case)


def test_isolated_bus_is_rejected():
    case = NetworkCase(name="island", base_mva=100.0, buses=(
        Bus(id=1, kind=BusKind.SLACK, vm_setpoint=1.0),
        Bus(id=2, kind=BusKind.PQ),
        Bus(id=3, kind=BusKind.PQ),
    ), branches=(
        Branch(from_bus=1, to_bus=2, r=0.0, x=0.1),
        Branch(from_bus=2, to_bus=3, r=0.0, x=0.1, status=False),
    ))
    with pytest.raises(ModelError, match="bus 3 is isolated"):
        build_ybus(case)


def test_mismatch_is_exactly_zero_with_no_injections():
    case = builders.zero_injection_star()
    ag = build_ybus(case)
    res = compute_mismatch(ag, case.flat_start())
    assert res.mbpim == 0.0
    assert not res.dp.any() and not res.dq.any()


def test_mismatch_flat_start_equals_specified_load():
    case = builders.two_bus(pd=0.1)
    res = compute_mismatch(build_ybus(case), case.flat_start())
    assert res.dp[1] == pytest.approx(-0.1)
    assert res.dp[0] == 0.0  # slack carries no power equation
    assert res.mbpim == pytest.approx(0.1)


def test_mismatch_vanishes_at_newton_solution(ieee14, nr_solution):
    state, _ = nr_solution(ieee14)
    res = compute_mismatch(build_ybus(ieee14), state.v)
    assert res.mbpim < 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_mismatch_matches_dense_evaluation(seed):
    case = builders.random_case(seed)
    ag = build_ybus(case)
    rng = np.random.default_rng(seed + 1000)
    v = (rng.uniform(0.9, 1.1, case.n_buses)
         * np.exp(1j * rng.uniform(-0.3, 0.3, case.n_buses)))
    res = compute_mismatch(ag, v)
    dp, dq, worst = oracles.dense_mismatch(case, v)
    assert np.max(np.abs(res.dp - dp)) < 1e-12
    assert np.max(np.abs(res.dq - dq)) < 1e-12
    assert res.mbpim == pytest.approx(worst, abs=1e-12)


def test_mismatch_checks_state_shape(ieee14):
    ag = build_ybus(ieee14)
    with pytest.raises(GraphStructureError, match="state"):
        compute_mismatch(ag, np.ones(3, dtype=complex))
