"""Staged power-flow pipeline and method-comparison harness.

The combined method runs three optional stages in sequence: contract
near-zero-impedance branches, rough in a solution with the bi-level damped
Jacobi sweeps (cheap early progress from a flat start), then finish with
fast-decoupled CG iterations (fast terminal convergence once the state is
close). Each stage hands its state to the next; the solved state is
expanded back onto the original buses at the end.

A dense Newton-Raphson solver lives here as the reference oracle. It
deliberately shares nothing with the graph solvers beyond the case model
and the mismatch definition: dense Ybus, dense polar Jacobian, dense
direct solves. Agreement between two code paths that different is strong
evidence both are right.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly, bipr, contraction, dcg
from .errors import (ConditioningError, DivergenceError, GraphStructureError,
                     GridGraphError)
from .model import NetworkCase, require_connected
from .trace import TraceRecord

STAGE_SWITCH_TOL = 1e-2
NR_TOL_DEFAULT = 1e-8
NR_MAX_ITERS_DEFAULT = 40

METHODS = ("bipr", "vc-bipr", "dcg", "vc-dcg", "hybrid", "nr")

METHOD_LABELS = {
    "bipr": "Bi-Level PageRank",
    "vc-bipr": "VC + Bi-Level PageRank",
    "dcg": "DCG",
    "vc-dcg": "VC + DCG",
    "hybrid": "VC + Bi-Level PageRank + DCG",
    "nr": "Newton-Raphson",
}


@dataclass(frozen=True, eq=False)
class VoltageState:
    """Solved complex voltages keyed by bus id (case order preserved)."""

    ids: tuple[int, ...]
    v: np.ndarray

    def __post_init__(self):
        if self.v.shape != (len(self.ids),):
            raise GraphStructureError(
                f"voltage array has shape {self.v.shape}, expected "
                f"({len(self.ids)},)")
        object.__setattr__(self, "_slot", {b: k for k, b in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, bus_id: int) -> complex:
        return complex(self.v[self._slot[bus_id]])

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.v)

    def angles(self) -> np.ndarray:
        return np.angle(self.v)


@dataclass(frozen=True)
class HybridConfig:
    """Stage toggles and per-stage tolerances for the combined method.

    The warm-start stage stops at loose voltage-change tolerances (the
    stage switch); the finishing stage owns the final mismatch tolerances.
    """

    z_threshold: float = contraction.Z_THRESHOLD_DEFAULT
    bipr: bipr.BiprConfig = field(default_factory=lambda: bipr.BiprConfig(
        tol_vr=STAGE_SWITCH_TOL, tol_va=STAGE_SWITCH_TOL))
    fd: dcg.FdConfig = field(default_factory=dcg.FdConfig)
    contract: bool = True
    warm_start: bool = True
    dcg: bool = True

    def __post_init__(self):
        if self.z_threshold < 0:
            raise ValueError(
                f"z_threshold must be >= 0, got {self.z_threshold}")


@dataclass(frozen=True, eq=False)
class SolveReport:
    method: str
    state: VoltageState
    trace: list[TraceRecord]
    final_mbpim: float
    converged: bool
    stage_iterations: dict[str, int]
    stage_millis: dict[str, float]
    total_millis: float
    supernodes_formed: int
    branches_removed: int
    terminations: dict[str, str]

    def to_text(self) -> str:
        lines = [
            f"method:            {self.method}",
            f"converged:         {'yes' if self.converged else 'no'}",
            f"final mbpim:       {self.final_mbpim:.6e} p.u.",
            f"supernodes formed: {self.supernodes_formed}",
            f"branches removed:  {self.branches_removed}",
            f"total wall:        {self.total_millis:.2f} ms",
            "",
            f"{'stage':<10} {'iterations':>10} {'wall_ms':>10}  termination",
        ]
        for stage, count in self.stage_iterations.items():
            wall = self.stage_millis.get(stage)
            wall_s = "" if wall is None else f"{wall:.2f}"
            term = self.terminations.get(stage, "")
            lines.append(f"{stage:<10} {count:>10} {wall_s:>10}  {term}")
        lines.append("")
        lines.append(f"{'bus':>6} {'vm_pu':>10} {'va_deg':>10}")
        vm = self.state.magnitudes()
        va = np.degrees(self.state.angles())
        for k, bus_id in enumerate(self.state.ids):
            lines.append(f"{bus_id:>6} {vm[k]:>10.5f} {va[k]:>10.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "converged": self.converged,
            "final_mbpim": self.final_mbpim,
            "stage_iterations": self.stage_iterations,
            "stage_millis": self.stage_millis,
            "total_millis": self.total_millis,
            "supernodes_formed": self.supernodes_formed,
            "branches_removed": self.branches_removed,
            "terminations": self.terminations,
            "buses": [{"id": int(b), "v_re": float(v.real), "v_im": float(v.imag)}
                      for b, v in zip(self.state.ids, self.state.v)],
        }, indent=2) + "\n"


def _restrict_state(state0, case: NetworkCase, work: NetworkCase) -> np.ndarray:
    """Map an original-bus initial state onto the (possibly contracted)
    working case: each surviving bus takes its own original value."""
    if isinstance(state0, VoltageState):
        lookup = dict(zip(state0.ids, state0.v))
    else:
        arr = np.asarray(state0)
        if arr.shape != (case.n_buses,):
            raise GraphStructureError(
                f"initial state has shape {arr.shape}, expected "
                f"({case.n_buses},) over the original buses")
        lookup = dict(zip(case.bus_ids(), arr))
    try:
        return np.array([lookup[b.id] for b in work.buses], dtype=np.complex128)
    except KeyError as missing:
        raise GraphStructureError(
            f"initial state is missing bus id {missing}") from None


def _staged(label: str, fn, *args):
    """Run one stage; failures carry the stage name."""
    try:
        return fn(*args)
    except GridGraphError as e:
        raise type(e)(f"stage {label}: {e}") from e


def hybrid_solve(case: NetworkCase, config: HybridConfig | None = None,
                 state0=None) -> SolveReport:
    """Run the enabled stages in order and report on original bus ids.

    state0 (VoltageState or complex array over the original buses) replaces
    the flat start; pass the previous solution when sweeping a time series.
    The report's mismatch is measured on the working (contracted) network,
    where the solver's acceptance criterion lives; member buses of a
    supernode read their representative's voltage.
    """
    config = config or HybridConfig()
    require_connected(case)
    t_total = time.perf_counter()
    stage_millis: dict[str, float] = {}
    stage_iterations: dict[str, int] = {}
    terminations: dict[str, str] = {}
    trace: list[TraceRecord] = []

    work = case
    cmap = None
    if config.contract:
        t0 = time.perf_counter()
        work, cmap = _staged("contract", contraction.contract_zero_impedance,
                             case, config.z_threshold)
        stage_millis["contract"] = (time.perf_counter() - t0) * 1e3
        stage_iterations["contract"] = 0
        terminations["contract"] = (
            f"{cmap.supernodes_formed} supernodes, "
            f"{cmap.branches_removed} branches removed")

    ag = _staged("assemble", assembly.build_ybus, work)
    dg = _staged("assemble", assembly.build_decoupled, work) if config.dcg else None

    state = (work.flat_start() if state0 is None
             else _restrict_state(state0, case, work))

    converged = False
    if config.warm_start:
        t0 = time.perf_counter()
        partition = bipr.partition_levels(ag)
        state, rows, reason = _staged(
            "bipr", bipr.bilevel_solve, ag, state, partition, config.bipr)
        stage_millis["bipr"] = (time.perf_counter() - t0) * 1e3
        stage_iterations["bipr"] = len(rows)
        terminations["bipr"] = reason
        trace.extend(rows)
        converged = reason == "converged"

    if config.dcg:
        t0 = time.perf_counter()
        state, rows, reason = _staged(
            "fd", dcg.fast_decoupled_solve, work, (ag, dg), state, config.fd)
        stage_millis["fd"] = (time.perf_counter() - t0) * 1e3
        stage_iterations["fd"] = sum(1 for r in rows if r.stage == "fd")
        stage_iterations["dcg"] = sum(1 for r in rows if r.stage == "dcg")
        terminations["fd"] = reason
        trace.extend(rows)
        converged = reason == "converged"

    final_mbpim = assembly.compute_mismatch(ag, state).mbpim
    if cmap is not None:
        expanded = contraction.expand_state(state, cmap)
        voltage = VoltageState(ids=tuple(cmap.original_ids), v=expanded)
    else:
        voltage = VoltageState(ids=tuple(case.bus_ids()), v=state.copy())

    parts = [label for flag, label in ((config.contract, "VC"),
                                       (config.warm_start, "Bi-Level PageRank"),
                                       (config.dcg, "DCG")) if flag]
    return SolveReport(
        method=" + ".join(parts) if parts else "no stages",
        state=voltage,
        trace=trace,
        final_mbpim=final_mbpim,
        converged=converged,
        stage_iterations=stage_iterations,
        stage_millis=stage_millis,
        total_millis=(time.perf_counter() - t_total) * 1e3,
        supernodes_formed=cmap.supernodes_formed if cmap else 0,
        branches_removed=cmap.branches_removed if cmap else 0,
        terminations=terminations,
    )


# -- dense Newton-Raphson reference ------------------------------------------

def _dense_ybus(case: NetworkCase) -> np.ndarray:
    idx = case.bus_index()
    n = case.n_buses
    y = np.zeros((n, n), dtype=np.complex128)
    for _, br in case.in_service_branches():
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * np.exp(1j * br.shift)
        y[f, f] += ys / (br.tap * br.tap) + 1j * br.b_charging / 2.0
        y[t, t] += ys + 1j * br.b_charging / 2.0
        y[f, t] += -ys / np.conj(tap)
        y[t, f] += -ys / tap
    y[np.arange(n), np.arange(n)] += case.shunts()
    return y


def _dense_mismatch(case: NetworkCase, y: np.ndarray, v: np.ndarray):
    kinds = case.kinds()
    s = v * np.conj(y @ v)
    dp = np.where(kinds != 0, case.p_net() - s.real, 0.0)
    dq = np.where(kinds == 2, case.q_net() - s.imag, 0.0)
    return dp, dq, float(max(np.abs(dp).max(), np.abs(dq).max()))


def _newton_full(case: NetworkCase, tol: float, max_iters: int
                 ) -> tuple[np.ndarray, int, list[TraceRecord]]:
    require_connected(case)
    y = _dense_ybus(case)
    kinds = case.kinds()
    pvpq = np.flatnonzero(kinds != 0)
    pq = np.flatnonzero(kinds == 2)
    npvpq = pvpq.size

    v = case.flat_start()
    vm = np.abs(v)
    va = np.angle(v)
    dp, dq, mbpim = _dense_mismatch(case, y, v)
    m0 = mbpim
    rows: list[TraceRecord] = []
    iterations = 0
    while mbpim >= tol and iterations < max_iters:
        t0 = time.perf_counter()
        ibus = y @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_vnorm = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        ds_dvm = diag_v @ np.conj(y @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
        j = np.block([
            [ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
            [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag],
        ])
        f = np.concatenate([dp[pvpq], dq[pq]])
        try:
            dx = np.linalg.solve(j, f)
        except np.linalg.LinAlgError:
            raise ConditioningError(
                f"singular Jacobian at iteration {iterations + 1}") from None
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        v = vm * np.exp(1j * va)
        iterations += 1
        dp, dq, mbpim = _dense_mismatch(case, y, v)
        rows.append(TraceRecord(iteration=iterations, stage="nr", mbpim=mbpim,
                                millis=(time.perf_counter() - t0) * 1e3))
        if mbpim > bipr.DIVERGENCE_GROWTH * max(m0, tol):
            raise DivergenceError(
                f"mismatch grew from {m0:.3e} to {mbpim:.3e} "
                f"by iteration {iterations}")
    return v, iterations, rows


def newton_raphson_reference(case: NetworkCase, tol: float = NR_TOL_DEFAULT,
                             max_iters: int = NR_MAX_ITERS_DEFAULT
                             ) -> tuple[VoltageState, int]:
    """Dense polar Newton-Raphson from a flat start.

    Full Jacobian, direct linear solves, PV magnitudes and the slack held
    fixed. Returns the state reached and the update count; the caller is
    expected to check the mismatch if max_iters may bind.
    """
    v, iterations, _ = _newton_full(case, tol, max_iters)
    return VoltageState(ids=tuple(case.bus_ids()), v=v), iterations


# -- method dispatch and comparison -------------------------------------------

def method_config(method: str) -> HybridConfig:
    """The per-method tolerance and stage profile used by compare_methods."""
    if method == "bipr":
        return HybridConfig(contract=False, warm_start=True, dcg=False,
                            bipr=bipr.BiprConfig())
    if method == "vc-bipr":
        return HybridConfig(contract=True, warm_start=True, dcg=False,
                            bipr=bipr.BiprConfig())
    if method == "dcg":
        return HybridConfig(contract=False, warm_start=False, dcg=True)
    if method == "vc-dcg":
        return HybridConfig(contract=True, warm_start=False, dcg=True)
    if method == "hybrid":
        return HybridConfig()
    raise GridGraphError(
        f"unknown method {method!r}: expected one of {METHODS}")


def solve_method(case: NetworkCase, method: str,
                 config: HybridConfig | None = None,
                 nr_tol: float = NR_TOL_DEFAULT, state0=None) -> SolveReport:
    """Run one named method and wrap the outcome as a SolveReport."""
    if method == "nr":
        t0 = time.perf_counter()
        v, iterations, rows = _newton_full(case, nr_tol, NR_MAX_ITERS_DEFAULT)
        wall = (time.perf_counter() - t0) * 1e3
        mbpim = _dense_mismatch(case, _dense_ybus(case), v)[2]
        return SolveReport(
            method=METHOD_LABELS["nr"],
            state=VoltageState(ids=tuple(case.bus_ids()), v=v),
            trace=rows,
            final_mbpim=mbpim,
            converged=mbpim < nr_tol,
            stage_iterations={"nr": iterations},
            stage_millis={"nr": wall},
            total_millis=wall,
            supernodes_formed=0,
            branches_removed=0,
            terminations={"nr": "converged" if mbpim < nr_tol
                          else "budget exhausted"},
        )
    return hybrid_solve(case, config or method_config(method), state0=state0)


@dataclass(frozen=True, eq=False)
class MethodRow:
    method: str
    label: str
    iterations: int | None
    breakdown: str
    time_ms: float | None
    mbpim: float | None
    converged: bool
    max_dev_vs_nr: float | None
    error: str | None = None


@dataclass(frozen=True, eq=False)
class MethodComparison:
    case_name: str
    rows: list[MethodRow]

    _COLUMNS = ("method", "iterations", "breakdown", "time_ms", "mbpim",
                "converged", "max_dev_vs_nr", "error")

    def _cells(self, row: MethodRow) -> list[str]:
        def num(x, fmt):
            return "" if x is None else format(x, fmt)
        return [row.label, num(row.iterations, "d"), row.breakdown,
                num(row.time_ms, ".2f"), num(row.mbpim, ".3e"),
                "yes" if row.converged else "no",
                num(row.max_dev_vs_nr, ".3e"), row.error or ""]

    def to_csv(self) -> str:
        out = [",".join(self._COLUMNS)]
        for row in self.rows:
            cells = self._cells(row)
            out.append(",".join(
                f'"{c}"' if "," in c else c for c in cells))
        return "\n".join(out) + "\n"

    def to_text(self) -> str:
        table = [list(self._COLUMNS)] + [self._cells(r) for r in self.rows]
        widths = [max(len(row[k]) for row in table) for k in range(len(table[0]))]
        lines = [f"case: {self.case_name}"]
        for i, row in enumerate(table):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _iteration_breakdown(report: SolveReport) -> tuple[int, str]:
    """Total iteration count the way method tables count them: sweeps for
    the warm start, cumulative inner iterations for the CG finish."""
    parts = []
    total = 0
    for stage in ("bipr", "dcg", "nr"):
        if stage == "dcg":
            count = max((r.iteration for r in report.trace if r.stage == "dcg"),
                        default=None)
        else:
            n = report.stage_iterations.get(stage)
            count = n if n else None
        if count is not None:
            parts.append(f"{stage} {count}")
            total += count
    return total, " + ".join(parts)


def compare_methods(case: NetworkCase, methods=METHODS,
                    nr_tol: float = NR_TOL_DEFAULT) -> MethodComparison:
    """Run each method on the case and tabulate outcome vs the NR reference.

    Per-method failures land in the table's error column instead of
    raising; the deviation column is the max complex-voltage distance from
    the NR solution over all original buses.
    """
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise GridGraphError(
            f"unknown methods {unknown}: expected a subset of {METHODS}")

    try:
        nr_state, _ = newton_raphson_reference(case, tol=nr_tol)
        nr_v = nr_state.v
    except GridGraphError as e:
        nr_v = None
        nr_error = str(e)

    rows: list[MethodRow] = []
    for m in methods:
        try:
            report = solve_method(case, m, nr_tol=nr_tol)
        except GridGraphError as e:
            rows.append(MethodRow(
                method=m, label=METHOD_LABELS[m], iterations=None,
                breakdown="", time_ms=None, mbpim=None, converged=False,
                max_dev_vs_nr=None, error=str(e)))
            continue
        if m == "nr":
            dev = 0.0
        elif nr_v is not None:
            dev = float(np.abs(report.state.v - nr_v).max())
        else:
            dev = None
        total, breakdown = _iteration_breakdown(report)
        rows.append(MethodRow(
            method=m, label=report.method, iterations=total,
            breakdown=breakdown, time_ms=report.total_millis,
            mbpim=report.final_mbpim, converged=report.converged,
            max_dev_vs_nr=dev,
            error=None if nr_v is not None or m == "nr"
            else f"no NR reference: {nr_error}"))
    return MethodComparison(case_name=case.name, rows=rows)
