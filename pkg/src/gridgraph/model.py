"""Per-unit electrical network model.

NetworkCase and its parts are frozen dataclasses: construction-time data is
never mutated by solvers, so cases are safe to share across threads and reuse
between method runs. All electrical quantities are stored per-unit on the
system base and all angles in radians; the parser does the conversions.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ModelError


class BusKind(enum.Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    pd: float = 0.0          # load, p.u.
    qd: float = 0.0
    pg: float = 0.0          # generation total, p.u.
    qg: float = 0.0
    gs: float = 0.0          # shunt admittance, p.u.
    bs: float = 0.0
    vm_init: float = 1.0     # p.u.
    va_init: float = 0.0     # radians
    vm_setpoint: float | None = None   # PV/slack regulation target, p.u.


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0  # total line charging, p.u.
    tap: float = 1.0         # off-nominal turns ratio (from side)
    shift: float = 0.0       # phase shift, radians
    status: bool = True

    @property
    def z_magnitude(self) -> float:
        return math.hypot(self.r, self.x)


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]

    # -- index helpers (positions are bus order, ids are reporting labels) --

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def kinds(self) -> np.ndarray:
        """Int8 column: 0 slack, 1 PV, 2 PQ."""
        code = {BusKind.SLACK: 0, BusKind.PV: 1, BusKind.PQ: 2}
        return np.array([code[b.kind] for b in self.buses], dtype=np.int8)

    def slack_position(self) -> int:
        pos = [k for k, b in enumerate(self.buses) if b.kind is BusKind.SLACK]
        if len(pos) != 1:
            raise ModelError(
                f"case {self.name!r} must have exactly one slack bus to solve, "
                f"found {len(pos)}"
                + (f" (ids {[self.buses[k].id for k in pos]})" if pos else ""))
        return pos[0]

    def p_net(self) -> np.ndarray:
        return np.array([b.pg - b.pd for b in self.buses])

    def q_net(self) -> np.ndarray:
        return np.array([b.qg - b.qd for b in self.buses])

    def shunts(self) -> np.ndarray:
        return np.array([complex(b.gs, b.bs) for b in self.buses])

    def vm_targets(self) -> np.ndarray:
        """Regulated magnitude per bus (PV/slack setpoint, else vm_init)."""
        return np.array([b.vm_setpoint if b.vm_setpoint is not None else b.vm_init
                         for b in self.buses])

    def flat_start(self) -> np.ndarray:
        """Setpoint magnitude at zero angle (slack keeps its case angle)."""
        vm = np.ones(self.n_buses)
        va = np.zeros(self.n_buses)
        for k, b in enumerate(self.buses):
            if b.kind is not BusKind.PQ:
                vm[k] = b.vm_setpoint if b.vm_setpoint is not None else b.vm_init
            if b.kind is BusKind.SLACK:
                va[k] = b.va_init
        return vm * np.exp(1j * va)

    def in_service_branches(self) -> list[tuple[int, Branch]]:
        return [(k, br) for k, br in enumerate(self.branches) if br.status]

    def islands(self) -> list[set[int]]:
        """Connected components (bus positions) over in-service branches."""
        index = self.bus_index()
        adj: list[list[int]] = [[] for _ in self.buses]
        for _, br in self.in_service_branches():
            i, j = index[br.from_bus], index[br.to_bus]
            adj[i].append(j)
            adj[j].append(i)
        seen = [False] * self.n_buses
        comps = []
        for start in range(self.n_buses):
            if seen[start]:
                continue
            stack, comp = [start], set()
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.add(u)
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(comp)
        return comps

    def validate(self) -> "NetworkCase":
        """Structural checks shared by the parser and direct constructors."""
        seen: set[int] = set()
        for b in self.buses:
            if b.id in seen:
                raise ModelError(f"duplicate bus id {b.id}")
            seen.add(b.id)
            if b.kind is not BusKind.PQ:
                if b.vm_setpoint is None or not b.vm_setpoint > 0:
                    raise ModelError(
                        f"bus {b.id} is {b.kind.value} and needs a positive "
                        f"voltage setpoint, got {b.vm_setpoint}")
            for v in (b.pd, b.qd, b.pg, b.qg, b.gs, b.bs, b.vm_init, b.va_init):
                if not math.isfinite(v):
                    raise ModelError(f"bus {b.id} has a non-finite field")
        if not any(b.kind is BusKind.SLACK for b in self.buses):
            raise ModelError(f"case {self.name!r} has no slack bus")
        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in seen:
                    raise ModelError(f"branch {k} references unknown bus {end}")
            if not br.tap > 0:
                raise ModelError(f"branch {k} has nonpositive tap {br.tap}")
            for v in (br.r, br.x, br.b_charging, br.tap, br.shift):
                if not math.isfinite(v):
                    raise ModelError(f"branch {k} has a non-finite field")
        return self


def require_connected(case: NetworkCase) -> None:
    """Reject cases whose in-service branch graph does not reach every bus."""
    comps = case.islands()
    if len(comps) > 1:
        index = {b.id: k for k, b in enumerate(case.buses)}
        main = max(comps, key=len)
        orphan = next(b.id for b in case.buses if index[b.id] not in main)
        raise ModelError(
            f"case {case.name!r} is not connected: {len(comps)} islands; "
            f"e.g. bus {orphan} is unreachable from the largest island")


def case_totals(case: NetworkCase) -> dict[str, float]:
    """Exact (fsum) totals of the summable bus attributes."""
    return {name: math.fsum(getattr(b, name) for b in case.buses)
            for name in ("pd", "qd", "pg", "qg", "gs", "bs")}
