"""Vertex contraction of (near-)zero-impedance branches.

Branches whose series impedance magnitude falls at or below a threshold are
electrically rigid: both endpoints hold essentially one voltage, and keeping
them in the admittance matrix injects huge off-diagonal entries that wreck
its conditioning. This module merges each connected component of such
branches into one supernode, sums the member bus quantities, and can expand
a solved supernode state back onto the original buses verbatim.

Merging rules: Pd, Qd, Pg, Qg, Gs, Bs sum over members; the bus kind is the
highest-precedence member under Slack > PV > PQ and that member (ties broken
by lowest original id) also supplies the voltage setpoint and initial state.
A surviving above-threshold branch whose endpoints land in the same
supernode would become a self-loop; it is dropped and a warning records its
impedance, since there is no principled way to keep it.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .assembly import build_ybus
from .errors import GraphStructureError, ModelError
from .model import Branch, Bus, BusKind, NetworkCase

Z_THRESHOLD_DEFAULT = 1e-6

_PRECEDENCE = {BusKind.SLACK: 0, BusKind.PV: 1, BusKind.PQ: 2}


@dataclass(frozen=True)
class ContractionMap:
    """Record of one contraction pass, sufficient to undo the renaming."""

    rep: dict[int, int]
    members: dict[int, tuple[int, ...]]
    contracted_branches: tuple[int, ...]
    dropped_branches: tuple[int, ...]
    kind_provenance: dict[int, int]
    warnings: tuple[str, ...]
    original_ids: tuple[int, ...]
    supernode_ids: tuple[int, ...]
    z_threshold: float

    @property
    def supernodes_formed(self) -> int:
        """Count of supernodes that absorbed more than one bus."""
        return sum(1 for m in self.members.values() if len(m) > 1)

    @property
    def branches_removed(self) -> int:
        return len(self.contracted_branches) + len(self.dropped_branches)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("original_id,supernode_id\n")
        for bus_id in self.original_ids:
            out.write(f"{bus_id},{self.rep[bus_id]}\n")
        return out.getvalue()


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # lower index wins so representatives are stable
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _merge_bus(case: NetworkCase, positions: list[int]) -> tuple[Bus, int]:
    """Fold member buses into one; returns the bus and the provenance id."""
    buses = [case.buses[p] for p in positions]
    lead = min(buses, key=lambda b: (_PRECEDENCE[b.kind], b.id))

    slack_setpoints = {b.vm_setpoint for b in buses if b.kind is BusKind.SLACK}
    if len(slack_setpoints) > 1:
        ids = [b.id for b in buses if b.kind is BusKind.SLACK]
        raise ModelError(
            f"cannot merge slack buses {ids} with different setpoints "
            f"{sorted(slack_setpoints)}")

    def total(field: str) -> float:
        return math.fsum(getattr(b, field) for b in buses)

    merged = Bus(
        id=min(b.id for b in buses), kind=lead.kind,
        pd=total("pd"), qd=total("qd"), pg=total("pg"), qg=total("qg"),
        gs=total("gs"), bs=total("bs"),
        vm_init=lead.vm_init, va_init=lead.va_init,
        vm_setpoint=lead.vm_setpoint,
    )
    return merged, lead.id


def contract_zero_impedance(case: NetworkCase,
                            z_threshold: float = Z_THRESHOLD_DEFAULT
                            ) -> tuple[NetworkCase, ContractionMap]:
    """Merge components of in-service branches with |r+jx| <= z_threshold."""
    if z_threshold < 0:
        raise ValueError(f"z_threshold must be >= 0, got {z_threshold}")

    n = case.n_buses
    pos = case.bus_index()
    dsu = _DisjointSet(n)
    contracted: list[int] = []
    for k, br in enumerate(case.branches):
        if br.status and br.z_magnitude <= z_threshold:
            dsu.union(pos[br.from_bus], pos[br.to_bus])
            contracted.append(k)

    groups: dict[int, list[int]] = {}
    for p in range(n):
        groups.setdefault(dsu.find(p), []).append(p)

    new_buses: list[Bus] = []
    provenance: dict[int, int] = {}
    rep: dict[int, int] = {}
    members: dict[int, tuple[int, ...]] = {}
    for root in sorted(groups):
        group = groups[root]
        bus, lead_id = _merge_bus(case, group)
        new_buses.append(bus)
        provenance[bus.id] = lead_id
        members[bus.id] = tuple(sorted(case.buses[p].id for p in group))
        for p in group:
            rep[case.buses[p].id] = bus.id

    new_branches: list[Branch] = []
    dropped: list[int] = []
    warnings: list[str] = []
    skip = set(contracted)
    for k, br in enumerate(case.branches):
        if k in skip:
            continue
        f, t = rep[br.from_bus], rep[br.to_bus]
        if f == t:
            dropped.append(k)
            warnings.append(
                f"branch {br.from_bus}-{br.to_bus} (|z| = {br.z_magnitude:.6g} "
                f"p.u.) collapsed into supernode {f} and was dropped")
            continue
        new_branches.append(replace(br, from_bus=f, to_bus=t))

    new_case = NetworkCase(name=case.name, base_mva=case.base_mva,
                           buses=tuple(new_buses),
                           branches=tuple(new_branches)).validate()
    cmap = ContractionMap(
        rep=rep, members=members,
        contracted_branches=tuple(contracted),
        dropped_branches=tuple(dropped),
        kind_provenance=provenance,
        warnings=tuple(warnings),
        original_ids=tuple(case.bus_ids()),
        supernode_ids=tuple(b.id for b in new_buses),
        z_threshold=z_threshold,
    )
    return new_case, cmap


def expand_state(solved: np.ndarray, cmap: ContractionMap) -> np.ndarray:
    """Copy each supernode voltage onto all of its member buses."""
    solved = np.asarray(solved)
    if solved.shape != (len(cmap.supernode_ids),):
        raise GraphStructureError(
            f"solved state has shape {solved.shape}, expected "
            f"({len(cmap.supernode_ids)},) covering every supernode")
    slot = {sid: k for k, sid in enumerate(cmap.supernode_ids)}
    out = np.empty(len(cmap.original_ids), dtype=solved.dtype)
    for k, bus_id in enumerate(cmap.original_ids):
        out[k] = solved[slot[cmap.rep[bus_id]]]
    return out


def conditioning_ratio(case: NetworkCase) -> float:
    """max|Y_ii| / min|Y_ii|, a cheap proxy for admittance conditioning."""
    mags = np.abs(build_ybus(case).graph.vertex_column("y_diag"))
    return float(mags.max() / mags.min())
