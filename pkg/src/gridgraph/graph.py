"""In-memory undirected property graph with CSR adjacency.

Vertices and edges carry named attribute columns (one contiguous array per
attribute). Adjacency is stored as half-edges: every edge appears once per
endpoint, sorted by (owner, neighbor, edge id), which fixes the reduction
order all engine backends follow. Structure is immutable after construction;
attribute columns may be added or overwritten between supersteps.

Self-loops are rejected: per-vertex quantities belong in vertex attributes.
Parallel edges are allowed and keep distinct ids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphStructureError


def _column(values, n: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise GraphStructureError(
            f"{what} column has shape {arr.shape}, expected ({n},)")
    if arr.dtype.kind == "b":
        return arr.astype(np.bool_)
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64)
    if arr.dtype.kind == "f":
        return arr.astype(np.float64)
    if arr.dtype.kind == "c":
        return arr.astype(np.complex128)
    raise GraphStructureError(f"{what} column has unsupported dtype {arr.dtype}")


@dataclass(frozen=True)
class GatherPlan:
    """Precomputed view of the half-edges owned by an active vertex set.

    vertices — active vertex ids, ascending
    indptr   — per-active-vertex segment bounds into the selected half-edges
    hidx     — selected half-edge positions (into the graph's half arrays)
    owner_slot — per selected half-edge, its owner's index within `vertices`
    nbr, owner — per selected half-edge, the neighbor / owner vertex id
    """
    vertices: np.ndarray
    indptr: np.ndarray
    hidx: np.ndarray
    owner_slot: np.ndarray
    nbr: np.ndarray
    owner: np.ndarray

    @property
    def n_active(self) -> int:
        return int(self.vertices.size)


class PropertyGraph:
    """Undirected multigraph; see module docstring for storage layout."""

    def __init__(self, n_vertices: int, edge_from: np.ndarray, edge_to: np.ndarray):
        self.n_vertices = int(n_vertices)
        self.edge_from = edge_from
        self.edge_to = edge_to
        self.vertex: dict[str, np.ndarray] = {}
        self.edge: dict[str, np.ndarray] = {}
        self.half: dict[str, np.ndarray] = {}
        self._plans: dict[bytes | None, GatherPlan] = {}

        owners = np.concatenate([edge_from, edge_to])
        nbrs = np.concatenate([edge_to, edge_from])
        eids = np.concatenate([np.arange(self.n_edges, dtype=np.int64)] * 2) \
            if self.n_edges else np.empty(0, dtype=np.int64)
        fwd = np.concatenate([np.ones(self.n_edges, dtype=np.bool_),
                              np.zeros(self.n_edges, dtype=np.bool_)])
        order = np.lexsort((eids, nbrs, owners))
        self.he_nbr = nbrs[order]
        self.he_edge = eids[order]
        self.he_fwd = fwd[order]
        counts = np.bincount(owners, minlength=self.n_vertices)
        self.indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])

    @property
    def n_edges(self) -> int:
        return int(self.edge_from.size)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self, i: int) -> list[tuple[int, int]]:
        """(edge id, neighbor id) pairs incident to vertex i, in storage order."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(e), int(v)) for e, v in zip(self.he_edge[lo:hi], self.he_nbr[lo:hi])]

    # -- attribute columns ------------------------------------------------

    def set_vertex(self, name: str, values) -> np.ndarray:
        col = _column(values, self.n_vertices, f"vertex attribute {name!r}")
        self.vertex[name] = col
        return col

    def set_edge(self, name: str, values) -> np.ndarray:
        col = _column(values, self.n_edges, f"edge attribute {name!r}")
        self.edge[name] = col
        return col

    def set_half(self, name: str, forward_values, reverse_values=None) -> np.ndarray:
        """Materialize a per-half-edge column from per-edge values.

        forward_values applies when the owning endpoint is the edge's `from`
        end, reverse_values when it is the `to` end (defaults to forward,
        i.e. a symmetric quantity).
        """
        fv = _column(forward_values, self.n_edges, f"half attribute {name!r}")
        rv = fv if reverse_values is None else _column(
            reverse_values, self.n_edges, f"half attribute {name!r}")
        col = np.where(self.he_fwd, fv[self.he_edge], rv[self.he_edge])
        self.half[name] = col
        return col

    def vertex_column(self, name: str) -> np.ndarray:
        try:
            return self.vertex[name]
        except KeyError:
            raise GraphStructureError(
                f"vertex attribute {name!r} is not declared "
                f"(declared: {sorted(self.vertex)})") from None

    def half_column(self, name: str) -> np.ndarray:
        try:
            return self.half[name]
        except KeyError:
            raise GraphStructureError(
                f"half-edge attribute {name!r} is not declared "
                f"(declared: {sorted(self.half)})") from None

    # -- gather plans ------------------------------------------------------

    def gather_plan(self, active: np.ndarray | None = None) -> GatherPlan:
        """Plan for the half-edges owned by `active` vertices (None = all).

        Plans are cached per active mask; structure immutability makes the
        cache safe for the lifetime of the graph.
        """
        key = None if active is None else np.asarray(active, dtype=np.bool_).tobytes()
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        if active is None:
            verts = np.arange(self.n_vertices, dtype=np.int64)
        else:
            mask = np.asarray(active, dtype=np.bool_)
            if mask.shape != (self.n_vertices,):
                raise GraphStructureError(
                    f"active mask has shape {mask.shape}, expected ({self.n_vertices},)")
            verts = np.flatnonzero(mask).astype(np.int64)
        starts = self.indptr[verts]
        cnt = self.indptr[verts + 1] - starts
        indptr = np.zeros(verts.size + 1, dtype=np.int64)
        np.cumsum(cnt, out=indptr[1:])
        total = int(indptr[-1])
        offsets = np.arange(total, dtype=np.int64) - np.repeat(indptr[:-1], cnt)
        hidx = np.repeat(starts, cnt) + offsets
        owner_slot = np.repeat(np.arange(verts.size, dtype=np.intp), cnt)
        plan = GatherPlan(verts, indptr, hidx, owner_slot,
                          self.he_nbr[hidx], np.repeat(verts, cnt))
        self._plans[key] = plan
        return plan

    def __repr__(self) -> str:  # pragma: no cover
        return (f"PropertyGraph(vertices={self.n_vertices}, edges={self.n_edges}, "
                f"vertex_attrs={sorted(self.vertex)}, edge_attrs={sorted(self.edge)})")


def build_graph(vertex_count: int,
                edge_list: Sequence[tuple] | Iterable[tuple],
                vertex_attrs: Mapping[str, object] | None = None,
                edge_attrs: Mapping[str, object] | None = None) -> PropertyGraph:
    """Construct a PropertyGraph from (i, j) or (i, j, {attr: value}) tuples.

    Per-edge attribute mappings are merged into columns (missing keys fill
    with zero). vertex_attrs/edge_attrs provide whole columns directly.
    """
    if vertex_count < 0:
        raise GraphStructureError(f"vertex_count must be >= 0, got {vertex_count}")
    edges = list(edge_list)
    m = len(edges)
    efrom = np.empty(m, dtype=np.int64)
    eto = np.empty(m, dtype=np.int64)
    inline_attrs: dict[str, dict[int, object]] = {}
    for eid, item in enumerate(edges):
        if len(item) == 2:
            i, j = item
            attrs = None
        elif len(item) == 3:
            i, j, attrs = item
        else:
            raise GraphStructureError(
                f"edge {eid}: expected (i, j) or (i, j, attributes), got {item!r}")
        i, j = int(i), int(j)
        for end in (i, j):
            if not 0 <= end < vertex_count:
                raise GraphStructureError(
                    f"edge {eid} references vertex {end}, outside [0, {vertex_count})")
        if i == j:
            raise GraphStructureError(
                f"edge {eid} is a self-loop on vertex {i}; self terms live on vertices")
        efrom[eid], eto[eid] = i, j
        if attrs:
            for k, v in attrs.items():
                inline_attrs.setdefault(k, {})[eid] = v
    g = PropertyGraph(vertex_count, efrom, eto)
    for name, sparse in inline_attrs.items():
        proto = np.asarray(list(sparse.values()))
        col = np.zeros(m, dtype=proto.dtype)
        for eid, v in sparse.items():
            col[eid] = v
        g.set_edge(name, col)
    for name, col in (edge_attrs or {}).items():
        g.set_edge(name, col)
    for name, col in (vertex_attrs or {}).items():
        g.set_vertex(name, col)
    return g
