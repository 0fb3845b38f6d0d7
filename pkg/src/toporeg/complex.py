"""Simplicial complexes over data and lower-star filtrations of vertex functions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .graph import WeightedGraph

DEFAULT_SIMPLEX_BUDGET = 2_000_000


class SimplexBudgetError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Simplices grouped by dimension, each an ``(m_k, k+1)`` array of sorted vertex tuples.

    Rows within a dimension are in lexicographic order. Global simplex
    ids number dimension 0 first, then dimension 1, and so on, so the
    id order is the (dimension, lexicographic) order.
    """

    n_vertices: int
    simplices: tuple = field(repr=False)

    def __post_init__(self):
        cleaned = []
        for k, s in enumerate(self.simplices):
            s = np.asarray(s, dtype=np.int64).reshape(-1, k + 1)
            if s.shape[0]:
                s = np.sort(s, axis=1)
                s = np.unique(s, axis=0)
            cleaned.append(s)
        while len(cleaned) > 1 and cleaned[-1].shape[0] == 0:
            cleaned.pop()
        object.__setattr__(self, "simplices", tuple(cleaned))

    @property
    def dim(self) -> int:
        return len(self.simplices) - 1

    def count(self, k: int) -> int:
        return self.simplices[k].shape[0] if k < len(self.simplices) else 0

    @property
    def size(self) -> int:
        return sum(s.shape[0] for s in self.simplices)

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * s.shape[0] for k, s in enumerate(self.simplices))

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([s.shape[0] for s in self.simplices])]).astype(np.int64)

    @cached_property
    def dims(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.simplices)), [s.shape[0] for s in self.simplices]).astype(np.int64)

    def _codes(self, s: np.ndarray) -> np.ndarray:
        n = max(self.n_vertices, 1)
        code = np.zeros(s.shape[0], dtype=np.int64)
        for c in range(s.shape[1]):
            code = code * n + s[:, c]
        return code

    @cached_property
    def boundary(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR boundary: faces of simplex ``g`` are ``faces[indptr[g]:indptr[g+1]]`` (global ids)."""
        counts = np.concatenate([np.zeros(self.count(0), dtype=np.int64)] + [
            np.full(s.shape[0], k + 1, dtype=np.int64) for k, s in enumerate(self.simplices) if k > 0
        ])
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        faces = np.empty(indptr[-1], dtype=np.int64)
        for k in range(1, len(self.simplices)):
            s = self.simplices[k]
            if s.shape[0] == 0:
                continue
            lower_codes = self._codes(self.simplices[k - 1])
            block = np.empty((s.shape[0], k + 1), dtype=np.int64)
            for drop in range(k + 1):
                face = np.delete(s, drop, axis=1)
                loc = np.searchsorted(lower_codes, self._codes(face))
                if np.any(loc >= lower_codes.size) or np.any(lower_codes[np.minimum(loc, lower_codes.size - 1)] != self._codes(face)):
                    raise ValueError(f"complex is not closed under faces in dimension {k}")
                block[:, drop] = loc + self.offsets[k - 1]
            start = indptr[self.offsets[k]]
            faces[start:start + block.size] = np.sort(block, axis=1).ravel()
        return indptr, faces

    def check_closed(self) -> None:
        self.boundary  # raises on a missing face

    def simplex(self, g: int) -> tuple:
        k = int(self.dims[g])
        return tuple(int(v) for v in self.simplices[k][g - self.offsets[k]])


def flag_complex(graph: WeightedGraph, max_dim: int = 2, budget: int = DEFAULT_SIMPLEX_BUDGET) -> SimplicialComplex:
    """Clique complex of ``graph`` truncated at ``max_dim``."""
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    n = graph.n
    higher = [set() for _ in range(n)]
    for a, b in graph.edges:
        higher[int(a)].add(int(b))
    layers = [np.arange(n).reshape(-1, 1), graph.edges.copy()]
    total = n + graph.m
    current = [tuple(int(v) for v in e) for e in graph.edges]
    for k in range(2, max_dim + 1):
        nxt = []
        for clique in current:
            common = higher[clique[0]].intersection(*(higher[v] for v in clique[1:]))
            for v in common:
                nxt.append(clique + (v,))
            if total + len(nxt) > budget:
                raise SimplexBudgetError(f"flag complex exceeds the budget of {budget} simplices")
        total += len(nxt)
        if not nxt:
            break
        layers.append(np.array(nxt, dtype=np.int64))
        current = nxt
    return SimplicialComplex(n, tuple(layers))


def grid_complex(N: int, M: int, periodic: bool = False) -> SimplicialComplex:
    """Triangulated N x M lattice; each square split along its (i,j)-(i+1,j+1) diagonal.

    Vertex ``(i, j)`` has index ``i * M + j``.
    """
    if periodic and (N < 3 or M < 3):
        raise ValueError("periodic grids need N, M >= 3")
    if N < 1 or M < 1:
        raise ValueError("grid dimensions must be positive")
    idx = lambda i, j: (i % N) * M + (j % M)
    ci, cj = np.meshgrid(np.arange(N if periodic else N - 1), np.arange(M if periodic else M - 1), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    a, b, c, d = idx(ci, cj), idx(ci + 1, cj), idx(ci, cj + 1), idx(ci + 1, cj + 1)
    tris = np.vstack([np.column_stack([a, b, d]), np.column_stack([a, c, d])])
    edges = [np.column_stack([a, b]), np.column_stack([a, c]), np.column_stack([a, d]),
             np.column_stack([b, d]), np.column_stack([c, d])]
    # degenerate strips (a single row or column) still carry their edges
    i, j = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    i, j = i.ravel(), j.ravel()
    if not periodic:
        ok = i + 1 < N
        edges.append(np.column_stack([idx(i[ok], j[ok]), idx(i[ok] + 1, j[ok])]))
        ok = j + 1 < M
        edges.append(np.column_stack([idx(i[ok], j[ok]), idx(i[ok], j[ok] + 1)]))
    layers = [np.arange(N * M).reshape(-1, 1), np.vstack(edges)]
    if tris.shape[0]:
        layers.append(tris)
    return SimplicialComplex(N * M, tuple(layers))


def cycle_complex(n: int) -> SimplicialComplex:
    """The n-cycle as a 1-dimensional complex."""
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    e = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    return SimplicialComplex(n, (np.arange(n).reshape(-1, 1), e))


def skeleton_graph(cx: SimplicialComplex) -> WeightedGraph:
    return WeightedGraph(cx.n_vertices, cx.simplices[1], np.ones(cx.count(1)), "grid")


@dataclass(frozen=True, eq=False)
class Filtration:
    """Lower-star filtration: values, total order and the vertex attaining each value."""

    complex: SimplicialComplex
    f: np.ndarray  # vertex values
    values: np.ndarray  # per global simplex id
    order: np.ndarray  # global ids in filtration order
    apex: np.ndarray  # vertex attaining each simplex's value

    @cached_property
    def position(self) -> np.ndarray:
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos

    def is_monotone(self) -> bool:
        indptr, faces = self.complex.boundary
        owner = np.repeat(np.arange(self.values.size), np.diff(indptr))
        return bool(np.all(self.values[faces] <= self.values[owner]))

    def faces_precede(self) -> bool:
        indptr, faces = self.complex.boundary
        owner = np.repeat(np.arange(self.values.size), np.diff(indptr))
        return bool(np.all(self.position[faces] < self.position[owner]))


def lower_star(cx: SimplicialComplex, f) -> Filtration:
    """Each simplex enters at the max of ``f`` over its vertices.

    Order key is ``(value, dimension, lexicographic tuple)``. The apex of
    a simplex is the vertex of largest ``(f, index)``, so ties resolve
    the same way as the vertex order.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != cx.n_vertices:
        raise ValueError(f"expected {cx.n_vertices} vertex values, got {f.size}")
    if not np.all(np.isfinite(f)):
        raise ValueError("vertex values must be finite")
    values = np.empty(cx.size)
    apex = np.empty(cx.size, dtype=np.int64)
    for k, s in enumerate(cx.simplices):
        lo, hi = cx.offsets[k], cx.offsets[k + 1]
        if hi == lo:
            continue
        rev = s[:, ::-1]
        j = np.argmax(f[rev], axis=1)
        top = rev[np.arange(rev.shape[0]), j]
        apex[lo:hi] = top
        values[lo:hi] = f[top]
    order = np.argsort(values, kind="stable")
    return Filtration(cx, f, values, order, apex)


def write_filtration(filt: Filtration, path) -> Path:
    path = Path(path)
    cx = filt.complex
    with path.open("w") as fh:
        for g in filt.order:
            verts = " ".join(str(v) for v in cx.simplex(int(g)))
            fh.write(f"{cx.dims[g]} {verts} {filt.values[g]:.17g}\n")
    return path
