"""Proximity graphs on point clouds and their Laplacians."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .unionfind import UnionFind

GRAPH_KINDS = ("knn", "gaussian", "grid")


class IsolatedVertexError(ValueError):
    """Raised when a normalized Laplacian is requested for a graph with a degree-0 vertex."""

    def __init__(self, vertex: int):
        super().__init__(f"vertex {vertex} has degree 0; normalized Laplacian undefined")
        self.vertex = vertex


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected graph stored as an edge list with ``i < j`` and ``w > 0``."""

    n: int
    edges: np.ndarray  # (m, 2) int64
    weights: np.ndarray  # (m,) float
    kind: str = "knn"

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if edges.shape[0] != weights.shape[0]:
            raise ValueError("edges and weights differ in length")
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            codes = edges[:, 0] * self.n + edges[:, 1]
            if np.unique(codes).size != codes.size:
                raise ValueError("duplicate edges")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        W = sp.coo_matrix(
            (np.concatenate([self.weights, self.weights]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )
        return W.tocsr()

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n)
        np.add.at(deg, self.edges[:, 0], self.weights)
        np.add.at(deg, self.edges[:, 1], self.weights)
        return deg

    def neighbor_counts(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)


def _from_pairs(n: int, pairs: np.ndarray, weights: np.ndarray, kind: str) -> WeightedGraph:
    pairs = np.sort(pairs, axis=1)
    codes = pairs[:, 0] * n + pairs[:, 1]
    codes, first = np.unique(codes, return_index=True)
    return WeightedGraph(n, np.column_stack([codes // n, codes % n]), weights[first], kind)


def default_k(n: int) -> int:
    return max(3, int(round(math.log(max(n, 1)))))


def knn_graph(points, k: int | None = None, chunk: int = 1024) -> WeightedGraph:
    """Union-symmetrized k-nearest-neighbour graph with unit weights.

    Distance ties are broken by the smaller vertex index.
    """
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("cannot build a graph on zero points")
    if k is None:
        k = min(default_k(n), n - 1)
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")
    nbrs = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d = cdist(pts[start:stop], pts, "sqeuclidean")
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        nbrs[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    pairs = np.column_stack([rows, nbrs.ravel()])
    return _from_pairs(n, pairs, np.ones(pairs.shape[0]), "knn")


def gaussian_weight(sqdist, t: float, d: int, n: int):
    return (1.0 / n) / (t * (4.0 * np.pi * t) ** (d / 2.0)) * np.exp(-np.asarray(sqdist) / (4.0 * t))


def gaussian_graph(points, t: float, d: int, cutoff: float | None = None) -> WeightedGraph:
    """Heat-kernel weights ``(1/n) (t (4 pi t)^(d/2))^-1 exp(-|xi - xj|^2 / 4t)``.

    Pairs farther than ``cutoff`` are dropped, as are pairs whose weight
    underflows to zero.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("cannot build a graph on zero points")
    iu, ju = np.triu_indices(n, k=1)
    sq = cdist(pts, pts, "sqeuclidean")[iu, ju]
    keep = np.ones(sq.shape, dtype=bool)
    if cutoff is not None:
        keep &= sq <= cutoff**2
    w = gaussian_weight(sq, t, d, n)
    keep &= w > 0
    return WeightedGraph(n, np.column_stack([iu[keep], ju[keep]]), w[keep], "gaussian")


def grid_graph(N: int, M: int, periodic: bool = True, weight: float = 1.0, diagonals: bool = False) -> WeightedGraph:
    """4-neighbour lattice graph (optionally with the ``(i,j)-(i+1,j+1)`` diagonal).

    Vertex ``(i, j)`` has index ``i * M + j``.
    """
    i, j = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    i, j = i.ravel(), j.ravel()
    steps = [(1, 0), (0, 1)] + ([(1, 1)] if diagonals else [])
    pairs = []
    for di, dj in steps:
        ii, jj = i + di, j + dj
        if periodic:
            ok = np.ones(ii.shape, dtype=bool)
            ii, jj = ii % N, jj % M
        else:
            ok = (ii < N) & (jj < M)
        pairs.append(np.column_stack([i[ok] * M + j[ok], ii[ok] * M + jj[ok]]))
    pairs = np.vstack(pairs)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return _from_pairs(N * M, pairs, np.full(pairs.shape[0], float(weight)), "grid")


@dataclass(frozen=True, eq=False)
class LaplacianMatrix:
    matrix: sp.csr_matrix
    normalized: bool
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def laplacian(graph: WeightedGraph, normalized: bool = True) -> LaplacianMatrix:
    """``L = D - W``, or ``D^-1/2 L D^-1/2`` when ``normalized``."""
    W = graph.adjacency()
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = (sp.diags(deg) - W).tocsr()
    if normalized:
        zero = np.flatnonzero(deg <= 0)
        if zero.size:
            raise IsolatedVertexError(int(zero[0]))
        s = sp.diags(1.0 / np.sqrt(deg))
        L = (s @ L @ s).tocsr()
        L = ((L + L.T) * 0.5).tocsr()
    return LaplacianMatrix(L, normalized, deg)


def total_variation(graph: WeightedGraph, values) -> float:
    """Weighted graph total variation ``sum_(i,j,w) w |f_i - f_j|``."""
    f = np.asarray(values, dtype=float)
    e = graph.edges
    return float(np.sum(graph.weights * np.abs(f[e[:, 0]] - f[e[:, 1]])))


def connected_components(graph: WeightedGraph) -> int:
    uf = UnionFind(graph.n)
    for a, b in graph.edges:
        uf.union(int(a), int(b))
    return uf.count()


def write_edgelist(graph: WeightedGraph, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# n={graph.n} kind={graph.kind}\n")
        for (a, b), w in zip(graph.edges, graph.weights):
            fh.write(f"{a} {b} {w:.17g}\n")
    return path


def read_edgelist(path) -> WeightedGraph:
    lines = Path(path).read_text().splitlines()
    header = dict(tok.split("=", 1) for tok in lines[0].lstrip("#").split())
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    edges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    weights = np.array([float(r[2]) for r in rows])
    return WeightedGraph(int(header["n"]), edges, weights, header["kind"])
