"""Persistence diagrams of lower-star filtrations, total persistence and its gradient.

Reduction is the standard column algorithm over Z/2 with clearing,
compiled with numba. Zero-length finite pairs are dropped; essential
classes are kept and clipped at the maximum of the function.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .complex import Filtration, SimplicialComplex, lower_star
from .unionfind import UnionFind

WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class PersistencePair:
    dim: int
    birth: float
    death: float
    birth_vertex: int
    death_vertex: int
    essential: bool

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """Column arrays, one entry per pair. Essential deaths are ``max_value``."""

    dim: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    birth_vertex: np.ndarray
    death_vertex: np.ndarray
    essential: np.ndarray
    max_value: float
    max_dim: int

    def __len__(self) -> int:
        return self.dim.size

    @property
    def pairs(self) -> list[PersistencePair]:
        return [
            PersistencePair(int(d), float(b), float(e), int(bv), int(dv), bool(ess))
            for d, b, e, bv, dv, ess in zip(
                self.dim, self.birth, self.death, self.birth_vertex, self.death_vertex, self.essential
            )
        ]

    @property
    def persistence(self) -> np.ndarray:
        return self.death - self.birth

    @property
    def betti(self) -> np.ndarray:
        return np.bincount(self.dim[self.essential], minlength=self.max_dim + 1)

    @property
    def zeta(self) -> int:
        return int(self.essential.sum())

    @property
    def nu(self) -> int:
        """Number of finite (non-essential, positive-length) pairs."""
        return int((~self.essential).sum())

    def select(self, dims: Optional[Iterable[int]] = None) -> "PersistenceDiagram":
        if dims is None:
            return self
        keep = np.isin(self.dim, list(dims))
        return PersistenceDiagram(
            self.dim[keep], self.birth[keep], self.death[keep], self.birth_vertex[keep],
            self.death_vertex[keep], self.essential[keep], self.max_value, self.max_dim,
        )

    def points(self, dim: int) -> np.ndarray:
        keep = self.dim == dim
        return np.column_stack([self.birth[keep], self.death[keep]])


# --- reduction kernel ---------------------------------------------------------

@njit(cache=True, nogil=True)
def _symdiff(a, na, b, nb, out):
    i = 0
    j = 0
    k = 0
    while i < na and j < nb:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif a[i] > b[j]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < na:
        out[k] = a[i]
        i += 1
        k += 1
    while j < nb:
        out[k] = b[j]
        j += 1
        k += 1
    return k


@njit(cache=True, nogil=True)
def _reduce_kernel(order, pos, dims, indptr, faces, top_dim):
    m = order.shape[0]
    owner = np.full(m, -1, np.int64)
    col_start = np.zeros(m, np.int64)
    col_len = np.zeros(m, np.int64)
    cleared = np.zeros(m, np.bool_)
    positive = np.zeros(m, np.bool_)
    cap = 4 * m + 16
    buf = np.empty(cap, np.int64)
    used = 0
    work = np.empty(m + 1, np.int64)
    tmp = np.empty(m + 1, np.int64)
    births = np.empty(m, np.int64)
    deaths = np.empty(m, np.int64)
    npairs = 0
    for d in range(top_dim, 0, -1):
        for p in range(m):
            s = order[p]
            if dims[s] != d or cleared[p]:
                continue
            n = indptr[s + 1] - indptr[s]
            for t in range(n):
                work[t] = pos[faces[indptr[s] + t]]
            work[:n].sort()
            low = -1
            while n > 0:
                low = work[n - 1]
                q = owner[low]
                if q < 0:
                    break
                n = _symdiff(work, n, buf[col_start[q]:], col_len[q], tmp)
                work, tmp = tmp, work
            if n == 0:
                positive[p] = True
                continue
            if used + n > cap:
                cap = 2 * (used + n)
                grown = np.empty(cap, np.int64)
                grown[:used] = buf[:used]
                buf = grown
            buf[used:used + n] = work[:n]
            col_start[p] = used
            col_len[p] = n
            used += n
            owner[low] = p
            cleared[low] = True
            births[npairs] = low
            deaths[npairs] = p
            npairs += 1
    for p in range(m):
        if dims[order[p]] == 0:
            positive[p] = True
    return births[:npairs], deaths[:npairs], positive & ~cleared


def _max_vertex(f: np.ndarray) -> int:
    # largest (value, index)
    return int(f.size - 1 - np.argmax(f[::-1]))


def _assemble(dim, birth, death, bv, dv, ess, max_value, max_dim) -> PersistenceDiagram:
    order = np.lexsort((dv, bv, death, birth, ess, dim)) if len(dim) else np.arange(0)
    return PersistenceDiagram(
        np.asarray(dim, dtype=np.int64)[order],
        np.asarray(birth, dtype=float)[order],
        np.asarray(death, dtype=float)[order],
        np.asarray(bv, dtype=np.int64)[order],
        np.asarray(dv, dtype=np.int64)[order],
        np.asarray(ess, dtype=bool)[order],
        float(max_value),
        int(max_dim),
    )


def reduce(filtration: Filtration, max_hom_dim: Optional[int] = None) -> PersistenceDiagram:
    """Persistence diagram in dimensions ``0..max_hom_dim`` by boundary-matrix reduction.

    ``max_hom_dim`` defaults to ``K - 1`` for a K-dimensional complex
    (at least 0); ``max_hom_dim == K`` is allowed and reports the
    top-dimensional classes, which are all essential.
    """
    cx = filtration.complex
    K = cx.dim
    if max_hom_dim is None:
        max_hom_dim = max(K - 1, 0)
    if not 0 <= max_hom_dim <= K:
        raise ValueError(f"max_hom_dim must lie in [0, {K}]")
    top = min(max_hom_dim + 1, K)
    indptr, faces = cx.boundary
    births, deaths, essential = _reduce_kernel(
        filtration.order, filtration.position, cx.dims, indptr, faces, top
    )
    order, values, apex = filtration.order, filtration.values, filtration.apex
    b_ids, d_ids = order[births], order[deaths]
    bval, dval = values[b_ids], values[d_ids]
    keep = dval > bval
    b_ids, d_ids = b_ids[keep], d_ids[keep]

    e_ids = order[np.flatnonzero(essential)]
    e_ids = e_ids[cx.dims[e_ids] <= max_hom_dim]
    fmax = float(filtration.f.max()) if filtration.f.size else 0.0
    top_vertex = _max_vertex(filtration.f) if filtration.f.size else -1

    return _assemble(
        np.concatenate([cx.dims[b_ids], cx.dims[e_ids]]),
        np.concatenate([values[b_ids], values[e_ids]]),
        np.concatenate([values[d_ids], np.full(e_ids.size, fmax)]),
        np.concatenate([apex[b_ids], apex[e_ids]]),
        np.concatenate([apex[d_ids], np.full(e_ids.size, top_vertex, dtype=np.int64)]),
        np.concatenate([np.zeros(b_ids.size, bool), np.ones(e_ids.size, bool)]),
        fmax,
        max_hom_dim,
    )


def h0_union_find(filtration: Filtration) -> PersistenceDiagram:
    """Dimension-0 diagram by the elder rule.

    Components are ranked by their position in the filtration; when two
    merge, the later-born one dies at the merging edge.
    """
    cx = filtration.complex
    n = cx.n_vertices
    pos = filtration.position
    uf = UnionFind(n)
    oldest = list(range(n))  # root -> oldest vertex of the component
    dim, birth, death, bv, dv, ess = [], [], [], [], [], []
    values, apex, f = filtration.values, filtration.apex, filtration.f
    edge_lo, edge_hi = cx.offsets[1], cx.offsets[2] if cx.dim >= 1 else cx.offsets[1]
    edges = cx.simplices[1] if cx.dim >= 1 else np.empty((0, 2), dtype=np.int64)
    for g in filtration.order:
        if not edge_lo <= g < edge_hi:
            continue
        a, b = edges[g - edge_lo]
        ra, rb = uf.find(int(a)), uf.find(int(b))
        if ra == rb:
            continue
        oa, ob = oldest[ra], oldest[rb]
        young, old = (oa, ob) if pos[oa] > pos[ob] else (ob, oa)
        uf.union(ra, rb)
        oldest[uf.find(ra)] = old
        if values[g] > f[young]:
            dim.append(0)
            birth.append(f[young])
            death.append(values[g])
            bv.append(young)
            dv.append(int(apex[g]))
            ess.append(False)
    fmax = float(f.max()) if n else 0.0
    top_vertex = _max_vertex(f) if n else -1
    roots = sorted({uf.find(v) for v in range(n)}, key=lambda r: pos[oldest[r]])
    for r in roots:
        o = oldest[r]
        dim.append(0)
        birth.append(f[o])
        death.append(fmax)
        bv.append(o)
        dv.append(top_vertex)
        ess.append(True)
    return _assemble(dim, birth, death, bv, dv, ess, fmax, 0)


def diagram(cx: SimplicialComplex, f, max_hom_dim: Optional[int] = None) -> PersistenceDiagram:
    return reduce(lower_star(cx, f), max_hom_dim)


def total_persistence(dgm: PersistenceDiagram, dims: Optional[Iterable[int]] = None) -> float:
    """Sum of ``death - birth`` over the selected dimensions (essential bars clipped)."""
    if dims is not None:
        dims = list(dims)
        bad = [d for d in dims if d > dgm.max_dim]
        if bad:
            raise ValueError(f"dimensions {bad} were not computed (max {dgm.max_dim})")
    sel = dgm.select(dims)
    return float(np.sum(sel.death - sel.birth))


def persistence_gradient(dgm: PersistenceDiagram, n: int, dims: Optional[Iterable[int]] = None) -> np.ndarray:
    """Subgradient of total persistence in the vertex values: +1 at deaths, -1 at births."""
    sel = dgm.select(dims)
    g = np.zeros(n)
    np.add.at(g, sel.death_vertex, 1.0)
    np.add.at(g, sel.birth_vertex, -1.0)
    return g


def floor_weights(weights, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Replace weights below ``floor`` by the smallest weight >= floor (or by ``floor``)."""
    w = np.asarray(weights, dtype=float).copy()
    small = w < floor
    if small.any():
        ok = w[~small]
        w[small] = ok.min() if ok.size else floor
    return w


def eigenvector_persistence(
    vectors: np.ndarray,
    cx: SimplicialComplex,
    dims: Optional[Iterable[int]] = None,
    workers: int = 1,
    floor: bool = True,
) -> np.ndarray:
    """Total persistence of each column's lower-star filtration on ``cx``.

    ``vectors`` is an ``(n, p)`` array, typically ``EigenBasis.vectors``.
    """
    V = np.asarray(vectors, dtype=float)
    dims = None if dims is None else sorted(set(dims))
    max_hom = max(dims) if dims else max(cx.dim - 1, 0)
    cx.boundary  # build shared arrays before threads start

    def one(j):
        return total_persistence(diagram(cx, V[:, j], max_hom), dims)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = np.array(list(pool.map(one, range(V.shape[1]))))
    else:
        out = np.array([one(j) for j in range(V.shape[1])])
    return floor_weights(out) if floor else out


def write_diagram_csv(dgm: PersistenceDiagram, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim", "birth", "death", "birth_vertex", "death_vertex", "essential"])
        for p in dgm.pairs:
            w.writerow([p.dim, f"{p.birth:.17g}", f"{p.death:.17g}", p.birth_vertex, p.death_vertex, int(p.essential)])
    return path


def read_diagram_csv(path, max_value: Optional[float] = None) -> PersistenceDiagram:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k, t: np.array([t(r[k]) for r in rows])
    dims = col("dim", int) if rows else np.zeros(0, np.int64)
    deaths = col("death", float) if rows else np.zeros(0)
    return PersistenceDiagram(
        dims, col("birth", float) if rows else np.zeros(0), deaths,
        col("birth_vertex", int) if rows else np.zeros(0, np.int64),
        col("death_vertex", int) if rows else np.zeros(0, np.int64),
        col("essential", lambda s: bool(int(s))) if rows else np.zeros(0, bool),
        float(max_value if max_value is not None else (deaths.max() if deaths.size else 0.0)),
        int(dims.max()) if dims.size else 0,
    )
