"""Low eigenpairs of the normalized graph Laplacian (the regression design)."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .graph import LaplacianMatrix, WeightedGraph

DENSE_LIMIT = 3000
BINARY_MAGIC = b"EIGBASIS"


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray  # (p,) nondecreasing
    vectors: np.ndarray  # (n, p), orthonormal columns
    persistence_weights: Optional[np.ndarray] = None
    tv_weights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def p(self) -> int:
        return self.vectors.shape[1]

    def subset(self, columns) -> "EigenBasis":
        columns = np.asarray(columns, dtype=np.int64)
        pick = lambda a: None if a is None else a[columns]
        return EigenBasis(
            self.eigenvalues[columns],
            self.vectors[:, columns],
            pick(self.persistence_weights),
            pick(self.tv_weights),
        )


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry of largest magnitude is positive."""
    V = np.array(vectors, dtype=float, copy=True)
    if V.size == 0:
        return V
    lead = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def eigenbasis(L: LaplacianMatrix, p: int, tol: float = 1e-7, maxiter: Optional[int] = None) -> EigenBasis:
    """Smallest ``p`` eigenpairs of ``L`` in ascending order.

    Dense LAPACK for n <= 3000, ARPACK Lanczos (shift 0 in
    ``which="SA"`` mode) above that. Raises :class:`EigenSolverError`
    when the residual check fails.
    """
    n = L.n
    if not 1 <= p <= n:
        raise ValueError(f"p must satisfy 1 <= p <= n (p={p}, n={n})")
    if n <= DENSE_LIMIT:
        A = L.dense()
        A = 0.5 * (A + A.T)
        if p == n:
            lam, V = la.eigh(A, driver="evd")
        else:
            lam, V = la.eigh(A, subset_by_index=[0, p - 1], driver="evr")
    else:
        try:
            lam, V = spla.eigsh(L.matrix, k=p, which="SA", tol=1e-12, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise EigenSolverError(
                f"Lanczos did not converge: {len(exc.eigenvalues)} of {p} eigenpairs found"
            ) from exc
        idx = np.argsort(lam, kind="stable")
        lam, V = lam[idx], V[:, idx]
    V = fix_signs(V)
    resid = np.linalg.norm(L.matrix @ V - V * lam, axis=0)
    worst = float(resid.max()) if resid.size else 0.0
    if worst > tol:
        raise EigenSolverError(f"eigen residual {worst:.3e} exceeds {tol:.1e}")
    return EigenBasis(np.asarray(lam, dtype=float), V)


def eigenvector_tv(basis: EigenBasis, graph: WeightedGraph) -> np.ndarray:
    """Graph total variation of every column of the basis."""
    if basis.n != graph.n:
        raise ValueError("basis and graph have different vertex counts")
    e = graph.edges
    diff = np.abs(basis.vectors[e[:, 0], :] - basis.vectors[e[:, 1], :])
    return graph.weights @ diff


def write_basis_csv(basis: EigenBasis, path) -> Path:
    """One row per eigenvector: ``j, lambda_j, phi_j_0 .. phi_j_{n-1}``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "lambda_j"] + [f"phi_j_{i}" for i in range(basis.n)])
        for j in range(basis.p):
            w.writerow([j, f"{basis.eigenvalues[j]:.17g}"] + [f"{v:.17g}" for v in basis.vectors[:, j]])
    return path


def read_basis_csv(path) -> EigenBasis:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))[1:]
    lam = np.array([float(r[1]) for r in rows])
    V = np.array([[float(v) for v in r[2:]] for r in rows]).T
    return EigenBasis(lam, V)


def write_basis_binary(basis: EigenBasis, path) -> Path:
    """16-byte header (8-byte magic, uint32 n, uint32 p), eigenvalues, column-major vectors."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(struct.pack("<8sII", BINARY_MAGIC, basis.n, basis.p))
        fh.write(np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.asfortranarray(basis.vectors, dtype="<f8").tobytes(order="F"))
    return path


def read_basis_binary(path) -> EigenBasis:
    raw = Path(path).read_bytes()
    magic, n, p = struct.unpack("<8sII", raw[:16])
    if magic != BINARY_MAGIC:
        raise ValueError("not an eigenbasis dump")
    lam = np.frombuffer(raw, dtype="<f8", count=p, offset=16).copy()
    V = np.frombuffer(raw, dtype="<f8", count=n * p, offset=16 + 8 * p).reshape((n, p), order="F").copy()
    return EigenBasis(lam, V)
