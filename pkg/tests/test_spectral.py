import numpy as np
import pytest

from toporeg import spectral
from toporeg.graph import WeightedGraph, grid_graph, knn_graph, laplacian


def cycle_graph(n):
    e = np.sort(np.column_stack([np.arange(n), (np.arange(n) + 1) % n]), axis=1)
    return WeightedGraph(n, e, np.ones(n), "grid")


def check_basis(basis, L, tol=1e-8):
    V = basis.vectors
    assert np.abs(V.T @ V - np.eye(basis.p)).max() <= tol
    resid = np.linalg.norm(L.matrix @ V - V * basis.eigenvalues, axis=0)
    assert resid.max() <= 1e-7
    assert np.all(np.diff(basis.eigenvalues) >= -1e-12)
    # Rayleigh quotients
    rq = np.einsum("ij,ij->j", V, L.matrix @ V)
    assert np.allclose(rq, basis.eigenvalues, atol=1e-8)
    lead = np.argmax(np.abs(V), axis=0)
    assert np.all(V[lead, np.arange(basis.p)] > 0)


def test_cycle_four_spectrum():
    L = laplacian(cycle_graph(4))
    b = spectral.eigenbasis(L, 4)
    analytic = np.sort(1 - np.cos(2 * np.pi * np.arange(4) / 4))
    assert np.allclose(b.eigenvalues, analytic, atol=1e-12)
    assert np.allclose(b.eigenvalues, [0, 1, 1, 2], atol=1e-12)


def test_first_vector_and_trace(rng):
    g = knn_graph(rng.normal(size=(80, 3)), k=5)
    L = laplacian(g)
    full = spectral.eigenbasis(L, 80)
    check_basis(full, L)
    assert full.eigenvalues[0] <= 1e-8
    v = np.sqrt(L.degrees)
    v /= np.linalg.norm(v)
    assert abs(abs(full.vectors[:, 0] @ v) - 1) <= 1e-8
    assert full.eigenvalues.sum() == pytest.approx(L.matrix.diagonal().sum(), abs=1e-8)
    part = spectral.eigenbasis(L, 10)
    check_basis(part, L)
    assert np.allclose(part.eigenvalues, full.eigenvalues[:10], atol=1e-10)


def test_p_bounds():
    L = laplacian(cycle_graph(5))
    for p in (0, 6):
        with pytest.raises(ValueError):
            spectral.eigenbasis(L, p)


def test_sparse_solver_path(monkeypatch, rng):
    g = knn_graph(rng.normal(size=(200, 2)), k=6)
    L = laplacian(g)
    dense = spectral.eigenbasis(L, 6)
    monkeypatch.setattr(spectral, "DENSE_LIMIT", 50)
    sparse = spectral.eigenbasis(L, 6)
    check_basis(sparse, L)
    assert np.allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-9)


def test_solver_failure_is_reported(monkeypatch, rng):
    L = laplacian(knn_graph(rng.normal(size=(120, 2)), k=5))
    monkeypatch.setattr(spectral, "DENSE_LIMIT", 10)
    with pytest.raises(spectral.EigenSolverError):
        spectral.eigenbasis(L, 20, maxiter=2)


def test_periodic_grid_degeneracy():
    L = laplacian(grid_graph(12, 12, periodic=True))
    b = spectral.eigenbasis(L, 6)
    lam = b.eigenvalues
    assert abs(lam[1] - lam[2]) <= 1e-6 * lam[1]
    assert abs(lam[3] - lam[4]) <= 1e-6 * lam[3]


def test_eigenvector_tv():
    g = WeightedGraph(2, [[0, 1]], [1.0], "grid")
    b = spectral.EigenBasis(np.array([0.0, 2.0]), np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    tv = spectral.eigenvector_tv(b, g)
    assert tv[0] == pytest.approx(0.0, abs=1e-15)
    assert tv[1] == pytest.approx(np.sqrt(2))


def test_eigenvector_tv_edge_order(rng):
    g = knn_graph(rng.normal(size=(40, 2)), k=4)
    b = spectral.eigenbasis(laplacian(g), 8)
    perm = rng.permutation(g.m)
    shuffled = WeightedGraph(g.n, g.edges[perm], g.weights[perm], g.kind)
    assert np.allclose(spectral.eigenvector_tv(b, g), spectral.eigenvector_tv(b, shuffled), atol=1e-12)
    with pytest.raises(ValueError):
        spectral.eigenvector_tv(b, cycle_graph(5))


def test_sign_convention():
    V = np.array([[0.5, -0.1], [-0.5, -0.9], [0.1, 0.2]])
    fixed = spectral.fix_signs(V)
    assert np.array_equal(fixed[:, 0], V[:, 0])  # first of the tied largest entries is positive
    assert np.array_equal(fixed[:, 1], -V[:, 1])


def test_exports_roundtrip(tmp_path, rng):
    b = spectral.eigenbasis(laplacian(knn_graph(rng.normal(size=(25, 2)), k=4)), 5)
    csv_path = spectral.write_basis_csv(b, tmp_path / "b.csv")
    header = csv_path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["j", "lambda_j", "phi_j_0"] and header[-1] == "phi_j_24"
    back = spectral.read_basis_csv(csv_path)
    assert np.array_equal(back.eigenvalues, b.eigenvalues) and np.array_equal(back.vectors, b.vectors)

    bin_path = spectral.write_basis_binary(b, tmp_path / "b.bin")
    raw = bin_path.read_bytes()
    assert raw[:8] == b"EIGBASIS" and len(raw) == 16 + 8 * (5 + 25 * 5)
    back = spectral.read_basis_binary(bin_path)
    assert np.array_equal(back.vectors, b.vectors)
    # column-major: the first 25 doubles after the eigenvalues are column 0
    col0 = np.frombuffer(raw, dtype="<f8", count=25, offset=16 + 40)
    assert np.array_equal(col0, b.vectors[:, 0])


def test_subset_keeps_weights():
    b = spectral.EigenBasis(np.arange(3.0), np.eye(3), np.array([1.0, 2.0, 3.0]), None)
    s = b.subset([2, 0])
    assert np.array_equal(s.persistence_weights, [3.0, 1.0]) and s.tv_weights is None
