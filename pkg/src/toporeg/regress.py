"""Estimators on a Laplacian eigenbasis (weighted Lasso, persistence penalties) and baselines."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .complex import SimplicialComplex, lower_star
from .graph import WeightedGraph
from .persistence import floor_weights, persistence_gradient, reduce, total_persistence
from .spectral import EigenBasis


class ConvergenceError(RuntimeError):
    pass


@dataclass(eq=False)
class FitResult:
    theta: np.ndarray
    fitted: np.ndarray
    mu: float
    diagnostics: dict = field(default_factory=dict)
    columns: Optional[np.ndarray] = None  # basis columns the coefficients refer to

    @property
    def support(self) -> np.ndarray:
        idx = np.flatnonzero(self.theta)
        return idx if self.columns is None else self.columns[idx]


# --- weighted Lasso -------------------------------------------------------------

@njit(cache=True)
def _sweep(G, grad, mu_w, beta, cols):
    # one cyclic pass over ``cols``; returns the largest coefficient change
    p = grad.shape[0]
    biggest = 0.0
    for j in cols:
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        rho = grad[j] + gjj * beta[j]
        thr = 0.5 * mu_w[j]
        if rho > thr:
            new = (rho - thr) / gjj
        elif rho < -thr:
            new = (rho + thr) / gjj
        else:
            new = 0.0
        d = new - beta[j]
        if d != 0.0:
            beta[j] = new
            for i in range(p):
                grad[i] -= d * G[i, j]
            if abs(d) * math.sqrt(gjj) > biggest:
                biggest = abs(d) * math.sqrt(gjj)
    return biggest


@njit(cache=True)
def _cd_gram(G, q, mu_w, beta, kkt_tol, max_iter, inner_max):
    # minimises ||Y - X b||^2 + sum_j mu_w[j] |b_j| given G = X'X, q = X'Y.
    # Full sweeps alternate with inner passes over the current nonzeros.
    p = q.shape[0]
    everything = np.arange(p)
    grad = q - G @ beta
    it = 0
    viol = np.inf
    while it < max_iter:
        it += 1
        _sweep(G, grad, mu_w, beta, everything)
        active = np.flatnonzero(beta)
        inner = 0
        while active.size and inner < inner_max:
            inner += 1
            if _sweep(G, grad, mu_w, beta, active) <= 0.1 * kkt_tol:
                break
        viol = _kkt(grad, beta, mu_w)
        if viol <= kkt_tol:
            grad = q - G @ beta
            viol = _kkt(grad, beta, mu_w)
            if viol <= kkt_tol:
                break
    return it, viol


@njit(cache=True)
def _kkt(grad, beta, mu_w):
    worst = 0.0
    for j in range(beta.shape[0]):
        g2 = 2.0 * grad[j]
        if beta[j] == 0.0:
            v = abs(g2) - mu_w[j]
        elif beta[j] > 0.0:
            v = abs(g2 - mu_w[j])
        else:
            v = abs(g2 + mu_w[j])
        if v > worst:
            worst = v
    return worst


def kkt_violation(design, Y, theta, mu, weights) -> float:
    X = np.asarray(design, dtype=float)
    grad = X.T @ (np.asarray(Y, dtype=float) - X @ theta)
    return float(_kkt(grad, np.asarray(theta, dtype=float), mu * np.asarray(weights, dtype=float)))


def _check_lasso_args(mu, weights, p):
    if mu < 0:
        raise ValueError("mu must be >= 0")
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (p,):
        raise ValueError(f"expected {p} weights")
    if np.any(w <= 0):
        raise ValueError("weights must be > 0")
    return w


def weighted_lasso_cd(
    design,
    Y,
    mu: float,
    weights=None,
    kkt_tol: float = 1e-8,
    max_iter: int = 100_000,
    theta0=None,
    strict: bool = True,
    gram=None,
) -> FitResult:
    """Minimise ``||Y - X theta||^2 + mu * sum_j w_j |theta_j|`` by cyclic coordinate descent.

    Stops once the KKT residual is below ``kkt_tol``; raises
    :class:`ConvergenceError` after ``max_iter`` sweeps when ``strict``.
    """
    X = np.asarray(design, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, p = X.shape
    w = _check_lasso_args(mu, weights, p)
    G, q = gram if gram is not None else (X.T @ X, X.T @ Y)
    beta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)
    sweeps, viol = _cd_gram(G, q, mu * w, beta, kkt_tol, max_iter, 100 * max_iter)
    if viol > kkt_tol and strict:
        raise ConvergenceError(f"coordinate descent stopped after {sweeps} sweeps, KKT violation {viol:.3e}")
    fitted = X @ beta
    r = Y - fitted
    obj = float(r @ r + mu * np.sum(w * np.abs(beta)))
    return FitResult(beta, fitted, mu, {"iterations": int(sweeps), "objective": obj, "kkt": float(viol)})


def lasso_path(design, Y, mus, weights=None, kkt_tol: float = 1e-6, max_iter: int = 2, inner_max: int = 50) -> np.ndarray:
    """Approximate coefficients for each mu (any order), warm-started from large to small mu.

    Meant for cross-validation: the sweep budget is small, so near-interpolating
    fits at tiny mu stop early instead of being certified.
    """
    X = np.asarray(design, dtype=float)
    Y = np.asarray(Y, dtype=float)
    p = X.shape[1]
    w = _check_lasso_args(0.0, weights, p)
    G, q = X.T @ X, X.T @ Y
    mus = np.asarray(mus, dtype=float)
    out = np.zeros((mus.size, p))
    beta = np.zeros(p)
    # tolerance scales with the problem so small-mu fits do not stall
    tol = kkt_tol * max(1.0, float(np.abs(q).max()) if q.size else 1.0)
    for idx in np.argsort(-mus, kind="stable"):
        _cd_gram(G, q, mus[idx] * w, beta, tol, max_iter, inner_max)
        out[idx] = beta
    return out


def null_mu(design, Y, weights=None) -> float:
    """Smallest mu for which the weighted Lasso solution is zero."""
    X = np.asarray(design, dtype=float)
    w = _check_lasso_args(0.0, weights, X.shape[1])
    return float(2.0 * np.max(np.abs(X.T @ np.asarray(Y, dtype=float)) / w))


def closed_form_omega1(basis: EigenBasis, Y, mu: float) -> FitResult:
    """Soft-thresholding solution of the persistence-weighted Lasso on an orthonormal basis.

    Coefficients live in the rescaled design ``Phi_j / chi_j``; column j
    is dropped exactly when ``|<Phi_j, Y>| <= mu * chi_j / 2``.
    """
    if basis.persistence_weights is None:
        raise ValueError("basis has no persistence weights")
    if mu < 0:
        raise ValueError("mu must be >= 0")
    chi = np.asarray(basis.persistence_weights, dtype=float)
    c = basis.vectors.T @ np.asarray(Y, dtype=float)
    drop = np.abs(c) <= mu * chi / 2.0
    theta = np.where(drop, 0.0, chi * np.sign(c) * (np.abs(c) - mu * chi / 2.0))
    fitted = basis.vectors @ (theta / chi)
    r = np.asarray(Y, dtype=float) - fitted
    return FitResult(theta, fitted, mu, {"iterations": 0, "objective": float(r @ r + mu * np.abs(theta).sum())})


def rescaled_design(basis: EigenBasis) -> np.ndarray:
    return basis.vectors / np.asarray(basis.persistence_weights, dtype=float)


def lasso_tv_fit(basis: EigenBasis, Y, mu: float, **kw) -> FitResult:
    """Weighted Lasso with the (floored) graph total variation of each eigenvector as weight."""
    if basis.tv_weights is None:
        raise ValueError("basis has no tv weights")
    return weighted_lasso_cd(basis.vectors, Y, mu, floor_weights(basis.tv_weights), **kw)


# --- persistence-penalised descent ----------------------------------------------

@dataclass
class DescentConfig:
    steps: int = 500
    step_size: float = 0.25
    batch: Optional[int] = None
    seed: int = 0
    dims: tuple = (0, 1)
    max_halvings: int = 30
    init_scale: float = 0.01


class TopologicalObjective:
    """``||Y_L - X_L theta||^2 + mu * chi_dims(X theta)`` with its subgradient.

    The persistence term is computed on all n vertices; the squared loss
    only on the labelled rows.
    """

    def __init__(self, vectors, Y, mu, cx: SimplicialComplex, dims=(0, 1), labeled=None):
        self.X = np.asarray(vectors, dtype=float)
        self.n = self.X.shape[0]
        self.labeled = np.arange(self.n) if labeled is None else np.asarray(labeled, dtype=np.int64)
        self.XL = self.X[self.labeled]
        self.Y = np.asarray(Y, dtype=float)
        if self.Y.shape[0] != self.labeled.size:
            raise ValueError("Y must have one entry per labelled vertex")
        self.mu = float(mu)
        self.cx = cx
        self.dims = tuple(sorted(set(dims)))
        self.max_hom = max(self.dims) if self.dims else 0
        if cx.n_vertices != self.n:
            raise ValueError("complex and design disagree on the number of vertices")

    def diagram(self, theta):
        return reduce(lower_star(self.cx, self.X @ theta), self.max_hom)

    def evaluate(self, theta, rows=None):
        """Return (objective, gradient, total persistence, diagram)."""
        dgm = self.diagram(theta) if self.mu > 0 else None
        chi = total_persistence(dgm, self.dims) if dgm is not None else 0.0
        if rows is None:
            XL, Y, scale = self.XL, self.Y, 1.0
        else:
            XL, Y, scale = self.XL[rows], self.Y[rows], self.labeled.size / len(rows)
        r = Y - XL @ theta
        obj = float(scale * (r @ r) + self.mu * chi)
        grad = -2.0 * scale * (XL.T @ r)
        if dgm is not None:
            grad = grad + self.mu * (self.X.T @ persistence_gradient(dgm, self.n, self.dims))
        return obj, grad, chi, dgm

    def value(self, theta) -> float:
        return self.evaluate(theta)[0]


def omega2_fit(
    vectors,
    Y,
    mu: float,
    cx: SimplicialComplex,
    config: Optional[DescentConfig] = None,
    labeled=None,
    theta0=None,
) -> FitResult:
    """Gradient descent on the squared loss plus ``mu`` times the total persistence of the fit.

    The diagram is recomputed at every iterate. Full-batch runs use
    step halving so the objective trace never increases; with
    ``config.batch`` the squared loss is subsampled and steps are fixed.
    Returns the iterate with the lowest full objective.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    cfg = config or DescentConfig()
    obj = TopologicalObjective(vectors, Y, mu, cx, cfg.dims, labeled)
    p = obj.X.shape[1]
    rng = np.random.default_rng(cfg.seed)
    theta = rng.uniform(-cfg.init_scale, cfg.init_scale, size=p) if theta0 is None else np.array(theta0, dtype=float)
    minibatch = cfg.batch is not None and cfg.batch < obj.labeled.size

    cur, grad, chi, _ = obj.evaluate(theta)
    if not math.isfinite(cur):
        raise FloatingPointError("non-finite objective at the initial point")
    best_obj, best_theta, best_chi = cur, theta.copy(), chi
    trace = [cur]
    step = cfg.step_size
    it = 0
    for it in range(1, cfg.steps + 1):
        if minibatch:
            rows = rng.choice(obj.labeled.size, size=cfg.batch, replace=False)
            _, g, _, _ = obj.evaluate(theta, rows)
            theta = theta - cfg.step_size * g
            cur, _, chi, _ = obj.evaluate(theta)
            if not math.isfinite(cur):
                raise FloatingPointError("objective diverged; lower the step size")
        else:
            accepted = False
            for _ in range(cfg.max_halvings):
                trial = theta - step * grad
                t_obj, t_grad, t_chi, _ = obj.evaluate(trial)
                if not math.isfinite(t_obj):
                    raise FloatingPointError("objective diverged; lower the step size")
                if t_obj <= cur:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                it -= 1
                break
            theta, cur, grad, chi = trial, t_obj, t_grad, t_chi
            step = min(2.0 * step, cfg.step_size)
        trace.append(cur)
        if cur < best_obj:
            best_obj, best_theta, best_chi = cur, theta.copy(), chi
    fitted = obj.X @ best_theta
    return FitResult(
        best_theta, fitted, mu,
        {"iterations": it, "objective": best_obj, "trace": trace, "persistence": best_chi},
    )


def pipeline_fit(
    basis: EigenBasis,
    Y,
    mu1: float,
    mu2: float,
    cx: SimplicialComplex,
    config: Optional[DescentConfig] = None,
    labeled=None,
) -> FitResult:
    """Select columns with the persistence-weighted Lasso, then run the persistence descent on them."""
    if basis.persistence_weights is None:
        raise ValueError("basis has no persistence weights")
    if labeled is None:
        if basis.p != basis.n:
            warnings.warn("pipeline selection expects the complete basis (p = n)")
        support = np.flatnonzero(closed_form_omega1(basis, Y, mu1).theta)
    else:
        sel = weighted_lasso_cd(basis.vectors[labeled], Y, mu1, basis.persistence_weights, strict=False, kkt_tol=1e-6)
        support = np.flatnonzero(sel.theta)
    if support.size == 0:
        warnings.warn("persistence-weighted Lasso selected no eigenvector; returning the zero function")
        return FitResult(np.zeros(0), np.zeros(basis.n), mu2, {"iterations": 0, "objective": float(np.sum(np.asarray(Y) ** 2)), "empty_support": True}, columns=support)
    fit = omega2_fit(basis.vectors[:, support], Y, mu2, cx, config, labeled)
    fit.columns = support
    fit.diagnostics["empty_support"] = False
    fit.diagnostics["mu1"] = mu1
    return fit


# --- baselines ------------------------------------------------------------------

def gaussian_kernel(A, B, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(np.atleast_2d(A), np.atleast_2d(B), "sqeuclidean") / (2.0 * bandwidth**2))


@dataclass(eq=False)
class KernelRidge:
    points: np.ndarray
    alpha: np.ndarray
    bandwidth: float
    lam: float
    condition: float

    def __call__(self, query) -> np.ndarray:
        q = np.asarray(query, dtype=float)
        out = gaussian_kernel(q, self.points, self.bandwidth) @ self.alpha
        return out if q.ndim > 1 else float(out[0])

    predict = __call__


def krr_fit(points, Y, bandwidth: float, lam: float) -> KernelRidge:
    """Gaussian-kernel ridge regression: solve ``(K + lam I) alpha = Y``."""
    if lam <= 0 or bandwidth <= 0:
        raise ValueError("bandwidth and lam must be > 0")
    X = np.asarray(points, dtype=float)
    K = gaussian_kernel(X, X, bandwidth)
    evals, evecs = np.linalg.eigh(K)
    shifted = evals + lam
    cond = float(shifted.max() / shifted.min()) if shifted.min() > 0 else math.inf
    if cond > 1e12:
        warnings.warn(f"kernel system is ill-conditioned (condition {cond:.2e})")
    alpha = evecs @ ((evecs.T @ np.asarray(Y, dtype=float)) / shifted)
    return KernelRidge(X, alpha, bandwidth, lam, cond)


def knn_predict(points, Y, k: int, query):
    """Mean response of the ``k`` nearest training points; distance ties go to the smaller index."""
    X = np.asarray(points, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if not 1 <= k <= X.shape[0]:
        raise ValueError("k must satisfy 1 <= k <= n")
    q = np.asarray(query, dtype=float)
    d = cdist(np.atleast_2d(q), X, "sqeuclidean")
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    out = Y[nn].mean(axis=1)
    return out if q.ndim > 1 else float(out[0])


def graph_tv_fit(
    graph: WeightedGraph,
    Y,
    mu: float,
    rel_gap: float = 1e-9,
    max_iter: int = 200_000,
    labeled=None,
) -> np.ndarray:
    """Minimise ``||Y - f||^2 + mu * sum_(i,j,w) w |f_i - f_j|`` over vertex values.

    Accelerated projected gradient on the box-constrained dual; stops
    when the relative duality gap falls below ``rel_gap``. With
    ``labeled`` the loss only covers those vertices (``Y`` then has one
    entry per labelled vertex) and a primal-dual iteration is used.
    """
    if mu < 0:
        raise ValueError("mu must be >= 0")
    Y = np.asarray(Y, dtype=float)
    if labeled is not None:
        return _tv_partial(graph, Y, mu, np.asarray(labeled, dtype=np.int64), max_iter=min(max_iter, 20_000))
    if mu == 0 or graph.m == 0:
        return Y.copy()
    e, w = graph.edges, graph.weights
    a, b = e[:, 0], e[:, 1]
    n = graph.n

    def DT(u):  # adjoint of f -> f[a] - f[b]
        out = np.zeros(n)
        np.add.at(out, a, u)
        np.add.at(out, b, -u)
        return out

    deg2 = np.zeros(n)
    np.add.at(deg2, a, w**2)
    np.add.at(deg2, b, w**2)
    lip = 0.5 * mu**2 * 2.0 * deg2.max()
    step = 1.0 / lip
    z = np.zeros(graph.m)
    v = z.copy()
    t = 1.0
    f = Y.copy()
    for _ in range(max_iter):
        f_v = Y - 0.5 * mu * DT(w * v)
        z_new = np.clip(v + step * mu * w * (f_v[a] - f_v[b]), -1.0, 1.0)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        v = z_new + ((t - 1.0) / t_new) * (z_new - z)
        z, t = z_new, t_new
        f = Y - 0.5 * mu * DT(w * z)
        primal = float(np.sum((Y - f) ** 2) + mu * np.sum(w * np.abs(f[a] - f[b])))
        # dual value at z is ||Y||^2 - ||f(z)||^2
        gap = primal - float(Y @ Y - f @ f)
        if gap <= rel_gap * max(primal, 1e-300):
            break
    return f


def _tv_partial(graph: WeightedGraph, Y, mu, labeled, max_iter=20_000, tol=1e-9) -> np.ndarray:
    # Chambolle-Pock on min sum_L (Y_i - f_i)^2 + mu ||W D f||_1
    n = graph.n
    a, b, w = graph.edges[:, 0], graph.edges[:, 1], graph.weights
    target = np.zeros(n)
    mask = np.zeros(n, dtype=bool)
    target[labeled] = Y
    mask[labeled] = True
    f = np.full(n, Y.mean() if Y.size else 0.0)
    f[labeled] = Y
    if graph.m == 0 or mu == 0:
        return f
    deg2 = np.zeros(n)
    np.add.at(deg2, a, w**2)
    np.add.at(deg2, b, w**2)
    tau = sigma = 0.99 / math.sqrt(2.0 * deg2.max())
    z = np.zeros(graph.m)
    fbar = f.copy()
    for _ in range(max_iter):
        z = np.clip(z + sigma * w * (fbar[a] - fbar[b]), -mu, mu)
        kz = np.zeros(n)
        np.add.at(kz, a, w * z)
        np.add.at(kz, b, -w * z)
        v = f - tau * kz
        new = np.where(mask, (v + 2.0 * tau * target) / (1.0 + 2.0 * tau), v)
        fbar = 2.0 * new - f
        done = np.max(np.abs(new - f)) <= tol * max(1.0, np.max(np.abs(new)))
        f = new
        if done:
            break
    return f


def write_fit_csv(fit: FitResult, path, weights=None, extra: Optional[dict] = None):
    """Rows ``j, theta_j, weight_j`` then one ``# {json}`` summary line."""
    path = Path(path)
    cols = np.arange(fit.theta.size) if fit.columns is None else fit.columns
    w = np.full(fit.theta.size, np.nan) if weights is None else np.asarray(weights, dtype=float)[cols]
    summary = {
        "mu": fit.mu,
        "objective": fit.diagnostics.get("objective"),
        "support_size": int(np.count_nonzero(fit.theta)),
        "iterations": fit.diagnostics.get("iterations"),
    }
    summary.update(extra or {})
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["j", "theta_j", "weight_j"])
        for j, t, wj in zip(cols, fit.theta, w):
            out.writerow([int(j), f"{t:.17g}", "" if np.isnan(wj) else f"{wj:.17g}"])
        fh.write("# " + json.dumps(summary, sort_keys=True) + "\n")
    return path
