"""Synthetic datasets: torus, Swiss roll, Gaussian bumps and pyramid grids."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

TWO_PI = 2.0 * np.pi

GAUSSIAN_CENTERS = np.array([[2.5, 2.5], [2.5, 7.5], [7.5, 2.5], [7.5, 7.5]])
GAUSSIAN_WIDTH = 1.0
GAUSSIAN_BOX = (0.0, 10.0)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points in R^D with optional latent coordinates and responses.

    ``response`` is ``clean_response`` plus noise when produced by
    :func:`add_noise`.
    """

    points: np.ndarray
    latent: Optional[np.ndarray] = None
    clean_response: Optional[np.ndarray] = None
    response: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 0)
        if pts.ndim != 2:
            raise ValueError("points must be an n x D matrix")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        for name in ("latent", "clean_response", "response"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=float)
            if name == "latent" and arr.ndim == 1:
                arr = arr.reshape(-1, 1)
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


# --- embeddings and targets -------------------------------------------------

def torus_embed(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r = 2.0 + np.cos(theta)
    return np.stack([r * np.cos(phi), r * np.sin(phi), np.sin(theta)], axis=-1)


def swiss_embed(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([x * np.cos(x), y, x * np.sin(x)], axis=-1)


def target_torus(theta, phi):
    """Radial sigmoid bump centred at (pi, pi); no periodic wrap in the distance."""
    r = np.hypot(np.asarray(theta, dtype=float) - np.pi, np.asarray(phi, dtype=float) - np.pi)
    out = expit(-17.0 * (r - 0.6 * np.pi))
    return out if np.ndim(out) else float(out)


def target_swiss(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 4.0 * np.exp(-((y - 7.0) ** 2 / 20.0 + (x - 6.0) ** 2 / 5.0)) + 2.0 * np.cos(x) ** 2 * np.sin(y) ** 2
    return out if np.ndim(out) else float(out)


def gaussian_sum(x, y):
    """Four unit-amplitude Gaussians on [0, 10]^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for cx, cy in GAUSSIAN_CENTERS:
        out = out + np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * GAUSSIAN_WIDTH**2))
    return out if np.ndim(out) else float(out)


# --- samplers ---------------------------------------------------------------

def _torus_theta(rng: np.random.Generator, n: int) -> np.ndarray:
    # rejection sampling from g(theta) = (1 + cos(theta) / 2) / (2 pi)
    out = np.empty(n)
    filled = 0
    while filled < n:
        batch = max(64, int(1.6 * (n - filled)))
        prop = rng.uniform(0.0, TWO_PI, size=batch)
        u = rng.uniform(0.0, 1.5, size=batch)
        keep = prop[u <= 1.0 + 0.5 * np.cos(prop)]
        take = min(keep.size, n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def sample_torus(n: int, seed: int) -> PointCloud:
    """Uniform sample of the torus of radii (2, 1), latent ``(theta, phi)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    theta = _torus_theta(rng, n)
    phi = rng.uniform(0.0, TWO_PI, size=n)
    latent = np.column_stack([theta, phi])
    return PointCloud(
        points=torus_embed(theta, phi).reshape(n, 3),
        latent=latent.reshape(n, 2),
        clean_response=np.asarray(target_torus(theta, phi)).reshape(n),
    )


def sample_swiss_roll(n: int, seed: int) -> PointCloud:
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    x = rng.uniform(1.5 * np.pi, 3.5 * np.pi, size=n)
    y = rng.uniform(0.0, 21.0, size=n)
    return PointCloud(
        points=swiss_embed(x, y).reshape(n, 3),
        latent=np.column_stack([x, y]).reshape(n, 2),
        clean_response=np.asarray(target_swiss(x, y)).reshape(n),
    )


def gaussian_sum_field(n: Optional[int] = None, seed: int = 0, grid: Optional[int] = None) -> PointCloud:
    """Gaussian-sum field on uniform samples (``n``) or on a ``grid x grid`` lattice.

    Grid vertices are numbered ``i * grid + j`` for x-index ``i`` and
    y-index ``j``, matching :func:`toporeg.complex.grid_complex`.
    """
    lo, hi = GAUSSIAN_BOX
    if grid is not None:
        if grid < 2:
            raise ValueError("grid must be >= 2")
        ticks = np.linspace(lo, hi, grid)
        xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
    else:
        if n is None or n < 0:
            raise ValueError("n must be >= 0")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(lo, hi, size=(n, 2))
    return PointCloud(points=pts, clean_response=np.asarray(gaussian_sum(pts[:, 0], pts[:, 1])).reshape(-1))


def pyramid_values(N: int, resolution: int = 8, alternating: bool = False) -> np.ndarray:
    """Pyramid heights on a periodic ``(N*resolution)^2`` lattice of [0, 1)^2.

    Each of the N x N cells carries a pyramid of height 1/N with slope 2,
    vanishing on the cell boundary. ``resolution`` must be even so that
    the apex is a lattice point.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if resolution < 2 or resolution % 2:
        raise ValueError("resolution must be an even integer >= 2")
    if alternating and N % 2:
        raise ValueError("alternating pyramids need an even N to tile the torus")
    eps = 1.0 / N
    G = N * resolution
    idx = np.arange(G)
    off = np.abs(2 * (idx % resolution) - resolution)  # in units of half a lattice step
    dist = np.maximum(off[:, None], off[None, :])
    values = eps * (1.0 - dist / resolution)
    if alternating:
        cell = idx // resolution
        sign = np.where((cell[:, None] + cell[None, :]) % 2 == 0, 1.0, -1.0)
        values = values * sign
    return values.ravel()


def pyramid_field(N: int, alternating: bool = False, resolution: int = 8) -> PointCloud:
    G = N * resolution
    values = pyramid_values(N, resolution, alternating)
    ticks = np.arange(G) / G
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    ij = np.stack(np.meshgrid(np.arange(G), np.arange(G), indexing="ij"), axis=-1).reshape(-1, 2)
    return PointCloud(
        points=np.column_stack([xx.ravel(), yy.ravel()]),
        latent=ij.astype(float),
        clean_response=values,
    )


def add_noise(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Return a copy with ``response = clean_response + sigma * z``, z ~ N(0, 1)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if cloud.clean_response is None:
        raise ValueError("cloud has no clean_response to perturb")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(cloud.n)
    return replace(cloud, response=cloud.clean_response + sigma * z)


# --- CSV --------------------------------------------------------------------

def csv_header(cloud: PointCloud) -> list[str]:
    cols = [f"x{i}" for i in range(cloud.dim)]
    if cloud.latent is not None:
        cols += [f"t{i}" for i in range(cloud.latent.shape[1])]
    if cloud.clean_response is not None:
        cols.append("f_clean")
    if cloud.response is not None:
        cols.append("y")
    return cols


def write_csv(cloud: PointCloud, path) -> Path:
    path = Path(path)
    blocks = [cloud.points]
    if cloud.latent is not None:
        blocks.append(cloud.latent)
    if cloud.clean_response is not None:
        blocks.append(cloud.clean_response[:, None])
    if cloud.response is not None:
        blocks.append(cloud.response[:, None])
    table = np.hstack(blocks) if cloud.n else np.empty((0, len(csv_header(cloud))))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(cloud))
        for row in table:
            writer.writerow([f"{v:.17g}" for v in row])
    return path


def generate(kind: str, n: int = 0, seed: int = 0, grid: Optional[int] = None) -> PointCloud:
    """Dispatch on dataset kind: torus, swiss, gaussian, pyramid, pyramid_alt."""
    if kind == "torus":
        return sample_torus(n, seed)
    if kind == "swiss":
        return sample_swiss_roll(n, seed)
    if kind == "gaussian":
        return gaussian_sum_field(n=n, seed=seed, grid=grid)
    if kind in ("pyramid", "pyramid_alt"):
        return pyramid_field(grid or 4, alternating=kind == "pyramid_alt")
    raise ValueError(f"unknown dataset kind {kind!r}")
