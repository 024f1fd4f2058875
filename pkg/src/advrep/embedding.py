"""Dimensionality reduction: centered-SVD PCA and a simplified UMAP-style
2-D layout.

The layout follows the standard recipe — per-point adaptive kernels
(rho = nearest-neighbor distance, sigma solved by bisection so the smoothed
neighbor mass hits log2(k)), fuzzy-union symmetrization, then sampled
attraction/repulsion descent of the cross-entropy from a PCA-2 init. It is
a visualization device; acceptance rests on cluster separation, not layout
geometry, so there is no spectral init and the negative-sampling rate is
fixed at 5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse
from scipy.optimize import curve_fit

from .errors import ContractError
from .seeding import spawn_rng
from .validation import check_matrix


class PcaResult(NamedTuple):
    scores: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray


def pca(X, k: int) -> PcaResult:
    """Column-centered SVD. Components are orthonormal rows with a
    deterministic sign convention (largest-magnitude loading positive);
    explained variance is non-increasing."""
    X = check_matrix(X, "X")
    n, d = X.shape
    if not (1 <= k <= min(n, d)):
        raise ContractError(f"pca needs 1 <= k <= min(n, d) = {min(n, d)}, got {k}")
    centered = X - X.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    for i in range(vt.shape[0]):
        pivot = np.argmax(np.abs(vt[i]))
        if vt[i, pivot] < 0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    scores = u[:, :k] * s[:k]
    explained = (s[:k] ** 2) / max(n - 1, 1)
    return PcaResult(scores, vt[:k], explained)


def find_ab_params(spread: float = 1.0, min_dist: float = 0.3) -> tuple[float, float]:
    """Fit the low-dimensional kernel 1/(1 + a d^(2b)) to the min_dist curve."""

    def curve(d, a, b):
        return 1.0 / (1.0 + a * d ** (2.0 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv, p0=(1.0, 1.0), maxfev=10_000)
    return float(a), float(b)


@dataclass
class Embedding2D:
    """n x 2 layout plus the provenance needed to reproduce it."""

    coords: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ContractError("Embedding2D coords must be n x 2")
        if not np.all(np.isfinite(self.coords)):
            raise ContractError("Embedding2D coords must be finite")


def effective_neighbors(n_neighbors: int, n: int) -> int:
    """Desk-scale rule: the configured count capped at n/4 (>= 2)."""
    return max(2, min(int(n_neighbors), n // 4 if n >= 8 else n - 1))


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _smooth_knn_calibration(dist: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per row of sorted neighbor distances: rho = nearest distance, sigma by
    bisection so sum_j exp(-(d_ij - rho_i)/sigma_i) = log2(k)."""
    n = dist.shape[0]
    target = np.log2(k)
    rho = dist[:, 0].copy()
    sigma = np.empty(n)
    for i in range(n):
        gaps = np.maximum(dist[i] - rho[i], 0.0)
        if gaps.max() <= 0.0:
            sigma[i] = 1.0
            continue
        lo, hi = 1e-12, gaps.max() * 16 + 1.0
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            mass = float(np.exp(-gaps / mid).sum())
            if mass > target:
                hi = mid
            else:
                lo = mid
        sigma[i] = 0.5 * (lo + hi)
    return rho, sigma


def fuzzy_graph(X: np.ndarray, k: int) -> scipy.sparse.coo_matrix:
    """Directed membership strengths symmetrized by the probabilistic union
    P + P.T - P*P.T."""
    n = X.shape[0]
    d2 = _squared_distances(X)
    np.fill_diagonal(d2, np.inf)
    dist = np.sqrt(d2)
    neighbor_idx = np.argsort(dist, axis=1, kind="stable")[:, :k]
    neighbor_dist = np.take_along_axis(dist, neighbor_idx, axis=1)
    rho, sigma = _smooth_knn_calibration(neighbor_dist, k)
    strengths = np.exp(-np.maximum(neighbor_dist - rho[:, None], 0.0) / sigma[:, None])
    rows = np.repeat(np.arange(n), k)
    P = scipy.sparse.coo_matrix(
        (strengths.ravel(), (rows, neighbor_idx.ravel())), shape=(n, n)
    ).tocsr()
    sym = P + P.T - P.multiply(P.T)
    return sym.tocoo()


def embed_2d(
    X,
    n_neighbors: int = 30,
    min_dist: float = 0.3,
    epochs: int = 200,
    seed: int = 0,
    provenance_label=(),
) -> Embedding2D:
    """Deterministic-per-seed 2-D neighbor embedding."""
    X = check_matrix(X, "X")
    n = X.shape[0]
    if n_neighbors < 2:
        raise ContractError(f"n_neighbors must be >= 2, got {n_neighbors}")
    if n < 5:
        raise ContractError(f"embed_2d needs at least 5 samples, got {n}")
    k = effective_neighbors(n_neighbors, n)
    rng = spawn_rng(seed, "embed", *provenance_label)

    graph = fuzzy_graph(X, k)
    upper = graph.row < graph.col
    head = graph.row[upper]
    tail = graph.col[upper]
    weight = graph.data[upper]
    # drop edges sampled less than once over the run; >= keeps the max edge
    keep = weight >= weight.max() / max(epochs, 1)
    head, tail, weight = head[keep], tail[keep], weight[keep]

    init = pca(X, min(2, X.shape[1])).scores
    coords = np.zeros((n, 2))
    coords[:, : init.shape[1]] = init[:, :2]
    peak = np.abs(coords).max()
    if peak > 0:
        coords *= 10.0 / peak
    coords = coords + rng.normal(0.0, 1e-4, size=coords.shape)

    a, b = find_ab_params(1.0, min_dist)
    epochs_per_sample = weight.max() / weight
    next_due = epochs_per_sample.copy()
    negative_rate = 5

    for epoch in range(1, epochs + 1):
        alpha = 1.0 - (epoch - 1) / epochs
        active = np.flatnonzero(next_due <= epoch)
        if active.size:
            h, t = head[active], tail[active]
            dy = coords[h] - coords[t]
            dsq = np.sum(dy * dy, axis=1)
            coef = np.zeros_like(dsq)
            pos = dsq > 0
            coef[pos] = (-2.0 * a * b * dsq[pos] ** (b - 1.0)) / (
                1.0 + a * dsq[pos] ** b
            )
            step = np.clip(coef[:, None] * dy, -4.0, 4.0) * alpha
            np.add.at(coords, h, step)
            np.add.at(coords, t, -step)

            reps = rng.integers(0, n, size=active.size * negative_rate)
            hrep = np.repeat(h, negative_rate)
            dy = coords[hrep] - coords[reps]
            dsq = np.sum(dy * dy, axis=1)
            coef = (2.0 * b) / ((0.001 + dsq) * (1.0 + a * dsq**b))
            coef[hrep == reps] = 0.0
            step = np.clip(coef[:, None] * dy, -4.0, 4.0) * alpha
            np.add.at(coords, hrep, step)

            next_due[active] += epochs_per_sample[active]

    return Embedding2D(
        coords,
        provenance={
            "n_neighbors": k,
            "requested_neighbors": int(n_neighbors),
            "min_dist": float(min_dist),
            "epochs": int(epochs),
            "seed": int(seed),
            "label": list(provenance_label),
            "source_shape": list(X.shape),
        },
    )
