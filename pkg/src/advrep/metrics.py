"""Clustering-quality scores, min-max normalization, LOWESS smoothing, and
the per-epoch score-curve assembly.

silhouette and calinski_harabasz promise bit-identical agreement with naive
brute-force recomputation: distances accumulate squared differences one
dimension at a time in index order, and every mean/scatter reduction is an
exactly-rounded sum (math.fsum), which no summation order can perturb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .validation import check_matrix

# finite stand-in when within-cluster scatter is exactly zero
CH_CAP = 1e12


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distances via explicit differences, accumulated one
    dimension at a time in index order (never the dot-product expansion or
    an axis reduction: both reorder additions, and these distances must
    equal a naive loop bit for bit)."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    total = np.zeros((n, n))
    for k in range(d):
        diff = X[:, None, k] - X[None, :, k]
        total += diff * diff
    return np.sqrt(total)


def _fmean(values) -> float:
    # exactly-rounded mean: bit-identical for any summation order
    return math.fsum(values) / len(values)


def silhouette(X, labels) -> float:
    """Mean of (b - a)/max(a, b); a is the mean intra-cluster distance, b the
    smallest mean distance to another cluster. Singleton clusters score 0.

    All reductions are exactly-rounded sums, so the result equals a naive
    brute-force recomputation bit for bit.
    """
    X = check_matrix(X, "X")
    labels = np.asarray(labels)
    n = X.shape[0]
    if labels.shape[0] != n:
        raise ContractError("labels length must match the row count")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ContractError("silhouette needs at least 2 clusters")
    D = pairwise_distances(X)
    by_class = {cls: labels == cls for cls in classes}
    scores = []
    for i in range(n):
        own = by_class[labels[i]]
        if int(own.sum()) == 1:
            scores.append(0.0)
            continue
        own_idx = own.copy()
        own_idx[i] = False
        a = _fmean(D[i, own_idx])
        b = math.inf
        for cls in classes:
            if cls == labels[i]:
                continue
            b = min(b, _fmean(D[i, by_class[cls]]))
        denom = max(a, b)
        scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return _fmean(scores)


def calinski_harabasz(X, labels) -> float:
    """(trace(B)/(C-1)) / (trace(W)/(n-C)); degenerate W = 0 returns CH_CAP.

    Exactly-rounded sums throughout, matching the brute-force oracle bit
    for bit.
    """
    X = check_matrix(X, "X")
    labels = np.asarray(labels)
    n, d = X.shape
    classes = np.unique(labels)
    c = classes.size
    if not (2 <= c < n):
        raise ContractError(f"calinski_harabasz needs 2 <= C < n, got C={c}, n={n}")
    overall = np.array([_fmean(X[:, k]) for k in range(d)])
    between_parts = []
    within_parts = []
    for cls in classes:
        members = X[labels == cls]
        centroid = np.array([_fmean(members[:, k]) for k in range(d)])
        offset = centroid - overall
        between_parts.append(members.shape[0] * math.fsum(offset * offset))
        diff = members - centroid
        within_parts.append(math.fsum((diff * diff).ravel()))
    between = math.fsum(between_parts)
    within = math.fsum(within_parts)
    if within == 0.0:
        return CH_CAP
    return (between / (c - 1)) / (within / (n - c))


def minmax_normalize(series) -> np.ndarray:
    """(v - min)/(max - min); a constant series maps to all 0.5."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("minmax_normalize needs a non-empty series")
    low, high = arr.min(), arr.max()
    if high == low:
        return np.full_like(arr, 0.5)
    return (arr - low) / (high - low)


def lowess(x, y, frac: float) -> np.ndarray:
    """Locally weighted linear regression with tricube weights over the
    ceil(frac*n) nearest x-neighbors of each point; no robustness passes."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 3:
        raise ContractError(f"lowess needs at least 3 points, got {n}")
    if not (0.0 < frac <= 1.0):
        raise ContractError(f"frac must be in (0, 1], got {frac}")
    if y.size != n:
        raise ContractError("x and y lengths differ")
    window = min(n, max(2, math.ceil(frac * n)))
    smoothed = np.empty(n)
    for i in range(n):
        dist = np.abs(x - x[i])
        idx = np.argsort(dist, kind="stable")[:window]
        dmax = dist[idx].max()
        if dmax == 0.0:
            weights = np.ones(idx.size)
        else:
            u = dist[idx] / dmax
            weights = (1.0 - u**3) ** 3
        xw, yw = x[idx], y[idx]
        sw = weights.sum()
        if sw <= 0.0:
            smoothed[i] = float(np.mean(yw))
            continue
        xm = np.sum(weights * xw) / sw
        ym = np.sum(weights * yw) / sw
        sxx = np.sum(weights * (xw - xm) ** 2)
        if sxx <= 1e-300:
            smoothed[i] = ym
            continue
        slope = np.sum(weights * (xw - xm) * (yw - ym)) / sxx
        smoothed[i] = ym + slope * (x[i] - xm)
    return smoothed


# ---------------------------------------------------------------------------
# per-epoch score curves


@dataclass
class ScoreCurve:
    """One metric tracked across epochs for one (source, layer, labeling)."""

    source: str
    layer_id: str
    label_kind: str
    metric: str
    epochs: list[int]
    raw: list[float]
    normalized: list[float] = field(default_factory=list)
    smoothed: list[float] = field(default_factory=list)


def score_embeddings(
    embeddings_by_key: dict,
    epochs,
    labelings: dict,
    lowess_frac: float = 0.3,
) -> list[ScoreCurve]:
    """Score already-computed 2-D embeddings.

    embeddings_by_key maps (source, layer_id) -> sequence of (n, 2) arrays
    aligned with ``epochs``; labelings maps label_kind -> label vector.
    Curves are min-max normalized per curve, then LOWESS(frac)-smoothed.
    """
    epochs = [int(e) for e in epochs]
    curves: list[ScoreCurve] = []
    for (source, layer_id), per_epoch in sorted(embeddings_by_key.items()):
        if len(per_epoch) != len(epochs):
            raise ContractError(
                f"{source}/{layer_id}: {len(per_epoch)} matrices for "
                f"{len(epochs)} epochs"
            )
        for label_kind in sorted(labelings):
            labels = labelings[label_kind]
            for metric, fn in (("calinski_harabasz", calinski_harabasz),
                               ("silhouette", silhouette)):
                raw = [float(fn(emb, labels)) for emb in per_epoch]
                normalized = minmax_normalize(raw)
                if len(raw) >= 3:
                    smoothed = lowess(np.asarray(epochs, dtype=float), normalized,
                                      lowess_frac)
                else:
                    smoothed = normalized.copy()
                curves.append(
                    ScoreCurve(
                        source=source,
                        layer_id=layer_id,
                        label_kind=label_kind,
                        metric=metric,
                        epochs=list(epochs),
                        raw=raw,
                        normalized=[float(v) for v in normalized],
                        smoothed=[float(v) for v in smoothed],
                    )
                )
    return curves


def score_series(
    matrices_by_key: dict,
    epochs,
    labelings: dict,
    *,
    n_neighbors: int = 30,
    min_dist: float = 0.3,
    layout_epochs: int = 200,
    lowess_frac: float = 0.3,
    seed: int = 0,
) -> list[ScoreCurve]:
    """Embed each per-epoch matrix to 2-D, then score against every labeling
    with both metrics. matrices_by_key maps (source, layer_id) -> sequence
    of matrices aligned with ``epochs`` (raw activations or attributions)."""
    from .embedding import embed_2d

    embeddings: dict = {}
    for key, per_epoch in sorted(matrices_by_key.items()):
        source, layer_id = key
        embedded = []
        for pos, mat in enumerate(per_epoch):
            emb = embed_2d(
                mat,
                n_neighbors=n_neighbors,
                min_dist=min_dist,
                epochs=layout_epochs,
                seed=seed,
                provenance_label=(source, layer_id, pos),
            )
            embedded.append(emb.coords)
        embeddings[key] = embedded
    return score_embeddings(embeddings, epochs, labelings, lowess_frac=lowess_frac)
