"""Feature-importance engines over the trained network and its surrogates.

Two explanation routes:

* vanilla: kernel SHAP or integrated gradients applied to the label head
  over raw input features — the route that stays domain-confounded;
* layer-aware: kernel SHAP applied to a boosted-tree surrogate fit on
  hidden activations — the route that isolates label-relevant structure.

Plus the signed exaggeration transform used for layered violin plots.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .boosting import GradientBoostedClassifier
from .errors import ContractError, DimensionError
from .nn import ActivationMatrix, DannParams, forward_full
from .seeding import per_sample_rng, spawn_rng
from .shapley import kernel_shap
from .validation import check_matrix


@dataclass
class BackgroundSet:
    """Reference rows used to mask out coalitions."""

    values: np.ndarray
    policy: str = "unspecified"

    def __post_init__(self):
        self.values = check_matrix(self.values, "background")
        if self.values.shape[0] < 1:
            raise ContractError("background needs at least one row")

    def mean_row(self) -> np.ndarray:
        return self.values.mean(axis=0)


def select_background(X, labels, size: int = 50, seed: int = 0) -> BackgroundSet:
    """Stratified, label-balanced reference sample; blunts the imbalance bias
    attribution inherits from skewed explanation data."""
    X = check_matrix(X, "X")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    rng = spawn_rng(seed, "background")
    per_class = max(1, size // classes.size)
    chosen: list[np.ndarray] = []
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        take = min(per_class, idx.size)
        chosen.append(idx[rng.permutation(idx.size)[:take]])
    rows = np.sort(np.concatenate(chosen))
    return BackgroundSet(
        X[rows], policy=f"stratified-by-label(size={rows.size}, seed={seed})"
    )


@dataclass
class AttributionMatrix:
    """Per-sample, per-feature signed importances with baseline metadata.

    base_value semantics follow the method: mean model output over the
    background rows for kernel-SHAP matrices, f(masked-all row) for exact
    Shapley, f(baseline) for integrated gradients (the latter two satisfy
    per-row completeness sum_j values[i, j] = f(x_i) - base).
    """

    values: np.ndarray
    base_value: float
    target: str
    feature_names: list[str]
    sample_ids: list[str] = field(default_factory=list)
    method: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError("attribution values must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("attribution values must be finite")
        if len(self.feature_names) != self.values.shape[1]:
            raise ContractError("feature_names length mismatch")
        if not self.sample_ids:
            self.sample_ids = [f"r{i:04d}" for i in range(self.values.shape[0])]


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ADVREP_THREADS", "1")))
    except ValueError:
        return 1


def _explain_rows(explain_one, indices) -> np.ndarray:
    """Per-sample explanations are independent; the per-sample seeded rng
    makes parallel and serial runs agree exactly."""
    workers = _worker_count()
    if workers == 1:
        rows = [explain_one(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(explain_one, indices))
    return np.vstack(rows)


def integrated_gradients(grad_fn, x, baseline, steps: int) -> np.ndarray:
    """Midpoint-rule path integral:

        phi_j = (x_j - b_j) * (1/steps) * sum_k df/dx_j at b + (k-0.5)/steps*(x-b)

    ``grad_fn`` maps an (m, d) array of points to their (m, d) gradients.
    Exact for linear f at any step count; completeness error is O(steps^-2).
    """
    if steps < 1:
        raise ContractError(f"integrated_gradients needs steps >= 1, got {steps}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    baseline = np.asarray(baseline, dtype=np.float64).reshape(-1)
    if baseline.shape != x.shape:
        raise DimensionError("baseline shape must match x")
    alphas = (np.arange(steps) + 0.5) / steps
    points = baseline + alphas[:, None] * (x - baseline)
    grads = np.asarray(grad_fn(points), dtype=np.float64)
    return (x - baseline) * grads.mean(axis=0)


def label_head_function(params: DannParams):
    """f(X) -> label probabilities, eval mode."""

    def f(points):
        fw = forward_full(params, np.atleast_2d(points), mode="eval")
        return fw.label_prob.values[:, 0]

    return f


def label_head_gradients(params: DannParams):
    """grad_fn(X) -> d label_prob_i / d x_i per row (rows independent in
    eval mode, so one backward from the summed head covers the batch)."""

    def grad_fn(points):
        fw = forward_full(params, np.atleast_2d(points), mode="eval")
        seed = ad.sum_all(fw.label_prob)
        graph = ad.ComputeGraph.trace(seed)
        ad.backward(graph, seed)
        x_leaf = _find_input_leaf(graph)
        return x_leaf.grad

    return grad_fn


def _find_input_leaf(graph: ad.ComputeGraph) -> ad.Tensor:
    for node in graph.nodes:
        if node.name == "input":
            return node
    raise ContractError("graph has no input leaf")


def vanilla_explain(
    params: DannParams,
    dataset,
    background: BackgroundSet,
    method: str = "kernel_shap",
    n_coalitions: int = 512,
    ig_steps: int = 256,
    seed: int = 0,
    sample_indices=None,
) -> AttributionMatrix:
    """Explain the label head w.r.t. raw input features for every sample.

    This is the pipeline stage expected to remain domain-confounded: the
    attribution variance lives wherever the input variance lives.
    """
    if method not in ("kernel_shap", "ig"):
        raise ContractError(f"method must be 'kernel_shap' or 'ig', got {method!r}")
    X = dataset.X
    idx = np.arange(X.shape[0]) if sample_indices is None else np.asarray(sample_indices)
    f = label_head_function(params)
    if method == "kernel_shap":
        rows = _explain_rows(
            lambda i: kernel_shap(
                f, X[int(i)], background, n_coalitions, per_sample_rng(seed, int(i))
            ),
            idx,
        )
        base = float(np.mean(f(background.values)))
    else:
        grad_fn = label_head_gradients(params)
        baseline = np.zeros(X.shape[1])
        rows = _explain_rows(
            lambda i: integrated_gradients(grad_fn, X[int(i)], baseline, ig_steps), idx
        )
        base = float(f(baseline.reshape(1, -1))[0])
    return AttributionMatrix(
        values=rows,
        base_value=base,
        target="label_prob",
        feature_names=list(dataset.feature_names),
        sample_ids=[dataset.sample_ids[i] for i in idx],
        method=method,
    )


def train_surrogate(
    activations,
    targets,
    learning_rate: float = 0.1,
    n_rounds: int = 100,
    max_depth: int = 3,
    min_samples_leaf: int = 1,
) -> GradientBoostedClassifier:
    """Boosted-tree classifier over hidden activations (the explanandum
    for layer-aware attribution)."""
    values = activations.values if isinstance(activations, ActivationMatrix) else activations
    model = GradientBoostedClassifier(
        learning_rate=learning_rate,
        n_rounds=n_rounds,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )
    return model.fit(values, np.asarray(targets))


def surrogate_attributions(
    model: GradientBoostedClassifier,
    activations,
    background: BackgroundSet,
    n_coalitions: int = 256,
    seed: int = 0,
    class_index: int | None = None,
    sample_indices=None,
    feature_names=None,
) -> AttributionMatrix:
    """Kernel SHAP per sample against the surrogate's class probability."""
    values = activations.values if isinstance(activations, ActivationMatrix) else activations
    values = check_matrix(values, "activations")
    if values.shape[1] != model.n_features_in_:
        raise DimensionError(
            f"activations have {values.shape[1]} dims, surrogate expects "
            f"{model.n_features_in_}"
        )
    if class_index is None:
        if model.classes_.size != 2:
            raise ContractError("class_index is required for multiclass surrogates")
        class_index = 1
    f = lambda pts: model.class_score(pts, class_index)
    idx = np.arange(values.shape[0]) if sample_indices is None else np.asarray(sample_indices)
    rows = _explain_rows(
        lambda i: kernel_shap(
            f, values[int(i)], background, n_coalitions, per_sample_rng(seed, int(i))
        ),
        idx,
    )
    names = (
        list(feature_names)
        if feature_names is not None
        else [f"h{j:04d}" for j in range(values.shape[1])]
    )
    return AttributionMatrix(
        values=rows,
        base_value=float(np.mean(f(background.values))),
        target=f"surrogate_class_{class_index}",
        feature_names=names,
        sample_ids=[f"r{int(i):04d}" for i in idx],
        method="kernel_shap",
    )


def violin_transform(values, alpha: float = -2.0, base: float = 10.0,
                     eps: float = 1e-9) -> np.ndarray:
    """Signed exaggeration for layered violin plots:

        -1 * sign(s) * (exp(alpha * log(1 + |s| + eps) / log(base)) - 1)

    Odd in s, fixes 0, and for alpha < 0 the leading -1 and the shrinking
    exponential cancel so the output keeps the sign of s.
    """
    if base <= 1.0:
        raise ContractError(f"violin_transform base must exceed 1, got {base}")
    if eps <= 0.0:
        raise ContractError(f"violin_transform eps must be positive, got {eps}")
    s = np.asarray(values, dtype=np.float64)
    sign = np.sign(s)
    inner = np.exp(alpha * np.log1p(np.abs(s) + eps) / np.log(base)) - 1.0
    return -1.0 * sign * inner


# ---------------------------------------------------------------------------
# artifact io


def write_attribution_csv(matrix: AttributionMatrix, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + list(matrix.feature_names))
        for sid, row in zip(matrix.sample_ids, matrix.values):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def write_attribution_meta(matrix: AttributionMatrix, path, **extra) -> None:
    meta = {
        "base_value": matrix.base_value,
        "method": matrix.method,
        "target": matrix.target,
        "n_samples": matrix.values.shape[0],
        "n_features": matrix.values.shape[1],
    }
    meta.update(extra)
    Path(path).write_text(json.dumps(meta, sort_keys=True, indent=1))


def read_attribution_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, header[1:], np.asarray(rows)
