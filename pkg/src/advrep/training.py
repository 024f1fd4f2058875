"""Adversarial minimax training with stratified cross-validation and
per-epoch metric / activation recording.

One combined backward per batch carries both losses; the reversal layer
realizes the adversarial sign on the feature-extractor side, so both heads
are plainly minimized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import Dataset, check_stratifiable
from .errors import ContractError, NumericalError, StratificationError
from .nn import (
    CAPTURE_LAYERS,
    ActivationMatrix,
    DannConfig,
    DannParams,
    capture_activations,
    forward_full,
    init_params,
    predict_probabilities,
)
from .optim import OptimizerState, adamw_step
from .seeding import spawn_rng


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings. Desk defaults (epochs 150, batch 32)
    keep acceptance runs short; the full-scale values (499, 128) are plain
    config choices."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 0.01
    adam_eps: float = 1e-8
    grl_lambda: float = 0.01
    batch_size: int = 32
    epochs: int = 150
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ContractError("betas must lie in [0, 1)")
        if self.lr < 0:
            raise ContractError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 2:
            raise ContractError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class EpochRecord:
    epoch: int
    label_loss_train: float
    label_acc_train: float
    domain_loss_train: float
    domain_acc_train: float
    label_loss_val: float
    label_acc_val: float
    domain_loss_val: float
    domain_acc_val: float
    clustering_scores: dict | None = None

    def __post_init__(self):
        for name in ("label_acc_train", "domain_acc_train", "label_acc_val", "domain_acc_val"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ContractError(f"{name}={v} outside [0, 1]")
        for name in ("label_loss_train", "domain_loss_train", "label_loss_val", "domain_loss_val"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be >= 0")


def dann_batch_loss(
    label_prob: ad.Tensor,
    domain_prob: ad.Tensor,
    y,
    d,
    grl_lambda: float | None = None,
) -> tuple[ad.Tensor, ad.Tensor]:
    """(mean BCE over the label head, mean CE over the domain head).

    The adversarial -lambda coupling of the objective is structural: the
    reversal layer flips and scales the domain gradient into the feature
    extractor, so both returned losses are minimized as-is. grl_lambda is
    accepted for interface symmetry and does not alter either value.
    """
    return ad.bce_loss(label_prob, y), ad.ce_loss(domain_prob, d)


def stratified_kfold(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k disjoint (train_idx, val_idx) pairs with per-fold class proportions
    within one sample of the global proportions."""
    labels = np.asarray(labels)
    if k < 2:
        raise ContractError(f"stratified_kfold needs k >= 2, got {k}")
    rng = spawn_rng(seed, "kfold")
    n = labels.shape[0]
    assignment = np.empty(n, dtype=np.int64)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise StratificationError(
                f"class {cls!r} has {idx.size} samples, fewer than k={k}"
            )
        shuffled = idx[rng.permutation(idx.size)]
        assignment[shuffled] = np.arange(shuffled.size) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        folds.append((train, val))
    return folds


def _accuracy(label_prob, domain_prob, y, d) -> tuple[float, float]:
    label_pred = (label_prob >= 0.5).astype(np.int64)
    domain_pred = np.argmax(domain_prob, axis=1)
    return float(np.mean(label_pred == y)), float(np.mean(domain_pred == d))


def train_epoch(
    params: DannParams,
    state: OptimizerState,
    dataset: Dataset,
    indices: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[DannParams, OptimizerState, dict]:
    """One pass over ``indices``: shuffle, full batches plus any remainder of
    size >= 2 (single-sample remainders are dropped — batchnorm constraint),
    one combined backward and one optimizer step per batch."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ContractError("train_epoch needs a non-empty index set")
    order = indices[rng.permutation(indices.size)]
    totals = {"label_loss": 0.0, "domain_loss": 0.0, "label_hits": 0.0, "domain_hits": 0.0}
    seen = 0
    for start in range(0, order.size, config.batch_size):
        batch = order[start : start + config.batch_size]
        if batch.size < 2:
            continue
        xb = dataset.X[batch]
        yb = dataset.label[batch]
        db = dataset.domain[batch]
        fw = forward_full(params, xb, mode="train", grl_lambda=config.grl_lambda, rng=rng)
        loss_y, loss_d = dann_batch_loss(fw.label_prob, fw.domain_prob, yb, db)
        if not (np.isfinite(loss_y.item()) and np.isfinite(loss_d.item())):
            raise NumericalError(
                f"non-finite batch loss (label={loss_y.item()}, domain={loss_d.item()})"
            )
        total = ad.add(loss_y, loss_d)
        graph = ad.ComputeGraph.trace(total)
        ad.backward(graph, total)
        grads = {
            key: (
                fw.param_tensors[key].grad
                if fw.param_tensors[key].grad is not None
                else np.zeros_like(params.weights[key])
            )
            for key in params.parameter_keys()
        }
        params, state = adamw_step(
            params,
            grads,
            state,
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            weight_decay=config.weight_decay,
            eps=config.adam_eps,
        )
        lacc, dacc = _accuracy(fw.label_prob.values[:, 0], fw.domain_prob.values, yb, db)
        nb = batch.size
        totals["label_loss"] += loss_y.item() * nb
        totals["domain_loss"] += loss_d.item() * nb
        totals["label_hits"] += lacc * nb
        totals["domain_hits"] += dacc * nb
        seen += nb
    if seen == 0:
        raise ContractError("all batches were dropped; indices too small")
    metrics = {
        "label_loss": totals["label_loss"] / seen,
        "domain_loss": totals["domain_loss"] / seen,
        "label_acc": totals["label_hits"] / seen,
        "domain_acc": totals["domain_hits"] / seen,
    }
    return params, state, metrics


def evaluate(params: DannParams, dataset: Dataset, indices: np.ndarray) -> dict:
    """Eval-mode metrics (running-stat batchnorm, no dropout)."""
    indices = np.asarray(indices)
    label_prob, domain_prob = predict_probabilities(params, dataset.X[indices])
    y = dataset.label[indices]
    d = dataset.domain[indices]
    lacc, dacc = _accuracy(label_prob, domain_prob, y, d)
    return {
        "label_loss": ad.bce_value(label_prob.reshape(-1, 1), y.reshape(-1, 1)),
        "domain_loss": ad.ce_value(domain_prob, d),
        "label_acc": lacc,
        "domain_acc": dacc,
    }


def _train_split(
    dataset: Dataset,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    train_cfg: TrainConfig,
    dann_cfg: DannConfig,
    rng_label,
    snapshot_epochs=(),
) -> tuple[DannParams, list[EpochRecord], dict[int, dict[str, ActivationMatrix]]]:
    init_rng = spawn_rng(train_cfg.seed, rng_label, "init")
    epoch_rng = spawn_rng(train_cfg.seed, rng_label, "epochs")
    params = init_params(dann_cfg, init_rng)
    state = OptimizerState.create(params)
    records: list[EpochRecord] = []
    snapshots: dict[int, dict[str, ActivationMatrix]] = {}
    snapshot_set = set(snapshot_epochs)
    for epoch in range(1, train_cfg.epochs + 1):
        params, state, train_metrics = train_epoch(
            params, state, dataset, train_idx, train_cfg, epoch_rng
        )
        val_metrics = evaluate(params, dataset, val_idx)
        records.append(
            EpochRecord(
                epoch=epoch,
                label_loss_train=train_metrics["label_loss"],
                label_acc_train=train_metrics["label_acc"],
                domain_loss_train=train_metrics["domain_loss"],
                domain_acc_train=train_metrics["domain_acc"],
                label_loss_val=val_metrics["label_loss"],
                label_acc_val=val_metrics["label_acc"],
                domain_loss_val=val_metrics["domain_loss"],
                domain_acc_val=val_metrics["domain_acc"],
            )
        )
        if epoch in snapshot_set:
            mats = capture_activations(params, dataset.X, CAPTURE_LAYERS, epoch=epoch)
            snapshots[epoch] = {m.layer_id: m for m in mats}
    return params, records, snapshots


def run_cv(
    dataset: Dataset, config: TrainConfig, dann_config: DannConfig | None = None
) -> list[list[EpochRecord]]:
    """Train from a fresh init per fold; every fold records train/val metrics
    for every epoch."""
    if config.folds < 2:
        raise ContractError(f"cross-validation needs folds >= 2, got {config.folds}")
    check_stratifiable(dataset)
    dann_config = dann_config or default_dann_config(dataset, config)
    folds = stratified_kfold(dataset.label, config.folds, config.seed)
    all_records: list[list[EpochRecord]] = []
    for fold_idx, (train_idx, val_idx) in enumerate(folds):
        _, records, _ = _train_split(
            dataset, train_idx, val_idx, config, dann_config, ("fold", fold_idx)
        )
        all_records.append(records)
    return all_records


def cv_mean_std(fold_records: list[list[EpochRecord]]) -> dict[str, np.ndarray]:
    """Mean and std across folds for each metric series."""
    metrics = (
        "label_loss_train", "label_acc_train", "domain_loss_train", "domain_acc_train",
        "label_loss_val", "label_acc_val", "domain_loss_val", "domain_acc_val",
    )
    out: dict[str, np.ndarray] = {}
    for name in metrics:
        stacked = np.array([[getattr(r, name) for r in fold] for fold in fold_records])
        out[f"{name}_mean"] = stacked.mean(axis=0)
        out[f"{name}_std"] = stacked.std(axis=0)
    return out


@dataclass
class TrainingRecord:
    params: DannParams
    records: list[EpochRecord]
    snapshots: dict[int, dict[str, ActivationMatrix]]
    train_idx: np.ndarray
    val_idx: np.ndarray


def default_dann_config(dataset: Dataset, config: TrainConfig, **overrides) -> DannConfig:
    fields = dict(
        input_dim=dataset.n_features,
        n_domains=dataset.n_domains,
        grl_lambda=config.grl_lambda,
    )
    fields.update(overrides)
    return DannConfig(**fields)


def run_training_with_snapshots(
    dataset: Dataset,
    config: TrainConfig,
    snapshot_epochs,
    dann_config: DannConfig | None = None,
) -> TrainingRecord:
    """80/20 label-stratified split; captures the three named layers on the
    full dataset at each snapshot epoch."""
    snapshot_epochs = sorted(set(int(e) for e in snapshot_epochs))
    bad = [e for e in snapshot_epochs if e < 1 or e > config.epochs]
    if bad:
        raise ContractError(
            f"snapshot epochs {bad} outside [1, {config.epochs}]"
        )
    check_stratifiable(dataset)
    dann_config = dann_config or default_dann_config(dataset, config)
    train_idx, val_idx = stratified_kfold(dataset.label, 5, config.seed)[0]
    params, records, snapshots = _train_split(
        dataset, train_idx, val_idx, config, dann_config, ("snapshot-run",),
        snapshot_epochs=snapshot_epochs,
    )
    return TrainingRecord(params, records, snapshots, train_idx, val_idx)


# ---------------------------------------------------------------------------
# artifact io


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(path, fold_records: list[list[EpochRecord]]) -> None:
    """Columns: epoch, fold, split, label_loss, label_acc, domain_loss, domain_acc."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "fold", "split", "label_loss", "label_acc", "domain_loss", "domain_acc"]
        )
        for fold_idx, records in enumerate(fold_records):
            for r in records:
                writer.writerow(
                    [r.epoch, fold_idx, "train", _fmt(r.label_loss_train),
                     _fmt(r.label_acc_train), _fmt(r.domain_loss_train), _fmt(r.domain_acc_train)]
                )
                writer.writerow(
                    [r.epoch, fold_idx, "val", _fmt(r.label_loss_val),
                     _fmt(r.label_acc_val), _fmt(r.domain_loss_val), _fmt(r.domain_acc_val)]
                )


def read_metrics_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def write_snapshots(
    directory, snapshots: dict[int, dict[str, ActivationMatrix]], sample_ids
) -> list[Path]:
    """Layout: epoch_<E>/<layer_id>.csv, one row per sample."""
    directory = Path(directory)
    written = []
    for epoch in sorted(snapshots):
        epoch_dir = directory / f"epoch_{epoch}"
        epoch_dir.mkdir(parents=True, exist_ok=True)
        for layer_id in sorted(snapshots[epoch]):
            mat = snapshots[epoch][layer_id]
            out = epoch_dir / f"{layer_id}.csv"
            with out.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["sample_id"] + [f"h{j:04d}" for j in range(mat.values.shape[1])]
                )
                for sid, row in zip(sample_ids, mat.values):
                    writer.writerow([sid] + [_fmt(v) for v in row])
            written.append(out)
    return written


def read_activation_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, np.asarray(rows)
