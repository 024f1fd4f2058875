"""Stage orchestration: data -> train -> attribute -> embed -> score ->
leiden -> stratify -> report.

Every stage reads only on-disk artifacts plus the config, derives its
randomness from (global seed, stage name), and writes byte-deterministic
CSV/JSON, so a stage can be deleted and re-run in isolation with identical
output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribution import (
    read_attribution_csv,
    select_background,
    surrogate_attributions,
    train_surrogate,
    vanilla_explain,
    violin_transform,
    write_attribution_csv,
    write_attribution_meta,
)
from .data import (
    Dataset,
    SynthConfig,
    load_expression_csv,
    log_transform,
    save_dataset_csv,
    save_metadata_json,
    synth_generate,
)
from .embedding import effective_neighbors, embed_2d, pca
from .errors import ConfigError, MissingArtifactError
from .graph import knn_graph, leiden
from .metrics import ScoreCurve, score_embeddings, silhouette
from .nn import CAPTURE_LAYERS, load_checkpoint, save_checkpoint
from .seeding import spawn_rng
from .training import (
    TrainConfig,
    default_dann_config,
    read_activation_csv,
    run_cv,
    run_training_with_snapshots,
    write_metrics_csv,
    write_snapshots,
)

_DEF_SNAPSHOTS = (1, 5, 10, 25, 50, 75, 100, 150)


@dataclass
class PipelineConfig:
    """Parsed run configuration; every stage derives from this plus the
    global seed (no implicit entropy anywhere)."""

    data: dict
    seed: int
    train: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    attribution: dict = field(default_factory=dict)
    manifold: dict = field(default_factory=dict)
    stratify: dict = field(default_factory=dict)
    snapshot_epochs: tuple = _DEF_SNAPSHOTS
    out_dir: str | None = None

    @classmethod
    def from_json(cls, path, seed_override: int | None = None) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        if "data" not in raw:
            raise ConfigError("config is missing the 'data' section")
        seed = seed_override if seed_override is not None else raw.get("seed")
        if seed is None:
            raise ConfigError("config must provide a seed (no implicit entropy)")
        data = raw["data"]
        if "synth" not in data and not ("expression_csv" in data and "labels_csv" in data):
            raise ConfigError(
                "data section needs either 'synth' or 'expression_csv'+'labels_csv'"
            )
        for key in ("expression_csv", "labels_csv"):
            if key in data and not Path(data[key]).exists():
                raise ConfigError(f"data.{key} path {data[key]!r} does not exist")
        cfg = cls(
            data=data,
            seed=int(seed),
            train=dict(raw.get("train", {})),
            model=dict(raw.get("model", {})),
            attribution=dict(raw.get("attribution", {})),
            manifold=dict(raw.get("manifold", {})),
            stratify=dict(raw.get("stratify", {})),
            snapshot_epochs=tuple(raw.get("snapshot_epochs", _DEF_SNAPSHOTS)),
            out_dir=raw.get("out_dir"),
        )
        try:
            cfg.train_config()
        except TypeError as exc:
            raise ConfigError(f"invalid train section: {exc}") from exc
        return cfg

    def train_config(self) -> TrainConfig:
        known = dict(self.train)
        known.pop("cv", None)
        return TrainConfig(seed=spawn_seed(self.seed, "train"), **known)

    def echo(self) -> dict:
        return {
            "data": self.data,
            "seed": self.seed,
            "train": self.train,
            "model": self.model,
            "attribution": self.attribution,
            "manifold": self.manifold,
            "stratify": self.stratify,
            "snapshot_epochs": list(self.snapshot_epochs),
        }

    # ----- attribution / manifold settings with defaults

    def attr(self, key, default):
        return self.attribution.get(key, default)

    def mani(self, key, default):
        return self.manifold.get(key, default)


def spawn_seed(seed: int, *labels) -> int:
    """Stage-specific integer sub-seed."""
    return int(spawn_rng(seed, *labels).integers(0, 2**31 - 1))


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run `advrep {producer}` first"
        )
    return path


def _json_dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# dataset handling


def resolve_dataset(cfg: PipelineConfig, out: Path) -> Dataset:
    """Synth runs read the synth stage's CSVs (byte round-trip keeps the
    whole pipeline a function of the artifacts); CSV runs read the
    configured paths."""
    if "synth" in cfg.data:
        expr = _require(out / "data" / "expression.csv", "synth")
        labels = _require(out / "data" / "labels.csv", "synth")
        meta_path = out / "data" / "synth_meta.json"
        dataset = load_expression_csv(expr, labels)
        if meta_path.exists():
            dataset.metadata.update(json.loads(meta_path.read_text()))
    else:
        dataset = load_expression_csv(cfg.data["expression_csv"], cfg.data["labels_csv"])
    if cfg.data.get("log_transform", False):
        dataset.X = log_transform(dataset.X)
    return dataset


# ---------------------------------------------------------------------------
# stages


def stage_synth(cfg: PipelineConfig, out: Path) -> list[Path]:
    if "synth" not in cfg.data:
        raise ConfigError("cmd_synth needs a data.synth section in the config")
    synth_cfg = SynthConfig(seed=spawn_seed(cfg.seed, "synth"), **cfg.data["synth"])
    dataset = synth_generate(synth_cfg)
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    expr, labels = data_dir / "expression.csv", data_dir / "labels.csv"
    save_dataset_csv(dataset, expr, labels)
    meta = data_dir / "synth_meta.json"
    save_metadata_json(dataset.metadata, meta)
    return [expr, labels, meta]


def stage_train(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    train_cfg = cfg.train_config()
    dann_cfg = default_dann_config(dataset, train_cfg, **cfg.model)
    snapshots = [e for e in cfg.snapshot_epochs if e <= train_cfg.epochs]
    record = run_training_with_snapshots(dataset, train_cfg, snapshots, dann_cfg)
    train_dir = out / "train"
    train_dir.mkdir(parents=True, exist_ok=True)
    written = [train_dir / "metrics.csv", train_dir / "checkpoint.json"]
    fold_records = [record.records]
    if cfg.train.get("cv"):
        fold_records = run_cv(dataset, train_cfg, dann_cfg)
    write_metrics_csv(written[0], fold_records)
    save_checkpoint(record.params, written[1])
    written += write_snapshots(train_dir / "snapshots", record.snapshots, dataset.sample_ids)
    split = {"train_idx": record.train_idx.tolist(), "val_idx": record.val_idx.tolist()}
    split_path = train_dir / "split.json"
    _json_dump(split, split_path)
    written.append(split_path)
    return written


def _snapshot_epochs_on_disk(out: Path) -> list[int]:
    snap_dir = _require(out / "train" / "snapshots", "train")
    return sorted(int(p.name.split("_")[1]) for p in snap_dir.glob("epoch_*"))


def stage_attribute(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    params = load_checkpoint(_require(out / "train" / "checkpoint.json", "train"))
    split = json.loads(_require(out / "train" / "split.json", "train").read_text())
    train_idx = np.asarray(split["train_idx"])
    background = select_background(
        dataset.X[train_idx],
        dataset.label[train_idx],
        size=cfg.attr("background_size", 50),
        seed=spawn_seed(cfg.seed, "background"),
    )
    attr_dir = out / "attribute"
    attr_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    method = cfg.attr("vanilla_method", "kernel_shap")
    vanilla = vanilla_explain(
        params,
        dataset,
        background,
        method=method,
        n_coalitions=cfg.attr("vanilla_coalitions", 512),
        ig_steps=cfg.attr("ig_steps", 256),
        seed=spawn_seed(cfg.seed, "vanilla"),
    )
    vanilla_csv = attr_dir / "vanilla.csv"
    write_attribution_csv(vanilla, vanilla_csv)
    write_attribution_meta(
        vanilla, attr_dir / "vanilla.meta.json", background_policy=background.policy
    )
    written += [vanilla_csv, attr_dir / "vanilla.meta.json"]

    layers = cfg.attr("layers", list(CAPTURE_LAYERS))
    surrogate_cfg = cfg.attr("surrogate", {})
    n_coalitions = cfg.attr("surrogate_coalitions", 256)
    for epoch in _snapshot_epochs_on_disk(out):
        epoch_dir = attr_dir / f"epoch_{epoch}"
        epoch_dir.mkdir(parents=True, exist_ok=True)
        for layer in layers:
            act_path = _require(
                out / "train" / "snapshots" / f"epoch_{epoch}" / f"{layer}.csv", "train"
            )
            _, activations = read_activation_csv(act_path)
            model = train_surrogate(activations, dataset.label, **surrogate_cfg)
            act_background = select_background(
                activations[train_idx],
                dataset.label[train_idx],
                size=cfg.attr("background_size", 50),
                seed=spawn_seed(cfg.seed, "background", layer, epoch),
            )
            shap = surrogate_attributions(
                model,
                activations,
                act_background,
                n_coalitions=n_coalitions,
                seed=spawn_seed(cfg.seed, "surrogate", layer, epoch),
            )
            shap.sample_ids = list(dataset.sample_ids)
            out_csv = epoch_dir / f"{layer}.csv"
            write_attribution_csv(shap, out_csv)
            write_attribution_meta(
                shap, epoch_dir / f"{layer}.meta.json",
                background_policy=act_background.policy, epoch=epoch, layer=layer,
            )
            written += [out_csv, epoch_dir / f"{layer}.meta.json"]
    return written


def _embed_matrix(cfg: PipelineConfig, matrix, label) -> np.ndarray:
    emb = embed_2d(
        matrix,
        n_neighbors=cfg.mani("n_neighbors", 30),
        min_dist=cfg.mani("min_dist", 0.3),
        epochs=cfg.mani("layout_epochs", 200),
        seed=spawn_seed(cfg.seed, "embed"),
        provenance_label=label,
    )
    return emb.coords


def _write_embedding_csv(path: Path, sample_ids, coords) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "x", "y"])
        for sid, (xv, yv) in zip(sample_ids, coords):
            writer.writerow([sid, _fmt(xv), _fmt(yv)])


def read_embedding_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(row[1]), float(row[2])])
    return ids, np.asarray(rows)


def stage_embed(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    embed_dir = out / "embed"
    layers = cfg.attr("layers", list(CAPTURE_LAYERS))
    written: list[Path] = []

    # input-space manifold: (optional log) -> PCA -> 2-D layout
    reduced = pca(dataset.X, min(cfg.mani("pca_dims", 50), *dataset.X.shape)).scores
    coords = _embed_matrix(cfg, reduced, ("input",))
    input_csv = embed_dir / "input.csv"
    _write_embedding_csv(input_csv, dataset.sample_ids, coords)
    written.append(input_csv)

    vanilla_csv = _require(out / "attribute" / "vanilla.csv", "attribute")
    ids, _, vanilla_values = read_attribution_csv(vanilla_csv)
    coords = _embed_matrix(cfg, vanilla_values, ("vanilla",))
    vanilla_emb = embed_dir / "vanilla.csv"
    _write_embedding_csv(vanilla_emb, ids, coords)
    written.append(vanilla_emb)

    for epoch in _snapshot_epochs_on_disk(out):
        for layer in layers:
            act_path = _require(
                out / "train" / "snapshots" / f"epoch_{epoch}" / f"{layer}.csv", "train"
            )
            _, activations = read_activation_csv(act_path)
            coords = _embed_matrix(cfg, activations, ("activations", layer, epoch))
            target = embed_dir / f"epoch_{epoch}" / f"activations_{layer}.csv"
            _write_embedding_csv(target, dataset.sample_ids, coords)
            written.append(target)

            shap_path = _require(
                out / "attribute" / f"epoch_{epoch}" / f"{layer}.csv", "attribute"
            )
            _, _, shap_values = read_attribution_csv(shap_path)
            coords = _embed_matrix(cfg, shap_values, ("attributions", layer, epoch))
            target = embed_dir / f"epoch_{epoch}" / f"attributions_{layer}.csv"
            _write_embedding_csv(target, dataset.sample_ids, coords)
            written.append(target)
    return written


def stage_score(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    epochs = _snapshot_epochs_on_disk(out)
    layers = cfg.attr("layers", list(CAPTURE_LAYERS))
    embeddings: dict = {}
    for layer in layers:
        for source in ("activations", "attributions"):
            per_epoch = []
            for epoch in epochs:
                path = _require(
                    out / "embed" / f"epoch_{epoch}" / f"{source}_{layer}.csv", "embed"
                )
                per_epoch.append(read_embedding_csv(path)[1])
            embeddings[(source, layer)] = per_epoch
    curves = score_embeddings(
        embeddings,
        epochs,
        {"label": dataset.label, "domain": dataset.domain},
        lowess_frac=cfg.mani("lowess_frac", 0.3),
    )
    score_dir = out / "score"
    score_dir.mkdir(parents=True, exist_ok=True)
    path = score_dir / "scores.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "layer", "source", "label_kind", "metric", "raw", "normalized", "smoothed"]
        )
        for curve in curves:
            for i, epoch in enumerate(curve.epochs):
                writer.writerow(
                    [epoch, curve.layer_id, curve.source, curve.label_kind, curve.metric,
                     _fmt(curve.raw[i]), _fmt(curve.normalized[i]), _fmt(curve.smoothed[i])]
                )
    return [path]


def read_scores_csv(path) -> list[ScoreCurve]:
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    grouped: dict = {}
    for row in rows:
        key = (row["source"], row["layer"], row["label_kind"], row["metric"])
        grouped.setdefault(key, []).append(row)
    curves = []
    for (source, layer, label_kind, metric), entries in sorted(grouped.items()):
        entries.sort(key=lambda r: int(r["epoch"]))
        curves.append(
            ScoreCurve(
                source=source, layer_id=layer, label_kind=label_kind, metric=metric,
                epochs=[int(r["epoch"]) for r in entries],
                raw=[float(r["raw"]) for r in entries],
                normalized=[float(r["normalized"]) for r in entries],
                smoothed=[float(r["smoothed"]) for r in entries],
            )
        )
    return curves


def stage_leiden(cfg: PipelineConfig, out: Path) -> list[Path]:
    layer = cfg.mani("leiden_layer", "feature_extractor.dropout1")
    epochs = _snapshot_epochs_on_disk(out)
    final_epoch = max(epochs)
    emb_path = _require(
        out / "embed" / f"epoch_{final_epoch}" / f"attributions_{layer}.csv", "embed"
    )
    ids, coords = read_embedding_csv(emb_path)
    k = effective_neighbors(cfg.mani("knn_neighbors", 400), coords.shape[0])
    graph = knn_graph(coords, k)
    assignment = leiden(
        graph, cfg.mani("resolution", 0.3), seed=spawn_seed(cfg.seed, "leiden")
    )
    leiden_dir = out / "leiden"
    leiden_dir.mkdir(parents=True, exist_ok=True)
    clusters = leiden_dir / "clusters.csv"
    with clusters.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "cluster"])
        for sid, cid in zip(ids, assignment.ids):
            writer.writerow([sid, int(cid)])
    meta = leiden_dir / "meta.json"
    _json_dump(
        {
            "n_clusters": assignment.n_clusters,
            "quality": assignment.quality,
            "resolution": assignment.resolution,
            "n_neighbors": k,
            "source_embedding": str(emb_path.relative_to(out)),
            "layer": layer,
            "epoch": final_epoch,
        },
        meta,
    )
    return [clusters, meta]


def read_clusters_csv(path) -> tuple[list[str], np.ndarray]:
    ids, cids = [], []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ids.append(row[0])
            cids.append(int(row[1]))
    return ids, np.asarray(cids, dtype=np.int64)


def _macro_f1(y_true, y_pred, classes) -> tuple[float, dict]:
    per_cluster = {}
    f1s = []
    for cls in classes:
        tp = int(np.sum((y_pred == cls) & (y_true == cls)))
        fp = int(np.sum((y_pred == cls) & (y_true != cls)))
        fn = int(np.sum((y_pred != cls) & (y_true == cls)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_cluster[str(int(cls))] = {
            "precision": precision, "recall": recall, "f1": f1,
            "support": int(np.sum(y_true == cls)),
        }
        f1s.append(f1)
    return float(np.mean(f1s)), per_cluster


def stage_stratify(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    ids, clusters = read_clusters_csv(
        _require(out / "leiden" / "clusters.csv", "leiden")
    )
    if ids != list(dataset.sample_ids):
        raise ConfigError("cluster assignment does not match the dataset sample ids")
    seed = spawn_seed(cfg.seed, "stratify")
    # 70/30 split stratified by the outcome label (not the cluster)
    eval_fraction = cfg.stratify.get("eval_fraction", 0.3)
    rng = spawn_rng(seed, "split")
    n = dataset.n_samples
    eval_mask = np.zeros(n, dtype=bool)
    for cls in np.unique(dataset.label):
        idx = np.flatnonzero(dataset.label == cls)
        take = int(round(eval_fraction * idx.size))
        eval_mask[idx[rng.permutation(idx.size)[:take]]] = True
    train_rows = np.flatnonzero(~eval_mask)
    eval_rows = np.flatnonzero(eval_mask)

    present = np.unique(clusters[train_rows])
    excluded = sorted(set(np.unique(clusters).tolist()) - set(present.tolist()))
    warnings_out = []
    if excluded:
        warnings_out.append(
            f"clusters {excluded} absent from the training split; excluded"
        )
    surrogate_cfg = cfg.stratify.get("surrogate", cfg.attr("surrogate", {}))
    model = train_surrogate(
        dataset.X[train_rows], clusters[train_rows], **surrogate_cfg
    )
    eval_in_scope = eval_rows[np.isin(clusters[eval_rows], present)]
    predictions = model.predict(dataset.X[eval_in_scope])
    macro_f1, per_cluster = _macro_f1(clusters[eval_in_scope], predictions, present)

    control_macro_f1 = None
    if cfg.stratify.get("compute_control", True):
        control_rng = spawn_rng(seed, "control")
        shuffled = clusters.copy()
        control_rng.shuffle(shuffled)
        control_model = train_surrogate(
            dataset.X[train_rows], shuffled[train_rows], **surrogate_cfg
        )
        control_present = np.unique(shuffled[train_rows])
        control_eval = eval_rows[np.isin(shuffled[eval_rows], control_present)]
        control_macro_f1, _ = _macro_f1(
            shuffled[control_eval],
            control_model.predict(dataset.X[control_eval]),
            control_present,
        )

    top_k = int(cfg.stratify.get("top_k", 10))
    per_cluster_cap = int(cfg.stratify.get("max_explained_per_cluster", 40))
    driver_coalitions = int(cfg.stratify.get("driver_coalitions",
                                             max(2 * dataset.n_features + 4, 256)))
    background = select_background(
        dataset.X[train_rows], dataset.label[train_rows],
        size=cfg.attr("background_size", 50), seed=spawn_seed(seed, "bg"),
    )
    drivers = {}
    violin = {}
    for pos, cluster_id in enumerate(present.tolist()):
        members = eval_in_scope[clusters[eval_in_scope] == cluster_id]
        if members.size == 0:
            continue
        members = members[:per_cluster_cap]
        shap = surrogate_attributions(
            model,
            dataset.X[members],
            background,
            n_coalitions=driver_coalitions,
            seed=spawn_seed(seed, "drivers", int(cluster_id)),
            class_index=pos,
            feature_names=dataset.feature_names,
        )
        mean_abs = np.abs(shap.values).mean(axis=0)
        order = np.argsort(-mean_abs, kind="stable")[:top_k]
        drivers[str(int(cluster_id))] = [
            {"feature": dataset.feature_names[j], "mean_abs_phi": float(mean_abs[j])}
            for j in order
        ]
        transformed = violin_transform(shap.values[:, order])
        violin[str(int(cluster_id))] = {
            "features": [dataset.feature_names[j] for j in order],
            "transformed_values": [[float(v) for v in col] for col in transformed.T],
            "alpha": -2.0,
            "base": 10.0,
        }

    stratify_dir = out / "stratify"
    stratify_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "macro_f1": macro_f1,
        "control_macro_f1": control_macro_f1,
        "per_cluster": per_cluster,
        "n_clusters": int(np.unique(clusters).size),
        "excluded_clusters": excluded,
        "warnings": warnings_out,
        "eval_fraction": eval_fraction,
        "n_train": int(train_rows.size),
        "n_eval": int(eval_rows.size),
    }
    report_path = stratify_dir / "report.json"
    drivers_path = stratify_dir / "drivers.json"
    violin_path = stratify_dir / "violin.json"
    _json_dump(report, report_path)
    _json_dump(drivers, drivers_path)
    _json_dump(violin, violin_path)
    return [report_path, drivers_path, violin_path]


# ---------------------------------------------------------------------------
# report

REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "artifacts", "summary", "missing_stages"],
    "properties": {
        "config": {"type": "object"},
        "artifacts": {"type": "object"},
        "missing_stages": {"type": "array", "items": {"type": "string"}},
        "summary": {
            "type": "object",
            "required": ["final_metrics", "silhouettes", "leiden", "stratify"],
            "properties": {
                "final_metrics": {"type": "object"},
                "silhouettes": {"type": "object"},
                "leiden": {"type": "object"},
                "stratify": {"type": "object"},
                "top_drivers": {"type": "object"},
            },
        },
        "figures": {"type": "object"},
    },
}


def validate_report(report: dict, schema: dict = REPORT_SCHEMA, path: str = "$") -> None:
    """Minimal JSON-schema check (type/required/items subset)."""
    expected = schema.get("type")
    type_map = {"object": dict, "array": list, "string": str, "number": (int, float)}
    if expected is not None and not isinstance(report, type_map[expected]):
        raise ConfigError(f"report{path}: expected {expected}")
    if expected == "object":
        for key in schema.get("required", []):
            if key not in report:
                raise ConfigError(f"report{path}: missing required key {key!r}")
        for key, sub in schema.get("properties", {}).items():
            if key in report:
                validate_report(report[key], sub, f"{path}.{key}")
    if expected == "array" and "items" in schema:
        for i, item in enumerate(report):
            validate_report(item, schema["items"], f"{path}[{i}]")


def stage_report(cfg: PipelineConfig, out: Path) -> list[Path]:
    dataset = resolve_dataset(cfg, out)
    missing = []
    artifacts: dict[str, list[str]] = {}
    for stage, rel in (
        ("synth", "data"), ("train", "train"), ("attribute", "attribute"),
        ("embed", "embed"), ("score", "score"), ("leiden", "leiden"),
        ("stratify", "stratify"),
    ):
        stage_dir = out / rel
        if stage_dir.exists():
            artifacts[stage] = sorted(
                str(p.relative_to(out)) for p in stage_dir.rglob("*") if p.is_file()
            )
        else:
            missing.append(stage)

    summary: dict = {"final_metrics": {}, "silhouettes": {}, "leiden": {}, "stratify": {}}
    metrics_path = out / "train" / "metrics.csv"
    if metrics_path.exists():
        rows = [r for r in csv.DictReader(metrics_path.open())]
        val_rows = [r for r in rows if r["split"] == "val"]
        if val_rows:
            last_epoch = max(int(r["epoch"]) for r in val_rows)
            final = [r for r in val_rows if int(r["epoch"]) == last_epoch]
            summary["final_metrics"] = {
                "epoch": last_epoch,
                "label_acc_val": float(np.mean([float(r["label_acc"]) for r in final])),
                "domain_acc_val": float(np.mean([float(r["domain_acc"]) for r in final])),
                "label_loss_val": float(np.mean([float(r["label_loss"]) for r in final])),
                "domain_loss_val": float(np.mean([float(r["domain_loss"]) for r in final])),
            }

    labelings = {"label": dataset.label, "domain": dataset.domain}
    embed_dir = out / "embed"
    if embed_dir.exists():
        epochs = sorted(int(p.name.split("_")[1]) for p in embed_dir.glob("epoch_*"))
        manifold_paths = {"input": embed_dir / "input.csv", "vanilla": embed_dir / "vanilla.csv"}
        if epochs:
            final_epoch = max(epochs)
            for p in (embed_dir / f"epoch_{final_epoch}").glob("*.csv"):
                manifold_paths[f"final_{p.stem}"] = p
        for name, path in sorted(manifold_paths.items()):
            if not path.exists():
                continue
            _, coords = read_embedding_csv(path)
            summary["silhouettes"][name] = {
                kind: float(silhouette(coords, labels))
                for kind, labels in labelings.items()
            }

    leiden_meta = out / "leiden" / "meta.json"
    if leiden_meta.exists():
        summary["leiden"] = json.loads(leiden_meta.read_text())
    stratify_report = out / "stratify" / "report.json"
    if stratify_report.exists():
        summary["stratify"] = json.loads(stratify_report.read_text())
    drivers_path = out / "stratify" / "drivers.json"
    if drivers_path.exists():
        summary["top_drivers"] = json.loads(drivers_path.read_text())

    figures: dict = {}
    scores_path = out / "score" / "scores.csv"
    if scores_path.exists():
        curves = read_scores_csv(scores_path)
        figures["metric_curves"] = [
            {
                "source": c.source, "layer": c.layer_id, "label_kind": c.label_kind,
                "metric": c.metric, "epochs": c.epochs, "raw": c.raw,
                "normalized": c.normalized, "smoothed": c.smoothed,
            }
            for c in curves
        ]
    embeddings_fig = {}
    if embed_dir.exists():
        for path in sorted(embed_dir.rglob("*.csv")):
            ids, coords = read_embedding_csv(path)
            embeddings_fig[str(path.relative_to(embed_dir))] = {
                "sample_ids": ids,
                "x": [float(v) for v in coords[:, 0]],
                "y": [float(v) for v in coords[:, 1]],
            }
    if embeddings_fig:
        figures["embeddings"] = embeddings_fig
        figures["colorings"] = {
            "label": dataset.label.tolist(),
            "domain": dataset.domain.tolist(),
        }
    violin_path = out / "stratify" / "violin.json"
    if violin_path.exists():
        figures["violin"] = json.loads(violin_path.read_text())

    report = {
        "config": cfg.echo(),
        "artifacts": artifacts,
        "missing_stages": missing,
        "summary": summary,
        "figures": figures,
    }
    validate_report(report)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    report_path = report_dir / "report.json"
    figures_path = report_dir / "figures.json"
    _json_dump(report, report_path)
    _json_dump(figures, figures_path)
    return [report_path, figures_path]


STAGES = {
    "synth": stage_synth,
    "train": stage_train,
    "attribute": stage_attribute,
    "embed": stage_embed,
    "score": stage_score,
    "leiden": stage_leiden,
    "stratify": stage_stratify,
    "report": stage_report,
}


def run_stage(stage: str, cfg: PipelineConfig, out) -> list[Path]:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {list(STAGES)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return STAGES[stage](cfg, out)
