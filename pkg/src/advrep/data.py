"""Synthetic domain-confounded data generation and expression-matrix io.

The generator plants two mean-shift signals in Gaussian noise: a large
domain-specific shift on per-domain feature blocks and a smaller label shift
on one feature set shared across domains, so a domain-invariant
representation can still predict labels. The planted feature sets are
recorded in the dataset metadata so attribution output can be scored
against ground truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .validation import check_matrix


@dataclass
class Dataset:
    """Sample-major values plus per-sample domain id and binary outcome."""

    X: np.ndarray
    domain: np.ndarray
    label: np.ndarray
    feature_names: list[str]
    sample_ids: list[str]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = check_matrix(self.X, "X")
        self.domain = np.asarray(self.domain, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)
        n, d = self.X.shape
        if self.domain.shape != (n,) or self.label.shape != (n,):
            raise ContractError("domain/label lengths must match the sample count")
        if len(self.feature_names) != d:
            raise ContractError(
                f"{len(self.feature_names)} feature names for {d} columns"
            )
        if len(self.sample_ids) != n:
            raise ContractError(f"{len(self.sample_ids)} sample ids for {n} rows")
        if np.any(self.domain < 0):
            raise ContractError("domain ids must be non-negative")
        if not np.all((self.label == 0) | (self.label == 1)):
            raise ContractError("labels must be binary 0/1")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_domains(self) -> int:
        return int(self.domain.max()) + 1


def check_stratifiable(dataset: "Dataset") -> None:
    """Training-entry guard: every domain and label class needs >= 2 samples."""
    for name, vec in (("domain", dataset.domain), ("label", dataset.label)):
        _, counts = np.unique(vec, return_counts=True)
        if counts.min() < 2:
            raise ContractError(
                f"every {name} class needs >= 2 samples for stratification"
            )


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs. domain_effect must dominate label_effect; label_rate
    may be a single float or one rate per domain (imbalance support)."""

    n_per_domain: int = 200
    n_domains: int = 6
    n_features: int = 200
    domain_effect: float = 3.0
    label_effect: float = 0.75
    label_rate: float | tuple = 0.7
    noise_sd: float = 1.0
    domain_subset_size: int = 10
    label_subset_size: int = 12
    disjoint_subsets: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_domains < 2:
            raise ContractError(f"n_domains must be >= 2, got {self.n_domains}")
        if self.n_per_domain < 4:
            raise ContractError("n_per_domain must be >= 4")
        if not (self.domain_effect > self.label_effect >= 0):
            raise ContractError(
                "need domain_effect > label_effect >= 0, got "
                f"{self.domain_effect} / {self.label_effect}"
            )
        if self.noise_sd <= 0:
            raise ContractError("noise_sd must be positive")
        rates = self.rates()
        if len(rates) != self.n_domains:
            raise ContractError(
                f"label_rate needs 1 or {self.n_domains} entries, got {len(rates)}"
            )
        if any(not (0.0 < r < 1.0) for r in rates):
            raise ContractError("label rates must lie strictly inside (0, 1)")
        needed = self.n_domains * self.domain_subset_size + self.label_subset_size
        if self.disjoint_subsets and needed > self.n_features:
            raise ContractError(
                f"disjoint subsets need {needed} features, have {self.n_features}"
            )

    def rates(self) -> tuple[float, ...]:
        if isinstance(self.label_rate, (int, float)):
            return tuple([float(self.label_rate)] * self.n_domains)
        return tuple(float(r) for r in self.label_rate)


def synth_generate(config: SynthConfig) -> Dataset:
    """Noise + per-domain mean shifts (large) + shared label shift (small).

    Label counts per domain are exact (round(rate * n)), which keeps the
    configured imbalance deterministic. Feature layout with disjoint
    subsets: domain blocks first, then the label block, then pure noise.
    """
    rng = np.random.default_rng(config.seed)
    k, n_dom, d = config.n_domains, config.n_per_domain, config.n_features
    n = k * n_dom
    X = rng.normal(0.0, config.noise_sd, size=(n, d))
    domain = np.repeat(np.arange(k), n_dom)

    domain_features = {
        dom: list(range(dom * config.domain_subset_size,
                        (dom + 1) * config.domain_subset_size))
        for dom in range(k)
    }
    if config.disjoint_subsets:
        start = k * config.domain_subset_size
        label_features = list(range(start, start + config.label_subset_size))
    else:
        # overlapping mode: label-informative features live INSIDE the domain
        # blocks (spread evenly), so the dominant domain signal rides on the
        # very features that carry the label shift — the confounding premise
        label_features = []
        per_block = -(-config.label_subset_size // k)
        for dom in range(k):
            block = domain_features[dom]
            label_features.extend(block[: min(per_block, len(block))])
        label_features = sorted(label_features[: config.label_subset_size])

    label = np.zeros(n, dtype=np.int64)
    for dom, rate in enumerate(config.rates()):
        rows = np.flatnonzero(domain == dom)
        X[np.ix_(rows, domain_features[dom])] += config.domain_effect
        n_pos = int(round(rate * rows.size))
        n_pos = min(max(n_pos, 2), rows.size - 2)
        chosen = rows[rng.permutation(rows.size)[:n_pos]]
        label[chosen] = 1
    X[np.ix_(np.flatnonzero(label == 1), label_features)] += config.label_effect

    return Dataset(
        X=X,
        domain=domain,
        label=label,
        feature_names=[f"g{j:04d}" for j in range(d)],
        sample_ids=[f"s{i:04d}" for i in range(n)],
        metadata={
            "label_features": label_features,
            "domain_features": {str(k_): v for k_, v in domain_features.items()},
            "generator_seed": config.seed,
        },
    )


def collapse_duplicate_genes(X, feature_names) -> tuple[np.ndarray, list[str]]:
    """Sum columns sharing a name; first-occurrence order kept."""
    X = check_matrix(X, "X")
    seen: dict[str, int] = {}
    order: list[str] = []
    for name in feature_names:
        if name not in seen:
            seen[name] = len(order)
            order.append(name)
    out = np.zeros((X.shape[0], len(order)))
    for col, name in enumerate(feature_names):
        out[:, seen[name]] += X[:, col]
    return out, order


def log_transform(X) -> np.ndarray:
    """Elementwise ln(1 + x); rejects negative entries."""
    X = check_matrix(X, "X")
    if np.any(X < 0):
        i, j = np.argwhere(X < 0)[0]
        raise ContractError(f"log_transform: negative entry at row {i}, column {j}")
    return np.log1p(X)


# ---------------------------------------------------------------------------
# csv io


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset_csv(dataset: Dataset, expression_path, labels_path) -> None:
    """Expression CSV: sample_id + one column per feature. Labels CSV:
    sample_id, domain, label — its row order defines the dataset order."""
    with Path(expression_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + list(dataset.feature_names))
        for sid, row in zip(dataset.sample_ids, dataset.X):
            writer.writerow([sid] + [_fmt(v) for v in row])
    with Path(labels_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "domain", "label"])
        for sid, dom, lab in zip(dataset.sample_ids, dataset.domain, dataset.label):
            writer.writerow([sid, int(dom), int(lab)])


def load_expression_csv(expression_path, labels_path) -> Dataset:
    """Align an expression matrix with its labels file; the labels file's
    row order wins. Domains may be arbitrary strings and are encoded in
    sorted order; labels must parse as 0/1."""
    expression_path = Path(expression_path)
    labels_path = Path(labels_path)
    with expression_path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{expression_path}: empty file") from None
        if len(header) < 2 or header[0] != "sample_id":
            raise ParseError(
                f"{expression_path}: header must start with 'sample_id' "
                "followed by feature names"
            )
        feature_names = header[1:]
        rows: dict[str, np.ndarray] = {}
        for r, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{expression_path}: row {r} has {len(row)} cells, "
                    f"expected {len(header)}"
                )
            sid = row[0]
            if sid in rows:
                raise ParseError(f"{expression_path}: duplicate sample id {sid!r} at row {r}")
            values = np.empty(len(feature_names))
            for c, cell in enumerate(row[1:], start=2):
                try:
                    values[c - 2] = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{expression_path}: non-numeric cell at row {r}, column {c}"
                    ) from None
            rows[sid] = values

    sample_ids: list[str] = []
    domains_raw: list[str] = []
    labels: list[int] = []
    with labels_path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["sample_id", "domain", "label"]:
            raise ParseError(
                f"{labels_path}: header must be sample_id,domain,label"
            )
        for r, row in enumerate(reader, start=2):
            if len(row) < 3:
                raise ParseError(f"{labels_path}: row {r} has {len(row)} cells, expected 3")
            sid = row[0]
            if sid in sample_ids:
                raise ParseError(f"{labels_path}: duplicate sample id {sid!r} at row {r}")
            if sid not in rows:
                raise ParseError(
                    f"{labels_path}: unknown sample id {sid!r} at row {r} "
                    "(not present in the expression file)"
                )
            if row[2] not in ("0", "1"):
                raise ParseError(
                    f"{labels_path}: label must be 0 or 1 at row {r}, got {row[2]!r}"
                )
            sample_ids.append(sid)
            domains_raw.append(row[1])
            labels.append(int(row[2]))

    unlabeled = sorted(set(rows) - set(sample_ids))
    if unlabeled:
        raise ParseError(
            f"missing label row for sample id {unlabeled[0]!r} "
            f"({len(unlabeled)} sample(s) without labels)"
        )
    domain_names = sorted(set(domains_raw))
    encoding = {name: i for i, name in enumerate(domain_names)}
    return Dataset(
        X=np.vstack([rows[sid] for sid in sample_ids]),
        domain=np.array([encoding[d] for d in domains_raw], dtype=np.int64),
        label=np.array(labels, dtype=np.int64),
        feature_names=feature_names,
        sample_ids=sample_ids,
        metadata={"domain_names": domain_names},
    )


def save_metadata_json(metadata: dict, path) -> None:
    Path(path).write_text(json.dumps(metadata, sort_keys=True, indent=1))
