"""Three-branch adversarial network: feature extractor, label predictor,
domain classifier, with a gradient-reversal layer feeding the domain branch.

Each hidden block is fc -> batchnorm -> dropout -> leaky ReLU. The label head
ends in a single sigmoid unit; the domain head ends in a softmax over domain
ids. Activation capture returns the block handoff tensors at the three named
points used by the downstream analysis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .validation import check_matrix, check_probability

CAPTURE_LAYERS = (
    "feature_extractor.dropout1",
    "label_predictor.dropout2",
    "domain_classifier.dropout2",
)

CHECKPOINT_FORMAT = "advrep-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DannConfig:
    """Architecture hyperparameters. hidden_dim defaults to the desk value 64;
    the full-scale value (1000) is supported but not the test default."""

    input_dim: int
    n_domains: int
    hidden_dim: int = 64
    dropout_p: float = 0.1
    leaky_slope: float = 0.01
    grl_lambda: float = 0.01

    def __post_init__(self):
        if self.input_dim < 1:
            raise ContractError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.n_domains < 2:
            raise ContractError(f"n_domains must be >= 2, got {self.n_domains}")
        if self.hidden_dim < 1:
            raise ContractError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        check_probability(self.dropout_p, "dropout_p")
        if not (0.0 < self.leaky_slope < 1.0):
            raise ContractError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.grl_lambda < 0:
            raise ContractError(f"grl_lambda must be >= 0, got {self.grl_lambda}")


def _layer_plan(config: DannConfig) -> list[tuple[str, int, int]]:
    """Canonical (fc name, fan_in, fan_out) list; the key order is the
    checkpoint and optimizer contract."""
    h = config.hidden_dim
    return [
        ("feature_extractor.fc1", config.input_dim, h),
        ("label_predictor.fc1", h, h),
        ("label_predictor.fc2", h, h),
        ("label_predictor.fc3", h, 1),
        ("domain_classifier.fc1", h, h),
        ("domain_classifier.fc2", h, h),
        ("domain_classifier.fc3", h, config.n_domains),
    ]


_BN_LAYERS = (
    "feature_extractor.bn1",
    "label_predictor.bn1",
    "label_predictor.bn2",
    "domain_classifier.bn1",
    "domain_classifier.bn2",
)


@dataclass
class DannParams:
    """All trainable arrays keyed by canonical layer names, plus batchnorm
    running statistics (buffers, not optimizer targets)."""

    config: DannConfig
    weights: dict[str, np.ndarray]
    bn_states: dict[str, ad.BatchNormState]

    def parameter_keys(self) -> tuple[str, ...]:
        keys: list[str] = []
        for fc, _, _ in _layer_plan(self.config):
            keys.extend([f"{fc}.weight", f"{fc}.bias"])
        for bn in _BN_LAYERS:
            keys.extend([f"{bn}.gamma", f"{bn}.beta"])
        return tuple(keys)

    def copy(self) -> "DannParams":
        return DannParams(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            {k: s.copy() for k, s in self.bn_states.items()},
        )


def init_params(config: DannConfig, rng: np.random.Generator) -> DannParams:
    """He-initialize all linear weights: Normal(0, 2/fan_in). Biases zero,
    batchnorm gamma 1 / beta 0, running stats (0, 1)."""
    weights: dict[str, np.ndarray] = {}
    for fc, fan_in, fan_out in _layer_plan(config):
        weights[f"{fc}.weight"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)
        )
        weights[f"{fc}.bias"] = np.zeros((1, fan_out))
    bn_states: dict[str, ad.BatchNormState] = {}
    h = config.hidden_dim
    for bn in _BN_LAYERS:
        weights[f"{bn}.gamma"] = np.ones((1, h))
        weights[f"{bn}.beta"] = np.zeros((1, h))
        bn_states[bn] = ad.BatchNormState.create(h)
    return DannParams(config, weights, bn_states)


@dataclass
class ActivationMatrix:
    """Per-sample activations captured at one named layer."""

    layer_id: str
    values: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        if self.layer_id not in CAPTURE_LAYERS:
            raise ContractError(
                f"unknown layer_id {self.layer_id!r}; valid ids: {list(CAPTURE_LAYERS)}"
            )


@dataclass
class DannForward:
    """Forward products: heads, captured activations, and the parameter leaf
    tensors whose .grad fields hold dL/dtheta after a backward pass."""

    label_prob: ad.Tensor
    domain_prob: ad.Tensor
    activations: dict[str, ad.Tensor]
    param_tensors: dict[str, ad.Tensor]


def _block(x, params, tensors, fc, bn, mode, dropout_p, slope, rng):
    h = ad.linear_forward(x, tensors[f"{fc}.weight"], tensors[f"{fc}.bias"])
    h = ad.batchnorm_forward(
        h, tensors[f"{bn}.gamma"], tensors[f"{bn}.beta"], mode, params.bn_states[bn]
    )
    h = ad.dropout_forward(h, dropout_p, mode, rng)
    return ad.leaky_relu(h, slope)


def forward_full(
    params: DannParams,
    x,
    mode: str = "eval",
    grl_lambda: float | None = None,
    rng: np.random.Generator | None = None,
) -> DannForward:
    """Run both heads. grl_lambda has no effect on any forward value; it only
    scales the reversed gradient flowing from the domain loss into the
    feature extractor during backward."""
    config = params.config
    X = check_matrix(x, "x")
    if X.shape[1] != config.input_dim:
        raise DimensionError(
            f"forward_full: input has {X.shape[1]} features, "
            f"config expects {config.input_dim}"
        )
    lam = config.grl_lambda if grl_lambda is None else float(grl_lambda)
    tensors = {k: ad.Tensor(v, name=k) for k, v in params.weights.items()}
    xt = ad.Tensor(X, name="input")
    p, slope = config.dropout_p, config.leaky_slope

    features = _block(
        xt, params, tensors, "feature_extractor.fc1", "feature_extractor.bn1",
        mode, p, slope, rng,
    )

    ly1 = _block(
        features, params, tensors, "label_predictor.fc1", "label_predictor.bn1",
        mode, p, slope, rng,
    )
    ly2 = _block(
        ly1, params, tensors, "label_predictor.fc2", "label_predictor.bn2",
        mode, p, slope, rng,
    )
    label_logits = ad.linear_forward(
        ly2, tensors["label_predictor.fc3.weight"], tensors["label_predictor.fc3.bias"]
    )
    label_prob = ad.sigmoid(label_logits)

    reversed_features = ad.gradient_reversal(features, lam)
    dm1 = _block(
        reversed_features, params, tensors,
        "domain_classifier.fc1", "domain_classifier.bn1", mode, p, slope, rng,
    )
    dm2 = _block(
        dm1, params, tensors, "domain_classifier.fc2", "domain_classifier.bn2",
        mode, p, slope, rng,
    )
    domain_logits = ad.linear_forward(
        dm2, tensors["domain_classifier.fc3.weight"],
        tensors["domain_classifier.fc3.bias"],
    )
    domain_prob = ad.softmax_rows(domain_logits)

    activations = {
        "feature_extractor.dropout1": features,
        "label_predictor.dropout2": ly2,
        "domain_classifier.dropout2": dm2,
    }
    return DannForward(label_prob, domain_prob, activations, tensors)


def predict_probabilities(
    params: DannParams, X, batch_size: int = 1024
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode (label_prob (n,), domain_prob (n, K)) in deterministic batches."""
    X = check_matrix(X, "X")
    label_parts, domain_parts = [], []
    for start in range(0, X.shape[0], batch_size):
        fw = forward_full(params, X[start : start + batch_size], mode="eval")
        label_parts.append(fw.label_prob.values[:, 0])
        domain_parts.append(fw.domain_prob.values)
    return np.concatenate(label_parts), np.vstack(domain_parts)


def capture_activations(
    params: DannParams,
    X,
    layer_ids=CAPTURE_LAYERS,
    epoch: int = 0,
    batch_size: int = 1024,
) -> list[ActivationMatrix]:
    """Eval-mode activation capture over all samples in deterministic batch
    order; one matrix per requested layer, row count equal to len(X)."""
    for layer in layer_ids:
        if layer not in CAPTURE_LAYERS:
            raise ContractError(
                f"unknown layer_id {layer!r}; valid ids: {list(CAPTURE_LAYERS)}"
            )
    X = check_matrix(X, "X")
    collected: dict[str, list[np.ndarray]] = {layer: [] for layer in layer_ids}
    for start in range(0, X.shape[0], batch_size):
        fw = forward_full(params, X[start : start + batch_size], mode="eval")
        for layer in layer_ids:
            collected[layer].append(fw.activations[layer].values)
    return [
        ActivationMatrix(layer, np.vstack(collected[layer]), epoch=epoch)
        for layer in layer_ids
    ]


# ---------------------------------------------------------------------------
# checkpoint io — keys are the bit-exact contract


def save_checkpoint(params: DannParams, path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "input_dim": params.config.input_dim,
            "n_domains": params.config.n_domains,
            "hidden_dim": params.config.hidden_dim,
            "dropout_p": params.config.dropout_p,
            "leaky_slope": params.config.leaky_slope,
            "grl_lambda": params.config.grl_lambda,
        },
        "weights": {k: params.weights[k].tolist() for k in params.parameter_keys()},
        "bn_states": {
            bn: {
                "running_mean": state.running_mean.tolist(),
                "running_var": state.running_var.tolist(),
                "momentum": state.momentum,
            }
            for bn, state in sorted(params.bn_states.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def load_checkpoint(path) -> DannParams:
    path = Path(path)
    payload = json.loads(path.read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ContractError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = DannConfig(**payload["config"])
    weights = {k: np.asarray(v, dtype=np.float64) for k, v in payload["weights"].items()}
    bn_states = {
        bn: ad.BatchNormState(
            np.asarray(s["running_mean"], dtype=np.float64),
            np.asarray(s["running_var"], dtype=np.float64),
            float(s["momentum"]),
        )
        for bn, s in payload["bn_states"].items()
    }
    params = DannParams(config, weights, bn_states)
    missing = [k for k in params.parameter_keys() if k not in weights]
    if missing:
        raise ContractError(f"checkpoint missing parameter keys: {missing[:3]}...")
    return params
