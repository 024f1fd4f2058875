"""Minimal reverse-mode differentiation over dense 2-D arrays.

This supplies exactly the operations the adversarial network needs: affine
layers, leaky ReLU, batchnorm, inverted dropout, the gradient-reversal
pseudo-op, sigmoid / row softmax, the two losses, and elementwise add plus
a scalar sum used to seed batched input gradients.

Every op returns a :class:`Tensor` that records its parents and a backward
rule. :func:`backward` walks a :class:`ComputeGraph` (a topological order of
the nodes reachable from an output) exactly once, accumulating gradients
into ``Tensor.grad``. Nothing here is in-place or stateful except the
batchnorm running statistics, so a backward pass over the same graph is
bit-reproducible.

Scalars are 1x1 tensors; there are no shapes beyond 2-D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BatchSizeError,
    ContractError,
    DimensionError,
    LabelError,
)

# Clamp applied inside the losses so log() never sees 0.
LOSS_EPS = 1e-7
# Batchnorm running-statistics defaults.
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Tensor:
    """A 2-D value with an optional gradient of identical shape.

    Leaf tensors (parameters, inputs) have no parents; op outputs carry the
    parent tuple and a backward rule mapping the output gradient to one
    gradient per parent (or None for non-differentiable parents).
    """

    __slots__ = ("values", "grad", "parents", "backward_rule", "name")

    def __init__(self, values, parents=(), backward_rule=None, name=None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D; got shape {arr.shape}")
        self.values = arr
        self.grad = None
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_scalar(self) -> bool:
        return self.values.shape == (1, 1)

    def item(self) -> float:
        if not self.is_scalar:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"


class ComputeGraph:
    """Topologically ordered op nodes reachable from one output tensor.

    Every node's parents precede it in ``nodes``; backward traversal visits
    each node exactly once in reverse order.
    """

    __slots__ = ("nodes",)

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "ComputeGraph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            # reversed so parents are visited in recorded order
            for parent in reversed(node.parents):
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)


def backward(graph: ComputeGraph, loss: Tensor) -> None:
    """Accumulate dL/dx into every tensor of the graph, seeding from ``loss``.

    The seed must be scalar. Gradients of tensors consumed more than once
    sum. Prior .grad contents on the graph's tensors are discarded.
    """
    if not loss.is_scalar:
        raise ContractError(f"backward seed must be scalar, got shape {loss.shape}")
    in_graph = {id(n) for n in graph.nodes}
    if id(loss) not in in_graph:
        raise ContractError("loss tensor is not part of the given graph")
    for node in graph.nodes:
        node.grad = None
    loss.grad = np.ones((1, 1))
    for node in reversed(graph.nodes):
        if node.backward_rule is None or node.grad is None:
            continue
        parts = node.backward_rule(node.grad)
        for parent, contribution in zip(node.parents, parts):
            if contribution is None:
                continue
            if parent.grad is None:
                parent.grad = contribution.copy()
            else:
                parent.grad = parent.grad + contribution


# ---------------------------------------------------------------------------
# ops


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out = x @ weight + bias, with backward rules for all three inputs."""
    n, d = x.shape
    dw, m = weight.shape
    if d != dw:
        raise DimensionError(
            f"linear_forward: x has shape {x.shape}, weight has shape "
            f"{weight.shape}; inner dimensions must agree"
        )
    if bias.shape != (1, m):
        raise DimensionError(
            f"linear_forward: bias has shape {bias.shape}, expected (1, {m})"
        )
    out = x.values @ weight.values + bias.values

    def rule(g):
        return (
            g @ weight.values.T,
            x.values.T @ g,
            g.sum(axis=0, keepdims=True),
        )

    return Tensor(out, parents=(x, weight, bias), backward_rule=rule, name="linear")


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    if not (0.0 < slope < 1.0):
        raise ContractError(f"leaky_relu slope must be in (0, 1), got {slope}")
    positive = x.values > 0
    out = np.where(positive, x.values, slope * x.values)

    def rule(g):
        return (np.where(positive, g, slope * g),)

    return Tensor(out, parents=(x,), backward_rule=rule, name="leaky_relu")


@dataclass
class BatchNormState:
    """Running statistics updated in train mode, consumed in eval mode."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM

    @classmethod
    def create(cls, width: int, momentum: float = BN_MOMENTUM) -> "BatchNormState":
        return cls(np.zeros(width), np.ones(width), momentum)

    def copy(self) -> "BatchNormState":
        return BatchNormState(
            self.running_mean.copy(), self.running_var.copy(), self.momentum
        )


def batchnorm_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mode: str,
    state: BatchNormState,
    eps: float = BN_EPS,
) -> Tensor:
    """Normalize columns; train mode uses batch statistics and updates state."""
    if mode not in ("train", "eval"):
        raise ContractError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    n, m = x.shape
    if gamma.shape != (1, m) or beta.shape != (1, m):
        raise DimensionError(
            f"batchnorm: gamma/beta shapes {gamma.shape}/{beta.shape} "
            f"do not match width {m}"
        )
    if mode == "train":
        if n < 2:
            raise BatchSizeError(f"batchnorm train mode needs n >= 2, got n={n}")
        mu = x.values.mean(axis=0)
        var = x.values.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.values - mu) * inv
        # biased variance normalizes the batch; the running update is unbiased
        mom = state.momentum
        state.running_mean = (1.0 - mom) * state.running_mean + mom * mu
        state.running_var = (1.0 - mom) * state.running_var + mom * var * n / (n - 1)

        def rule(g):
            dxhat = g * gamma.values
            dx = (
                inv
                / n
                * (
                    n * dxhat
                    - dxhat.sum(axis=0)
                    - xhat * (dxhat * xhat).sum(axis=0)
                )
            )
            dgamma = (g * xhat).sum(axis=0, keepdims=True)
            dbeta = g.sum(axis=0, keepdims=True)
            return (dx, dgamma, dbeta)

    else:
        inv = 1.0 / np.sqrt(state.running_var + eps)
        xhat = (x.values - state.running_mean) * inv

        def rule(g):
            dx = g * gamma.values * inv
            dgamma = (g * xhat).sum(axis=0, keepdims=True)
            dbeta = g.sum(axis=0, keepdims=True)
            return (dx, dgamma, dbeta)

    out = gamma.values * xhat + beta.values
    return Tensor(out, parents=(x, gamma, beta), backward_rule=rule, name="batchnorm")


def dropout_forward(
    x: Tensor, p: float, mode: str, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout: train zeroes entries w.p. p and scales survivors."""
    if not (0.0 <= p < 1.0):
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ContractError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode requires an rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.shape) >= p) * scale

    def rule(g):
        return (g * mask,)

    return Tensor(x.values * mask, parents=(x,), backward_rule=rule, name="dropout")


def gradient_reversal(x: Tensor, lam: float) -> Tensor:
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    lam = float(lam)

    def rule(g):
        return ((-lam) * g,)

    # forward must be bit-identical: reuse the same array
    return Tensor(x.values, parents=(x,), backward_rule=rule, name="grl")


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def rule(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, parents=(x,), backward_rule=rule, name="sigmoid")


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, parents=(x,), backward_rule=rule, name="softmax")


def bce_value(p: np.ndarray, y: np.ndarray, eps: float = LOSS_EPS) -> float:
    pc = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def bce_loss(p: Tensor, y, eps: float = LOSS_EPS) -> Tensor:
    """Mean binary cross-entropy of probabilities p (n x 1) against y in {0,1}."""
    yv = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if yv.shape[0] != p.shape[0] or p.shape[1] != 1:
        raise DimensionError(
            f"bce_loss: p has shape {p.shape}, y has {yv.shape[0]} labels"
        )
    if not np.all((yv == 0.0) | (yv == 1.0)):
        raise LabelError("bce_loss labels must be 0 or 1")
    n = p.shape[0]
    pc = np.clip(p.values, eps, 1.0 - eps)
    inside = (p.values > eps) & (p.values < 1.0 - eps)
    loss = -np.mean(yv * np.log(pc) + (1.0 - yv) * np.log(1.0 - pc))

    def rule(g):
        # zero gradient where the clamp binds, matching the forward value
        dp = np.where(inside, (pc - yv) / (pc * (1.0 - pc)) / n, 0.0)
        return (g[0, 0] * dp,)

    return Tensor([[loss]], parents=(p,), backward_rule=rule, name="bce")


def ce_value(probs: np.ndarray, classes: np.ndarray, eps: float = LOSS_EPS) -> float:
    picked = probs[np.arange(probs.shape[0]), classes]
    return float(-np.mean(np.log(np.clip(picked, eps, None))))


def ce_loss(probs: Tensor, classes, eps: float = LOSS_EPS) -> Tensor:
    """Mean cross-entropy of row-stochastic probs against integer class ids."""
    idx = np.asarray(classes)
    if idx.ndim != 1 or idx.shape[0] != probs.shape[0]:
        raise DimensionError(
            f"ce_loss: probs has shape {probs.shape}, classes has shape {idx.shape}"
        )
    idx = idx.astype(np.int64)
    n, k = probs.shape
    if np.any(idx < 0) or np.any(idx >= k):
        raise LabelError(f"ce_loss class index out of range [0, {k})")
    row_sums = probs.values.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-6):
        raise ContractError("ce_loss expects rows summing to 1")
    picked = probs.values[np.arange(n), idx]
    pc = np.clip(picked, eps, None)
    inside = picked > eps
    loss = -np.mean(np.log(pc))

    def rule(g):
        dp = np.zeros_like(probs.values)
        dp[np.arange(n), idx] = np.where(inside, -1.0 / (n * pc), 0.0)
        return (g[0, 0] * dp,)

    return Tensor([[loss]], parents=(probs,), backward_rule=rule, name="ce")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")

    def rule(g):
        return (g, g)

    return Tensor(a.values + b.values, parents=(a, b), backward_rule=rule, name="add")


def sum_all(x: Tensor) -> Tensor:
    """Scalar sum of all entries; seeds batched per-row input gradients."""

    def rule(g):
        return (np.full(x.shape, g[0, 0]),)

    return Tensor([[x.values.sum()]], parents=(x,), backward_rule=rule, name="sum")


def finite_diff_grad(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    ``f`` takes a plain ndarray of x's shape and returns a float. This is the
    test oracle against which every backward rule is checked.
    """
    if h <= 0:
        raise ContractError(f"finite_diff_grad needs h > 0, got {h}")
    base = np.asarray(x.values if isinstance(x, Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        hi = base.copy()
        lo = base.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (f(hi) - f(lo)) / (2.0 * h)
        it.iternext()
    return grad
