"""Shapley-value attribution: a brute-force oracle and a kernel estimator.

Both treat the model as a coalition game via mean-masking: a coalition S
evaluates f at the point whose features in S come from x and whose masked
features are replaced by background column means. The oracle enumerates all
2^d coalitions; the kernel estimator solves the Shapley-kernel-weighted
least-squares system with the empty/full coalitions folded in as equality
constraints, and collapses onto the oracle whenever it is allowed to
enumerate every coalition.
"""

from __future__ import annotations

import math
import warnings
from itertools import combinations

import numpy as np
from scipy.special import comb

from .errors import ContractError


def _background_mean(background) -> np.ndarray:
    values = getattr(background, "values", background)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr.mean(axis=0)


def _masked_points(masks: np.ndarray, x: np.ndarray, bg_mean: np.ndarray) -> np.ndarray:
    return np.where(masks, x, bg_mean)


def exact_shapley(f, x, background, max_features: int = 12) -> np.ndarray:
    """Exact Shapley values by full coalition enumeration (d <= max_features).

        phi_j = sum_{S subset F\\{j}} |S|!(d-|S|-1)!/d! * (v(S u {j}) - v(S))

    ``f`` maps an (m, d) array to m outputs. Completeness
    sum(phi) = f(x) - f(masked-all) holds to float precision.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.size
    if d > max_features:
        raise ContractError(
            f"exact_shapley enumerates 2^d coalitions; d={d} exceeds {max_features}"
        )
    bg_mean = _background_mean(background)
    n_masks = 1 << d
    codes = np.arange(n_masks, dtype=np.uint32)
    masks = ((codes[:, None] >> np.arange(d)) & 1).astype(bool)
    values = np.asarray(f(_masked_points(masks, x, bg_mean)), dtype=np.float64).reshape(-1)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(i) for i in range(d + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]
    )
    phi = np.empty(d)
    for j in range(d):
        without_j = np.flatnonzero(~masks[:, j])
        with_j = without_j + (1 << j)
        w = weight_by_size[sizes[without_j]]
        phi[j] = float(np.sum(w * (values[with_j] - values[without_j])))
    return phi


def shapley_kernel_weight(d: int, s: int) -> float:
    """(d-1) / (C(d,s) * s * (d-s)); infinite at the constraint coalitions."""
    if s == 0 or s == d:
        return float("inf")
    return (d - 1) / (comb(d, s, exact=True) * s * (d - s))


def _enumerate_all_masks(d: int) -> np.ndarray:
    codes = np.arange(1, (1 << d) - 1, dtype=np.uint32)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def _sample_masks(
    d: int, n_coalitions: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Coalitions weighted by the kernel: complete size pairs are enumerated
    outright (largest kernel mass first) with their exact weights; whatever
    budget remains is sampled size-proportionally with the leftover mass
    spread uniformly. Complement pairing keeps the design well conditioned.
    """
    sizes = np.arange(1, d)
    mass = (d - 1) / (sizes * (d - sizes))
    mass = mass / mass.sum()
    mask_rows: list[np.ndarray] = []
    weight_rows: list[float] = []
    budget = n_coalitions
    remaining_mass = 1.0
    done = 0
    for s in range(1, (d - 1) // 2 + 1):
        paired = s != d - s
        count = comb(d, s, exact=True) * (2 if paired else 1)
        if count > budget:
            break
        size_mass = mass[s - 1] + (mass[d - s - 1] if paired else 0.0)
        base = np.zeros((comb(d, s, exact=True), d), dtype=bool)
        for r, members in enumerate(combinations(range(d), s)):
            base[r, list(members)] = True
        group = np.vstack([base, ~base]) if paired else base
        mask_rows.append(group)
        weight_rows.extend([size_mass / count] * group.shape[0])
        budget -= count
        remaining_mass -= size_mass
        done = s
    if budget > 0 and remaining_mass > 1e-12:
        open_sizes = sizes[(sizes > done) & (sizes < d - done)]
        open_mass = mass[open_sizes - 1]
        probs = open_mass / open_mass.sum()
        drawn_sizes = rng.choice(open_sizes, size=budget, p=probs)
        order = np.argsort(rng.random((budget, d)), axis=1, kind="stable")
        sampled = np.zeros((budget, d), dtype=bool)
        row_idx = np.repeat(np.arange(budget), drawn_sizes)
        col_idx = np.concatenate(
            [order[i, : drawn_sizes[i]] for i in range(budget)]
        ) if budget else np.empty(0, dtype=np.int64)
        sampled[row_idx, col_idx] = True
        # every second draw becomes the complement of its predecessor
        n_pairs = sampled[1::2].shape[0]
        sampled[1::2] = ~sampled[0::2][:n_pairs]
        mask_rows.append(sampled)
        weight_rows.extend([remaining_mass / budget] * budget)
    masks = np.vstack(mask_rows)
    return masks, np.asarray(weight_rows)


def kernel_shap(f, x, background, n_coalitions: int, rng: np.random.Generator) -> np.ndarray:
    """Shapley-kernel weighted least squares with the efficiency constraint
    eliminated in closed form, so sum(phi) = f(x) - f(masked-all) holds by
    construction. With n_coalitions >= 2^d - 2 every coalition enters with
    its exact kernel weight and the solution equals exact_shapley.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.size
    if d < 2:
        raise ContractError("kernel_shap needs at least 2 features")
    if n_coalitions < d + 2:
        raise ContractError(
            f"kernel_shap needs n_coalitions >= d+2 = {d + 2}, got {n_coalitions}"
        )
    bg_mean = _background_mean(background)
    v_empty = float(np.asarray(f(bg_mean.reshape(1, -1))).reshape(-1)[0])
    v_full = float(np.asarray(f(x.reshape(1, -1))).reshape(-1)[0])
    total = v_full - v_empty

    full_count = (1 << d) - 2 if d < 60 else None
    if full_count is not None and n_coalitions >= full_count:
        masks = _enumerate_all_masks(d)
        weights = np.array(
            [shapley_kernel_weight(d, s) for s in masks.sum(axis=1)]
        )
    else:
        masks, weights = _sample_masks(d, n_coalitions, rng)

    values = np.asarray(f(_masked_points(masks, x, bg_mean)), dtype=np.float64).reshape(-1)

    z = masks.astype(np.float64)
    # eliminate phi_d via the efficiency constraint
    y = values - v_empty - z[:, -1] * total
    A = z[:, :-1] - z[:, [-1]]
    AtW = (A * weights[:, None]).T
    gram = AtW @ A
    rhs = AtW @ y
    try:
        head = np.linalg.solve(gram, rhs)
        singular = not np.all(np.isfinite(head))
    except np.linalg.LinAlgError:
        singular = True
    if singular:
        warnings.warn(
            "kernel_shap design is singular; falling back to ridge 1e-8",
            RuntimeWarning,
            stacklevel=2,
        )
        head = np.linalg.solve(gram + 1e-8 * np.eye(d - 1), rhs)
    phi = np.empty(d)
    phi[:-1] = head
    phi[-1] = total - head.sum()
    return phi
