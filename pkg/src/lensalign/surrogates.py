"""Probabilistic surrogates for black-box score modeling: an exact
Gaussian-process regressor (Matern-5/2, dense Cholesky) and a
bootstrap-bagged random forest; both expose (mean, variance) predictions
consumed by the same acquisition function.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import erf

JITTER_START = 1e-8
JITTER_MAX = 1e-2


@dataclass(frozen=True)
class ObjectiveSample:
    """One observed evaluation: proposed pose (active dims) and the RMSE
    score measured at the state actually reached."""

    proposal: np.ndarray
    score: float

    def __post_init__(self):
        p = np.asarray(self.proposal, dtype=np.float64).ravel()
        if self.score < 0:
            raise ValueError("score must be >= 0")
        object.__setattr__(self, "proposal", p)


def _as_arrays(samples: list[ObjectiveSample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.proposal for s in samples])
    y = np.array([s.score for s in samples])
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("samples must be finite")
    return x, y


def _matern52(sq_dists: np.ndarray, length_scale: float, signal_var: float) -> np.ndarray:
    r = np.sqrt(np.maximum(sq_dists, 0.0)) / length_scale
    s5r = np.sqrt(5.0) * r
    return signal_var * (1.0 + s5r + 5.0 / 3.0 * r * r) * np.exp(-s5r)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)


def median_distance(x: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 when degenerate."""
    if len(x) < 2:
        return 1.0
    d = np.sqrt(_sq_dists(x, x)[np.triu_indices(len(x), k=1)])
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


@dataclass(frozen=True)
class GPModel:
    x_train: np.ndarray
    y_train: np.ndarray
    length_scale: float
    signal_var: float
    prior_mean: float
    jitter: float
    _chol: tuple
    _alpha: np.ndarray

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return gp_predict(self, x)


def gp_fit(
    samples: list[ObjectiveSample],
    length_scale: float | None = None,
    signal_var: float | None = None,
) -> GPModel:
    """Exact GP regression; hyperparameters default to the median-distance
    length scale and the target variance. The Cholesky jitter grows by
    factors of 10 up to 1e-2 before giving up."""
    if not samples:
        raise ValueError("need at least one sample")
    x, y = _as_arrays(samples)
    if length_scale is None:
        length_scale = median_distance(x)
    if signal_var is None:
        var = float(np.var(y))
        signal_var = var if var > 0 else 1.0
    prior_mean = float(np.mean(y))
    k = _matern52(_sq_dists(x, x), length_scale, signal_var)
    jitter = JITTER_START
    while True:
        try:
            chol = cho_factor(k + jitter * np.eye(len(x)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise
    alpha = cho_solve(chol, y - prior_mean)
    return GPModel(
        x_train=x,
        y_train=y,
        length_scale=float(length_scale),
        signal_var=float(signal_var),
        prior_mean=prior_mean,
        jitter=jitter,
        _chol=chol,
        _alpha=alpha,
    )


def gp_predict(model: GPModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (nonnegative) variance at one or many points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k_star = _matern52(_sq_dists(x, model.x_train), model.length_scale, model.signal_var)
    mean = model.prior_mean + k_star @ model._alpha
    v = cho_solve(model._chol, k_star.T)
    var = model.signal_var - np.sum(k_star.T * v, axis=0)
    return mean, np.maximum(var, 0.0)


def expected_improvement(mean, variance, best_so_far) -> np.ndarray:
    """Closed-form EI under minimization: E[max(best - value, 0)] for a
    normal predictive with the given mean and variance."""
    mean = np.asarray(mean, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance < 0):
        raise ValueError("variance must be >= 0")
    improve = best_so_far - mean
    std = np.sqrt(variance)
    out = np.maximum(improve, 0.0)  # deterministic limit
    pos = std > 0
    if np.any(pos):
        z = improve[pos] / std[pos]
        cdf = 0.5 * (1.0 + erf(z / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        out = out.astype(np.float64)
        out[pos] = improve[pos] * cdf + std[pos] * pdf
    return np.maximum(out, 0.0)


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold=None, left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _grow_tree(x: np.ndarray, y: np.ndarray) -> _TreeNode:
    """Fully grown variance-reduction regression tree (deterministic:
    best (feature, threshold) by SSE, ties to the lowest feature index)."""
    if len(y) < 2 or np.all(y == y[0]):
        return _TreeNode(value=float(np.mean(y)))
    best = (np.inf, -1, 0.0)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        n = len(ys)
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse = (csq[i] - csum[i] ** 2 / nl) + (
                (total_sq - csq[i]) - (total_sum - csum[i]) ** 2 / nr
            )
            if sse < best[0] - 1e-15:
                best = (sse, f, 0.5 * (xs[i] + xs[i + 1]))
    if best[1] < 0:  # all inputs identical; cannot split
        return _TreeNode(value=float(np.mean(y)))
    _, f, thr = best
    mask = x[:, f] <= thr
    return _TreeNode(
        feature=f, threshold=thr, left=_grow_tree(x[mask], y[mask]), right=_grow_tree(x[~mask], y[~mask])
    )


def _tree_predict(node: _TreeNode, x: np.ndarray) -> float:
    while node.value is None:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _content_hash(x: np.ndarray, y: np.ndarray) -> int:
    digest = hashlib.blake2b(x.tobytes() + y.tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RFModel:
    trees: tuple
    bootstrap_seeds: tuple
    y_min: float
    y_max: float

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return rf_predict(self, x)


def rf_fit(
    samples: list[ObjectiveSample], n_trees: int = 50, seed: int = 0, bootstrap: bool = True
) -> RFModel:
    """Bagged regression forest. Samples are canonicalized (sorted by
    content) and per-tree bootstrap seeds derive from a content hash, so
    the fit is invariant under permutation of the training set."""
    if not samples:
        raise ValueError("need at least one sample")
    x, y = _as_arrays(samples)
    order = np.lexsort(tuple(x[:, f] for f in reversed(range(x.shape[1]))) + (y,))
    x, y = x[order], y[order]
    base = _content_hash(x, y) ^ (seed & 0xFFFFFFFFFFFFFFFF)
    trees = []
    seeds = []
    for t in range(n_trees):
        tree_seed = int(np.random.SeedSequence([base, t]).generate_state(1, np.uint64)[0])
        seeds.append(tree_seed)
        if bootstrap and len(y) >= 2:
            idx = np.random.default_rng(tree_seed).integers(0, len(y), size=len(y))
            trees.append(_grow_tree(x[idx], y[idx]))
        else:
            trees.append(_grow_tree(x, y))
    return RFModel(
        trees=tuple(trees),
        bootstrap_seeds=tuple(seeds),
        y_min=float(np.min(y)),
        y_max=float(np.max(y)),
    )


def rf_predict(model: RFModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Across-tree mean and population variance at one or many points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    preds = np.array([[_tree_predict(t, row) for t in model.trees] for row in x])
    return preds.mean(axis=1), preds.var(axis=1)
