"""Model fitting: regularised loss minimisation, SGD with reshuffling, bagging.

SGD permutations are drawn by attaching an i.i.d. uniform key to every
point *index* (keyed by ``(seed, epoch)``) and visiting points in key
order. Removing a point from the training set therefore yields exactly
the induced permutation with that entry deleted, which is the coupling
the leave-one-out analysis relies on.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .models import LinearModel, MLPModel, huber_dz, huber_loss, mlp_gradient

__all__ = [
    "FitCounter",
    "ConvergenceError",
    "RlmConfig",
    "SgdConfig",
    "BaseLearnerSpec",
    "BaggingConfig",
    "RegressionTree",
    "BaggingModel",
    "rlm_objective",
    "fit_rlm",
    "epoch_order",
    "fit_sgd",
    "fit_sgd_coupled_loo",
    "fit_tree",
    "fit_bagging",
]


class FitCounter:
    """Thread-safe count of model fits."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def increment(self, k: int = 1) -> None:
        with self._lock:
            self._count += k

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def __repr__(self):
        return f"FitCounter({self._count})"


class ConvergenceError(RuntimeError):
    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


def _bump(counter):
    if counter is not None:
        counter.increment()


# --------------------------------------------------------------------------
# RLM


@dataclass(frozen=True)
class RlmConfig:
    """Settings for full-batch gradient descent on the penalised risk.

    ``learning_rate=None`` uses ``1/L`` with ``L`` the smoothness constant
    of the objective.
    """

    omega_weight: float = 1.0
    learning_rate: Optional[float] = None
    max_iters: int = 200_000
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.omega_weight <= 0 or self.grad_tol <= 0 or self.max_iters < 1:
            raise ValueError("RLM settings must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def rlm_objective(theta, X, y, omega, epsilon, penalty=None) -> float:
    """``mean(huber) + omega * theta' P theta`` (``P = I`` by default)."""
    theta = np.asarray(theta, dtype=float)
    reg = theta @ theta if penalty is None else theta @ penalty @ theta
    return float(np.mean(huber_loss(epsilon, y, X @ theta)) + omega * reg)


def _rlm_arrays(X, y, cfg: RlmConfig, epsilon, penalty=None):
    n, d = X.shape
    omega = cfg.omega_weight
    if cfg.learning_rate is None:
        top = np.linalg.eigvalsh(X.T @ X / n)[-1] if d <= n else np.linalg.eigvalsh(X @ X.T / n)[-1]
        pen_top = 1.0 if penalty is None else np.linalg.eigvalsh(penalty)[-1]
        step = 1.0 / (top + 2.0 * omega * pen_top)
    else:
        step = cfg.learning_rate
    theta = np.zeros(d)
    Xt = X.T / n
    for _ in range(cfg.max_iters):
        pen = theta if penalty is None else penalty @ theta
        grad = Xt @ huber_dz(epsilon, y, X @ theta) + 2.0 * omega * pen
        gnorm = float(np.sqrt(grad @ grad))
        if gnorm <= cfg.grad_tol:
            return theta
        theta = theta - step * grad
    raise ConvergenceError(
        f"RLM did not reach gradient norm {cfg.grad_tol} in {cfg.max_iters} iterations "
        f"(last {gnorm:.3e})",
        gnorm,
    )


def fit_rlm(data: Dataset, cfg: RlmConfig, epsilon: float, penalty=None, counter=None) -> LinearModel:
    """Minimise ``mean Huber loss + omega * theta' P theta`` by gradient descent from zero.

    Raises
    ------
    ConvergenceError
        If the gradient norm stays above ``cfg.grad_tol``.
    """
    if data.y is None or data.n < 1:
        raise ValueError("RLM needs at least one labelled row")
    theta = _rlm_arrays(data.X, data.y, cfg, epsilon, penalty)
    _bump(counter)
    return LinearModel(theta)


# --------------------------------------------------------------------------
# SGD with random reshuffling


@dataclass(frozen=True)
class SgdConfig:
    epochs: int = 15
    learning_rate: float = 0.001
    theta0: Optional[np.ndarray] = None
    permutation_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Visiting order of points ``0..n-1`` in ``epoch``.

    Each index draws a key from a stream determined by ``(seed, epoch)``
    alone; the first ``n`` keys do not depend on how many are drawn.
    """
    keys = np.random.default_rng([int(seed), int(epoch)]).random(n)
    return np.argsort(keys, kind="stable")


def _check_step(X, eta):
    phi_max = float(np.max(np.einsum("ij,ij->i", X, X))) if X.size else 0.0
    if phi_max > 0 and eta > 2.0 / phi_max:
        warnings.warn(
            f"learning rate {eta} exceeds 2/max(phi) = {2.0 / phi_max:.4g}; "
            "the convex SGD stability bound does not apply",
            RuntimeWarning,
            stacklevel=3,
        )


def _sgd_linear(X, y, cfg: SgdConfig, epsilon):
    n, d = X.shape
    theta = np.zeros(d) if cfg.theta0 is None else np.array(cfg.theta0, dtype=float)
    if theta.shape != (d,):
        raise ValueError("theta0 has the wrong dimension")
    eta = cfg.learning_rate
    rows = list(X)
    for r in range(cfg.epochs):
        for i in epoch_order(cfg.permutation_seed, r, n):
            x = rows[i]
            resid = y[i] - x @ theta
            if resid > epsilon:
                resid = epsilon
            elif resid < -epsilon:
                resid = -epsilon
            theta = theta + (eta * resid) * x
    return theta


def _sgd_mlp(X, y, cfg: SgdConfig, epsilon, net: MLPModel):
    n = X.shape[0]
    eta = cfg.learning_rate
    layers = [(W.copy(), b.copy()) for W, b in net.layers]
    model = MLPModel(layers)
    dz = lambda yy, zz: huber_dz(epsilon, yy, zz)  # noqa: E731
    for r in range(cfg.epochs):
        for i in epoch_order(cfg.permutation_seed, r, n):
            grads = mlp_gradient(model, X[i], y[i], dz)
            for (W, b), (gW, gb) in zip(model.layers, grads):
                W -= eta * gW
                b -= eta * gb
    return model


def fit_sgd(data: Dataset, cfg: SgdConfig, epsilon: float, mlp: Optional[MLPModel] = None,
            counter=None, check_step: bool = True):
    """Per-point SGD on the Huber loss, reshuffling every epoch.

    With ``mlp`` given, that network is the starting point and an
    :class:`MLPModel` is returned; otherwise a linear model starting from
    ``cfg.theta0`` (zero by default).
    """
    if data.y is None or data.n < 1:
        raise ValueError("SGD needs at least one labelled row")
    if mlp is not None:
        model = _sgd_mlp(data.X, data.y, cfg, epsilon, mlp)
    else:
        if check_step:
            _check_step(data.X, cfg.learning_rate)
        model = LinearModel(_sgd_linear(data.X, data.y, cfg, epsilon))
    _bump(counter)
    return model


def fit_sgd_coupled_loo(data: Dataset, augmented_point, cfg: SgdConfig, epsilon: float):
    """Fit on ``D ∪ {(x, y)}`` and on ``D`` with coupled permutations.

    The augmented point takes index ``n``; the fit on ``D`` visits the
    remaining points in the same relative order.
    """
    x, yv = augmented_point
    aug = data.augment(x, yv)
    with_pt = fit_sgd(aug, cfg, epsilon, check_step=False)
    without = fit_sgd(data, cfg, epsilon, check_step=False)
    return with_pt, without


# --------------------------------------------------------------------------
# bagging with regression trees


@dataclass(frozen=True)
class BaseLearnerSpec:
    """Depth-capped regression tree; ``max_depth=1`` is a stump.

    ``max_features`` (if set) draws that many candidate features per split
    using the per-bag seed.
    """

    max_depth: int = 1
    min_samples_leaf: int = 1
    max_features: Optional[int] = None


@dataclass(frozen=True)
class BaggingConfig:
    n_bags: int = 100
    bag_size: Optional[int] = None
    base_learner: BaseLearnerSpec = field(default_factory=BaseLearnerSpec)
    seed: int = 0

    def __post_init__(self):
        if self.n_bags < 1 or (self.bag_size is not None and self.bag_size < 1):
            raise ValueError("n_bags and bag_size must be at least 1")


class RegressionTree:
    """Array-backed binary regression tree with mean-valued leaves."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.where(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]


def _best_split(X, y, features, min_leaf):
    n = y.size
    best = (0.0, -1, 0.0)
    total = y.sum()
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)[:-1]
        nl = np.arange(1, n)
        nr = n - nl
        # variance reduction up to a constant: sum_l^2/n_l + sum_r^2/n_r
        gain = csum**2 / nl + (total - csum) ** 2 / nr - total**2 / n
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            best = (float(gain[k]), int(f), 0.5 * (xs[k] + xs[k + 1]))
    return best


def fit_tree(X, y, spec: BaseLearnerSpec, rng=None) -> RegressionTree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        if depth >= spec.max_depth or idx.size < 2 * spec.min_samples_leaf:
            return node
        feats = np.arange(X.shape[1])
        if spec.max_features is not None and spec.max_features < feats.size and rng is not None:
            feats = rng.choice(feats, size=spec.max_features, replace=False)
        gain, f, t = _best_split(X[idx], y[idx], feats, spec.min_samples_leaf)
        if f < 0:
            return node
        mask = X[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(y.size), 0)
    return RegressionTree(feature, threshold, left, right, value)


@dataclass
class BaggingModel:
    trees: list
    bag_ranges: np.ndarray  # (B, 2) response min/max of each bag

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def base_predictions(self, X) -> np.ndarray:
        return np.array([t.predict(X) for t in self.trees])


def fit_bagging(data: Dataset, cfg: BaggingConfig, counter=None) -> BaggingModel:
    """Average of ``B`` trees, each fit on a bootstrap bag drawn i.i.d. from ``[n]``."""
    if data.y is None or data.n < 1:
        raise ValueError("bagging needs at least one labelled row")
    n = data.n
    m_bag = n if cfg.bag_size is None else cfg.bag_size
    trees, ranges = [], []
    for b in range(cfg.n_bags):
        rng = np.random.default_rng([int(cfg.seed), b])
        idx = rng.integers(0, n, size=m_bag)
        xi = np.random.default_rng(rng.integers(2**63))
        yb = data.y[idx]
        trees.append(fit_tree(data.X[idx], yb, cfg.base_learner, xi))
        ranges.append((yb.min(), yb.max()))
    _bump(counter)
    return BaggingModel(trees, np.array(ranges))
