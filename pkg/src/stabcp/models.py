"""Prediction functions, the Huber loss and per-point Lipschitz profiles."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearModel",
    "KernelKind",
    "KernelSpec",
    "MLPModel",
    "LipschitzProfile",
    "predict_linear",
    "huber_loss",
    "huber_dz",
    "lipschitz_profile_linear_huber",
    "kernel_matrix",
    "min_eigenvalue",
    "init_mlp",
    "mlp_forward",
    "mlp_gradient",
]


@dataclass(frozen=True)
class LinearModel:
    """``f(x) = x @ theta``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta has non-finite entries")
        object.__setattr__(self, "theta", theta)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.theta.size:
            raise ValueError(f"feature dimension {X.shape[-1]} != {self.theta.size}")
        return X @ self.theta


def predict_linear(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a single feature vector")
    return float(model.predict(x))


def huber_loss(epsilon: float, y, z):
    """Huber loss of residual ``y - z`` with knee at ``epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = np.abs(np.asarray(y, dtype=float) - np.asarray(z, dtype=float))
    out = np.where(r <= epsilon, 0.5 * r**2, epsilon * r - 0.5 * epsilon**2)
    return out.item() if out.ndim == 0 else out


def huber_dz(epsilon: float, y, z):
    """Derivative of :func:`huber_loss` with respect to the prediction ``z``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = np.asarray(y, dtype=float) - np.asarray(z, dtype=float)
    out = -np.clip(r, -epsilon, epsilon)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class LipschitzProfile:
    """Per-point constants feeding the stability bounds.

    Arrays cover the ``n`` training points first, then the ``m`` test
    points, so test point ``j`` sits at position ``n_train + j``.

    Attributes
    ----------
    rho : loss-in-parameter Lipschitz constants
    nu : prediction-in-parameter Lipschitz constants
    phi : gradient Lipschitz constants
    gamma : Lipschitz constant of the score in the prediction
    lambda_sc : strong convexity of the penalty (0 if none)
    n_train : number of training points
    """

    rho: np.ndarray
    nu: np.ndarray
    phi: np.ndarray
    gamma: float
    lambda_sc: float
    n_train: int

    def __post_init__(self):
        for name in ("rho", "nu", "phi"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.ndim != 1 or np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite non-negative vector")
            object.__setattr__(self, name, v)
        if not (self.rho.size == self.nu.size == self.phi.size):
            raise ValueError("profile vectors differ in length")
        if self.gamma < 0 or self.lambda_sc < 0:
            raise ValueError("gamma and lambda_sc must be non-negative")
        if not 0 <= self.n_train <= self.rho.size:
            raise ValueError("n_train out of range")

    @property
    def n_test(self) -> int:
        return self.rho.size - self.n_train

    @property
    def rho_bar(self) -> float:
        return float(self.rho[: self.n_train].mean())


def lipschitz_profile_linear_huber(
    features, test_features, epsilon: float, omega_weight: float, gamma: float = 1.0,
    penalty_min_eig: float = 1.0,
) -> LipschitzProfile:
    """Constants for Huber regression on a linear predictor.

    ``rho_i = eps ||x_i||``, ``nu_i = ||x_i||``, ``phi_i = ||x_i||^2`` and the
    penalty ``omega * theta' P theta`` is ``2 omega lambda_min(P)``-strongly
    convex (``P = I`` unless ``penalty_min_eig`` says otherwise).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    A = np.atleast_2d(np.asarray(features, dtype=float))
    B = np.asarray(test_features, dtype=float).reshape(-1, A.shape[1])
    norms = np.linalg.norm(np.vstack([A, B]), axis=1)
    return LipschitzProfile(
        rho=epsilon * norms,
        nu=norms,
        phi=norms**2,
        gamma=gamma,
        lambda_sc=2.0 * omega_weight * penalty_min_eig,
        n_train=A.shape[0],
    )


class KernelKind(enum.Enum):
    RBF = "rbf"
    POLYNOMIAL = "poly"
    LINEAR = "linear"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.RBF
    sigma: float = 1.0
    c: float = 1.0
    degree: int = 2

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.RBF and not self.sigma > 0:
            raise ValueError("RBF kernel needs sigma > 0")
        if self.kind is KernelKind.POLYNOMIAL and self.degree < 1:
            raise ValueError("polynomial kernel needs degree >= 1")


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(A[i], B[j])``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind is KernelKind.RBF:
        sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2.0 * A @ B.T
        np.maximum(sq, 0.0, out=sq)
        K = np.exp(-sq / (2.0 * spec.sigma**2))
        if A is B or (A.shape == B.shape and np.array_equal(A, B)):
            np.fill_diagonal(K, 1.0)
        return K
    inner = A @ B.T
    if spec.kind is KernelKind.POLYNOMIAL:
        return (inner + spec.c) ** spec.degree
    return inner


def min_eigenvalue(K) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    K = np.asarray(K, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])


# --------------------------------------------------------------------------
# single-hidden-layer style MLPs (any depth; sigmoid hidden, identity output)


@dataclass
class MLPModel:
    """Feed-forward network; ``layers[k] = (W, b)`` with ``W`` of shape (out, in)."""

    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        prev = None
        for W, b in self.layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError("bad layer shapes")
            if prev is not None and W.shape[1] != prev:
                raise ValueError("incompatible consecutive layers")
            prev = W.shape[0]
        if prev != 1:
            raise ValueError("output dimension must be 1")

    @property
    def shapes(self):
        return [(W.shape, b.shape) for W, b in self.layers]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def with_flat(self, v) -> "MLPModel":
        v = np.asarray(v, dtype=float)
        out, pos = [], 0
        for W, b in self.layers:
            W2 = v[pos : pos + W.size].reshape(W.shape)
            pos += W.size
            b2 = v[pos : pos + b.size].copy()
            pos += b.size
            out.append((W2.copy(), b2))
        if pos != v.size:
            raise ValueError("parameter vector has wrong length")
        return MLPModel(out)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        H = np.atleast_2d(X)
        out = _forward(self, H)[-1][:, 0]
        return out[0] if single else out


def init_mlp(sizes, rng) -> MLPModel:
    """Uniform ``±1/sqrt(fan_in)`` initialisation; ``sizes = [d, h1, ..., 1]``."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return MLPModel(layers)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _forward(model: MLPModel, H):
    if H.shape[1] != model.layers[0][0].shape[1]:
        raise ValueError("input dimension does not match the network")
    acts = [H]
    last = len(model.layers) - 1
    for k, (W, b) in enumerate(model.layers):
        a = acts[-1] @ W.T + b
        acts.append(a if k == last else _sigmoid(a))
    return acts


def mlp_forward(model: MLPModel, x) -> float:
    return float(model.predict(np.asarray(x, dtype=float).ravel()))


def mlp_gradient(model: MLPModel, x, y, loss_dz) -> list:
    """Backpropagate ``loss(y, f(x))`` for a single example.

    ``loss_dz(y, z)`` is the derivative of the loss in the prediction.
    Returns ``[(dW, db), ...]`` aligned with ``model.layers``.
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    acts = _forward(model, x)
    delta = np.array([[loss_dz(y, acts[-1][0, 0])]])
    grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        W, _ = model.layers[k]
        grads[k] = (delta.T @ acts[k], delta[0].copy())
        if k > 0:
            s = acts[k]
            delta = (delta @ W) * s * (1.0 - s)
    return grads
