"""Learners: a trainer paired with the stability bounds that hold for it.

Conformal methods only need three things from a learner: ``fit(data)``
returning something with ``predict``, and ``loo_bounds`` / ``ro_bounds``
returning one :class:`StabilityBounds` per test point. Each learner owns a
:class:`FitCounter` so callers can audit how many fits a method used.

Learners that depend on the base training set (kernel feature maps) are
anchored through :meth:`Learner.prepare`, which every conformal method
calls with the data it treats as ``D`` before fitting anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ScoreKind
from .data import Dataset
from .models import (
    KernelSpec,
    LinearModel,
    kernel_matrix,
    init_mlp,
    lipschitz_profile_linear_huber,
    min_eigenvalue,
)
from .stability import (
    BoundKind,
    StabilityBounds,
    bagging_bound_derandomized,
    bagging_bound_probabilistic,
    rlm_bounds,
    sgd_bounds_approx_nn,
    sgd_bounds_convex,
    sgd_bounds_nonconvex,
)
from .trainers import (
    BaggingConfig,
    FitCounter,
    RlmConfig,
    SgdConfig,
    fit_bagging,
    fit_rlm,
    fit_sgd,
)

__all__ = [
    "Learner",
    "RlmLearner",
    "SgdLearner",
    "KernelRlmLearner",
    "KernelSgdLearner",
    "MlpLearner",
    "BaggingLearner",
    "ConstantLearner",
]


class Learner:
    """Base class; subclasses implement ``_fit`` and ``_bounds``."""

    score_kind = ScoreKind.ABSOLUTE

    def __init__(self):
        self.counter = FitCounter()

    @property
    def gamma(self) -> float:
        return self.score_kind.gamma

    def prepare(self, data: Dataset) -> None:
        """Hook called with the base training set ``D`` before any fit."""

    def fit(self, data: Dataset):
        model = self._fit(data)
        self.counter.increment()
        return model

    def _fit(self, data: Dataset):  # pragma: no cover - abstract
        raise NotImplementedError

    def bounds(self, X_train, X_test, kind: BoundKind) -> list:
        X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
        X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
        return self._bounds(X_train, X_test, BoundKind(kind))

    def loo_bounds(self, X_train, X_test) -> list:
        return self.bounds(X_train, X_test, BoundKind.LOO)

    def ro_bounds(self, X_train, X_test) -> list:
        return self.bounds(X_train, X_test, BoundKind.RO)

    def _bounds(self, X_train, X_test, kind):  # pragma: no cover - abstract
        raise NotImplementedError


def _pick(pair, kind):
    return pair[0] if kind is BoundKind.LOO else pair[1]


class RlmLearner(Learner):
    """Huber regression with ridge penalty ``omega ||theta||^2``."""

    def __init__(self, cfg: RlmConfig = RlmConfig(), epsilon: float = 1.0,
                 score_kind: ScoreKind = ScoreKind.ABSOLUTE):
        super().__init__()
        self.cfg = cfg
        self.epsilon = epsilon
        self.score_kind = score_kind

    def _fit(self, data):
        return fit_rlm(data, self.cfg, self.epsilon)

    def profile(self, X_train, X_test):
        return lipschitz_profile_linear_huber(
            X_train, X_test, self.epsilon, self.cfg.omega_weight, self.gamma
        )

    def _bounds(self, X_train, X_test, kind):
        prof = self.profile(X_train, X_test)
        return [_pick(rlm_bounds(prof, j), kind) for j in range(X_test.shape[0])]


class SgdLearner(Learner):
    """Linear Huber regression fit by SGD with reshuffling."""

    def __init__(self, cfg: SgdConfig = SgdConfig(), epsilon: float = 1.0,
                 score_kind: ScoreKind = ScoreKind.ABSOLUTE):
        super().__init__()
        self.cfg = cfg
        self.epsilon = epsilon
        self.score_kind = score_kind

    def _fit(self, data):
        return fit_sgd(data, self.cfg, self.epsilon)

    def profile(self, X_train, X_test):
        return lipschitz_profile_linear_huber(X_train, X_test, self.epsilon, 0.0, self.gamma)

    def _bounds(self, X_train, X_test, kind):
        prof = self.profile(X_train, X_test)
        R, eta = self.cfg.epochs, self.cfg.learning_rate
        return [_pick(sgd_bounds_convex(prof, R, eta, j), kind) for j in range(X_test.shape[0])]


class _KernelFeatures:
    """Maps points to ``k(x, anchors)``; anchors are the base training features."""

    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.anchors = None

    def set_anchors(self, X):
        self.anchors = np.array(X, dtype=float)
        self.gram = kernel_matrix(self.spec, self.anchors, self.anchors)

    def __call__(self, X):
        if self.anchors is None:
            raise RuntimeError("kernel learner used before prepare()")
        return kernel_matrix(self.spec, X, self.anchors)


@dataclass
class _KernelModel:
    inner: LinearModel
    features: _KernelFeatures

    def predict(self, X):
        return self.inner.predict(self.features(np.atleast_2d(X)))


class KernelRlmLearner(Learner):
    """Kernelised Huber RLM: ``mean loss(y_i, k_i' theta) + omega theta' K theta``.

    The feature map is frozen at the base training set, so augmented fits
    share the parameter space and the penalty.
    """

    def __init__(self, kernel: KernelSpec, cfg: RlmConfig = RlmConfig(), epsilon: float = 1.0,
                 score_kind: ScoreKind = ScoreKind.ABSOLUTE, min_eig_floor: float = 1e-10):
        super().__init__()
        self.features = _KernelFeatures(kernel)
        self.cfg = cfg
        self.epsilon = epsilon
        self.score_kind = score_kind
        self.min_eig_floor = min_eig_floor
        self._lam_min = None

    def prepare(self, data):
        self.features.set_anchors(data.X)
        self._lam_min = min_eigenvalue(self.features.gram)

    def _fit(self, data):
        F = self.features(data.X)
        inner = fit_rlm(Dataset(F, data.y), self.cfg, self.epsilon, penalty=self.features.gram)
        return _KernelModel(inner, self.features)

    def _bounds(self, X_train, X_test, kind):
        if self._lam_min is None:
            raise RuntimeError("kernel learner used before prepare()")
        if self._lam_min <= self.min_eig_floor:
            raise ValueError(
                f"kernel matrix is numerically singular (lambda_min = {self._lam_min:.3e}); "
                "no useful strong-convexity constant"
            )
        prof = lipschitz_profile_linear_huber(
            self.features(X_train), self.features(X_test), self.epsilon,
            self.cfg.omega_weight, self.gamma, penalty_min_eig=self._lam_min,
        )
        return [_pick(rlm_bounds(prof, j), kind) for j in range(X_test.shape[0])]


class KernelSgdLearner(Learner):
    """SGD on kernel features ``k(x, anchors)`` (no explicit penalty)."""

    def __init__(self, kernel: KernelSpec, cfg: SgdConfig = SgdConfig(), epsilon: float = 1.0,
                 score_kind: ScoreKind = ScoreKind.ABSOLUTE):
        super().__init__()
        self.features = _KernelFeatures(kernel)
        self.cfg = cfg
        self.epsilon = epsilon
        self.score_kind = score_kind

    def prepare(self, data):
        self.features.set_anchors(data.X)

    def _fit(self, data):
        inner = fit_sgd(Dataset(self.features(data.X), data.y), self.cfg, self.epsilon)
        return _KernelModel(inner, self.features)

    def _bounds(self, X_train, X_test, kind):
        prof = lipschitz_profile_linear_huber(
            self.features(X_train), self.features(X_test), self.epsilon, 0.0, self.gamma
        )
        R, eta = self.cfg.epochs, self.cfg.learning_rate
        return [_pick(sgd_bounds_convex(prof, R, eta, j), kind) for j in range(X_test.shape[0])]


class MlpLearner(Learner):
    """Sigmoid MLP trained by SGD; bounds are the convex-form heuristic on raw features.

    ``bound="nonconvex"`` switches to the rigorous (usually vacuous) bound,
    which needs a per-point gradient Lipschitz constant ``phi``.
    """

    def __init__(self, hidden=(20,), cfg: SgdConfig = SgdConfig(epochs=30), epsilon: float = 1.0,
                 init_seed: int = 0, score_kind: ScoreKind = ScoreKind.ABSOLUTE,
                 bound: str = "approx", phi: Optional[float] = None):
        super().__init__()
        self.hidden = tuple(hidden)
        self.cfg = cfg
        self.epsilon = epsilon
        self.init_seed = init_seed
        self.score_kind = score_kind
        self.bound = bound
        self.phi = phi

    def _fit(self, data):
        net = init_mlp([data.d, *self.hidden, 1], np.random.default_rng(self.init_seed))
        return fit_sgd(data, self.cfg, self.epsilon, mlp=net)

    def _bounds(self, X_train, X_test, kind):
        R, eta = self.cfg.epochs, self.cfg.learning_rate
        if self.bound == "nonconvex":
            if self.phi is None:
                raise ValueError("non-convex bound needs phi")
            prof = lipschitz_profile_linear_huber(X_train, X_test, self.epsilon, 0.0, self.gamma)
            prof = type(prof)(prof.rho, prof.nu, np.full(prof.phi.size, self.phi), prof.gamma, 0.0, prof.n_train)
            return [_pick(sgd_bounds_nonconvex(prof, R, eta, j), kind) for j in range(X_test.shape[0])]
        out = []
        for j in range(X_test.shape[0]):
            b = _pick(sgd_bounds_approx_nn(X_train, X_test[j], R, eta, self.gamma), kind)
            out.append(StabilityBounds(b.kind, b.tau_train, b.tau_test, j, b.meta))
        return out


class BaggingLearner(Learner):
    """Bagged regression trees.

    ``delta=None`` uses the derandomised (``B -> inf``) bound, otherwise the
    finite-``B`` bound valid with probability ``1 - delta``. Tree leaves are
    bag means, so the output width ``w_j`` is taken as the response range
    of ``D`` (or ``response_range`` if given). Only LOO bounds exist.
    """

    def __init__(self, cfg: BaggingConfig = BaggingConfig(), delta: Optional[float] = None,
                 score_kind: ScoreKind = ScoreKind.ABSOLUTE, response_range=None):
        super().__init__()
        self.cfg = cfg
        self.delta = delta
        self.score_kind = score_kind
        self.response_range = response_range
        self._data_range = None

    def prepare(self, data):
        if data.y is not None:
            self._data_range = (float(data.y.min()), float(data.y.max()))

    def _fit(self, data):
        return fit_bagging(data, self.cfg)

    def width(self) -> float:
        rng = self.response_range or self._data_range
        if rng is None:
            raise RuntimeError("bagging learner used before prepare()")
        return float(rng[1] - rng[0])

    def _bounds(self, X_train, X_test, kind):
        if kind is BoundKind.RO:
            raise NotImplementedError("replace-one bounds are unsupported for bagging")
        n = X_train.shape[0]
        m_bag = self.cfg.bag_size or n
        w = self.width()
        if self.delta is None:
            tau = bagging_bound_derandomized(self.gamma, w, n, m_bag)
        else:
            tau = bagging_bound_probabilistic(self.gamma, w, n, m_bag, self.cfg.n_bags, self.delta)
        return [StabilityBounds(BoundKind.LOO, np.full(n, tau), tau, j, {"w_j": w})
                for j in range(X_test.shape[0])]


class ConstantLearner(Learner):
    """Always predicts ``value``; zero stability bounds. Useful as a test stub."""

    def __init__(self, value: float = 0.0):
        super().__init__()
        self.value = float(value)

    def _fit(self, data):
        return _Constant(self.value)

    def _bounds(self, X_train, X_test, kind):
        n = X_train.shape[0]
        return [StabilityBounds(kind, np.zeros(n), 0.0, j) for j in range(X_test.shape[0])]


@dataclass
class _Constant:
    value: float

    def predict(self, X):
        X = np.atleast_2d(X)
        return np.full(X.shape[0], self.value)
