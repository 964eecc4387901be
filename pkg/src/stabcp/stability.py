"""Closed-form leave-one-out (LOO) and replace-one (RO) stability bounds.

A bound ``tau[i, j]`` caps how much the score of point ``i`` can move when
test point ``j`` (with any guessed response) is added to the training set
(LOO) or when its guessed response is swapped for another (RO).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .models import LipschitzProfile

__all__ = [
    "BoundKind",
    "StabilityBounds",
    "BoundOverflowError",
    "rlm_bounds",
    "sgd_bounds_convex",
    "sgd_bounds_nonconvex",
    "sgd_bounds_approx_nn",
    "bagging_bound_derandomized",
    "bagging_bound_probabilistic",
    "bagging_inclusion_probability",
]


class BoundKind(enum.Enum):
    LOO = "loo"
    RO = "ro"


class BoundOverflowError(OverflowError):
    """The non-convex SGD bound exceeds the floating-point range."""


@dataclass(frozen=True)
class StabilityBounds:
    """Bounds for one test point ``j``.

    ``tau_train[i]`` covers training point ``i``; ``tau_test`` covers the
    test point itself.
    """

    kind: BoundKind
    tau_train: np.ndarray
    tau_test: float
    test_index: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.tau_train, dtype=float)
        if np.any(t < 0) or not np.all(np.isfinite(t)) or not (0 <= self.tau_test < math.inf):
            raise ValueError("stability bounds must be finite and non-negative")
        object.__setattr__(self, "tau_train", t)
        object.__setattr__(self, "tau_test", float(self.tau_test))


def _split(profile: LipschitzProfile, j: int, values: np.ndarray):
    n = profile.n_train
    if not 0 <= j < profile.n_test:
        raise IndexError(f"test index {j} out of range for {profile.n_test} test points")
    return values[:n], float(values[n + j])


def _pair(profile, j, loo_scale, ro_scale, meta=None):
    """Both bounds are ``scale * nu_i`` for every i in [n] ∪ {n+j}."""
    train_nu, test_nu = _split(profile, j, profile.nu)
    meta = dict(meta or {})
    loo = StabilityBounds(BoundKind.LOO, loo_scale * train_nu, loo_scale * test_nu, j, meta)
    ro = StabilityBounds(BoundKind.RO, ro_scale * train_nu, ro_scale * test_nu, j, meta)
    return loo, ro


def rlm_bounds(profile: LipschitzProfile, j: int):
    """Bounds for a minimiser of a ``lambda``-strongly convex penalised risk.

    ``tau_LOO = 2 gamma nu_i (rho_{n+j} + mean rho) / (lambda (n+1))`` and
    ``tau_RO = 4 gamma nu_i rho_{n+j} / (lambda (n+1))``.
    """
    if not profile.lambda_sc > 0:
        raise ValueError("strong convexity required: lambda_sc must be positive")
    n = profile.n_train
    if n < 1:
        raise ValueError("need at least one training point")
    _, rho_test = _split(profile, j, profile.rho)
    denom = profile.lambda_sc * (n + 1)
    loo_scale = 2.0 * profile.gamma * (rho_test + profile.rho_bar) / denom
    ro_scale = 4.0 * profile.gamma * rho_test / denom
    return _pair(profile, j, loo_scale, ro_scale)


def _check_eta(profile, eta):
    phi_max = float(profile.phi.max()) if profile.phi.size else 0.0
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    if phi_max > 0 and eta > 2.0 / phi_max:
        raise ValueError(
            f"learning rate {eta} exceeds 2/max(phi) with max(phi) = {phi_max:.6g}"
        )


def sgd_bounds_convex(profile: LipschitzProfile, R: int, eta: float, j: int):
    """``tau_LOO = R eta gamma nu_i rho_{n+j}``; RO is twice that."""
    if R < 1:
        raise ValueError("R must be at least 1")
    _check_eta(profile, eta)
    _, rho_test = _split(profile, j, profile.rho)
    base = R * eta * profile.gamma * rho_test
    return _pair(profile, j, base, 2.0 * base)


def _r_plus(kappa_log: float, R: int) -> float:
    """``sum_{r=1}^R kappa^r`` from ``log kappa``."""
    if kappa_log == 0.0:
        return float(R)
    # log of the geometric sum, evaluated stably
    logs = kappa_log * np.arange(1, R + 1)
    top = logs.max()
    log_sum = top + math.log(np.exp(logs - top).sum())
    if log_sum > math.log(np.finfo(float).max) - 1.0:
        raise BoundOverflowError(f"R+ = exp({log_sum:.1f}) overflows; the bound is vacuous")
    return math.exp(log_sum)


def sgd_bounds_nonconvex(profile: LipschitzProfile, R: int, eta: float, j: int):
    """Convex SGD bounds with ``R`` replaced by ``sum_r kappa^r``,
    ``kappa = prod_i (1 + eta phi_i)`` over the training points."""
    if R < 1:
        raise ValueError("R must be at least 1")
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    phi = profile.phi[: profile.n_train]
    kappa_log = float(np.sum(np.log1p(eta * phi)))
    r_plus = _r_plus(kappa_log, R)
    _, rho_test = _split(profile, j, profile.rho)
    base = r_plus * eta * profile.gamma * rho_test
    if not math.isfinite(base):
        raise BoundOverflowError("bound overflows")
    return _pair(profile, j, base, 2.0 * base, {"r_plus": r_plus})


def sgd_bounds_approx_nn(features, test_feature, R: int, eta: float, gamma: float = 1.0):
    """Heuristic network bounds ``R eta gamma ||x_i|| ||x_{n+j}||`` (RO doubled).

    Treats the network as if it were convex; not a guarantee.
    """
    A = np.atleast_2d(np.asarray(features, dtype=float))
    t = np.asarray(test_feature, dtype=float).ravel()
    train_norm = np.linalg.norm(A, axis=1)
    test_norm = float(np.linalg.norm(t))
    base = R * eta * gamma * test_norm
    meta = {"heuristic": True}
    loo = StabilityBounds(BoundKind.LOO, base * train_norm, base * test_norm, 0, meta)
    ro = StabilityBounds(BoundKind.RO, 2 * base * train_norm, 2 * base * test_norm, 0, meta)
    return loo, ro


def bagging_inclusion_probability(n: int, m_bag: int) -> float:
    """Chance that a given index appears in a bag of ``m_bag`` uniform draws from ``[n]``."""
    return -math.expm1(m_bag * math.log1p(-1.0 / n))


def bagging_bound_derandomized(gamma: float, w_j: float, n: int, m_bag: int) -> float:
    """``(gamma w_j / 2) sqrt(p / (1 - p))`` with ``p = 1 - (1 - 1/n)^m``."""
    if n <= 1:
        raise ValueError("p=1 degenerate: need n >= 2")
    if w_j < 0 or gamma < 0 or m_bag < 1:
        raise ValueError("invalid bagging bound inputs")
    p = bagging_inclusion_probability(n, m_bag)
    return 0.5 * gamma * w_j * math.sqrt(p / (1.0 - p))


def bagging_bound_probabilistic(gamma: float, w_j: float, n: int, m_bag: int, B: int, delta: float) -> float:
    """Finite-``B`` bound holding with probability at least ``1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if B < 1:
        raise ValueError("B must be at least 1")
    if n <= 1:
        raise ValueError("p=1 degenerate: need n >= 2")
    p = bagging_inclusion_probability(n, m_bag)
    return gamma * w_j * (0.5 * math.sqrt(p / (1.0 - p)) + math.sqrt(2.0 / B * math.log(4.0 / delta)))
