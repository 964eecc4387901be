"""Conformalized screening: conformal p-values, Benjamini-Hochberg, FDP/power.

Each test point ``j`` carries the null ``H0j: Y_{n+j} <= c_j``. Scores use a
signed (or clipped) residual so that a large test score at ``c_j`` is
evidence that the prediction sits above the threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conformal import split_indices
from .core import ScoreKind, score
from .data import Dataset
from .stability import BoundKind

__all__ = [
    "ScreeningMethod",
    "ScreeningConfig",
    "ScreeningResult",
    "split_pvalues",
    "loo_pvalues",
    "ro_pvalues",
    "bh_procedure",
    "fdp_power",
    "run_screening",
]


class ScreeningMethod(enum.Enum):
    CF_BH = "cfbh"
    RO_CF_BH = "ro-cfbh"
    LOO_CF_BH = "loo-cfbh"


@dataclass(frozen=True)
class ScreeningConfig:
    """Target FDR ``q``, thresholds ``c`` (scalar or one per test point).

    ``strict=False`` flips every ``<`` in the p-values and the BH rejection
    step to ``<=``, for sensitivity checks.
    """

    q: float
    thresholds: object = 0.0
    score_kind: ScoreKind = ScoreKind.SIGNED
    strict: bool = True

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if ScoreKind(self.score_kind) is ScoreKind.ABSOLUTE:
            raise ValueError("screening needs a signed or clip score")

    def thresholds_for(self, m: int) -> np.ndarray:
        c = np.asarray(self.thresholds, dtype=float)
        if c.ndim == 0:
            return np.full(m, float(c))
        if c.shape != (m,):
            raise ValueError(f"expected {m} thresholds, got shape {c.shape}")
        return c


@dataclass
class ScreeningResult:
    p_values: np.ndarray
    k_star: int
    rejected: np.ndarray
    fdp: Optional[float] = None
    power: Optional[float] = None
    fit_count: int = 0
    meta: dict = field(default_factory=dict)


def _less(a, b, strict):
    return a < b if strict else a <= b


def split_pvalues(calib_scores, test_scores, strict: bool = True) -> np.ndarray:
    """``p_j = (#{i : S_i < S_j} + 1) / (|calib| + 1)``."""
    cal = np.asarray(calib_scores, dtype=float).ravel()
    test = np.asarray(test_scores, dtype=float).ravel()
    if cal.size == 0:
        raise ValueError("calibration set is empty")
    cal = np.sort(cal)
    side = "left" if strict else "right"
    counts = np.searchsorted(cal, test, side=side)
    return (counts + 1.0) / (cal.size + 1.0)


def _stable_pvalues(train_scores, test_scores, bounds, kind, strict):
    test = np.asarray(test_scores, dtype=float).ravel()
    S = np.asarray(train_scores, dtype=float)
    if len(bounds) != test.size:
        raise ValueError(f"{len(bounds)} bounds for {test.size} test scores")
    if S.ndim == 1:
        S = np.broadcast_to(S, (test.size, S.size))
    if S.shape[0] != test.size:
        raise ValueError("per-test training scores have the wrong shape")
    n = S.shape[1]
    p = np.empty(test.size)
    for j, b in enumerate(bounds):
        if b.kind is not kind:
            raise ValueError(f"expected {kind.value} bounds, got {b.kind.value}")
        hits = _less(S[j] - b.tau_train, test[j] + b.tau_test, strict)
        p[j] = (np.count_nonzero(hits) + 1.0) / (n + 1.0)
    return p


def loo_pvalues(train_scores, test_scores, bounds, strict: bool = True) -> np.ndarray:
    """Stability-adjusted p-values
    ``p_j = (#{i : S_i - tau_ij < S_j + tau_{n+j,j}} + 1) / (n + 1)``.

    ``train_scores`` is a length-``n`` vector, or an ``(m, n)`` array when
    each test point has its own fit.
    """
    return _stable_pvalues(train_scores, test_scores, bounds, BoundKind.LOO, strict)


def ro_pvalues(train_scores, test_scores, bounds, strict: bool = True) -> np.ndarray:
    """Same formula as :func:`loo_pvalues` with replace-one bounds."""
    return _stable_pvalues(train_scores, test_scores, bounds, BoundKind.RO, strict)


def bh_procedure(p_values, q: float, strict: bool = True):
    """Benjamini-Hochberg step-up.

    ``k* = max{k : #{j : p_j <= q k / m} >= k}`` (0 if none), then reject
    ``p_j < q k* / m``. Returns ``(k_star, sorted rejected indices)``.
    """
    p = np.asarray(p_values, dtype=float).ravel()
    m = p.size
    if m == 0:
        raise ValueError("no p-values")
    ps = np.sort(p)
    k = np.arange(1, m + 1)
    # #{p_j <= qk/m} >= k  iff  the k-th smallest p is <= qk/m
    ok = np.nonzero(ps <= q * k / m)[0]
    k_star = int(ok[-1] + 1) if ok.size else 0
    if k_star == 0:
        return 0, np.array([], dtype=int)
    rejected = np.nonzero(_less(p, q * k_star / m, strict))[0]
    return k_star, rejected


def fdp_power(rejected, h1) -> tuple:
    """``(fdp, power, power_undefined)`` for a rejection set and H1 truth mask.

    Power is reported as 1.0 when no alternative is true.
    """
    h1 = np.asarray(h1, dtype=bool).ravel()
    rej = np.zeros(h1.size, dtype=bool)
    rej[np.asarray(rejected, dtype=int)] = True
    n_rej = int(rej.sum())
    false = int((rej & ~h1).sum())
    fdp = false / max(1, n_rej)
    n_h1 = int(h1.sum())
    if n_h1 == 0:
        return fdp, 1.0, True
    return fdp, int((rej & h1).sum()) / n_h1, False


def run_screening(train: Dataset, test_X, cfg: ScreeningConfig, method, learner,
                  test_y=None, split_fraction: float = 0.7, seed=0,
                  ro_refit: bool = True, bounds: Optional[list] = None) -> ScreeningResult:
    """Score, compute p-values and run BH for one screening method.

    ``seed`` drives only the cfBH split. With ``ro_refit=False`` the
    replace-one variant reuses the base fit (the identical-fit comparison);
    otherwise it refits once per test point on ``D ∪ {(x_j, c_j)}``.
    ``bounds`` overrides the learner's bounds of the method's kind.
    """
    method = ScreeningMethod(method)
    kind = ScoreKind(cfg.score_kind)
    X_test = np.asarray(test_X, dtype=float).reshape(-1, train.d)
    m = X_test.shape[0]
    c = cfg.thresholds_for(m)
    start = learner.counter.count

    if method is ScreeningMethod.CF_BH:
        tr, cal = split_indices(train.n, split_fraction, seed)
        fold = train.subset(tr)
        learner.prepare(fold)
        model = learner.fit(fold)
        cal_scores = score(kind, train.y[cal], model.predict(train.X[cal]))
        test_scores = score(kind, c, model.predict(X_test))
        p = split_pvalues(cal_scores, test_scores, cfg.strict)
    else:
        learner.prepare(train)
        refit = method is ScreeningMethod.RO_CF_BH and ro_refit
        if refit:
            S = np.empty((m, train.n))
            test_scores = np.empty(m)
            for j in range(m):
                f = learner.fit(train.augment(X_test[j], c[j]))
                S[j] = score(kind, train.y, f.predict(train.X))
                test_scores[j] = score(kind, c[j], f.predict(X_test[j : j + 1])[0])
        else:
            model = learner.fit(train)
            S = score(kind, train.y, model.predict(train.X))
            test_scores = score(kind, c, model.predict(X_test))
        if method is ScreeningMethod.LOO_CF_BH:
            b = bounds if bounds is not None else learner.loo_bounds(train.X, X_test)
            p = loo_pvalues(S, test_scores, b, cfg.strict)
        else:
            b = bounds if bounds is not None else learner.ro_bounds(train.X, X_test)
            p = ro_pvalues(S, test_scores, b, cfg.strict)

    k_star, rejected = bh_procedure(p, cfg.q, cfg.strict)
    res = ScreeningResult(p, k_star, rejected, fit_count=learner.counter.count - start)
    if test_y is not None:
        h1 = np.asarray(test_y, dtype=float).ravel() > c
        res.fdp, res.power, undefined = fdp_power(rejected, h1)
        res.meta["power_undefined"] = undefined
    return res
