"""Conformal prediction intervals.

All methods take a labelled training :class:`~stabcp.data.Dataset`, test
features, a level ``alpha`` and a :class:`~stabcp.learners.Learner`, and
return one :class:`PredictionInterval` per test point. Augmented training
sets always place the extra point last (index ``n``), which is what lets
SGD learners share permutations between the base fit and every refit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import conformal_quantile, lower_quantile
from .data import Dataset

__all__ = [
    "Method",
    "PredictionInterval",
    "GridSpec",
    "default_grid",
    "loo_stabcp",
    "ro_stabcp",
    "full_cp",
    "split_cp",
    "oracle_cp",
    "mm_split_cp",
    "majority_region",
    "split_indices",
]


class Method(enum.Enum):
    ORACLE = "oracle"
    FULL = "full"
    SPLIT = "split"
    RO_STAB = "ro-stab"
    LOO_STAB = "loo-stab"
    MM_SPLIT = "mm-split"


@dataclass
class PredictionInterval:
    """Closed interval ``[lo, hi]``, possibly infinite.

    ``pieces`` holds the exact set when it is a union of intervals
    (majority vote); ``accepted`` holds the accepted grid values for
    grid-based full conformal. ``empty`` marks a set with no members.
    """

    lo: float
    hi: float
    pieces: Optional[list] = None
    grid: Optional[np.ndarray] = None
    accepted: Optional[np.ndarray] = None
    empty: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.empty and not self.lo <= self.hi:
            raise ValueError(f"interval with lo={self.lo} > hi={self.hi}")

    @classmethod
    def centred(cls, center: float, half_width: float, **kw):
        return cls(center - half_width, center + half_width, **kw)

    @classmethod
    def empty_set(cls, **kw):
        return cls(math.nan, math.nan, empty=True, **kw)

    @property
    def length(self) -> float:
        if self.empty:
            return 0.0
        if self.pieces is not None:
            return float(sum(b - a for a, b in self.pieces))
        if self.accepted is not None:
            return self._grid_length()
        return self.hi - self.lo

    def _grid_length(self):
        # each accepted grid value owns the half-cells on either side
        g = self.grid
        if g.size == 1:
            return 0.0
        edges = np.concatenate([[g[0]], 0.5 * (g[1:] + g[:-1]), [g[-1]]])
        widths = np.diff(edges)
        return float(widths[self.accepted].sum())

    def contains(self, y: float) -> bool:
        """Membership of ``y`` in the exact set (not the hull)."""
        if self.empty:
            return False
        if self.pieces is not None:
            return any(a <= y <= b for a, b in self.pieces)
        if self.accepted is not None:
            if not self.grid[0] <= y <= self.grid[-1]:
                return False
            k = int(np.argmin(np.abs(self.grid - y)))
            return bool(self.accepted[k])
        return self.lo <= y <= self.hi

    def contains_interval(self, other: "PredictionInterval") -> bool:
        """Whether ``other``'s members all lie in this interval's hull."""
        if other.empty:
            return True
        if self.empty:
            return False
        if other.accepted is not None:
            vals = other.grid[other.accepted]
            return bool(np.all((vals >= self.lo) & (vals <= self.hi)))
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass(frozen=True)
class GridSpec:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("empty grid")
        if np.any(np.diff(v) < 0):
            raise ValueError("grid must be sorted")
        object.__setattr__(self, "values", v)


def default_grid(y, size: int = 200, spread: float = 3.0) -> GridSpec:
    """``size`` points spanning ``[min y - spread sd, max y + spread sd]``."""
    y = np.asarray(y, dtype=float)
    sd = float(y.std()) if y.size > 1 else 1.0
    return GridSpec(np.linspace(y.min() - spread * sd, y.max() + spread * sd, size))


def _prepare(learner, train: Dataset):
    if train.y is None:
        raise ValueError("training data must carry responses")
    learner.prepare(train)


def _as_matrix(test_X, d):
    X = np.asarray(test_X, dtype=float)
    return X.reshape(-1, d)


def loo_stabcp(train: Dataset, test_X, alpha: float, learner, bounds: Optional[list] = None) -> list:
    """Leave-one-out stable conformal intervals from a single fit on ``D``.

    ``bounds`` overrides ``learner.loo_bounds`` (one entry per test point).
    """
    _prepare(learner, train)
    X_test = _as_matrix(test_X, train.d)
    model = learner.fit(train)
    scores = np.abs(train.y - model.predict(train.X))
    centers = model.predict(X_test)
    if bounds is None:
        bounds = learner.loo_bounds(train.X, X_test)
    out = []
    for j, b in enumerate(bounds):
        q = conformal_quantile(scores + b.tau_train, alpha)
        out.append(PredictionInterval.centred(float(centers[j]), q + b.tau_test))
    return out


def ro_stabcp(train: Dataset, test_X, alpha: float, learner, guesses=None,
              bounds: Optional[list] = None) -> list:
    """Replace-one stable conformal intervals, refitting once per test point.

    Without ``guesses``, one extra fit on ``D`` supplies ``y~_j = f_D(x_j)``,
    recorded in each interval's ``meta["guess"]``.
    """
    _prepare(learner, train)
    X_test = _as_matrix(test_X, train.d)
    if guesses is None:
        guesses = learner.fit(train).predict(X_test)
    guesses = np.broadcast_to(np.asarray(guesses, dtype=float), (X_test.shape[0],))
    if bounds is None:
        bounds = learner.ro_bounds(train.X, X_test)
    out = []
    for j, b in enumerate(bounds):
        model = learner.fit(train.augment(X_test[j], guesses[j]))
        scores = np.abs(train.y - model.predict(train.X))
        q = conformal_quantile(scores + b.tau_train, alpha)
        center = float(model.predict(X_test[j : j + 1])[0])
        out.append(PredictionInterval.centred(center, q + b.tau_test, meta={"guess": float(guesses[j])}))
    return out


def full_cp(train: Dataset, test_X, alpha: float, learner, grid: Optional[GridSpec] = None) -> list:
    """Grid-search full conformal sets; one fit per (test point, grid value).

    Each interval carries the accepted grid mask; ``lo``/``hi`` are its hull.
    """
    _prepare(learner, train)
    X_test = _as_matrix(test_X, train.d)
    if grid is None:
        grid = default_grid(train.y)
    values = grid.values
    out = []
    for j in range(X_test.shape[0]):
        accepted = np.zeros(values.size, dtype=bool)
        for k, yv in enumerate(values):
            model = learner.fit(train.augment(X_test[j], yv))
            pred = model.predict(np.vstack([train.X, X_test[j]]))
            scores = np.abs(train.y - pred[:-1])
            accepted[k] = abs(yv - pred[-1]) <= conformal_quantile(scores, alpha)
        if accepted.any():
            kept = values[accepted]
            out.append(PredictionInterval(float(kept[0]), float(kept[-1]), grid=values, accepted=accepted))
        else:
            out.append(PredictionInterval.empty_set(grid=values, accepted=accepted,
                                                    meta={"empty": True}))
    return out


def split_indices(n: int, split_fraction: float, seed) -> tuple:
    """Random train/calibration index split; both folds non-empty."""
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    n_train = int(round(split_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split of n={n} at {split_fraction} leaves an empty fold")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_cp(train: Dataset, test_X, alpha: float, learner, split_fraction: float = 0.7,
             seed=0) -> list:
    """Split conformal: fit on one fold, calibrate on the other."""
    if train.y is None:
        raise ValueError("training data must carry responses")
    X_test = _as_matrix(test_X, train.d)
    tr, cal = split_indices(train.n, split_fraction, seed)
    fold = train.subset(tr)
    learner.prepare(fold)
    model = learner.fit(fold)
    scores = np.abs(train.y[cal] - model.predict(train.X[cal]))
    q = conformal_quantile(scores, alpha)
    return [PredictionInterval.centred(float(c), q) for c in model.predict(X_test)]


def oracle_cp(train: Dataset, test: Dataset, alpha: float, learner) -> list:
    """Full conformal evaluated only at the true test responses.

    The quantile runs over all ``n + 1`` finite scores, without the
    ``+inf`` sentinel.
    """
    _prepare(learner, train)
    if test.y is None:
        raise ValueError("oracle conformal needs test responses")
    out = []
    for j in range(test.n):
        aug = train.augment(test.X[j], test.y[j])
        model = learner.fit(aug)
        scores = np.abs(aug.y - model.predict(aug.X))
        q = lower_quantile(scores, 1.0 - alpha)
        out.append(PredictionInterval.centred(float(model.predict(test.X[j : j + 1])[0]), q))
    return out


def majority_region(intervals: Sequence, K: Optional[int] = None) -> list:
    """Closure of ``{y : #{k : y in I_k} > K/2}`` as sorted disjoint pieces.

    Intervals are closed ``(lo, hi)`` pairs; empty ones may be passed as
    ``None``. Computed exactly from the sorted endpoints.
    """
    ivs = [(float(a), float(b)) for a, b in (iv for iv in intervals if iv is not None)]
    K = len(intervals) if K is None else K
    pts = sorted({v for iv in ivs for v in iv})
    if not pts:
        return []

    def count(y):
        return sum(a <= y <= b for a, b in ivs)

    def probe(a, b):
        # a representative point of the open gap (a, b)
        if math.isinf(a) and math.isinf(b):
            return 0.0
        if math.isinf(a):
            return b - 1.0
        if math.isinf(b):
            return a + 1.0
        return 0.5 * (a + b)

    # alternate: gap, point, gap, point, ..., gap
    finite = [p for p in pts if math.isfinite(p)]
    bounds = [-math.inf] + finite + [math.inf]
    cells = []
    for k in range(len(bounds) - 1):
        a, b = bounds[k], bounds[k + 1]
        if k > 0:
            cells.append((a, a, count(a) > K / 2))
        cells.append((a, b, count(probe(a, b)) > K / 2))
    pieces = []
    for a, b, keep in cells:
        if not keep:
            continue
        if pieces and pieces[-1][1] >= a:
            pieces[-1] = (pieces[-1][0], max(pieces[-1][1], b))
        else:
            pieces.append((a, b))
    return pieces


def mm_split_cp(train: Dataset, test_X, alpha: float, learner, K: int = 30,
                split_fraction: float = 0.7, seed=0) -> list:
    """Majority vote over ``K`` split-conformal intervals at level ``alpha/2``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    X_test = _as_matrix(test_X, train.d)
    seeds = np.random.SeedSequence(seed).spawn(K)
    per_split = [split_cp(train, X_test, alpha / 2.0, learner, split_fraction, s) for s in seeds]
    out = []
    for j in range(X_test.shape[0]):
        pieces = majority_region([(ivs[j].lo, ivs[j].hi) for ivs in per_split], K)
        if not pieces:
            out.append(PredictionInterval.empty_set(meta={"empty": True}))
        else:
            out.append(PredictionInterval(pieces[0][0], pieces[-1][1], pieces=pieces))
    return out
