"""Non-conformity scores and lower sample quantiles.

Every conformal method in the package reduces to two primitives: a score
``S(y, z)`` comparing a response ``y`` with a prediction ``z``, and the
lower-``p`` sample quantile of a multiset of scores, optionally padded
with a ``+inf`` sentinel.
"""

from __future__ import annotations

import enum
import math
from typing import Iterable

import numpy as np

__all__ = [
    "ScoreKind",
    "score",
    "lower_quantile",
    "conformal_quantile",
]

# p * N is compared against integer counts; products like 0.9 * 10 land a
# few ulps above the integer and must not bump the order statistic.
_RANK_TOL = 1e-9


class ScoreKind(enum.Enum):
    """Built-in non-conformity scores.

    ``ABSOLUTE`` is used for prediction intervals, ``SIGNED`` and ``CLIP``
    for screening. All three are 1-Lipschitz in the prediction.
    """

    ABSOLUTE = "absolute"
    SIGNED = "signed"
    CLIP = "clip"

    @property
    def gamma(self) -> float:
        return 1.0

    def __call__(self, y, z):
        return score(self, y, z)


def score(kind: ScoreKind, y, z):
    """Evaluate the score of response(s) ``y`` against prediction(s) ``z``.

    Works elementwise on arrays.

    >>> score(ScoreKind.SIGNED, 1.0, 3.0)
    -2.0
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if kind is ScoreKind.ABSOLUTE:
        out = np.abs(y - z)
    elif kind is ScoreKind.SIGNED:
        out = y - z
    elif kind is ScoreKind.CLIP:
        out = 100.0 * y - z
    else:  # pragma: no cover
        raise ValueError(f"unknown score kind {kind!r}")
    return out.item() if out.ndim == 0 else out


def _rank(p: float, n: int) -> int:
    k = math.ceil(p * n - _RANK_TOL * max(1.0, p * n))
    return min(max(k, 1), n)


def lower_quantile(values: Iterable[float], p: float) -> float:
    """Lower-``p`` sample quantile ``inf{x : F(x) >= p}``.

    Equal to the ``ceil(p * N)``-th smallest of the ``N`` values; ties are
    kept and ``+inf`` entries sort last.

    Parameters
    ----------
    values : iterable of float
        Sample, possibly containing ``np.inf``.
    p : float
        Level in ``(0, 1]``.
    """
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if np.isnan(arr).any():
        raise ValueError("sample contains NaN")
    k = _rank(p, arr.size)
    return float(np.partition(arr, k - 1)[k - 1])


def conformal_quantile(scores: Iterable[float], alpha: float) -> float:
    """``Q_{1-alpha}(scores ∪ {+inf})``, the threshold used by conformal sets.

    The sentinel is never combined arithmetically with anything; when the
    rank lands on it the result is ``+inf``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    arr = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("empty sample")
    k = _rank(1.0 - alpha, arr.size + 1)
    if k == arr.size + 1:
        return math.inf
    if np.isnan(arr).any():
        raise ValueError("sample contains NaN")
    return float(np.partition(arr, k - 1)[k - 1])
