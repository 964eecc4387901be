"""Datasets: AR(1) synthetic generator and CSV ingestion."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "Dataset",
    "DataError",
    "MeanModel",
    "SyntheticSpec",
    "ar1_covariance",
    "beta_vector",
    "gen_synthetic",
    "load_csv",
    "write_csv",
    "zscore_normalize",
    "holdout_split",
]


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass
class Dataset:
    X: np.ndarray
    y: Optional[np.ndarray] = None
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float).ravel()
            if self.y.size != self.X.shape[0]:
                raise DataError(f"{self.X.shape[0]} feature rows but {self.y.size} responses")
        if not self.feature_names:
            self.feature_names = [f"x{k + 1}" for k in range(self.X.shape[1])]
        elif len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names length does not match X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], None if self.y is None else self.y[idx], list(self.feature_names))

    def augment(self, x, y) -> "Dataset":
        """Append one labelled point at the end (index ``n``)."""
        if self.y is None:
            raise DataError("cannot augment an unlabelled dataset")
        X = np.vstack([self.X, np.asarray(x, dtype=float).reshape(1, -1)])
        return Dataset(X, np.append(self.y, float(y)), list(self.feature_names))


class MeanModel(enum.Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 100
    m: int = 100
    d: int = 100
    rho_ar: float = 0.5
    model: MeanModel = MeanModel.LINEAR
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.model, str):
            object.__setattr__(self, "model", MeanModel(self.model))
        if self.n < 1 or self.m < 1 or self.d < 1:
            raise DataError("n, m and d must be positive")


def ar1_covariance(d: int, rho: float) -> np.ndarray:
    """``Sigma[i, j] = rho ** |i - j|``."""
    if not abs(rho) < 1:
        raise DataError(f"AR(1) correlation must satisfy |rho| < 1, got {rho}")
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def beta_vector(d: int) -> np.ndarray:
    """Coefficients ``∝ (1 - j/d)^5``, j = 1..d, rescaled so ``||beta||^2 = d``."""
    if d < 2:
        raise DataError("degenerate beta: d must be at least 2")
    j = np.arange(1, d + 1)
    raw = (1.0 - j / d) ** 5
    return raw * math.sqrt(d / np.sum(raw**2))


def gen_synthetic(spec: SyntheticSpec):
    """Draw ``(train, test)`` with ``X ~ N(0, Sigma/d)`` and ``Y = mu(X) + noise``.

    The test dataset keeps its responses so coverage can be scored.
    """
    rng = np.random.default_rng(spec.seed)
    total = spec.n + spec.m
    L = np.linalg.cholesky(ar1_covariance(spec.d, spec.rho_ar) / spec.d)
    X = rng.standard_normal((total, spec.d)) @ L.T
    beta = beta_vector(spec.d)
    if spec.model is MeanModel.LINEAR:
        mu = X @ beta
    else:
        mu = np.exp(X / 10.0) @ beta
    y = mu + spec.noise_sd * rng.standard_normal(total)
    names = [f"x{k + 1}" for k in range(spec.d)]
    train = Dataset(X[: spec.n], y[: spec.n], names)
    test = Dataset(X[spec.n :], y[spec.n :], list(names))
    return train, test


def load_csv(path, response_column: str) -> Dataset:
    """Read a comma-separated file with a header row.

    Every column must be numeric; the response column is split off. Rows
    with empty or non-numeric cells are reported together.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if response_column not in header:
        raise DataError(f"{path}: response column {response_column!r} not in header")
    bad = []
    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            bad.append(i + 2)
            continue
        try:
            values[i] = [float(c) for c in row]
        except ValueError:
            bad.append(i + 2)
    if bad:
        raise DataError(f"{path}: missing or non-numeric values on line(s) {bad}")
    if not np.all(np.isfinite(values)):
        lines = sorted({int(i) + 2 for i in np.where(~np.isfinite(values))[0]})
        raise DataError(f"{path}: non-finite values on line(s) {lines}")
    k = header.index(response_column)
    feats = [h for i, h in enumerate(header) if i != k]
    return Dataset(np.delete(values, k, axis=1), values[:, k], feats)


def write_csv(data: Dataset, path, response_column: str = "y") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = list(data.feature_names) + ([response_column] if data.y is not None else [])
        w.writerow(cols)
        for i in range(data.n):
            row = list(data.X[i]) + ([data.y[i]] if data.y is not None else [])
            w.writerow([repr(float(v)) for v in row])


def _is_indicator(col) -> bool:
    return bool(np.all((col == 0) | (col == 1))) and 0 < col.sum() < col.size


def zscore_normalize(data: Dataset, normalize_response: bool = True) -> Dataset:
    """Centre and scale every continuous column to mean 0, population sd 1.

    0/1 indicator columns (dummy-encoded categories, binary responses) are
    left untouched.
    """

    def scale(A, names):
        A = A.copy()
        keep = [i for i in range(A.shape[1]) if not _is_indicator(A[:, i])]
        mu = A[:, keep].mean(axis=0)
        sd = A[:, keep].std(axis=0)
        flat = [names[keep[i]] for i in np.where(sd <= 0)[0]]
        if flat:
            raise DataError(f"zero-variance column(s): {flat}")
        A[:, keep] = (A[:, keep] - mu) / sd
        return A

    X = scale(data.X, data.feature_names)
    y = data.y
    if y is not None and normalize_response:
        y = scale(y[:, None], ["<response>"])[:, 0]
    return Dataset(X, y, list(data.feature_names))


def holdout_split(data: Dataset, m: int, seed) -> tuple:
    """Hold out ``m`` rows uniformly at random as the test set."""
    if not 1 <= m < data.n:
        raise DataError(f"holdout of m={m} from n={data.n} leaves no training data")
    rng = np.random.default_rng(seed)
    test_idx = np.sort(rng.choice(data.n, size=m, replace=False))
    mask = np.ones(data.n, dtype=bool)
    mask[test_idx] = False
    return data.subset(np.where(mask)[0]), data.subset(test_idx)
