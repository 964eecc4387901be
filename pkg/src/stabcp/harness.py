"""Benchmark harness: seeded repetitions, metric rows and summaries.

``python -m stabcp {simulate,bench,screen} ...`` runs the experiments and
writes ``metrics.csv``, ``summary.csv``, ``plot_data.csv`` and
``config.echo`` into ``--out``. Every flag may also come from an INI file
given with ``--config`` (keys in kebab- or snake-case, any section);
command-line flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import conformal, screening
from .conformal import Method, default_grid
from .data import (
    DataError,
    MeanModel,
    SyntheticSpec,
    gen_synthetic,
    holdout_split,
    load_csv,
    zscore_normalize,
)
from .learners import (
    BaggingLearner,
    KernelRlmLearner,
    KernelSgdLearner,
    MlpLearner,
    RlmLearner,
    SgdLearner,
)
from .models import KernelSpec
from .screening import ScreeningConfig, ScreeningMethod
from .stability import BoundOverflowError
from .trainers import BaggingConfig, BaseLearnerSpec, ConvergenceError, RlmConfig, SgdConfig

__all__ = [
    "ExperimentConfig",
    "METRIC_COLUMNS",
    "SCREEN_COLUMNS",
    "build_learner",
    "repetition_seeds",
    "run_simulate",
    "run_bench",
    "run_screen",
    "main",
]

METRIC_COLUMNS = ["repetition", "seed", "method", "coverage", "mean_length",
                  "wall_time_s", "fit_count"]
SCREEN_COLUMNS = ["repetition", "seed", "method", "q", "fdp", "power", "power_undefined",
                  "n_rejected", "wall_time_s", "fit_count"]
TRAINERS = ("rlm", "sgd", "mlp", "bagging", "kernel-rlm", "kernel-sgd")
INTERVAL_METHODS = tuple(m.value for m in Method)
SCREEN_METHODS = tuple(m.value for m in ScreeningMethod)


class UsageError(Exception):
    pass


class RepetitionError(RuntimeError):
    """A repetition failed; carries its seed so it can be replayed."""

    def __init__(self, repetition, seed, cause):
        super().__init__(f"repetition {repetition} (seed {seed}) failed: {cause}")
        self.repetition = repetition
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str = "simulate"
    methods: tuple = ("loo-stab",)
    repetitions: int = 100
    alpha: float = 0.1
    q: tuple = (0.1, 0.2, 0.3)
    trainer: str = "rlm"
    # trainer hyperparameters
    epochs: int = 15
    learning_rate: float = 0.001
    omega: float = 1.0
    epsilon: float = 1.0
    grad_tol: float = 1e-8
    max_iters: int = 200_000
    hidden: int = 20
    kernel: str = "rbf"
    kernel_sigma: float = 1.0
    kernel_c: float = 1.0
    kernel_degree: int = 2
    n_bags: int = 100
    depth: int = 1
    delta: Optional[float] = None
    # data source
    n: int = 100
    m: int = 100
    d: int = 100
    rho_ar: float = 0.5
    model: str = "linear"
    noise_sd: float = 1.0
    csv: Optional[str] = None
    response: str = "y"
    normalize: bool = True
    # method settings
    grid_size: int = 200
    split_fraction: float = 0.7
    n_splits: int = 30
    thresholds: str = "median"
    score: str = "signed"
    ro_refit: bool = True
    # run control
    master_seed: int = 0
    out: str = "out"
    parallelism: int = 1

    def validate(self):
        if self.subcommand not in ("simulate", "bench", "screen"):
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.repetitions < 1:
            raise UsageError("repetitions must be at least 1")
        if not self.methods:
            raise UsageError("methods must be non-empty")
        allowed = SCREEN_METHODS if self.subcommand == "screen" else INTERVAL_METHODS
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise UsageError(f"unknown method(s) {bad}; choose from {list(allowed)}")
        if self.trainer not in TRAINERS:
            raise UsageError(f"unknown trainer {self.trainer!r}")
        if not 0 < self.alpha < 1:
            raise UsageError("alpha must lie in (0, 1)")
        if any(not 0 < q < 1 for q in self.q):
            raise UsageError("every q must lie in (0, 1)")
        if self.subcommand == "bench" and not self.csv:
            raise UsageError("bench needs --csv")
        if self.parallelism < 1:
            raise UsageError("parallelism must be at least 1")
        return self


# --------------------------------------------------------------------------
# seeds and learners


def repetition_seeds(master_seed: int, repetitions: int) -> list:
    """One integer seed per repetition, independent of scheduling."""
    kids = np.random.SeedSequence(master_seed).spawn(repetitions)
    return [int(k.generate_state(1, dtype=np.uint32)[0]) for k in kids]


def _streams(seed: int) -> dict:
    kids = np.random.SeedSequence(seed).spawn(3)
    data, trainer, split = (int(k.generate_state(1, dtype=np.uint32)[0]) for k in kids)
    return {"data": data, "trainer": trainer, "split": split}


def build_learner(cfg: ExperimentConfig, trainer_seed: int = 0):
    rlm = RlmConfig(omega_weight=cfg.omega, grad_tol=cfg.grad_tol, max_iters=cfg.max_iters)
    sgd = SgdConfig(epochs=cfg.epochs, learning_rate=cfg.learning_rate, permutation_seed=trainer_seed)
    kernel = KernelSpec(cfg.kernel, sigma=cfg.kernel_sigma, c=cfg.kernel_c, degree=cfg.kernel_degree)
    if cfg.trainer == "rlm":
        return RlmLearner(rlm, cfg.epsilon)
    if cfg.trainer == "sgd":
        return SgdLearner(sgd, cfg.epsilon)
    if cfg.trainer == "mlp":
        return MlpLearner((cfg.hidden,), sgd, cfg.epsilon, init_seed=trainer_seed)
    if cfg.trainer == "bagging":
        bag = BaggingConfig(cfg.n_bags, None, BaseLearnerSpec(max_depth=cfg.depth), seed=trainer_seed)
        return BaggingLearner(bag, cfg.delta)
    if cfg.trainer == "kernel-rlm":
        return KernelRlmLearner(kernel, rlm, cfg.epsilon)
    return KernelSgdLearner(kernel, sgd, cfg.epsilon)


def _synthetic(cfg, seed):
    spec = SyntheticSpec(cfg.n, cfg.m, cfg.d, cfg.rho_ar, MeanModel(cfg.model), cfg.noise_sd, seed)
    return gen_synthetic(spec)


_CSV_CACHE: dict = {}


def _csv_data(cfg):
    key = (cfg.csv, cfg.response, cfg.normalize)
    if key not in _CSV_CACHE:
        data = load_csv(cfg.csv, cfg.response)
        _CSV_CACHE[key] = zscore_normalize(data) if cfg.normalize else data
    return _CSV_CACHE[key]


# --------------------------------------------------------------------------
# one repetition


def _interval_metrics(intervals, y_test):
    cover = np.mean([iv.contains(float(y)) for iv, y in zip(intervals, y_test)])
    return float(cover), float(np.mean([iv.length for iv in intervals]))


def _run_method(method, cfg, train, test, streams):
    learner = build_learner(cfg, streams["trainer"])
    t0 = time.perf_counter()
    if method == "loo-stab":
        ivs = conformal.loo_stabcp(train, test.X, cfg.alpha, learner)
    elif method == "ro-stab":
        ivs = conformal.ro_stabcp(train, test.X, cfg.alpha, learner)
    elif method == "split":
        ivs = conformal.split_cp(train, test.X, cfg.alpha, learner, cfg.split_fraction, streams["split"])
    elif method == "mm-split":
        ivs = conformal.mm_split_cp(train, test.X, cfg.alpha, learner, cfg.n_splits,
                                    cfg.split_fraction, streams["split"])
    elif method == "oracle":
        ivs = conformal.oracle_cp(train, test, cfg.alpha, learner)
    elif method == "full":
        ivs = conformal.full_cp(train, test.X, cfg.alpha, learner, default_grid(train.y, cfg.grid_size))
    else:  # pragma: no cover - validated earlier
        raise UsageError(method)
    wall = time.perf_counter() - t0
    cover, length = _interval_metrics(ivs, test.y)
    return {"method": method, "coverage": cover, "mean_length": length,
            "wall_time_s": wall, "fit_count": learner.counter.count}


def _interval_repetition(cfg, r, seed):
    streams = _streams(seed)
    if cfg.subcommand == "bench":
        train, test = holdout_split(_csv_data(cfg), cfg.m, streams["data"])
    else:
        train, test = _synthetic(cfg, streams["data"])
    rows = []
    for method in cfg.methods:
        row = _run_method(method, cfg, train, test, streams)
        rows.append({"repetition": r, "seed": seed, **row})
    return rows


def _screen_thresholds(cfg, train, m):
    if cfg.thresholds == "median":
        return float(np.median(train.y))
    try:
        return float(cfg.thresholds)
    except ValueError:
        raise UsageError(f"thresholds must be 'median' or a number, got {cfg.thresholds!r}") from None


def _screen_repetition(cfg, r, seed):
    streams = _streams(seed)
    if cfg.csv:
        train, test = holdout_split(_csv_data(cfg), cfg.m, streams["data"])
    else:
        train, test = _synthetic(cfg, streams["data"])
    c = _screen_thresholds(cfg, train, test.n)
    rows = []
    for q in cfg.q:
        sc = ScreeningConfig(q, c, cfg.score)
        for method in cfg.methods:
            learner = build_learner(cfg, streams["trainer"])
            t0 = time.perf_counter()
            res = screening.run_screening(train, test.X, sc, method, learner, test_y=test.y,
                                          split_fraction=cfg.split_fraction, seed=streams["split"],
                                          ro_refit=cfg.ro_refit)
            rows.append({
                "repetition": r, "seed": seed, "method": method, "q": q,
                "fdp": res.fdp, "power": res.power,
                "power_undefined": int(res.meta["power_undefined"]),
                "n_rejected": int(res.rejected.size),
                "wall_time_s": time.perf_counter() - t0, "fit_count": res.fit_count,
            })
    return rows


def _repetition(args):
    cfg, r, seed = args
    try:
        if cfg.subcommand == "screen":
            return _screen_repetition(cfg, r, seed)
        return _interval_repetition(cfg, r, seed)
    except (UsageError, DataError):
        raise
    except Exception as exc:
        raise RepetitionError(r, seed, exc) from exc


def _run_all(cfg):
    seeds = repetition_seeds(cfg.master_seed, cfg.repetitions)
    tasks = [(cfg, r, s) for r, s in enumerate(seeds)]
    if cfg.parallelism == 1:
        chunks = [_repetition(t) for t in tasks]
    else:
        with ProcessPoolExecutor(cfg.parallelism) as pool:
            chunks = list(pool.map(_repetition, tasks))
    return [row for chunk in chunks for row in chunk]


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def summarize(rows, keys, metrics) -> list:
    """Mean and sample sd of each metric per group, in first-seen group order."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, members in groups.items():
        rec = dict(zip(keys, key))
        rec["repetitions"] = len(members)
        for metric in metrics:
            v = np.array([float(m[metric]) for m in members])
            with np.errstate(invalid="ignore"):
                # infinite lengths give an inf mean and a nan sd
                rec[f"{metric}_mean"] = float(v.mean())
                rec[f"{metric}_sd"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        out.append(rec)
    return out


def echo_config(cfg: ExperimentConfig) -> str:
    lines = [f"[{cfg.subcommand}]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name.replace('_', '-')} = {'' if v is None else v}")
    return "\n".join(lines) + "\n"


def _emit(cfg, rows, columns, keys, metrics):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "metrics.csv", columns, rows)
    summary = summarize(rows, keys, metrics)
    scols = keys + ["repetitions"] + [f"{m}_{s}" for m in metrics for s in ("mean", "sd")]
    _write_rows(out / "summary.csv", scols, summary)
    plot = [{"repetition": r["repetition"], **{k: r[k] for k in keys}, "metric": m, "value": r[m]}
            for r in rows for m in metrics]
    _write_rows(out / "plot_data.csv", ["repetition"] + keys + ["metric", "value"], plot)
    (out / "config.echo").write_text(echo_config(cfg), encoding="utf-8")
    return summary


def run_simulate(cfg: ExperimentConfig):
    """Synthetic interval experiment; returns ``(rows, summary)``."""
    cfg = replace(cfg, subcommand="simulate").validate()
    rows = _run_all(cfg)
    metrics = ["coverage", "mean_length", "wall_time_s", "fit_count"]
    return rows, _emit(cfg, rows, METRIC_COLUMNS, ["method"], metrics)


def run_bench(cfg: ExperimentConfig):
    """Real-data interval experiment on ``cfg.csv``; returns ``(rows, summary)``."""
    cfg = replace(cfg, subcommand="bench").validate()
    _csv_data(cfg)  # fail fast on bad files
    rows = _run_all(cfg)
    metrics = ["coverage", "mean_length", "wall_time_s", "fit_count"]
    return rows, _emit(cfg, rows, METRIC_COLUMNS, ["method"], metrics)


def run_screen(cfg: ExperimentConfig):
    """Screening experiment; returns ``(rows, summary)`` with one summary row per (method, q)."""
    cfg = replace(cfg, subcommand="screen").validate()
    if cfg.csv:
        _csv_data(cfg)
    rows = _run_all(cfg)
    metrics = ["fdp", "power", "wall_time_s", "fit_count"]
    return rows, _emit(cfg, rows, SCREEN_COLUMNS, ["method", "q"], metrics)


# --------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _csv_list(kind):
    def parse(text):
        return tuple(kind(t.strip()) for t in str(text).split(",") if t.strip())
    return parse


def _optional_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


_TYPES = {bool: _bool, int: int, float: float, str: str}


_HELP = {
    "methods": "comma-separated methods",
    "repetitions": "number of seeded repetitions",
    "alpha": "miscoverage level for intervals",
    "q": "comma-separated target FDR levels (screen)",
    "trainer": "rlm, sgd, kernel-rlm, kernel-sgd, mlp or bagging",
    "epochs": "SGD passes R",
    "learning_rate": "SGD step size",
    "omega": "penalty weight on ||theta||^2",
    "epsilon": "Huber transition point",
    "grad_tol": "RLM stopping tolerance on the gradient norm",
    "max_iters": "RLM iteration cap",
    "hidden": "MLP hidden width",
    "kernel": "rbf or poly",
    "kernel_sigma": "RBF bandwidth",
    "kernel_c": "polynomial offset",
    "kernel_degree": "polynomial degree",
    "n_bags": "bagging ensemble size B",
    "depth": "bagged tree depth",
    "delta": "failure probability of the finite-B bagging bound",
    "n": "training size (synthetic)",
    "m": "test size",
    "d": "feature dimension (synthetic)",
    "rho_ar": "AR(1) feature correlation",
    "model": "linear or nonlinear mean",
    "noise_sd": "noise standard deviation",
    "csv": "numeric CSV with a header row (bench, screen)",
    "response": "response column in the CSV",
    "normalize": "z-score continuous CSV columns",
    "grid_size": "full conformal grid size",
    "split_fraction": "training share of split methods",
    "n_splits": "number of splits for mm-split",
    "thresholds": "screening cutoff: 'median' or a number",
    "score": "signed or clip (screen)",
    "ro_refit": "refit per test point for ro-cfbh",
    "master_seed": "seed of the repetition seed sequence",
    "out": "output directory",
    "parallelism": "worker processes",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stabcp", description="Stable conformal prediction experiments.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("simulate", "bench", "screen"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file supplying any flag")
        for f in fields(ExperimentConfig):
            if f.name == "subcommand":
                continue
            flag = "--" + f.name.replace("_", "-")
            h = _HELP.get(f.name)
            if f.name == "methods":
                p.add_argument(flag, type=_csv_list(str), help=h)
            elif f.name == "q":
                p.add_argument(flag, type=_csv_list(float), help=h)
            elif f.name == "delta":
                p.add_argument(flag, type=_optional_float, help=h)
            elif f.name == "csv":
                p.add_argument(flag, help=h)
            else:
                p.add_argument(flag, type=_TYPES[type(f.default)], help=h)
    return parser


def _config_argv(path) -> list:
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    argv = []
    for section in [cp.default_section, *cp.sections()]:
        for key, value in cp[section].items():
            key = key.strip().replace("_", "-")
            # an echoed config names its subcommand and leaves unset options empty
            if key == "subcommand" or not value.strip():
                continue
            argv += ["--" + key, value]
    return argv


_SCREEN_DEFAULTS = {"methods": ("cfbh", "ro-cfbh", "loo-cfbh"), "trainer": "sgd"}


def parse_config(argv) -> ExperimentConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        sub = [ns.subcommand, *_config_argv(ns.config)]
        file_ns = parser.parse_args(sub)
        for k, v in vars(file_ns).items():
            if getattr(ns, k, None) is None and v is not None:
                setattr(ns, k, v)
    values = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    if ns.subcommand == "screen":
        for k, v in _SCREEN_DEFAULTS.items():
            values.setdefault(k, v)
    return ExperimentConfig(**values).validate()


_RUNNERS = {"simulate": run_simulate, "bench": run_bench, "screen": run_screen}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
        _, summary = _RUNNERS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RepetitionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        numeric = (ConvergenceError, BoundOverflowError, FloatingPointError, OverflowError)
        if isinstance(exc.cause, DataError):
            return 2
        return 3 if isinstance(exc.cause, numeric) else 1
    for rec in summary:
        print(", ".join(f"{k}={_short(v)}" for k, v in rec.items()))
    return 0


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)
