"""Accuracy, drift-decay, sweep and latency evaluation for fitted models.

Conventions used throughout:

  * RMSE is per joint, in native units (deg, deg, mm).
  * Improvement percentages are always model RMSE / fixed-offset RMSE --
    the fixed-offset baseline is the denominator, never the raw error.
  * Hour buckets are left-closed [h, h+1) relative to the evaluation
    window's origin.
  * Latency is measured per sample (batch 1) on the pure-Python predict
    path with a monotonic clock; a model passes iff its p99 beats the
    servo budget period.

Reports are plain dataclasses with ``to_rows()`` producing long-format
dicts, ready for CSV emission or plotting elsewhere.
"""

from __future__ import annotations

import csv
import gc
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DEFAULT_LIMITS, JointLimits
from .data import Dataset, concat, record, split_and_normalize, synchronize
from .models import CalibrationModel, fit_linear, fit_offset
from .nn import LARGE_CONFIG, MlpConfig
from .sim import CableErrorModel
from .trajectory import DIRECTIONS, generate

JOINTS = ("j1", "j2", "j3")


class EvalError(ValueError):
    pass


def rmse(pred, truth) -> np.ndarray:
    """Per-column root-mean-square error between two equally shaped matrices."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise EvalError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


# --------------------------------------------------------------------------
# accuracy reports


@dataclass(frozen=True)
class RmseReport:
    """Per-joint accuracy of one model over one sample window."""

    raw: np.ndarray           # (3,) uncorrected RMSE
    fixed_offset: np.ndarray  # (3,) fixed-offset baseline RMSE
    model: np.ndarray         # (3,) evaluated model RMSE
    n_samples: int
    bucket_hour: Optional[int] = None

    def __post_init__(self):
        for a in (self.raw, self.fixed_offset, self.model):
            if np.any(np.asarray(a) < 0):
                raise EvalError("RMSE cannot be negative")

    @property
    def percentage(self) -> np.ndarray:
        """Model RMSE as a fraction of the fixed-offset baseline."""
        base = np.asarray(self.fixed_offset, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.model) / base

    def to_rows(self) -> list:
        rows = []
        for j, joint in enumerate(JOINTS):
            rows.append({
                "joint": joint,
                "bucket_hour": self.bucket_hour,
                "n_samples": self.n_samples,
                "raw_rmse": float(self.raw[j]),
                "fixed_offset_rmse": float(self.fixed_offset[j]),
                "model_rmse": float(self.model[j]),
                "percentage": float(self.percentage[j]),
            })
        return rows


def evaluate_model(model: CalibrationModel, ds: Dataset,
                   offset_model: CalibrationModel,
                   bucket_hour: Optional[int] = None) -> RmseReport:
    """RMSE report for one model on one dataset, with baselines."""
    return RmseReport(
        raw=rmse(ds.reported, ds.targets),
        fixed_offset=rmse(offset_model.predict_batch(ds.inputs), ds.targets),
        model=rmse(model.predict_batch(ds.inputs), ds.targets),
        n_samples=len(ds),
        bucket_hour=bucket_hour,
    )


def decay_curve(model: CalibrationModel, ds: Dataset,
                offset_model: CalibrationModel, bucket_s: float = 3600.0,
                origin: Optional[float] = None) -> list:
    """Hour-by-hour RMSE reports over a long session.

    Buckets are left-closed [h*bucket_s, (h+1)*bucket_s) relative to
    ``origin`` (default: first sample time); empty buckets are absent from
    the returned list.
    """
    if bucket_s <= 0:
        raise EvalError(f"bucket_s must be positive, got {bucket_s}")
    origin = float(ds.t[0]) if origin is None else float(origin)
    hours = np.floor((ds.t - origin) / bucket_s).astype(int)
    reports = []
    for h in np.unique(hours):
        sel = hours == h
        sub = Dataset(ds.t[sel], ds.inputs[sel], ds.targets[sel],
                      ds.reported[sel], ds.schema, ds.norm, dict(ds.meta))
        reports.append(evaluate_model(model, sub, offset_model, bucket_hour=int(h)))
    return reports


# --------------------------------------------------------------------------
# latency


@dataclass(frozen=True)
class LatencyReport:
    """Single-sample inference timing for one model vs a servo budget."""

    kind: str
    mode: str
    n_samples: int
    repeats: int
    budget_hz: float
    p50_s: float          # median across runs of each run's percentile
    p95_s: float
    p99_s: float
    runs: tuple           # per-run dicts with p50_s/p95_s/p99_s/passed
    throughput_hz: float
    passed: bool
    p99_spread: float     # max/min - 1 of p99 across runs

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["runs"] = [dict(r) for r in self.runs]
        return d

    def to_rows(self) -> list:
        return [{
            "model": self.kind, "mode": self.mode,
            "p50_ms": self.p50_s * 1e3, "p95_ms": self.p95_s * 1e3,
            "p99_ms": self.p99_s * 1e3,
            "throughput_hz": self.throughput_hz,
            "budget_hz": self.budget_hz, "passed": self.passed,
            "n_samples": self.n_samples, "repeats": self.repeats,
            "p99_spread": self.p99_spread,
        }]


def bench_latency(model: CalibrationModel, X, n_samples: int = 10_000,
                  budget_hz: float = 1000.0, repeats: int = 3,
                  warmup: int = 200) -> LatencyReport:
    """Time the batch-1 predict path over ``n_samples`` calls per run.

    Rows are pre-converted to Python lists so the measurement covers the
    model arithmetic, not input marshalling. The garbage collector is
    paused during timed sections.
    """
    if n_samples < 1 or repeats < 1:
        raise EvalError("n_samples and repeats must be >= 1")
    rows = [list(map(float, r)) for r in np.asarray(X, dtype=float)]
    if not rows:
        raise EvalError("need at least one feature row to benchmark")
    n_rows = len(rows)
    predict = model.predict
    clock = time.perf_counter_ns

    runs = []
    for _ in range(repeats):
        for i in range(warmup):
            predict(rows[i % n_rows])
        samples = np.empty(n_samples)
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            for i in range(n_samples):
                row = rows[i % n_rows]
                t0 = clock()
                predict(row)
                samples[i] = clock() - t0
        finally:
            if gc_was_enabled:
                gc.enable()
        p50, p95, p99 = np.percentile(samples, (50, 95, 99)) / 1e9
        runs.append({"p50_s": float(p50), "p95_s": float(p95),
                     "p99_s": float(p99),
                     "passed": bool(p99 < 1.0 / budget_hz)})

    p50 = float(np.median([r["p50_s"] for r in runs]))
    p95 = float(np.median([r["p95_s"] for r in runs]))
    p99 = float(np.median([r["p99_s"] for r in runs]))
    p99s = [r["p99_s"] for r in runs]
    return LatencyReport(
        kind=model.kind, mode=model.mode, n_samples=n_samples,
        repeats=repeats, budget_hz=budget_hz,
        p50_s=p50, p95_s=p95, p99_s=p99, runs=tuple(runs),
        throughput_hz=1.0 / p50 if p50 > 0 else float("inf"),
        passed=bool(p99 < 1.0 / budget_hz),
        p99_spread=float(max(p99s) / min(p99s) - 1.0) if min(p99s) > 0 else 0.0,
    )


# --------------------------------------------------------------------------
# direction sweep


@dataclass(frozen=True)
class SweepCell:
    direction: str
    model: str
    rmse: np.ndarray        # (3,)
    percentage: np.ndarray  # (3,) vs same-direction fixed offset
    n_train: int
    n_test: int


@dataclass(frozen=True)
class SweepTable:
    cells: tuple

    def directions(self) -> tuple:
        seen = dict.fromkeys(c.direction for c in self.cells)
        return tuple(seen)

    def model_names(self) -> tuple:
        seen = dict.fromkeys(c.model for c in self.cells)
        return tuple(seen)

    def cell(self, direction: str, model: str) -> SweepCell:
        for c in self.cells:
            if c.direction == direction and c.model == model:
                return c
        raise KeyError((direction, model))

    def best_direction(self, model: str, joint: int) -> str:
        cells = [c for c in self.cells if c.model == model]
        if not cells:
            raise KeyError(model)
        return min(cells, key=lambda c: c.rmse[joint]).direction

    def to_rows(self) -> list:
        rows = []
        for c in self.cells:
            for j, joint in enumerate(JOINTS):
                rows.append({
                    "direction": c.direction, "model": c.model, "joint": joint,
                    "rmse": float(c.rmse[j]),
                    "percentage": float(c.percentage[j]),
                    "n_train": c.n_train, "n_test": c.n_test,
                })
        return rows


def _cell_seed(seed: int, i: int, j: int) -> int:
    return seed * 10007 + i * 101 + j


def build_direction_dataset(error_model: CableErrorModel, direction: str,
                            sparsities: Sequence, *,
                            limits: JointLimits = DEFAULT_LIMITS,
                            rates=(30.0, 100.0), seed: int = 0,
                            time_scale: float = 1.0, load="unloaded",
                            dir_index: int = 0) -> Dataset:
    """Record one session per sparsity for a direction and concatenate."""
    parts = []
    for j, sp in enumerate(sparsities):
        traj = generate(direction, sp, limits)
        bag = record(traj, error_model, load=load, rates=rates,
                     seed=_cell_seed(seed, dir_index, j), time_scale=time_scale,
                     limits=limits)
        parts.append(synchronize(bag))
    return concat(parts) if len(parts) > 1 else parts[0]


def direction_sweep(error_model: CableErrorModel, fits: Optional[dict] = None, *,
                    directions: Sequence = DIRECTIONS,
                    sparsities: Sequence = (1 / 2, 1 / 3, 1 / 4),
                    limits: JointLimits = DEFAULT_LIMITS, rates=(30.0, 100.0),
                    seed: int = 0, time_scale: float = 1.0,
                    train_frac: float = 0.8, load="unloaded") -> SweepTable:
    """Fit and score each model per trajectory direction.

    For every direction, the sessions for all requested sparsities are
    recorded and combined into one dataset, split into contiguous
    train/test blocks. ``fits`` maps report names to callables
    ``train_ds -> model``; the fixed-offset baseline is always fitted and
    reported, and supplies the percentage denominator.
    """
    fits = dict(fits) if fits else {"linear": fit_linear}
    cells = []
    for i, direction in enumerate(directions):
        ds = build_direction_dataset(
            error_model, direction, sparsities, limits=limits, rates=rates,
            seed=seed, time_scale=time_scale, load=load, dir_index=i)
        train, test = split_and_normalize(ds, train_frac)
        offset = fit_offset(train)
        base = rmse(offset.predict_batch(test.inputs), test.targets)
        cells.append(SweepCell(direction, "offset", base,
                               base / base, len(train), len(test)))
        for name, fit in fits.items():
            model = fit(train)
            r = rmse(model.predict_batch(test.inputs), test.targets)
            cells.append(SweepCell(direction, name, r, r / base,
                                   len(train), len(test)))
    return SweepTable(tuple(cells))


# --------------------------------------------------------------------------
# feature robustness


@dataclass(frozen=True)
class RobustnessEntry:
    name: str
    mask: str               # "selected16" or "full138"
    rmse: np.ndarray        # (3,)
    percentage: np.ndarray  # (3,) vs fixed offset
    n_train: int
    n_test: int


@dataclass(frozen=True)
class RobustnessReport:
    entries: tuple

    def entry(self, name: str) -> RobustnessEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_rows(self) -> list:
        rows = []
        for e in self.entries:
            for j, joint in enumerate(JOINTS):
                rows.append({
                    "fit": e.name, "mask": e.mask, "joint": joint,
                    "rmse": float(e.rmse[j]),
                    "percentage": float(e.percentage[j]),
                    "n_train": e.n_train, "n_test": e.n_test,
                })
        return rows


def _subsample(ds: Dataset, n: int) -> Dataset:
    # A "short training set" is the leading slice of the recording, not a
    # thinned version of the whole session: thinning would still cover the
    # full workspace and time span, hiding the failure mode this study is
    # supposed to expose.
    if n >= len(ds):
        return ds
    idx = np.arange(n)
    return Dataset(ds.t[idx], ds.inputs[idx], ds.targets[idx],
                   ds.reported[idx], ds.schema, ds.norm, dict(ds.meta))


def feature_robustness(train_bag, test_bag, *, n_train: Optional[int] = None,
                       seed: int = 0, mlp_config: Optional[MlpConfig] = None,
                       large_config: Optional[MlpConfig] = None) -> RobustnessReport:
    """Compare fits on the selected 16 inputs vs the full 138-feature vector.

    The same training rows feed every fit, with only the input selection
    changing; all models score on the held-out bag.  When ``n_train`` is
    given, training is restricted to the first ``n_train`` rows of the
    recording (a short contiguous session).  Reported fits: fixed offset,
    linear on both masks, the standard MLP on the selected mask and the
    large regularized MLP on the full mask.
    """
    from .models import fit_mlp, fit_poly2  # noqa: F401  (poly kept importable)

    mlp_config = mlp_config if mlp_config is not None else MlpConfig()
    large_config = large_config if large_config is not None else LARGE_CONFIG

    sel_train = synchronize(train_bag)
    full_train = synchronize(train_bag, full_features=True)
    sel_test = synchronize(test_bag)
    full_test = synchronize(test_bag, full_features=True)
    if n_train is not None:
        sel_train = _subsample(sel_train, n_train)
        full_train = _subsample(full_train, n_train)

    offset = fit_offset(sel_train)
    base = rmse(offset.predict_batch(sel_test.inputs), sel_test.targets)

    def entry(name, mask, model, test):
        r = rmse(model.predict_batch(test.inputs), test.targets)
        return RobustnessEntry(name, mask, r, r / base,
                               len(sel_train), len(sel_test))

    entries = [
        RobustnessEntry("offset", "selected16", base, base / base,
                        len(sel_train), len(sel_test)),
        entry("linear-selected", "selected16", fit_linear(sel_train), sel_test),
        entry("linear-full", "full138", fit_linear(full_train), full_test),
        entry("mlp-selected", "selected16",
              fit_mlp(sel_train, config=mlp_config, seed=seed), sel_test),
        entry("mlp-large-full", "full138",
              fit_mlp(full_train, config=large_config, seed=seed), full_test),
    ]
    return RobustnessReport(tuple(entries))


# --------------------------------------------------------------------------
# homing segments


def segment_rmse(model: CalibrationModel, datasets: Sequence) -> np.ndarray:
    """Per-joint model RMSE for each dataset in a sequence (shape (K, 3)).

    Used by the homing study: each element is one between-homings segment.
    """
    out = []
    for ds in datasets:
        out.append(rmse(model.predict_batch(ds.inputs), ds.targets))
    return np.array(out)


# --------------------------------------------------------------------------
# report emission


def write_rows_csv(rows: list, path) -> None:
    """Long-format CSV from a list of same-keyed dicts."""
    if not rows:
        raise EvalError("no rows to write")
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_json(obj, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
