"""Recording, synchronization and dataset plumbing.

A recorded bag holds the simulator's two raw streams (30 Hz state with the
full feature vector, 100 Hz ground truth) plus schema and session metadata,
persisted as a directory of two CSV files and a JSON header. Synchronization
pairs each state sample with its nearest-in-time truth sample inside a
tolerance, yielding a flat dataset of (features, truth, reported) rows ready
for model fitting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FULL_SCHEMA, FeatureSchema
from .sim import (CableErrorModel, MotionPolicy, SimSession, StateStream,
                  TrajectoryFollower, TruthStream)
from .trajectory import DEFAULT_SPEEDS, Trajectory

#: Default pairing tolerance: well under half a 30 Hz state period.
SYNC_TOLERANCE_S = 0.010


class EmptyDatasetError(ValueError):
    """Synchronization produced no pairs within tolerance."""


class DataError(ValueError):
    pass


# --------------------------------------------------------------------------
# recorded bags


@dataclass(frozen=True)
class RecordedBag:
    state: StateStream
    truth: TruthStream
    schema: FeatureSchema
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.state.features.shape[1] != self.schema.dim_full:
            raise DataError("state feature width does not match schema")
        if np.any(np.diff(self.state.t) <= 0) or np.any(np.diff(self.truth.t) <= 0):
            raise DataError("stream timestamps must be strictly increasing")


def record(policy_or_traj, error_model: CableErrorModel, *, duration=None,
           load="unloaded", rates=(30.0, 100.0), seed=0, time_scale=1.0,
           limits=None, speeds=DEFAULT_SPEEDS, metadata: Optional[dict] = None) -> RecordedBag:
    """Run one simulated session and package the streams as a bag."""
    from .core import DEFAULT_LIMITS
    limits = limits if limits is not None else DEFAULT_LIMITS
    policy = (TrajectoryFollower(policy_or_traj, speeds)
              if isinstance(policy_or_traj, Trajectory) else policy_or_traj)
    session = SimSession(error_model, limits, rates, seed, time_scale)
    state, truth = session.run(policy, duration, load)
    meta = {
        "load": load,
        "seed": seed,
        "rates": list(rates),
        "time_scale": time_scale,
        "duration_s": float(session.clock),
    }
    if isinstance(policy_or_traj, Trajectory):
        meta["trajectory"] = {"direction": policy_or_traj.direction,
                              "sparsity": policy_or_traj.sparsity}
    if metadata:
        meta.update(metadata)
    return RecordedBag(state, truth, FULL_SCHEMA, meta)


def _write_matrix(path: Path, header: list, mat: np.ndarray) -> None:
    np.savetxt(path, mat, fmt="%.17g", delimiter=",",
               header=",".join(header), comments="")


def save_bag(bag: RecordedBag, bag_dir) -> None:
    """Persist as a directory: state.csv, truth.csv, metadata.json."""
    bag_dir = Path(bag_dir)
    bag_dir.mkdir(parents=True, exist_ok=True)
    _write_matrix(bag_dir / "state.csv", ["t"] + list(bag.schema.names),
                  np.column_stack([bag.state.t, bag.state.features]))
    _write_matrix(bag_dir / "truth.csv", ["t", "q1", "q2", "q3"],
                  np.column_stack([bag.truth.t, bag.truth.q]))
    with open(bag_dir / "metadata.json", "w") as fh:
        json.dump({"schema": bag.schema.to_dict(), "metadata": bag.metadata},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bag(bag_dir) -> RecordedBag:
    bag_dir = Path(bag_dir)
    with open(bag_dir / "metadata.json") as fh:
        head = json.load(fh)
    schema = FeatureSchema.from_dict(head["schema"])
    state = np.loadtxt(bag_dir / "state.csv", delimiter=",", skiprows=1, ndmin=2)
    truth = np.loadtxt(bag_dir / "truth.csv", delimiter=",", skiprows=1, ndmin=2)
    return RecordedBag(
        StateStream(state[:, 0], state[:, 1:]),
        TruthStream(truth[:, 0], truth[:, 1:4]),
        schema,
        head["metadata"],
    )


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean/sd with degenerate (sd = 0) features flagged.

    Degenerate features get sd forced to 1, which maps a constant column to
    exactly zero after centering.
    """

    mean: np.ndarray
    sd: np.ndarray
    degenerate: np.ndarray  # bool per feature

    @classmethod
    def fit(cls, X: np.ndarray) -> "NormStats":
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        degenerate = sd == 0.0
        return cls(mean, np.where(degenerate, 1.0, sd), degenerate)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(),
                "degenerate": self.degenerate.astype(bool).tolist()}

    @classmethod
    def from_dict(cls, d) -> "NormStats":
        return cls(np.array(d["mean"]), np.array(d["sd"]),
                   np.array(d["degenerate"], dtype=bool))


@dataclass(frozen=True)
class Dataset:
    """Synchronized training rows: inputs + truth targets + raw reported.

    ``inputs`` holds raw (unnormalized) feature values for the columns
    selected by ``schema``; ``norm`` (when attached by split_and_normalize
    or a fit) carries train-set statistics for those columns.
    """

    t: np.ndarray         # (N,) state-stream timestamps
    inputs: np.ndarray    # (N, D)
    targets: np.ndarray   # (N, 3) ground-truth positions
    reported: np.ndarray  # (N, 3) reported positions
    schema: FeatureSchema
    norm: Optional[NormStats] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if n == 0:
            raise EmptyDatasetError("dataset has no rows")
        if not (len(self.inputs) == len(self.targets) == len(self.reported) == n):
            raise DataError("row count mismatch across dataset arrays")
        if self.inputs.shape[1] != self.schema.dim_selected:
            raise DataError(
                f"inputs have {self.inputs.shape[1]} columns, schema selects {self.schema.dim_selected}")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def errors(self) -> np.ndarray:
        """Per-row joint error: truth - reported (the on-error target)."""
        return self.targets - self.reported

    def normalized_inputs(self) -> np.ndarray:
        if self.norm is None:
            raise DataError("dataset has no normalization stats attached")
        return self.norm.apply(self.inputs)


def synchronize(bag: RecordedBag, tolerance: float = SYNC_TOLERANCE_S,
                full_features: bool = False) -> Dataset:
    """Pair state samples with nearest-in-time truth samples.

    Each state sample pairs with its nearest truth sample when their
    timestamps differ by at most ``tolerance`` (equidistant cases take the
    earlier truth sample). The pairing is injective on truth samples: if
    two state samples claim the same truth sample, the closer one wins
    (ties again to the earlier). Unpaired state samples are dropped.
    ``full_features`` keeps all 138 columns instead of the selected 16.
    """
    ts, tt = bag.state.t, bag.truth.t
    if len(ts) == 0 or len(tt) == 0:
        raise EmptyDatasetError("cannot synchronize empty streams")
    pos = np.searchsorted(tt, ts)
    left = np.clip(pos - 1, 0, len(tt) - 1)
    right = np.clip(pos, 0, len(tt) - 1)
    d_left = np.abs(ts - tt[left])
    d_right = np.abs(ts - tt[right])
    nearest = np.where(d_left <= d_right, left, right)
    dist = np.minimum(d_left, d_right)
    ok = dist <= tolerance

    # enforce injectivity on truth: among state samples sharing a truth
    # index, keep the closest (first on ties, since stable ordering)
    order = np.lexsort((np.arange(len(ts)), dist))
    chosen = np.zeros(len(ts), dtype=bool)
    used = set()
    for i in order:
        if not ok[i]:
            continue
        k = int(nearest[i])
        if k not in used:
            used.add(k)
            chosen[i] = True
    if not np.any(chosen):
        raise EmptyDatasetError(
            f"no state/truth pairs within tolerance {tolerance}s")

    idx = np.flatnonzero(chosen)
    schema = bag.schema.with_all_selected() if full_features else bag.schema
    X = bag.state.features[idx][:, schema.selected_indices()]
    targets = bag.truth.q[nearest[idx]]
    rep_cols = [bag.schema.index_of(f"joint_position_j{j}") for j in (1, 2, 3)]
    reported = bag.state.features[idx][:, rep_cols]
    meta = dict(bag.metadata)
    meta["sync_tolerance_s"] = tolerance
    return Dataset(bag.state.t[idx], X, targets, reported, schema, None, meta)


def split_and_normalize(ds: Dataset, train_frac: float = 0.8) -> tuple:
    """Contiguous time-block split; stats fitted on train, attached to both.

    Sessions with drift must never be shuffled across the split boundary,
    so the first ``train_frac`` of rows (by recorded order) become the
    training block.
    """
    if len(ds) < 2:
        raise DataError("need at least 2 rows to split")
    if not (0.0 < train_frac < 1.0):
        raise DataError(f"train_frac must be in (0, 1), got {train_frac}")
    n_train = min(max(int(round(len(ds) * train_frac)), 1), len(ds) - 1)
    norm = NormStats.fit(ds.inputs[:n_train])

    def _slice(sl) -> Dataset:
        return Dataset(ds.t[sl], ds.inputs[sl], ds.targets[sl],
                       ds.reported[sl], ds.schema, norm, dict(ds.meta))

    return _slice(slice(0, n_train)), _slice(slice(n_train, None))


def with_norm_from(ds: Dataset, stats_source: Dataset) -> Dataset:
    """Attach another dataset's (train) normalization stats to ``ds``."""
    if stats_source.norm is None:
        raise DataError("stats source has no normalization stats")
    if stats_source.schema != ds.schema:
        raise DataError("schema mismatch between dataset and stats source")
    return replace(ds, norm=stats_source.norm)


def concat(datasets: list) -> Dataset:
    """Row-wise concatenation of datasets sharing one schema/mask."""
    if not datasets:
        raise EmptyDatasetError("nothing to concatenate")
    first = datasets[0]
    for d in datasets[1:]:
        if d.schema != first.schema:
            raise DataError("cannot concat datasets with different schemas/masks")
    meta = {"sources": [d.meta for d in datasets]}
    return Dataset(
        np.concatenate([d.t for d in datasets]),
        np.vstack([d.inputs for d in datasets]),
        np.vstack([d.targets for d in datasets]),
        np.vstack([d.reported for d in datasets]),
        first.schema,
        None,
        meta,
    )


def save_dataset(ds: Dataset, csv_path) -> None:
    """CSV columns t, x_0..x_{D-1}, q*_true, q*_rep + JSON schema sidecar."""
    csv_path = Path(csv_path)
    D = ds.inputs.shape[1]
    header = (["t"] + [f"x_{i}" for i in range(D)]
              + ["q1_true", "q2_true", "q3_true", "q1_rep", "q2_rep", "q3_rep"])
    _write_matrix(csv_path, header,
                  np.column_stack([ds.t, ds.inputs, ds.targets, ds.reported]))
    sidecar = {
        "schema": ds.schema.to_dict(),
        "norm": ds.norm.to_dict() if ds.norm is not None else None,
        "meta": ds.meta,
    }
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    with open(csv_path.with_suffix(".json")) as fh:
        side = json.load(fh)
    schema = FeatureSchema.from_dict(side["schema"])
    mat = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    D = schema.dim_selected
    if mat.shape[1] != 1 + D + 6:
        raise DataError(f"dataset width {mat.shape[1]} does not match sidecar schema (D={D})")
    norm = NormStats.from_dict(side["norm"]) if side.get("norm") else None
    return Dataset(mat[:, 0], mat[:, 1:1 + D], mat[:, 1 + D:4 + D],
                   mat[:, 4 + D:7 + D], schema, norm, side.get("meta", {}))
