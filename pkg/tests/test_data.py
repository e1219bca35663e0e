import numpy as np
import pytest

from cablecal.core import FULL_SCHEMA
from cablecal import data as dt
from cablecal import sim as sm
from cablecal import trajectory as tj


def make_bag(duration=20.0, rates=(30.0, 100.0), seed=0, em=None):
    em = em if em is not None else sm.default_error_model()
    traj = tj.generate("j2j3", 0.5, step=0.02)
    return dt.record(traj, em, duration=duration, rates=rates, seed=seed)


def synthetic_bag(ts, tt, qt=None):
    n = len(ts)
    feats = np.zeros((n, FULL_SCHEMA.dim_full))
    feats[:, FULL_SCHEMA.index_of("timestamp")] = ts
    for j in (1, 2, 3):
        feats[:, FULL_SCHEMA.index_of(f"joint_position_j{j}")] = np.arange(n) + j
    qt = qt if qt is not None else np.tile([[1.0, 2.0, 3.0]], (len(tt), 1)) * tt[:, None]
    return dt.RecordedBag(sm.StateStream(np.asarray(ts, float), feats),
                          sm.TruthStream(np.asarray(tt, float), qt), FULL_SCHEMA)


# --- bags -------------------------------------------------------------------

def test_bag_round_trip_bit_identical(tmp_path):
    bag = make_bag()
    dt.save_bag(bag, tmp_path / "bag")
    back = dt.load_bag(tmp_path / "bag")
    assert np.array_equal(back.state.t, bag.state.t)
    assert np.array_equal(back.state.features, bag.state.features)
    assert np.array_equal(back.truth.t, bag.truth.t)
    assert np.array_equal(back.truth.q, bag.truth.q)
    assert back.schema == bag.schema
    assert back.metadata == bag.metadata


def test_bag_rejects_wrong_width():
    with pytest.raises(dt.DataError):
        dt.RecordedBag(sm.StateStream(np.array([0.0]), np.zeros((1, 5))),
                       sm.TruthStream(np.array([0.0]), np.zeros((1, 3))), FULL_SCHEMA)


def test_record_metadata():
    bag = make_bag(seed=3)
    assert bag.metadata["seed"] == 3
    assert bag.metadata["trajectory"]["direction"] == "j2j3"


# --- synchronization ----------------------------------------------------------

def test_sync_coincident_grids_pairs_everything():
    bag = make_bag(rates=(50.0, 50.0))
    ds = dt.synchronize(bag)
    assert len(ds) == len(bag.state.t)
    assert np.array_equal(ds.targets, bag.truth.q[: len(ds)])


def test_sync_dual_rate_pair_count_equals_state_count():
    bag = make_bag(rates=(30.0, 100.0))
    for tol in (0.005, 0.010):
        ds = dt.synchronize(bag, tolerance=tol)
        assert len(ds) == len(bag.state.t)


def test_sync_zero_tolerance_incommensurate_grids_empty():
    ts = np.arange(10) * (1 / 30.0) + 0.0011
    tt = np.arange(34) * 0.01
    with pytest.raises(dt.EmptyDatasetError):
        dt.synchronize(synthetic_bag(ts, tt), tolerance=0.0)


def test_sync_nearest_wins_ties_to_earlier():
    # state sample exactly between two truth samples -> earlier truth
    ts = np.array([0.05])
    tt = np.array([0.0, 0.1])
    qt = np.array([[1.0, 1, 1], [2.0, 2, 2]])
    ds = dt.synchronize(synthetic_bag(ts, tt, qt), tolerance=0.1)
    assert np.array_equal(ds.targets[0], [1.0, 1, 1])


def test_sync_injective_on_truth():
    # state denser than truth: each truth sample pairs at most once,
    # and the nearest state sample keeps it
    ts = np.array([0.00, 0.04, 0.09, 0.12, 0.22])
    tt = np.array([0.0, 0.1, 0.2])
    qt = np.arange(9, dtype=float).reshape(3, 3)
    ds = dt.synchronize(synthetic_bag(ts, tt, qt), tolerance=0.06)
    # truth 0.0 -> state 0.00 (0.04 loses, d=0.04); truth 0.1 -> state 0.09
    # (0.12 loses, d=0.02 vs 0.01); truth 0.2 -> state 0.22
    assert len(ds) == 3
    assert np.allclose(ds.t, [0.00, 0.09, 0.22])


def test_sync_deterministic():
    bag = make_bag()
    d1 = dt.synchronize(bag)
    d2 = dt.synchronize(bag)
    assert np.array_equal(d1.inputs, d2.inputs)
    assert np.array_equal(d1.targets, d2.targets)


def test_sync_full_features():
    bag = make_bag()
    ds = dt.synchronize(bag, full_features=True)
    assert ds.inputs.shape[1] == 138
    assert ds.schema.dim_selected == 138
    sel = dt.synchronize(bag)
    assert sel.inputs.shape[1] == 16


def test_errors_property():
    bag = make_bag()
    ds = dt.synchronize(bag)
    assert np.array_equal(ds.errors, ds.targets - ds.reported)
    # with the default model, reported j2 is biased well away from truth
    assert abs(ds.errors[:, 1].mean()) > 1.0


# --- split / normalize ----------------------------------------------------------

def test_split_is_time_blocked():
    bag = make_bag(duration=40.0)
    ds = dt.synchronize(bag)
    train, test = dt.split_and_normalize(ds, 0.8)
    assert len(train) == round(len(ds) * 0.8)
    assert train.t.max() < test.t.min()
    assert np.array_equal(np.concatenate([train.t, test.t]), ds.t)


def test_norm_stats_from_train_only():
    bag = make_bag(duration=40.0)
    ds = dt.synchronize(bag)
    train, test = dt.split_and_normalize(ds, 0.5)
    assert train.norm is test.norm
    want_mean = ds.inputs[: len(train)].mean(axis=0)
    assert np.allclose(train.norm.mean, want_mean)
    # normalized train is centered; normalized test generally is not
    assert np.max(np.abs(train.normalized_inputs().mean(axis=0))) < 1e-9


def test_degenerate_features_flagged_and_zeroed():
    bag = make_bag(em=sm.noiseless_linear_model())
    ds = dt.synchronize(bag)
    train, _ = dt.split_and_normalize(ds, 0.8)
    j5 = list(ds.schema.selected_names()).index("joint_position_j5")
    assert train.norm.degenerate[j5]
    assert np.all(train.normalized_inputs()[:, j5] == 0.0)
    assert train.norm.sd[j5] == 1.0


def test_with_norm_from():
    bag = make_bag(duration=30.0)
    ds = dt.synchronize(bag)
    train, _ = dt.split_and_normalize(ds, 0.8)
    other = dt.synchronize(make_bag(duration=10.0, seed=5))
    attached = dt.with_norm_from(other, train)
    assert attached.norm is train.norm


# --- concat ---------------------------------------------------------------------

def test_concat_identity_and_sum():
    a = dt.synchronize(make_bag(duration=10.0, seed=1))
    b = dt.synchronize(make_bag(duration=15.0, seed=2))
    one = dt.concat([a])
    assert np.array_equal(one.inputs, a.inputs)
    both = dt.concat([a, b])
    assert len(both) == len(a) + len(b)
    assert np.array_equal(both.inputs[: len(a)], a.inputs)


def test_concat_mixed_masks_rejected():
    bag = make_bag(duration=10.0)
    sel = dt.synchronize(bag)
    full = dt.synchronize(bag, full_features=True)
    with pytest.raises(dt.DataError):
        dt.concat([sel, full])


# --- dataset persistence ----------------------------------------------------------

def test_dataset_round_trip_bit_identical(tmp_path):
    ds = dt.synchronize(make_bag())
    train, _ = dt.split_and_normalize(ds, 0.8)
    path = tmp_path / "train.csv"
    dt.save_dataset(train, path)
    back = dt.load_dataset(path)
    assert np.array_equal(back.t, train.t)
    assert np.array_equal(back.inputs, train.inputs)
    assert np.array_equal(back.targets, train.targets)
    assert np.array_equal(back.reported, train.reported)
    assert back.schema == train.schema
    assert np.array_equal(back.norm.mean, train.norm.mean)
    assert np.array_equal(back.norm.sd, train.norm.sd)
    assert np.array_equal(back.norm.degenerate, train.norm.degenerate)


def test_dataset_round_trip_without_norm(tmp_path):
    ds = dt.synchronize(make_bag())
    dt.save_dataset(ds, tmp_path / "d.csv")
    back = dt.load_dataset(tmp_path / "d.csv")
    assert back.norm is None
    assert np.array_equal(back.inputs, ds.inputs)
