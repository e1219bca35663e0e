import math
from dataclasses import replace

import numpy as np
import pytest

from cablecal.core import DEFAULT_LIMITS, FULL_SCHEMA, JointLimits, JointVector
from cablecal import sim as sm
from cablecal import trajectory as tj


def feat(stream, name):
    return stream.features[:, FULL_SCHEMA.index_of(name)]


def reported(stream):
    return np.stack([feat(stream, f"joint_position_j{j}") for j in (1, 2, 3)], axis=1)


def torques(stream):
    return np.stack([feat(stream, f"motor_torque_j{j}") for j in (1, 2, 3)], axis=1)


def short_traj():
    return tj.generate("j2j3", 0.5, step=0.02)


# --- identity / offset-only oracles ---------------------------------------

def test_zero_model_reports_truth():
    state, truth = sm.simulate_session(short_traj(), sm.CableErrorModel(),
                                       rates=(50.0, 50.0), seed=1, duration=10.0)
    assert np.array_equal(state.t, truth.t)
    assert np.max(np.abs(reported(state) - truth.q)) < 1e-12


def test_offset_only_model():
    em = sm.CableErrorModel(offset=(1.0, -2.0, 3.0))
    state, truth = sm.simulate_session(short_traj(), em, rates=(50.0, 50.0),
                                       seed=1, duration=10.0)
    err = reported(state) - truth.q
    assert np.max(np.abs(err - [1.0, -2.0, 3.0])) < 1e-12


def test_noiseless_linear_identity():
    # with hysteresis/drift/noise off, error == offset + P@rep + S@tau exactly
    em = sm.noiseless_linear_model()
    state, truth = sm.simulate_session(short_traj(), em, rates=(40.0, 40.0),
                                       seed=3, duration=30.0)
    err = reported(state) - truth.q
    pred = em.b + reported(state) @ em.P.T + torques(state) @ em.S.T
    assert np.max(np.abs(err - pred)) < 1e-9


# --- determinism -----------------------------------------------------------

def test_bit_identical_given_seed():
    em = sm.default_error_model()
    a = sm.simulate_session(short_traj(), em, seed=7, duration=20.0)
    b = sm.simulate_session(short_traj(), em, seed=7, duration=20.0)
    assert np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[0].t, b[0].t)
    assert np.array_equal(a[1].q, b[1].q)


def test_seed_changes_noise():
    em = sm.default_error_model()
    a = sm.simulate_session(short_traj(), em, seed=7, duration=20.0)
    b = sm.simulate_session(short_traj(), em, seed=8, duration=20.0)
    assert not np.array_equal(a[0].features, b[0].features)
    assert np.array_equal(a[1].q, b[1].q)  # truth is noise-free


def test_truth_independent_of_error_model():
    a = sm.simulate_session(short_traj(), sm.CableErrorModel(), seed=1, duration=20.0)
    b = sm.simulate_session(short_traj(), sm.default_error_model(), seed=1, duration=20.0)
    assert np.array_equal(a[1].q, b[1].q)


# --- hysteresis -------------------------------------------------------------

def test_hysteresis_jump_on_reversal():
    em = sm.CableErrorModel(hysteresis_width=(0.5, 0.0, 0.0))
    # triangle wave on j1: forward then backward
    pts = np.array([[0.0, 45, 125], [30.0, 45, 125], [0.0, 45, 125]])
    traj = tj.Trajectory(pts, "j1", 0.5, False, DEFAULT_LIMITS)
    state, truth = sm.simulate_session(traj, em, rates=(50.0, 50.0), seed=0)
    err = reported(state)[:, 0] - truth.q[:, 0]
    tau1 = torques(state)[:, 0]
    fric = sm.DEFAULT_ROBOT.torque_friction[0]
    base = err - em.S[0, 0] * tau1  # remove stiffness-coupled part
    fwd = base[(state.t > 1.0) & (state.t < 8.0)]
    bwd = base[state.t > 12.0]
    assert np.allclose(fwd, 0.5, atol=1e-9)
    assert np.allclose(bwd, -0.5, atol=1e-9)


def test_no_hysteresis_before_motion_starts():
    em = sm.CableErrorModel(hysteresis_width=(0.5, 0.5, 0.5))
    sess = sm.SimSession(em, seed=0)
    state, truth = sess.run(sm.HoldPolicy([45, 45, 125]), duration=5.0, load="idle")
    err = reported(state) - truth.q[: len(state.t)]
    # dirsign stays 0 while idle: no hysteresis term, no friction torque sign
    assert np.max(np.abs(err)) < 1e-12


# --- drift -------------------------------------------------------------------

def test_drift_matches_analytic_integral():
    em = sm.default_error_model()
    prof = sm.LoadProfile.constant(500.0, 0.0, 7200.0)
    t = np.array([0.0, 1800.0, 3600.0, 7200.0])
    got = prof.drift_at(t, em)
    want = np.outer(t / 3600.0, em.drift_rate_loaded)
    assert np.max(np.abs(got - want)) < 1e-12


def test_drift_monotone_in_load():
    em = sm.default_error_model()
    t = np.linspace(0, 6 * 3600.0, 25)
    loaded = sm.LoadProfile.constant(500.0, 0.0, t[-1]).drift_at(t, em)
    unloaded = sm.LoadProfile.constant(0.0, 0.0, t[-1]).drift_at(t, em)
    assert np.all(loaded >= unloaded - 1e-15)


def test_drift_interpolates_between_loads():
    em = sm.default_error_model()
    r250 = em.drift_rate_per_s(250.0)
    mid = 0.5 * (np.array(em.drift_rate_unloaded) + np.array(em.drift_rate_loaded)) / 3600.0
    assert np.allclose(r250, mid)
    assert np.allclose(em.drift_rate_per_s("idle"), np.array(em.drift_rate_idle) / 3600.0)


def test_idle_accrues_idle_rate_only():
    em = replace(sm.default_error_model(), drift_rate_idle=(1.0, 0.0, 0.0))
    prof = sm.LoadProfile.constant("idle", 0.0, 3600.0)
    got = prof.drift_at(np.array([3600.0]), em)
    assert got[0, 0] == pytest.approx(1.0)
    assert got[0, 1] == got[0, 2] == 0.0


# --- homing ------------------------------------------------------------------

def test_homing_zero_sd_is_noop():
    em = replace(sm.default_error_model(), homing_offset_sd=(0.0, 0.0, 0.0))
    out = sm.apply_homing(em, np.random.default_rng(0))
    assert out == em


def test_homing_perturbs_only_offsets():
    em = sm.default_error_model()
    out = sm.apply_homing(em, np.random.default_rng(1))
    assert out.offset != em.offset
    assert out.position_gain == em.position_gain
    assert out.stiffness_gain == em.stiffness_gain
    assert out.noise_sd == em.noise_sd


def test_session_homing_leaves_truth_untouched():
    em = sm.default_error_model()
    pol = sm.RandomSinusoidPolicy(seed=5, horizon=40.0)
    s1 = sm.SimSession(em, seed=2)
    s1.run(pol, duration=20.0)
    s1.home()
    _, truth_after = s1.run(pol, duration=20.0)

    s2 = sm.SimSession(em, seed=2)
    s2.run(pol, duration=20.0)
    _, truth_plain = s2.run(pol, duration=20.0)
    assert np.array_equal(truth_after.q, truth_plain.q)


# --- random policy ------------------------------------------------------------

def test_random_policy_deterministic():
    a = sm.random_sinusoid_policy(seed=9, horizon=60.0)
    b = sm.random_sinusoid_policy(seed=9, horizon=60.0)
    t = np.linspace(0, 60, 500)
    assert np.array_equal(a.positions(t), b.positions(t))


def test_random_policy_covers_limits():
    pol = sm.random_sinusoid_policy(seed=4, horizon=1200.0)
    t = np.arange(0, 1200.0, 0.2)
    q = pol.positions(t)
    lim = DEFAULT_LIMITS
    for j in range(3):
        r = lim.range[j]
        assert q[:, j].min() < lim.min.as_array()[j] + 0.05 * r
        assert q[:, j].max() > lim.max.as_array()[j] - 0.05 * r
        assert q[:, j].min() >= lim.min.as_array()[j] - 1e-9
        assert q[:, j].max() <= lim.max.as_array()[j] + 1e-9


def test_random_policy_velocity_bounded():
    pol = sm.random_sinusoid_policy(seed=4, horizon=300.0)
    v = pol.velocities(np.arange(0, 300.0, 0.05))
    for j in range(3):
        assert np.max(np.abs(v[:, j])) <= tj.DEFAULT_SPEEDS[j] + 1e-9


def test_limit_violation_raises():
    small = JointLimits(JointVector(20, 20, 50), JointVector(70, 70, 200))
    with pytest.raises(sm.LimitViolationError):
        sm.simulate_session(short_traj(), sm.CableErrorModel(), seed=0,
                            limits=small, duration=30.0)


# --- torque proxy ---------------------------------------------------------------

def test_torque_monotone_in_load_and_extension():
    q = np.array([[30.0, 50.0, 100.0]])
    d = np.zeros((1, 3))
    t0 = sm.motor_torques(q, d, np.array([0.0]))
    t500 = sm.motor_torques(q, d, np.array([500.0]))
    assert np.all(t500 > t0)
    q_ext = q.copy()
    q_ext[0, 2] = 200.0
    assert np.all(sm.motor_torques(q_ext, d, np.array([0.0])) > t0)


def test_torque_carries_direction_sign():
    q = np.array([[30.0, 50.0, 100.0]])
    up = sm.motor_torques(q, np.ones((1, 3)), np.array([0.0]))
    dn = sm.motor_torques(q, -np.ones((1, 3)), np.array([0.0]))
    assert np.allclose(up - dn, 2 * np.array(sm.DEFAULT_ROBOT.torque_friction))


# --- streams, rates, time scale -------------------------------------------------

def test_dual_rates_and_counts():
    state, truth = sm.simulate_session(short_traj(), sm.CableErrorModel(),
                                       rates=(30.0, 100.0), seed=0, duration=20.0)
    assert len(state.t) == 600
    assert len(truth.t) == 2000
    assert np.all(np.diff(state.t) > 0)
    assert np.all(np.diff(truth.t) > 0)


def test_time_scale_thins_samples_keeps_clock():
    em = sm.default_error_model()
    pol = sm.HoldPolicy([45, 45, 125])
    s1 = sm.SimSession(em, seed=0, time_scale=1.0)
    s10 = sm.SimSession(em, seed=0, time_scale=10.0)
    a, _ = s1.run(pol, duration=100.0, load=500.0)
    b, _ = s10.run(pol, duration=100.0, load=500.0)
    assert len(b.t) == len(a.t) // 10
    assert s1.clock == s10.clock == 100.0
    # sample grids cover the same simulated clock span
    assert np.min(np.abs(a.t - b.t[-1])) < 1e-9


def test_chunked_session_continues_clock_and_sequence():
    em = sm.default_error_model()
    sess = sm.SimSession(em, seed=0)
    pol = sm.RandomSinusoidPolicy(seed=1, horizon=100.0)
    s1, _ = sess.run(pol, duration=10.0)
    s2, _ = sess.run(pol, duration=10.0)
    assert s2.t[0] >= s1.t[-1]
    seq1 = feat(s1, "last_sequence")
    seq2 = feat(s2, "last_sequence")
    assert seq2[0] == seq1[-1] + 1


def test_drift_continues_across_chunks():
    # pure drift model (no position gain, so no implicit-solve amplification)
    em = sm.CableErrorModel(drift_rate_unloaded=(3600.0, 0.0, 0.0))
    pol = sm.HoldPolicy([45, 45, 125])
    sess = sm.SimSession(em, seed=0)
    a, ta = sess.run(pol, duration=10.0)
    b, tb = sess.run(pol, duration=10.0)
    err_a = reported(a)[:, 0] - ta.q[: len(a.t), 0]
    err_b = reported(b)[:, 0] - tb.q[: len(b.t), 0]
    # drift rate 1 unit/s (3600/h): second chunk starts exactly 10 units higher
    assert err_b[0] - err_a[0] == pytest.approx(10.0, abs=1e-9)


# --- feature block ---------------------------------------------------------------

def test_feature_schema_blocks():
    em = sm.default_error_model()
    state, _ = sm.simulate_session(short_traj(), em, seed=0, duration=20.0)
    assert state.features.shape[1] == 138
    sel = state.features[:, FULL_SCHEMA.selected_indices()]
    assert sel.shape[1] == 16
    assert np.array_equal(sel[:, :3], reported(state))
    assert np.array_equal(sel[:, 8:11], torques(state))
    assert np.array_equal(feat(state, "timestamp"), state.t)


def test_placeholders_constant_without_aux_noise():
    em = sm.noiseless_linear_model()
    state, _ = sm.simulate_session(short_traj(), em, seed=0, duration=20.0)
    for name in ("joint_position_j5", "motor_torque_grasper", "encoder_value_j7"):
        col = feat(state, name)
        assert np.all(col == col[0])


def test_placeholders_noisy_with_aux_noise():
    em = sm.default_error_model()
    state, _ = sm.simulate_session(short_traj(), em, seed=0, duration=20.0)
    assert np.std(feat(state, "joint_position_j5")) > 0


def test_desired_positions_derive_from_reported():
    em = sm.default_error_model()
    state, _ = sm.simulate_session(short_traj(), em, seed=0, duration=20.0)
    v = np.stack([feat(state, f"joint_velocity_j{j}") for j in (1, 2, 3)], axis=1)
    want = reported(state) + sm.DEFAULT_ROBOT.lookahead_s * v
    got = np.stack([feat(state, f"desired_joint_position_j{j}") for j in (1, 2, 3)], axis=1)
    assert np.max(np.abs(got - want)) < 1e-12


def test_monotone_leak_features_present():
    # timestamp and last_sequence are strictly increasing (the deliberately
    # dangerous columns for full-feature robustness studies)
    em = sm.default_error_model()
    state, _ = sm.simulate_session(short_traj(), em, seed=0, duration=20.0)
    assert np.all(np.diff(feat(state, "timestamp")) > 0)
    assert np.all(np.diff(feat(state, "last_sequence")) > 0)


def test_invalid_session_params():
    em = sm.CableErrorModel()
    with pytest.raises(sm.SimError):
        sm.SimSession(em, rates=(0.0, 100.0))
    with pytest.raises(sm.SimError):
        sm.SimSession(em, time_scale=0.5)
    with pytest.raises(sm.SimError):
        sm.SimSession(em).run(sm.HoldPolicy([1, 1, 1]), duration=-5.0)
    with pytest.raises(sm.SimError):
        sm.CableErrorModel(noise_sd=(-1.0, 0.0, 0.0))


def test_load_profile_validation():
    with pytest.raises(sm.SimError):
        sm.LoadProfile(((0.0, 10.0, 0.0), (5.0, 15.0, 0.0)))  # overlap
    with pytest.raises(sm.SimError):
        sm.LoadProfile(((10.0, 5.0, 0.0),))  # inverted
