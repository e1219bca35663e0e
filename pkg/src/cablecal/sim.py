"""Synthetic cable-driven 3-joint robot with a configurable transmission error.

The simulator follows a motion policy (trajectory follower, random sinusoids,
or a hold), and emits two timestamped streams: a robot-state stream with the
full 138-feature vector (reported positions, torques, auxiliary channels) and
a denser ground-truth stream. Ground truth is the policy output; the reported
positions add a cable-transmission error composed of a constant offset,
linear position and torque couplings, motion-direction hysteresis, slow drift
that grows with operating time and load, and measurement noise.

The error is defined in the reported (motor-side) frame:

    reported - truth = offset + P @ reported + S @ torque + hysteresis
                       + drift(t, load) + noise

so with hysteresis, drift and noise disabled the reported/torque features
relate to the error exactly linearly, and a linear regression can recover the
generating coefficients. Reported positions are obtained by solving the
implicit relation ((I - P) @ reported = truth + the remaining terms).

Everything is deterministic given the session seed; a session can be run in
chunks that share the clock, drift history, hysteresis state and rng, which
is how multi-hour decay studies and homing sequences are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .core import DEFAULT_LIMITS, FULL_SCHEMA, JointLimits
from .trajectory import DEFAULT_SPEEDS, Trajectory, segment_times


class LimitViolationError(RuntimeError):
    """Motion policy commanded a position outside the configured limits."""


class SimError(ValueError):
    pass


# --------------------------------------------------------------------------
# error model


def _t3(x) -> tuple:
    a = np.asarray(x, dtype=float)
    if a.shape == ():
        a = np.full(3, float(a))  # scalar applies to all three joints
    if a.shape != (3,):
        raise SimError(f"expected 3 values, got shape {a.shape}")
    return tuple(float(v) for v in a)


def _t33(x) -> tuple:
    a = np.asarray(x, dtype=float)
    if a.shape != (3, 3):
        raise SimError(f"expected a 3x3 matrix, got shape {a.shape}")
    return tuple(tuple(float(v) for v in row) for row in a)


@dataclass(frozen=True)
class CableErrorModel:
    """Per-joint transmission-error parameters (deg/deg/mm units throughout).

    ``position_gain`` and ``stiffness_gain`` are 3x3 rows-on-output matrices:
    diagonals couple a joint to its own position/torque, off-diagonals are the
    cross couplings. Drift rates are per simulated hour; ``drift_rate_loaded``
    applies at ``load_ref_g`` grams and scales linearly in between.
    """

    offset: tuple = (0.0, 0.0, 0.0)
    position_gain: tuple = ((0.0,) * 3,) * 3
    stiffness_gain: tuple = ((0.0,) * 3,) * 3
    hysteresis_width: tuple = (0.0, 0.0, 0.0)
    drift_rate_unloaded: tuple = (0.0, 0.0, 0.0)
    drift_rate_loaded: tuple = (0.0, 0.0, 0.0)
    drift_rate_idle: tuple = (0.0, 0.0, 0.0)
    noise_sd: tuple = (0.0, 0.0, 0.0)
    aux_noise_sd: float = 0.0
    homing_offset_sd: tuple = (0.0, 0.0, 0.0)
    load_ref_g: float = 500.0

    def __post_init__(self):
        object.__setattr__(self, "offset", _t3(self.offset))
        object.__setattr__(self, "position_gain", _t33(self.position_gain))
        object.__setattr__(self, "stiffness_gain", _t33(self.stiffness_gain))
        for name in ("hysteresis_width", "drift_rate_unloaded", "drift_rate_loaded",
                     "drift_rate_idle", "noise_sd", "homing_offset_sd"):
            object.__setattr__(self, name, _t3(getattr(self, name)))
        if any(w < 0 for w in self.hysteresis_width) or any(s < 0 for s in self.noise_sd):
            raise SimError("hysteresis widths and noise sds must be non-negative")

    @property
    def b(self) -> np.ndarray:
        return np.array(self.offset)

    @property
    def P(self) -> np.ndarray:
        return np.array(self.position_gain)

    @property
    def S(self) -> np.ndarray:
        return np.array(self.stiffness_gain)

    def drift_rate_per_s(self, load) -> np.ndarray:
        """Drift rate (units/s) for a load: grams, or 'idle'."""
        if load == "idle":
            return np.array(self.drift_rate_idle) / 3600.0
        g = float(load)
        if g < 0:
            raise SimError(f"load mass must be non-negative, got {g}")
        lo = np.array(self.drift_rate_unloaded)
        hi = np.array(self.drift_rate_loaded)
        return (lo + (hi - lo) * (g / self.load_ref_g)) / 3600.0

    def to_dict(self) -> dict:
        return {
            "offset": list(self.offset),
            "position_gain": [list(r) for r in self.position_gain],
            "stiffness_gain": [list(r) for r in self.stiffness_gain],
            "hysteresis_width": list(self.hysteresis_width),
            "drift_rate_unloaded": list(self.drift_rate_unloaded),
            "drift_rate_loaded": list(self.drift_rate_loaded),
            "drift_rate_idle": list(self.drift_rate_idle),
            "noise_sd": list(self.noise_sd),
            "aux_noise_sd": self.aux_noise_sd,
            "homing_offset_sd": list(self.homing_offset_sd),
            "load_ref_g": self.load_ref_g,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CableErrorModel":
        return cls(**d)


def default_error_model() -> CableErrorModel:
    """Tuned default: raw per-joint RMSE near (2 deg, 8 deg, 11.7 mm) on a
    20-minute random test session, with enough structure that fixed-offset,
    linear and MLP calibration separate cleanly."""
    return CableErrorModel(
        offset=(-4.28, 3.96, -13.39),
        position_gain=(
            (0.022, 0.004, 0.0008),
            (0.006, 0.035, 0.0012),
            (-0.010, 0.014, 0.005),
        ),
        stiffness_gain=(
            (0.25, 0.02, 0.0),
            (0.03, 0.35, 0.0),
            (0.0, 0.05, 0.30),
        ),
        hysteresis_width=(0.12, 0.18, 0.10),
        drift_rate_unloaded=(0.055, 0.020, 0.012),
        drift_rate_loaded=(0.150, 0.180, 0.100),
        drift_rate_idle=(0.0, 0.0, 0.0),
        noise_sd=(0.06, 0.07, 0.10),
        aux_noise_sd=0.05,
        homing_offset_sd=(0.02, 0.20, 0.02),
    )


def noiseless_linear_model() -> CableErrorModel:
    """Default gains with hysteresis, drift and every noise source zeroed.

    Under this model the reported/torque features relate to the error
    exactly linearly, so regression recovers the generating coefficients.
    """
    return replace(
        default_error_model(),
        hysteresis_width=(0.0, 0.0, 0.0),
        drift_rate_unloaded=(0.0, 0.0, 0.0),
        drift_rate_loaded=(0.0, 0.0, 0.0),
        drift_rate_idle=(0.0, 0.0, 0.0),
        noise_sd=(0.0, 0.0, 0.0),
        aux_noise_sd=0.0,
    )


def apply_homing(model: CableErrorModel, rng: np.random.Generator) -> CableErrorModel:
    """Encoder re-registration event: perturb offsets, keep other gains.

    Returns a new model with offset += N(0, homing_offset_sd) per joint.
    Hysteresis *state* lives in the session, which also resets it on homing.
    """
    delta = rng.normal(0.0, 1.0, size=3) * np.array(model.homing_offset_sd)
    return replace(model, offset=tuple(np.array(model.offset) + delta))


# --------------------------------------------------------------------------
# motion policies


class MotionPolicy:
    """Joint positions/velocities as functions of simulated time (seconds)."""

    duration: float

    def positions(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def velocities(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class TrajectoryFollower(MotionPolicy):
    """Tracks a scaled trajectory at constant per-joint speeds, then holds."""

    def __init__(self, traj: Trajectory, speeds=DEFAULT_SPEEDS):
        if traj.normalized:
            raise SimError("follower needs a scaled trajectory")
        if len(traj) < 2:
            raise SimError("cannot follow a trajectory with fewer than 2 waypoints")
        self._pts = traj.waypoints
        self._t = segment_times(traj.waypoints, speeds)
        self.duration = float(self._t[-1])

    def positions(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        return np.stack([np.interp(t, self._t, self._pts[:, j]) for j in range(3)], axis=1)

    def velocities(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, len(self._t) - 2)
        dt = self._t[idx + 1] - self._t[idx]
        v = (self._pts[idx + 1] - self._pts[idx]) / dt[:, None]
        v[(t <= 0) | (t >= self.duration)] = 0.0
        return v


class HoldPolicy(MotionPolicy):
    """Holds one position forever (idle sessions)."""

    def __init__(self, position, duration: float = math.inf):
        self._q = np.asarray(position, dtype=float).reshape(3)
        self.duration = duration

    def positions(self, t):
        return np.tile(self._q, (len(np.asarray(t)), 1))

    def velocities(self, t):
        return np.zeros((len(np.asarray(t)), 3))


class RandomSinusoidPolicy(MotionPolicy):
    """Each joint independently chases random targets with cosine easing.

    Targets are uniform over the joint limits; average segment speeds are
    uniform in [speed_lo, speed_hi] * max_speed per joint. Cosine easing
    peaks at pi/2 times the average speed, so the default speed_hi of 2/pi
    keeps instantaneous velocity within max_speed. Position and velocity
    are continuous (velocity is zero at every target).
    """

    def __init__(self, limits: JointLimits = DEFAULT_LIMITS, seed: int = 0,
                 horizon: float = 7200.0, max_speeds=DEFAULT_SPEEDS,
                 speed_range=(0.25, 2.0 / math.pi)):
        rng = np.random.default_rng(seed)
        self.duration = float(horizon)
        lo, hi = limits.min.as_array(), limits.max.as_array()
        self._knots = []
        self._values = []
        for j in range(3):
            t, q = [0.0], [float(rng.uniform(lo[j], hi[j]))]
            while t[-1] < horizon:
                target = float(rng.uniform(lo[j], hi[j]))
                v = float(rng.uniform(*speed_range)) * max_speeds[j]
                seg = max(abs(target - q[-1]) / v, 1e-3)
                t.append(t[-1] + seg)
                q.append(target)
            self._knots.append(np.array(t))
            self._values.append(np.array(q))

    def _segments(self, j, t):
        kt, kv = self._knots[j], self._values[j]
        idx = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, len(kt) - 2)
        s = (t - kt[idx]) / (kt[idx + 1] - kt[idx])
        s = np.clip(s, 0.0, 1.0)
        return kv[idx], kv[idx + 1], kt[idx + 1] - kt[idx], s

    def positions(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty((len(t), 3))
        for j in range(3):
            q0, q1, _, s = self._segments(j, t)
            out[:, j] = q0 + (q1 - q0) * 0.5 * (1.0 - np.cos(np.pi * s))
        return out

    def velocities(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty((len(t), 3))
        for j in range(3):
            q0, q1, T, s = self._segments(j, t)
            out[:, j] = (q1 - q0) * 0.5 * np.pi / T * np.sin(np.pi * s)
        return out


def random_sinusoid_policy(limits: JointLimits = DEFAULT_LIMITS, seed: int = 0,
                           horizon: float = 7200.0) -> RandomSinusoidPolicy:
    return RandomSinusoidPolicy(limits, seed, horizon)


# --------------------------------------------------------------------------
# robot plumbing constants (feature synthesis)


def _fixed_matrix(rows, cols, seed) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(tuple(float(v) for v in row) for row in rng.uniform(-1, 1, (rows, cols)))


@dataclass(frozen=True)
class RobotParams:
    """Constants used to synthesize the auxiliary feature channels."""

    gear_ratio: tuple = (12.0, 12.0, 4.0)
    counts_per_unit: tuple = (180.0, 180.0, 60.0)
    encoder_offset_counts: tuple = (1000.0, 2000.0, 3000.0)
    lookahead_s: float = 0.05           # desired = reported + lookahead * velocity
    ext_ref_mm: float = 250.0           # normalizes j3 to an extension fraction
    run_level: float = 3.0
    arm_type: float = 0.0
    grasper_desired: float = 45.0
    placeholder_positions: tuple = (15.0, -40.0, 25.0, 10.0, 30.0)  # joints 4-7 + grasper
    # gravity/load torque proxy: rows = tau_j coefficients on
    # (1, sin q1, cos q1, sin q2, cos q2, extension); last column is the
    # motion-direction (friction) coefficient
    torque_gravity: tuple = (
        (2.0, 1.5, 0.0, 0.0, 0.8, 1.2),
        (2.5, 0.0, 1.2, 1.0, 0.0, 1.5),
        (1.0, 0.0, 0.0, 0.0, 0.0, 2.0),
    )
    torque_friction: tuple = (0.30, 0.30, 0.20)
    jacobian_velocity_map: tuple = _fixed_matrix(6, 3, seed=101)
    jacobian_force_map: tuple = _fixed_matrix(6, 3, seed=102)


DEFAULT_ROBOT = RobotParams()


def motor_torques(q: np.ndarray, dirsign: np.ndarray, grams: np.ndarray,
                  robot: RobotParams = DEFAULT_ROBOT) -> np.ndarray:
    """Gravity/load torque proxy plus direction-dependent friction.

    Monotone in load mass and in arm extension (q3) at the default
    coefficients; the friction term carries the motion-direction sign so
    torque features contain (nonlinearly mixed) hysteresis information.
    """
    q1, q2 = np.radians(q[:, 0]), np.radians(q[:, 1])
    ext = q[:, 2] / robot.ext_ref_mm
    basis = np.stack([np.ones_like(q1), np.sin(q1), np.cos(q1),
                      np.sin(q2), np.cos(q2), ext], axis=1)
    grav = basis @ np.array(robot.torque_gravity).T
    load_factor = (1.0 + np.asarray(grams, dtype=float) / 500.0)[:, None]
    return load_factor * grav + dirsign * np.array(robot.torque_friction)


def _forward_fill_sign(v: np.ndarray, initial: np.ndarray) -> np.ndarray:
    """Sign of velocity with zeros replaced by the last nonzero sign."""
    s = np.sign(v)
    out = np.empty_like(s)
    for j in range(s.shape[1]):
        col = s[:, j]
        idx = np.arange(len(col))
        has = col != 0
        last = np.maximum.accumulate(np.where(has, idx, -1))
        out[:, j] = np.where(last >= 0, col[np.maximum(last, 0)], initial[j])
    return out


def _ee_pose(q: np.ndarray) -> np.ndarray:
    """Spherical-arm pose proxy: insertion q3 rotated by q1 about the base
    axis and q2 about the elevated axis. Returns (N, 12): xyz + row-major R."""
    a, b = np.radians(q[:, 0]), np.radians(q[:, 1])
    r = q[:, 2]
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    x, y, z = r * sb * ca, r * sb * sa, -r * cb
    zero = np.zeros_like(ca)
    rot = np.stack([ca * cb, -sa, ca * sb,
                    sa * cb, ca, sa * sb,
                    -sb, zero, cb], axis=1)
    return np.concatenate([np.stack([x, y, z], axis=1), rot], axis=1)


# --------------------------------------------------------------------------
# load profiles


@dataclass(frozen=True)
class LoadProfile:
    """Schedule of (t_start, t_end, load) with load = grams or 'idle'.

    Intervals must be non-overlapping and sorted; queries outside every
    interval fall back to 0 g (unloaded, moving).
    """

    intervals: tuple = ()

    def __post_init__(self):
        prev_end = -math.inf
        for t0, t1, load in self.intervals:
            if t1 <= t0 or t0 < prev_end:
                raise SimError(f"intervals must be sorted and non-overlapping: {self.intervals}")
            if load != "idle" and float(load) < 0:
                raise SimError(f"negative load {load!r}")
            prev_end = t1

    @classmethod
    def constant(cls, load, t0: float, t1: float) -> "LoadProfile":
        return cls(((float(t0), float(t1), load),))

    def grams_at(self, t: np.ndarray) -> np.ndarray:
        g = np.zeros(len(t))
        for t0, t1, load in self.intervals:
            if load != "idle":
                g[(t >= t0) & (t < t1)] = float(load)
        return g

    def drift_at(self, t: np.ndarray, model: CableErrorModel) -> np.ndarray:
        """Accumulated drift bias (N, 3): integral of the load-dependent rate."""
        knots = [0.0]
        cum = [np.zeros(3)]
        for t0, t1, load in self.intervals:
            rate = model.drift_rate_per_s(load)
            if t0 > knots[-1]:
                knots.append(t0)
                cum.append(cum[-1])  # gap: unloaded-at-rest treated as 0 g
                rate_gap = model.drift_rate_per_s(0.0)
                cum[-1] = cum[-2] + rate_gap * (t0 - knots[-2])
            knots.append(t1)
            cum.append(cum[-1] + rate * (t1 - t0))
        knots = np.array(knots)
        cum = np.stack(cum)
        out = np.empty((len(t), 3))
        for j in range(3):
            out[:, j] = np.interp(t, knots, cum[:, j])
        # extrapolate past the schedule at the final interval's rate
        beyond = t > knots[-1]
        if np.any(beyond):
            last_rate = model.drift_rate_per_s(self.intervals[-1][2]) if self.intervals else model.drift_rate_per_s(0.0)
            out[beyond] += np.outer(t[beyond] - knots[-1], last_rate)
        return out


# --------------------------------------------------------------------------
# session


class StateStream(NamedTuple):
    t: np.ndarray          # (N,) simulated seconds
    features: np.ndarray   # (N, 138) per FULL_SCHEMA


class TruthStream(NamedTuple):
    t: np.ndarray  # (M,)
    q: np.ndarray  # (M, 3)


class SimSession:
    """A deterministic simulated recording session, runnable in chunks.

    Chunks share the simulated clock, load/drift history, hysteresis sign
    state, sequence counter and rng, so decay and homing studies compose
    from consecutive ``run`` calls. ``time_scale`` k > 1 keeps the simulated
    clock (and all drift math) at full span while emitting k-fold fewer
    samples.
    """

    def __init__(self, error_model: CableErrorModel, limits: JointLimits = DEFAULT_LIMITS,
                 rates=(30.0, 100.0), seed: int = 0, time_scale: float = 1.0,
                 robot: RobotParams = DEFAULT_ROBOT):
        if rates[0] <= 0 or rates[1] <= 0:
            raise SimError(f"rates must be positive, got {rates}")
        if time_scale < 1.0:
            raise SimError(f"time_scale must be >= 1, got {time_scale}")
        self.error_model = error_model
        self.limits = limits
        self.rates = (float(rates[0]), float(rates[1]))
        self.time_scale = float(time_scale)
        self.robot = robot
        self.rng = np.random.default_rng(seed)
        self.clock = 0.0
        self._last_dir = np.zeros(3)
        self._seq = 0
        self._load_history: list = []

    def home(self) -> None:
        """Homing event: re-randomize offsets, reset hysteresis sign state."""
        self.error_model = apply_homing(self.error_model, self.rng)
        self._last_dir = np.zeros(3)

    def run(self, policy: MotionPolicy, duration: Optional[float] = None,
            load="unloaded") -> tuple:
        """Advance the session, returning (StateStream, TruthStream).

        ``load`` is grams, 'unloaded' (0 g), 'loaded' (load_ref grams) or
        'idle'. Policy time starts at 0 for each run call.
        """
        if duration is None:
            duration = policy.duration
        if not (duration > 0 and math.isfinite(duration)):
            raise SimError(f"duration must be positive and finite, got {duration}")
        if load == "unloaded":
            load = 0.0
        elif load == "loaded":
            load = self.error_model.load_ref_g
        t0 = self.clock
        self._load_history.append((t0, t0 + duration, load))
        profile = LoadProfile(tuple(self._load_history))

        state_dt = self.time_scale / self.rates[0]
        truth_dt = self.time_scale / self.rates[1]
        n_state = max(int(math.floor(duration / state_dt)), 1)
        n_truth = max(int(math.floor(duration / truth_dt)), 1)
        ts = t0 + np.arange(n_state) * state_dt
        tt = t0 + np.arange(n_truth) * truth_dt

        q_true_s = policy.positions(ts - t0)
        v_true_s = policy.velocities(ts - t0)
        self._check_limits(q_true_s)
        q_true_t = policy.positions(tt - t0)

        em = self.error_model
        grams = profile.grams_at(ts) if load != "idle" else np.zeros(n_state)
        dirsign = _forward_fill_sign(v_true_s, self._last_dir)
        tau = motor_torques(q_true_s, dirsign, grams, self.robot)
        drift = profile.drift_at(ts, em)
        noise = self.rng.normal(0.0, 1.0, (n_state, 3)) * np.array(em.noise_sd)

        rhs = q_true_s + em.b + tau @ em.S.T + dirsign * np.array(em.hysteresis_width) + drift + noise
        q_rep = rhs @ np.linalg.inv(np.eye(3) - em.P).T

        features = self._features(ts, q_rep, tau, grams)

        self.clock = t0 + duration
        self._last_dir = dirsign[-1].copy()
        self._seq += n_state
        return StateStream(ts, features), TruthStream(tt, q_true_t)

    def _check_limits(self, q: np.ndarray) -> None:
        lo = self.limits.min.as_array() - 1e-9
        hi = self.limits.max.as_array() + 1e-9
        if np.any(q < lo) or np.any(q > hi):
            j = int(np.argmax(np.maximum(lo - q, q - hi).max(axis=0)))
            raise LimitViolationError(
                f"policy leaves joint limits on j{j + 1}: "
                f"range [{q[:, j].min():.3f}, {q[:, j].max():.3f}] vs [{lo[j]:.3f}, {hi[j]:.3f}]"
            )

    def _features(self, ts, q_rep, tau, grams) -> np.ndarray:
        """Assemble the (N, 138) state matrix per FULL_SCHEMA order."""
        robot = self.robot
        n = len(ts)
        if n >= 2:
            v_rep = np.gradient(q_rep, ts, axis=0)
        else:
            v_rep = np.zeros_like(q_rep)
        desired = q_rep + robot.lookahead_s * v_rep

        gear = np.array(robot.gear_ratio)
        counts = np.array(robot.counts_per_unit)
        enc_off = np.array(robot.encoder_offset_counts)
        zeros = np.zeros(n)

        def pad8(main3, fill5):
            """(N,3) block padded with placeholder channels for joints 4-7+grasper."""
            pads = [np.full(n, v) + (self.rng.normal(0.0, self.error_model.aux_noise_sd, n)
                                     if self.error_model.aux_noise_sd > 0 else 0.0)
                    for v in fill5]
            return np.column_stack([main3] + pads)

        ph = robot.placeholder_positions
        cols = {
            "timestamp": ts,
            "run_level": np.full(n, robot.run_level),
            "sublevel": zeros,
            "last_sequence": self._seq + np.arange(n, dtype=float),
            "arm_type": np.full(n, robot.arm_type),
            "grasper_desired": np.full(n, robot.grasper_desired),
        }

        def put8(prefix, block):
            for k, ch in enumerate(("j1", "j2", "j3", "j4", "j5", "j6", "j7", "grasper")):
                cols[f"{prefix}_{ch}"] = block[:, k]

        put8("encoder_value", pad8(q_rep * counts + enc_off, ph))
        put8("encoder_offset", pad8(np.tile(enc_off, (n, 1)), (0.0,) * 5))
        put8("motor_position", pad8(q_rep * gear, ph))
        put8("joint_position", pad8(q_rep, ph))
        put8("motor_velocity", pad8(v_rep * gear, (0.0,) * 5))
        put8("joint_velocity", pad8(v_rep, (0.0,) * 5))
        put8("desired_joint_position", pad8(desired, ph))
        put8("desired_motor_position", pad8(desired * gear, ph))
        put8("desired_joint_velocity", pad8(v_rep, (0.0,) * 5))
        put8("desired_motor_velocity", pad8(v_rep * gear, (0.0,) * 5))
        put8("motor_current", pad8(tau * 0.8 + 0.1, (0.05,) * 5))
        put8("motor_torque", pad8(tau, (0.0,) * 5))

        jv = v_rep @ np.array(robot.jacobian_velocity_map).T
        jf = tau @ np.array(robot.jacobian_force_map).T
        for i in range(6):
            cols[f"jacobian_velocity_{i}"] = jv[:, i]
            cols[f"jacobian_force_{i}"] = jf[:, i]

        ee = _ee_pose(q_rep)
        ee_des = _ee_pose(desired)
        for which, block in (("ee", ee), ("desired_ee", ee_des)):
            for k, ax in enumerate("xyz"):
                cols[f"{which}_pos_{ax}"] = block[:, k]
            for r in range(3):
                for c in range(3):
                    cols[f"{which}_rot_{r}{c}"] = block[:, 3 + 3 * r + c]

        out = np.empty((n, FULL_SCHEMA.dim_full))
        for i, name in enumerate(FULL_SCHEMA.names):
            out[:, i] = cols[name]
        return out


def simulate_session(policy_or_traj, error_model: CableErrorModel,
                     load="unloaded", rates=(30.0, 100.0), *,
                     limits: JointLimits = DEFAULT_LIMITS, seed: int = 0,
                     time_scale: float = 1.0, duration: Optional[float] = None,
                     speeds=DEFAULT_SPEEDS) -> tuple:
    """One-shot session: returns (StateStream, TruthStream).

    ``policy_or_traj`` may be a scaled Trajectory (followed at ``speeds``)
    or any MotionPolicy.
    """
    policy = (TrajectoryFollower(policy_or_traj, speeds)
              if isinstance(policy_or_traj, Trajectory) else policy_or_traj)
    session = SimSession(error_model, limits, rates, seed, time_scale)
    return session.run(policy, duration, load)
