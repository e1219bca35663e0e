"""Zig-zag calibration trajectory generation in 3-joint space.

A base raster sweeps joint 1 back and forth across a centered unit cube,
stepping joint 2 between passes and joint 3 between planes. Rotating that
raster yields seven direction classes (which joint axes are swept without
gaps), and an affine map places the result inside the joint limits with a
per-class span rule: with c the limit center and r the range (per joint),
single-joint classes occupy c +- r/(2*sqrt(3)), two-joint classes
c +- sqrt(2)*r/(2*sqrt(3)), and the three-joint class the full c +- r/2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import JointLimits, DEFAULT_LIMITS

DIRECTIONS = ("j1", "j2", "j3", "j1j2", "j2j3", "j1j3", "j1j2j3")

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)

#: Default densification step, as a fraction of the normalized range.
DEFAULT_STEP = 1.0 / 200.0

#: Default follower sweep speeds per joint: deg/s, deg/s, mm/s.
DEFAULT_SPEEDS = (3.0, 3.0, 9.5)


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """An ordered joint-space path with its generation settings.

    ``normalized`` distinguishes the dimensionless stage (waypoints in a
    unit-scale frame, ``limits`` unset) from the scaled stage (waypoints in
    deg/deg/mm inside ``limits``). ``meta['frame']`` narrows the normalized
    stage further: 'centered' for the raw raster on [-0.5, 0.5]^3, 'unit'
    after the direction transform maps it into [0, 1]^3.
    """

    waypoints: np.ndarray          # (N, 3) float
    direction: str
    sparsity: float
    normalized: bool
    limits: Optional[JointLimits] = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.waypoints)


def _rot_about_j3(deg: float) -> np.ndarray:
    """Rotation about the j3 axis (mixes j1 and j2)."""
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_about_j2(deg: float) -> np.ndarray:
    """Rotation about the j2 axis (mixes j3 and j1)."""
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_about_j1(deg: float) -> np.ndarray:
    """Rotation about the j1 axis (mixes j2 and j3)."""
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True)
class DirectionTransform:
    """Affine map plus elementwise shrink: p' = shrink * (rot @ p + trans).

    The shrink is applied last, to the translated position only, and keeps
    rotated multi-joint diagonals inside the unit cube.
    """

    rotation: np.ndarray
    translation: np.ndarray
    shrink: np.ndarray

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return (pts @ self.rotation.T + self.translation) * self.shrink

    def invert(self, pts: np.ndarray) -> np.ndarray:
        return (pts / self.shrink - self.translation) @ self.rotation

    def matrix(self) -> np.ndarray:
        """The full map as a single 4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        m[:3, :] *= self.shrink[:, None]
        return m


def direction_transform(direction: str) -> DirectionTransform:
    """Map from the centered base raster frame into the unit cube.

    Single-joint classes rotate the raster 90 degrees so the requested
    joint becomes the swept axis; two-joint classes tilt 45 degrees so two
    joints co-move during sweeps (shrinking the two mixed axes by 1/sqrt(2));
    the three-joint class composes two 45-degree tilts with a 1/sqrt(3)
    shrink on every axis. Translations re-center each result at (.5,.5,.5).
    """
    half = np.array([0.5, 0.5, 0.5])
    ones = np.ones(3)
    if direction == "j1":
        return DirectionTransform(np.eye(3), half, ones)
    if direction == "j2":
        return DirectionTransform(_rot_about_j3(90.0), half, ones)
    if direction == "j3":
        return DirectionTransform(_rot_about_j2(90.0), half, ones)
    if direction == "j1j2":
        return DirectionTransform(
            _rot_about_j3(45.0),
            np.array([0.5 * _SQRT2, 0.5 * _SQRT2, 0.5]),
            np.array([1.0 / _SQRT2, 1.0 / _SQRT2, 1.0]),
        )
    if direction == "j2j3":
        return DirectionTransform(
            _rot_about_j1(45.0) @ _rot_about_j3(90.0),
            np.array([0.5, 0.5 * _SQRT2, 0.5 * _SQRT2]),
            np.array([1.0, 1.0 / _SQRT2, 1.0 / _SQRT2]),
        )
    if direction == "j1j3":
        return DirectionTransform(
            _rot_about_j2(-45.0),
            np.array([0.5 * _SQRT2, 0.5, 0.5 * _SQRT2]),
            np.array([1.0 / _SQRT2, 1.0, 1.0 / _SQRT2]),
        )
    if direction == "j1j2j3":
        return DirectionTransform(
            _rot_about_j2(45.0) @ _rot_about_j1(45.0),
            np.array([0.5 * _SQRT3, 0.5 * _SQRT3, 0.5 * _SQRT3]),
            np.array([1.0 / _SQRT3, 1.0 / _SQRT3, 1.0 / _SQRT3]),
        )
    raise TrajectoryError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")


def moving_joints(direction: str) -> tuple:
    """Indices of the joints swept by a direction class, e.g. 'j1j3' -> (0, 2)."""
    if direction not in DIRECTIONS:
        raise TrajectoryError(f"unknown direction {direction!r}")
    return tuple(i for i in range(3) if f"j{i + 1}" in direction)


def span_fraction(direction: str) -> float:
    """Per-joint span of a scaled trajectory as a fraction of the range r."""
    n = len(moving_joints(direction))
    return {1: 1.0 / _SQRT3, 2: _SQRT2 / _SQRT3, 3: 1.0}[n]


def _raster_corners(sparsity: float) -> np.ndarray:
    if not (0.0 < sparsity <= 0.5 + 1e-12):
        raise TrajectoryError(f"sparsity must be in (0, 1/2], got {sparsity}")
    n = math.ceil(1.0 / sparsity - 1e-9)
    levels = np.linspace(-0.5, 0.5, n + 1)
    pts: list = []
    flip = False
    for kz, z in enumerate(levels):
        ys = levels if kz % 2 == 0 else levels[::-1]
        for y in ys:
            x0, x1 = (0.5, -0.5) if flip else (-0.5, 0.5)
            pts.append((x0, float(y), float(z)))
            pts.append((x1, float(y), float(z)))
            flip = not flip
    return np.array(pts)


def _densify(waypoints: np.ndarray, step: float) -> np.ndarray:
    """Subdivide segments so consecutive points differ by <= step (inf-norm).

    Original waypoints are kept exactly, so the +-0.5 extremes survive
    densification bit-for-bit.
    """
    if step <= 0:
        raise TrajectoryError(f"step must be positive, got {step}")
    out = [waypoints[0]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        k = max(1, math.ceil(float(np.max(np.abs(b - a))) / step))
        for i in range(1, k + 1):
            out.append(a + (b - a) * (i / k))
    return np.array(out)


def generate_base_zigzag(sparsity: float, step: float = DEFAULT_STEP) -> Trajectory:
    """Serpentine raster on the centered cube [-0.5, 0.5]^3 (direction j1).

    Joint 1 is swept back and forth without gaps; joint 2 steps by
    ``sparsity`` per pass and joint 3 per completed plane, each pass
    reversing sweep sign so consecutive waypoints stay adjacent. Points are
    densified so spacing along sweeps never exceeds ``step``.
    """
    pts = _densify(_raster_corners(sparsity), step)
    return Trajectory(
        pts, "j1", float(sparsity), True, None,
        {"frame": "centered", "step": float(step)},
    )


def rotate_to_direction(traj: Trajectory, direction: str) -> Trajectory:
    """Reorient the base raster to a direction class, landing in [0, 1]^3."""
    if not traj.normalized or traj.meta.get("frame") != "centered":
        raise TrajectoryError("rotate_to_direction expects the centered base raster")
    pts = direction_transform(direction).apply(traj.waypoints)
    meta = dict(traj.meta)
    meta["frame"] = "unit"
    return replace(traj, waypoints=pts, direction=direction, meta=meta)


def scale_to_limits(traj: Trajectory, limits: JointLimits = DEFAULT_LIMITS) -> Trajectory:
    """Affinely place a normalized trajectory inside the joint limits.

    The achieved bounding box of each joint coordinate is mapped onto the
    class target interval c +- f*r/2 (f from :func:`span_fraction`), so
    every direction shares the center c exactly and the three-joint class
    spans the full limit range.
    """
    if not traj.normalized:
        raise TrajectoryError("trajectory is already scaled")
    pts = traj.waypoints
    if np.any(pts < -1e-9) or np.any(pts > 1.0 + 1e-9):
        raise TrajectoryError("normalized waypoints must lie in [0, 1]")
    c, r = limits.center, limits.range
    f = span_fraction(traj.direction)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    out = np.empty_like(pts)
    for j in range(3):
        tgt_lo, tgt_hi = c[j] - 0.5 * f * r[j], c[j] + 0.5 * f * r[j]
        span = hi[j] - lo[j]
        if span < 1e-12:
            out[:, j] = 0.5 * (tgt_lo + tgt_hi)
        else:
            out[:, j] = tgt_lo + (pts[:, j] - lo[j]) * (tgt_hi - tgt_lo) / span
    meta = dict(traj.meta)
    meta["frame"] = "scaled"
    return replace(traj, waypoints=out, normalized=False, limits=limits, meta=meta)


def trajectory_duration(traj: Trajectory, speeds=DEFAULT_SPEEDS) -> float:
    """Execution time (s) under a constant-speed follower.

    Each segment takes max_j |delta_j| / speed_j: joints move simultaneously
    and the slowest-finishing joint paces the segment.
    """
    return float(segment_times(traj.waypoints, speeds)[-1]) if len(traj) else 0.0


def segment_times(points: np.ndarray, speeds=DEFAULT_SPEEDS) -> np.ndarray:
    """Cumulative arrival time at every waypoint, starting from 0."""
    sp = np.asarray(speeds, dtype=float)
    if np.any(sp <= 0):
        raise TrajectoryError(f"speeds must be positive, got {speeds}")
    if len(points) == 0:
        return np.zeros(0)
    seg = (np.abs(np.diff(points, axis=0)) / sp).max(axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def generate(
    direction: str,
    sparsity: float,
    limits: JointLimits = DEFAULT_LIMITS,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Base raster -> direction transform -> scale to limits, in one call."""
    return scale_to_limits(rotate_to_direction(generate_base_zigzag(sparsity, step), direction), limits)


def save(traj: Trajectory, csv_path) -> None:
    """Write waypoints as CSV plus a JSON sidecar of generation settings.

    CSV columns: t_index, j1, j2, j3 (t_index = waypoint ordinal). Values
    use repr so a load round-trips bit-identically.
    """
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_index", "j1", "j2", "j3"])
        for i, p in enumerate(traj.waypoints):
            w.writerow([i] + [repr(float(x)) for x in p])
    sidecar = {
        "direction": traj.direction,
        "sparsity": traj.sparsity,
        "normalized": traj.normalized,
        "limits": traj.limits.to_dict() if traj.limits is not None else None,
        "meta": traj.meta,
    }
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(csv_path) -> Trajectory:
    """Read a trajectory written by :func:`save` (sidecar required)."""
    csv_path = Path(csv_path)
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[1] != 4:
        raise TrajectoryError(f"expected columns t_index,j1,j2,j3; got {rows.shape[1]} columns")
    with open(csv_path.with_suffix(".json")) as fh:
        side = json.load(fh)
    limits = JointLimits.from_dict(side["limits"]) if side.get("limits") else None
    return Trajectory(
        rows[:, 1:4],
        side["direction"],
        float(side["sparsity"]),
        bool(side["normalized"]),
        limits,
        side.get("meta", {}),
    )
