"""Shared joint-space types for the 3 positioning joints of a cable-driven arm.

Units are fixed across the whole toolkit: joint 1 and joint 2 are revolute
(degrees), joint 3 is prismatic (millimetres). Every position-like quantity
that crosses a module boundary uses this (deg, deg, mm) convention.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

N_POSITIONING_JOINTS = 3

#: Channel suffixes for the 8 motor/joint channels of one arm
#: (7 arm joints plus the grasper channel).
CHANNELS = ("j1", "j2", "j3", "j4", "j5", "j6", "j7", "grasper")

JOINT_UNITS = ("deg", "deg", "mm")


class SchemaError(ValueError):
    """Feature schema is inconsistent or does not match the expected layout."""


@dataclass(frozen=True)
class JointVector:
    """Position of the 3 positioning joints: (j1 deg, j2 deg, j3 mm)."""

    j1: float
    j2: float
    j3: float

    def __post_init__(self) -> None:
        if not all(np.isfinite([self.j1, self.j2, self.j3])):
            raise ValueError(f"joint vector components must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.j1, self.j2, self.j3], dtype=float)

    @classmethod
    def from_array(cls, a) -> "JointVector":
        a = np.asarray(a, dtype=float)
        if a.shape != (3,):
            raise ValueError(f"expected shape (3,), got {a.shape}")
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class JointLimits:
    """Inclusive per-joint position limits, with derived center and range.

    The center is c = 0.5 * (max + min) and the range is r = max - min,
    computed per joint; both are used by the trajectory scaling rules.
    """

    min: JointVector
    max: JointVector

    def __post_init__(self) -> None:
        lo, hi = self.min.as_array(), self.max.as_array()
        if not np.all(lo < hi):
            raise ValueError(f"limits must satisfy min < max per joint: {lo} vs {hi}")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.max.as_array() + self.min.as_array())

    @property
    def range(self) -> np.ndarray:
        return self.max.as_array() - self.min.as_array()

    def contains(self, v: JointVector) -> bool:
        a = v.as_array()
        return bool(np.all(a >= self.min.as_array()) and np.all(a <= self.max.as_array()))

    def to_dict(self) -> dict:
        return {"min": self.min.as_array().tolist(), "max": self.max.as_array().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "JointLimits":
        return cls(JointVector.from_array(d["min"]), JointVector.from_array(d["max"]))


#: Simulator defaults; real robots override these in the config file.
DEFAULT_LIMITS = JointLimits(JointVector(0.0, 0.0, 0.0), JointVector(90.0, 90.0, 250.0))


def validate_joint_vector(v: JointVector, lim: JointLimits) -> bool:
    """True iff every component of ``v`` lies inside ``lim`` (inclusive)."""
    return lim.contains(v)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered robot-state feature catalog plus the model-input selection mask.

    The name list fixes the column order of every recorded stream, dataset
    and trained model; a schema hash ties those artifacts together so a
    model can refuse inputs laid out differently.
    """

    names: tuple
    selected_mask: tuple

    def __post_init__(self) -> None:
        if len(self.names) != len(self.selected_mask):
            raise SchemaError("names and selected_mask must have equal length")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("feature names must be unique")

    @property
    def dim_full(self) -> int:
        return len(self.names)

    @property
    def dim_selected(self) -> int:
        return int(sum(1 for m in self.selected_mask if m))

    def selected_indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.selected_mask, dtype=bool))

    def selected_names(self) -> tuple:
        return tuple(n for n, m in zip(self.names, self.selected_mask) if m)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def hash(self) -> str:
        blob = json.dumps(
            {"names": list(self.names), "selected_mask": [bool(m) for m in self.selected_mask]},
            separators=(",", ":"),
        ).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_mask(self, mask) -> "FeatureSchema":
        return FeatureSchema(self.names, tuple(bool(m) for m in mask))

    def with_all_selected(self) -> "FeatureSchema":
        return FeatureSchema(self.names, tuple(True for _ in self.names))

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "selected_mask": [bool(m) for m in self.selected_mask],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(d["names"]), tuple(bool(m) for m in d["selected_mask"]))


def _block(prefix: str) -> list:
    return [f"{prefix}_{ch}" for ch in CHANNELS]


def build_full_schema() -> FeatureSchema:
    """Build the 138-dimensional robot-state catalog emitted by the simulator.

    Layout (counts in parentheses):
      operating status (6): timestamp, run_level, sublevel, last_sequence,
        arm_type, grasper_desired
      per-channel blocks (12 x 8): encoder values/offsets, motor and joint
        positions, motor and joint velocities, desired joint/motor positions
        and velocities, motor currents, motor torques
      end-effector Jacobian velocity and force (6 + 6)
      measured and desired end-effector pose, xyz + rotation matrix (12 + 12)

    The default selection mask picks joint positions and motor torques
    (8 + 8 = 16 inputs).
    """
    names: list = [
        "timestamp",
        "run_level",
        "sublevel",
        "last_sequence",
        "arm_type",
        "grasper_desired",
    ]
    for prefix in (
        "encoder_value",
        "encoder_offset",
        "motor_position",
        "joint_position",
        "motor_velocity",
        "joint_velocity",
        "desired_joint_position",
        "desired_motor_position",
        "desired_joint_velocity",
        "desired_motor_velocity",
        "motor_current",
        "motor_torque",
    ):
        names.extend(_block(prefix))
    names.extend(f"jacobian_velocity_{i}" for i in range(6))
    names.extend(f"jacobian_force_{i}" for i in range(6))
    for which in ("ee", "desired_ee"):
        names.extend(f"{which}_pos_{ax}" for ax in "xyz")
        names.extend(f"{which}_rot_{r}{c}" for r in range(3) for c in range(3))

    mask = tuple(
        n.startswith("joint_position_") or n.startswith("motor_torque_") for n in names
    )
    schema = FeatureSchema(tuple(names), mask)
    if schema.dim_full != 138 or schema.dim_selected != 16:
        raise SchemaError(
            f"catalog layout drifted: {schema.dim_full} features, "
            f"{schema.dim_selected} selected"
        )
    return schema


#: Canonical schema instance shared by recorder, datasets and models.
FULL_SCHEMA = build_full_schema()
