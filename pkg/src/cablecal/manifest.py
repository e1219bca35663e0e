"""Reproducible run manifests tying artifacts to their producing run.

A manifest records the tool version, the command, the seed, a hash of the
effective configuration, hashes of every input artifact consumed and every
output artifact produced, and per-stage timings (wall clock, and simulated
session time where that differs). Rerunning a command with the same config,
seed and inputs must reproduce byte-identical outputs; the timing fields are
the only part of a manifest expected to vary between such reruns.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

TOOL_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def hash_bytes(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def hash_file(path) -> str:
    h = hashlib.sha256()
    with open(Path(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(path) -> str:
    """Hash of a directory artifact: file names + contents, order-stable."""
    path = Path(path)
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(path).as_posix().encode())
            h.update(bytes.fromhex(hash_file(p)))
    return h.hexdigest()


def hash_config(config_dict: dict) -> str:
    return hash_bytes(json.dumps(config_dict, sort_keys=True,
                                 separators=(",", ":")).encode())


def _hash_artifact(path: Path) -> str:
    return hash_tree(path) if path.is_dir() else hash_file(path)


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    tool_version: str = TOOL_VERSION
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return hash_config(self.config)

    def add_input(self, path) -> None:
        path = Path(path)
        self.inputs[path.name] = {"path": str(path), "sha256": _hash_artifact(path)}

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs[path.name] = {"path": str(path), "sha256": _hash_artifact(path)}

    def add_stage(self, name: str, wall_s: float, sim_s=None) -> None:
        stage = {"name": name, "wall_s": float(wall_s)}
        if sim_s is not None:
            stage["sim_s"] = float(sim_s)
        self.stages.append(stage)

    def to_dict(self) -> dict:
        return {
            "tool": "cablecal",
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "stages": self.stages,
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir) / MANIFEST_NAME
        with open(out, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(command=d["command"], seed=d["seed"], config=d["config"],
                   tool_version=d["tool_version"], inputs=dict(d["inputs"]),
                   outputs=dict(d["outputs"]), stages=list(d["stages"]))


def load_manifest(path) -> RunManifest:
    """Read a manifest from a file path or an artifact directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path) as fh:
        return RunManifest.from_dict(json.load(fh))
