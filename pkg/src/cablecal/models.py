"""Calibration models: map recorded robot-state features to corrected joints.

Four model families share one interface: a fixed per-joint offset, an affine
(linear) model, a degree-2 polynomial model and a small MLP. Each can be fit
in one of two output modes:

  on-error    the model predicts the joint error (truth - reported); the
              correction is added back onto the reported position,
  end-to-end  the model predicts the true joint position directly.

All models consume the raw (unnormalized) feature columns selected by the
dataset schema. Input normalization is learned from the training set and
folded into the stored parameters (offset/linear/MLP) or applied inside
``predict`` (poly2), so a serialized model is self-contained.

Two prediction paths exist deliberately. ``predict`` takes one feature row
and runs in pure Python -- this is the path a servo-loop deployment would
take, and the one the latency benchmarks measure. ``predict_batch`` is the
vectorized numpy path for offline evaluation over whole datasets.
"""

from __future__ import annotations

import hashlib
import json
import math
from operator import mul
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import FeatureSchema
from .data import Dataset, NormStats
from .nn import Mlp, MlpConfig, _sigmoid, train_mlp

ON_ERROR = "on-error"
END_TO_END = "end-to-end"
MODES = (ON_ERROR, END_TO_END)

MODEL_FORMAT = "ccm"
MODEL_VERSION = 1

#: poly2 input-width guard: above this the expansion gets quadratically silly.
POLY2_MAX_INPUTS = 64


class ModelError(ValueError):
    """Model fitting, prediction or (de)serialization contract violation."""


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ModelError(f"unknown output mode {mode!r}; expected one of {MODES}")


def _rep_indices(schema: FeatureSchema) -> tuple:
    """Positions of the reported joint columns within the selected inputs."""
    names = schema.selected_names()
    try:
        return tuple(names.index(f"joint_position_j{j}") for j in (1, 2, 3))
    except ValueError:
        raise ModelError(
            "input selection must include joint_position_j1..j3; "
            "corrections cannot be applied without the reported positions")


def _fit_targets(ds: Dataset, mode: str) -> np.ndarray:
    return ds.errors if mode == ON_ERROR else ds.targets


def _input_norm(ds: Dataset) -> NormStats:
    return ds.norm if ds.norm is not None else NormStats.fit(ds.inputs)


def _dot(row: list, x) -> float:
    return sum(map(mul, row, x))


# --------------------------------------------------------------------------
# model classes


class CalibrationModel:
    """Shared mode/schema bookkeeping and the serialization contract."""

    kind: str = "base"

    def __init__(self, mode: str, schema: FeatureSchema):
        _check_mode(mode)
        self.mode = mode
        self.schema = schema

    @property
    def dim_in(self) -> int:
        return self.schema.dim_selected

    def check_compatible(self, schema: FeatureSchema) -> None:
        """Refuse feature layouts other than the one the model was fit on."""
        if schema.hash() != self.schema.hash():
            raise ModelError(
                "feature schema mismatch: model was fit on a different "
                "column layout or selection mask")

    def _check_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim_in:
            raise ModelError(
                f"expected inputs of shape (N, {self.dim_in}), got {X.shape}")
        return X

    def predict(self, x: Sequence) -> list:
        raise NotImplementedError

    def predict_batch(self, X) -> np.ndarray:
        raise NotImplementedError

    def payload(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_payload(cls, payload: dict, mode: str, schema: FeatureSchema):
        raise NotImplementedError


class FixedOffsetModel(CalibrationModel):
    """Corrected position = reported position + a constant per-joint offset.

    The functional form references the reported joints directly, so the
    on-error and end-to-end framings coincide: either way the best constant
    is the mean training error.
    """

    kind = "offset"

    def __init__(self, mode: str, schema: FeatureSchema, offsets):
        super().__init__(mode, schema)
        self.offsets = [float(v) for v in offsets]
        if len(self.offsets) != 3:
            raise ModelError(f"expected 3 offsets, got {len(self.offsets)}")
        self._rep = _rep_indices(schema)
        self._dim = schema.dim_selected

    def predict(self, x: Sequence) -> list:
        if len(x) != self._dim:
            raise ModelError(f"expected {self._dim} features, got {len(x)}")
        r, c = self._rep, self.offsets
        return [x[r[0]] + c[0], x[r[1]] + c[1], x[r[2]] + c[2]]

    def predict_batch(self, X) -> np.ndarray:
        X = self._check_batch(X)
        return X[:, list(self._rep)] + np.asarray(self.offsets)

    def payload(self) -> dict:
        return {"offsets": self.offsets}

    @classmethod
    def from_payload(cls, payload, mode, schema):
        return cls(mode, schema, payload["offsets"])


class LinearModel(CalibrationModel):
    """Affine model in raw feature space: y = intercept + weights.T @ x.

    Fitting runs on normalized inputs for conditioning; the stored weights
    have the normalization folded back in, so prediction is a bare dot
    product (D_in + 1 parameters per joint).
    """

    kind = "linear"

    def __init__(self, mode: str, schema: FeatureSchema, weights, intercept):
        super().__init__(mode, schema)
        self.weights = np.asarray(weights, dtype=float)     # (D, 3)
        self.intercept = np.asarray(intercept, dtype=float)  # (3,)
        if self.weights.shape != (schema.dim_selected, 3) or self.intercept.shape != (3,):
            raise ModelError(
                f"bad linear parameter shapes {self.weights.shape}, {self.intercept.shape}")
        self._rep = _rep_indices(schema) if mode == ON_ERROR else None
        self._dim = schema.dim_selected
        self._wt = self.weights.T.tolist()   # 3 rows of D floats
        self._b = self.intercept.tolist()

    def predict(self, x: Sequence) -> list:
        if len(x) != self._dim:
            raise ModelError(f"expected {self._dim} features, got {len(x)}")
        wt, b = self._wt, self._b
        out = [b[0] + _dot(wt[0], x), b[1] + _dot(wt[1], x), b[2] + _dot(wt[2], x)]
        r = self._rep
        if r is not None:
            out[0] += x[r[0]]
            out[1] += x[r[1]]
            out[2] += x[r[2]]
        return out

    def predict_batch(self, X) -> np.ndarray:
        X = self._check_batch(X)
        out = X @ self.weights + self.intercept
        if self._rep is not None:
            out += X[:, list(self._rep)]
        return out

    def payload(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept.tolist()}

    @classmethod
    def from_payload(cls, payload, mode, schema):
        return cls(mode, schema, payload["weights"], payload["intercept"])


def _poly2_n_terms(d: int) -> int:
    return d + d * (d + 1) // 2


def _poly2_expand(Z: np.ndarray) -> np.ndarray:
    """Degree-2 feature map: all z_i, then z_i * z_j for i <= j."""
    d = Z.shape[1]
    cols = [Z]
    for i in range(d):
        cols.append(Z[:, i:i + 1] * Z[:, i:])
    return np.hstack(cols)


class PolyModel(CalibrationModel):
    """Degree-2 polynomial on normalized features.

    Unlike the linear model the normalization cannot be folded into the
    coefficients (the quadratic terms mix it), so the stats travel with the
    model and are applied inside predict.
    """

    kind = "poly2"

    def __init__(self, mode: str, schema: FeatureSchema, norm: NormStats,
                 coef, intercept):
        super().__init__(mode, schema)
        d = schema.dim_selected
        self.norm = norm
        self.coef = np.asarray(coef, dtype=float)            # (P, 3)
        self.intercept = np.asarray(intercept, dtype=float)  # (3,)
        if self.coef.shape != (_poly2_n_terms(d), 3) or self.intercept.shape != (3,):
            raise ModelError(
                f"bad poly2 parameter shapes {self.coef.shape}, {self.intercept.shape}")
        self._rep = _rep_indices(schema) if mode == ON_ERROR else None
        self._dim = d
        self._ct = self.coef.T.tolist()
        self._b = self.intercept.tolist()
        self._mean = norm.mean.tolist()
        self._sd = norm.sd.tolist()

    def predict(self, x: Sequence) -> list:
        if len(x) != self._dim:
            raise ModelError(f"expected {self._dim} features, got {len(x)}")
        z = [(v - m) / s for v, m, s in zip(x, self._mean, self._sd)]
        phi = list(z)
        for i, zi in enumerate(z):
            phi.extend(zi * zj for zj in z[i:])
        out = [b + _dot(row, phi) for b, row in zip(self._b, self._ct)]
        r = self._rep
        if r is not None:
            out[0] += x[r[0]]
            out[1] += x[r[1]]
            out[2] += x[r[2]]
        return out

    def predict_batch(self, X) -> np.ndarray:
        X = self._check_batch(X)
        phi = _poly2_expand(self.norm.apply(X))
        out = phi @ self.coef + self.intercept
        if self._rep is not None:
            out += X[:, list(self._rep)]
        return out

    def payload(self) -> dict:
        return {"norm": self.norm.to_dict(), "coef": self.coef.tolist(),
                "intercept": self.intercept.tolist()}

    @classmethod
    def from_payload(cls, payload, mode, schema):
        return cls(mode, schema, NormStats.from_dict(payload["norm"]),
                   payload["coef"], payload["intercept"])


class MlpModel(CalibrationModel):
    """Trained MLP with input/target normalization folded into the weights.

    The first layer absorbs the input statistics and the output layer the
    target statistics, so the stored network maps raw features straight to
    (mode-dependent) raw outputs.
    """

    kind = "mlp"

    def __init__(self, mode: str, schema: FeatureSchema, weights, biases,
                 config: MlpConfig, train_curve: Optional[list] = None,
                 seed: Optional[int] = None):
        super().__init__(mode, schema)
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if (len(self.weights) != len(self.biases)
                or self.weights[0].shape[0] != schema.dim_selected
                or self.weights[-1].shape[1] != 3):
            raise ModelError("MLP layer shapes do not match schema/outputs")
        self.config = config
        self.train_curve = list(train_curve) if train_curve is not None else None
        self.seed = seed
        self._rep = _rep_indices(schema) if mode == ON_ERROR else None
        self._dim = schema.dim_selected
        # python-native copies for the scalar path
        self._hidden = [(w.T.tolist(), b.tolist())
                        for w, b in zip(self.weights[:-1], self.biases[:-1])]
        self._out_w = self.weights[-1].T.tolist()
        self._out_b = self.biases[-1].tolist()

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def predict(self, x: Sequence) -> list:
        if len(x) != self._dim:
            raise ModelError(f"expected {self._dim} features, got {len(x)}")
        exp = math.exp
        a = x
        for rows, bias in self._hidden:
            nxt = []
            for row, b0 in zip(rows, bias):
                s = b0 + sum(map(mul, row, a))
                if s >= 0.0:
                    nxt.append(1.0 / (1.0 + exp(-s)))
                else:
                    e = exp(s)
                    nxt.append(e / (1.0 + e))
            a = nxt
        out = [b0 + sum(map(mul, row, a))
               for row, b0 in zip(self._out_w, self._out_b)]
        r = self._rep
        if r is not None:
            out[0] += x[r[0]]
            out[1] += x[r[1]]
            out[2] += x[r[2]]
        return out

    def predict_batch(self, X) -> np.ndarray:
        X = self._check_batch(X)
        a = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _sigmoid(a @ w + b)
        out = a @ self.weights[-1] + self.biases[-1]
        if self._rep is not None:
            out = out + X[:, list(self._rep)]
        return out

    def payload(self) -> dict:
        out = {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": self.config.to_dict(),
        }
        if self.train_curve is not None:
            out["train_curve"] = self.train_curve
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_payload(cls, payload, mode, schema):
        return cls(mode, schema, payload["weights"], payload["biases"],
                   MlpConfig.from_dict(payload["config"]),
                   payload.get("train_curve"), payload.get("seed"))


_KINDS = {cls.kind: cls for cls in
          (FixedOffsetModel, LinearModel, PolyModel, MlpModel)}


# --------------------------------------------------------------------------
# fitting


def _solve_affine(Phi: np.ndarray, Y: np.ndarray, ridge: float) -> tuple:
    """Least squares with intercept; (intercept (3,), coef (P, 3)).

    ridge = 0 uses the SVD minimum-norm solution, which keeps the on-error
    and end-to-end fits exactly prediction-equivalent (the reported joints
    are themselves inputs, so the two targets differ by an in-span affine
    term). A positive ridge penalizes all non-intercept coefficients.
    """
    if ridge < 0:
        raise ModelError(f"ridge must be >= 0, got {ridge}")
    A = np.hstack([np.ones((len(Phi), 1)), Phi])
    if ridge > 0.0:
        pen = np.ones(A.shape[1])
        pen[0] = 0.0
        W = np.linalg.solve(A.T @ A + ridge * np.diag(pen), A.T @ Y)
    else:
        W, *_ = np.linalg.lstsq(A, Y, rcond=None)
    return W[0], W[1:]


def fit_offset(ds: Dataset, mode: str = ON_ERROR) -> FixedOffsetModel:
    """Constant per-joint correction: the mean training error."""
    _check_mode(mode)
    return FixedOffsetModel(mode, ds.schema, ds.errors.mean(axis=0))


def fit_linear(ds: Dataset, mode: str = ON_ERROR, ridge: float = 0.0) -> LinearModel:
    _check_mode(mode)
    norm = _input_norm(ds)
    b_n, W_n = _solve_affine(norm.apply(ds.inputs), _fit_targets(ds, mode), ridge)
    # fold (x - mean) / sd back into raw-space parameters
    W = W_n / norm.sd[:, None]
    b = b_n - (norm.mean / norm.sd) @ W_n
    return LinearModel(mode, ds.schema, W, b)


def fit_poly2(ds: Dataset, mode: str = ON_ERROR, ridge: float = 0.0,
              allow_large: bool = False) -> PolyModel:
    _check_mode(mode)
    d = ds.inputs.shape[1]
    if d > POLY2_MAX_INPUTS and not allow_large:
        raise ModelError(
            f"poly2 on {d} inputs expands to {_poly2_n_terms(d)} terms; "
            f"pass allow_large=True to fit anyway")
    norm = _input_norm(ds)
    phi = _poly2_expand(norm.apply(ds.inputs))
    b, C = _solve_affine(phi, _fit_targets(ds, mode), ridge)
    return PolyModel(mode, ds.schema, norm, C, b)


def fit_mlp(ds: Dataset, mode: str = ON_ERROR,
            config: Optional[MlpConfig] = None, seed: int = 0) -> MlpModel:
    """Train the MLP on normalized inputs against standardized targets.

    Target standardization is per output column and per mode (the error
    target and the absolute-position target live on very different scales),
    then folded into the output layer along with the input stats in the
    first layer.
    """
    _check_mode(mode)
    config = config if config is not None else MlpConfig()
    norm = _input_norm(ds)
    Y = _fit_targets(ds, mode)
    tnorm = NormStats.fit(Y)
    net, curve = train_mlp(norm.apply(ds.inputs), tnorm.apply(Y), config, seed)

    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    weights[0] = weights[0] / norm.sd[:, None]
    biases[0] = biases[0] - (norm.mean / norm.sd) @ net.weights[0]
    weights[-1] = weights[-1] * tnorm.sd[None, :]
    biases[-1] = biases[-1] * tnorm.sd + tnorm.mean
    return MlpModel(mode, ds.schema, weights, biases, config,
                    train_curve=curve.tolist(), seed=seed)


def predict(model: CalibrationModel, x: Sequence) -> list:
    """Corrected (q1, q2, q3) for one raw feature row (pure-Python path)."""
    return model.predict(x)


def predict_batch(model: CalibrationModel, X) -> np.ndarray:
    """Corrected positions for a (N, D) feature matrix (numpy path)."""
    return model.predict_batch(X)


# --------------------------------------------------------------------------
# serialization


def _checksum(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "checksum"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def serialize(model: CalibrationModel, path) -> None:
    """Write a self-describing, checksummed model file (.ccm JSON)."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "mode": model.mode,
        "schema": model.schema.to_dict(),
        "schema_hash": model.schema.hash(),
        "payload": model.payload(),
    }
    doc["checksum"] = _checksum(doc)
    with open(Path(path), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def deserialize(path) -> CalibrationModel:
    try:
        with open(Path(path)) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"not a model file ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError(f"not a model file: format tag {doc.get('format')!r}")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model file version {doc.get('version')!r}")
    if doc.get("checksum") != _checksum(doc):
        raise ModelError("model file checksum mismatch (corrupted or edited)")
    schema = FeatureSchema.from_dict(doc["schema"])
    if doc.get("schema_hash") != schema.hash():
        raise ModelError("schema hash does not match embedded schema")
    try:
        cls = _KINDS[doc["kind"]]
    except KeyError:
        raise ModelError(f"unknown model kind {doc.get('kind')!r}")
    return cls.from_payload(doc["payload"], doc["mode"], schema)
