"""Minimal dense-MLP engine: sigmoid hidden layers, MSE loss, Adam.

Hand-rolled on numpy so training is deterministic given a seed and the
arithmetic is fully inspectable (the gradient and optimizer steps are each
checked against independent oracles in the test suite). Only what the
calibration models need: fully connected layers, sigmoid hidden activations,
a linear output layer, L1/L2 weight penalties and an L2 activity penalty.

Loss definition (what the gradients implement):

    L = mean((pred - y)^2)                         over batch and outputs
      + sum_layers kernel_l2 * sum(W^2) + kernel_l1 * sum(|W|)
      + bias_l2 * sum(b^2)
      + activity_l2 * sum(hidden^2) / batch_size
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (100, 100)
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    kernel_l2: float = 5e-4
    kernel_l1: float = 0.0
    bias_l2: float = 0.0
    activity_l2: float = 0.0

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


#: The wider 3-hidden-layer variant used in full-feature robustness studies.
LARGE_CONFIG = MlpConfig(hidden=(600, 500, 400), kernel_l2=1e-4, kernel_l1=1e-5,
                         bias_l2=1e-4, activity_l2=1e-5)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """Dense network [D_in -> hidden... -> D_out], sigmoid hidden, linear out."""

    def __init__(self, dim_in: int, dim_out: int, config: MlpConfig, seed: int = 0):
        self.config = config
        self.dims = (dim_in, *config.hidden, dim_out)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def parameters(self) -> list:
        """Flat list of parameter arrays (weights then bias per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, X: np.ndarray) -> np.ndarray:
        a = X
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _sigmoid(a @ w + b)
        return a @ self.weights[-1] + self.biases[-1]

    def loss_and_grads(self, X: np.ndarray, Y: np.ndarray) -> tuple:
        """Total loss and gradients in parameters() order."""
        cfg = self.config
        n, k_out = Y.shape
        acts = [X]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(_sigmoid(acts[-1] @ w + b))
        pred = acts[-1] @ self.weights[-1] + self.biases[-1]

        resid = pred - Y
        loss = float(np.mean(resid ** 2))
        loss += sum(cfg.kernel_l2 * float(np.sum(w ** 2)) for w in self.weights)
        if cfg.kernel_l1:
            loss += sum(cfg.kernel_l1 * float(np.sum(np.abs(w))) for w in self.weights)
        if cfg.bias_l2:
            loss += sum(cfg.bias_l2 * float(np.sum(b ** 2)) for b in self.biases)
        if cfg.activity_l2:
            loss += cfg.activity_l2 * sum(float(np.sum(a ** 2)) for a in acts[1:]) / n

        grads = [None] * (2 * len(self.weights))
        delta = 2.0 * resid / (n * k_out)            # d loss / d pred
        for li in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[li]
            gw = a_prev.T @ delta + 2.0 * cfg.kernel_l2 * self.weights[li]
            if cfg.kernel_l1:
                gw += cfg.kernel_l1 * np.sign(self.weights[li])
            gb = delta.sum(axis=0)
            if cfg.bias_l2:
                gb = gb + 2.0 * cfg.bias_l2 * self.biases[li]
            grads[2 * li] = gw
            grads[2 * li + 1] = gb
            if li > 0:
                da = delta @ self.weights[li].T
                if cfg.activity_l2:
                    da = da + 2.0 * cfg.activity_l2 * acts[li] / n
                delta = da * acts[li] * (1.0 - acts[li])   # sigmoid'
        return loss, grads

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "config": self.config.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        cfg = MlpConfig.from_dict(d["config"])
        net = cls(d["dims"][0], d["dims"][-1], cfg, seed=0)
        net.weights = [np.array(w, dtype=float) for w in d["weights"]]
        net.biases = [np.array(b, dtype=float) for b in d["biases"]]
        return net


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g ** 2
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def train_mlp(X: np.ndarray, Y: np.ndarray, config: MlpConfig, seed: int = 0,
              net: Optional[Mlp] = None) -> tuple:
    """Mini-batch Adam training; returns (net, per-epoch mean batch loss).

    Each epoch shuffles all rows; the final short batch is kept. Fully
    deterministic given (data, config, seed).
    """
    n = len(X)
    if n == 0 or len(Y) != n:
        raise ValueError("X and Y must be non-empty with matching rows")
    rng = np.random.default_rng(seed)
    if net is None:
        net = Mlp(X.shape[1], Y.shape[1], config, seed=seed)
    opt = Adam(net.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    curve = []
    params = net.parameters()
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, grads = net.loss_and_grads(X[idx], Y[idx])
            opt.step(params, grads)
            losses.append(loss)
        epoch_loss = float(np.mean(losses))
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"non-finite loss {epoch_loss} at epoch {epoch} (lr={config.lr})")
        curve.append(epoch_loss)
    return net, np.array(curve)
