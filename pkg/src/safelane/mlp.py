"""Small feed-forward networks: numpy training with hand-rolled Adam, a packed
scalar forward pass for the simulation kernels, and a checksummed file format.

Architecture is fixed at two tanh hidden layers of 64 units with a linear
output; inputs and targets are z-scored with statistics stored in the model.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit

__all__ = ["MlpModel", "train_mlp", "mse_loss_and_grads", "save_model", "load_model"]

HIDDEN = 64
FORMAT_TAG = "safelane-mlp-v1"


@njit(cache=True)
def mlp_eval_k(theta, n_in, n_out, x, out):
    """Forward pass over a packed parameter vector (see MlpModel.pack)."""
    o_w1 = 0
    o_b1 = HIDDEN * n_in
    o_w2 = o_b1 + HIDDEN
    o_b2 = o_w2 + HIDDEN * HIDDEN
    o_w3 = o_b2 + HIDDEN
    o_b3 = o_w3 + n_out * HIDDEN
    o_xm = o_b3 + n_out
    o_xs = o_xm + n_in
    o_ym = o_xs + n_in
    o_ys = o_ym + n_out

    xn = np.empty(n_in)
    for j in range(n_in):
        xn[j] = (x[j] - theta[o_xm + j]) / theta[o_xs + j]
    h1 = np.empty(HIDDEN)
    for i in range(HIDDEN):
        s = theta[o_b1 + i]
        base = i * n_in
        for j in range(n_in):
            s += theta[o_w1 + base + j] * xn[j]
        h1[i] = math.tanh(s)
    h2 = np.empty(HIDDEN)
    for i in range(HIDDEN):
        s = theta[o_b2 + i]
        base = o_w2 + i * HIDDEN
        for j in range(HIDDEN):
            s += theta[base + j] * h1[j]
        h2[i] = math.tanh(s)
    for i in range(n_out):
        s = theta[o_b3 + i]
        base = o_w3 + i * HIDDEN
        for j in range(HIDDEN):
            s += theta[base + j] * h2[j]
        out[i] = s * theta[o_ys + i] + theta[o_ym + i]


@dataclass
class MlpModel:
    """Weights, biases and normalization for a [n_in, 64, 64, n_out] tanh net."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_out(self) -> int:
        return self.w3.shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_in, HIDDEN, HIDDEN, self.n_out]

    def __post_init__(self):
        if self.w1.shape[0] != HIDDEN or self.w2.shape != (HIDDEN, HIDDEN):
            raise ValueError(f"hidden layers must be {HIDDEN}x{HIDDEN}")
        if self.w3.shape[1] != HIDDEN:
            raise ValueError("output layer shape inconsistent")
        if np.any(self.x_scale <= 0.0) or np.any(self.y_scale <= 0.0):
            raise ValueError("normalization scales must be positive")

    @classmethod
    def init(cls, n_in: int, n_out: int, seed: int = 0) -> "MlpModel":
        """Glorot-scaled random init with identity normalization."""
        rng = np.random.default_rng(seed)

        def glorot(rows, cols):
            bound = math.sqrt(6.0 / (rows + cols))
            return rng.uniform(-bound, bound, size=(rows, cols))

        return cls(
            w1=glorot(HIDDEN, n_in),
            b1=np.zeros(HIDDEN),
            w2=glorot(HIDDEN, HIDDEN),
            b2=np.zeros(HIDDEN),
            w3=glorot(n_out, HIDDEN),
            b3=np.zeros(n_out),
            x_mean=np.zeros(n_in),
            x_scale=np.ones(n_in),
            y_mean=np.zeros(n_out),
            y_scale=np.ones(n_out),
        )

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "MlpModel":
        m = cls.init(n_in, n_out, seed=0)
        for w in (m.w1, m.b1, m.w2, m.b2, m.w3, m.b3):
            w[:] = 0.0
        return m

    def copy(self) -> "MlpModel":
        return MlpModel(*(np.array(getattr(self, f)) for f in (
            "w1", "b1", "w2", "b2", "w3", "b3", "x_mean", "x_scale", "y_mean", "y_scale")))

    def set_normalization(self, x: np.ndarray, y: np.ndarray, scale_floor: float = 1e-6) -> None:
        self.x_mean = x.mean(axis=0)
        self.x_scale = np.maximum(x.std(axis=0), scale_floor)
        self.y_mean = y.mean(axis=0)
        self.y_scale = np.maximum(y.std(axis=0), scale_floor)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward pass; x is (n, n_in), returns (n, n_out) in raw units."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        xn = (x - self.x_mean) / self.x_scale
        h1 = np.tanh(xn @ self.w1.T + self.b1)
        h2 = np.tanh(h1 @ self.w2.T + self.b2)
        yn = h2 @ self.w3.T + self.b3
        return yn * self.y_scale + self.y_mean

    def pack(self) -> np.ndarray:
        """Flatten into the layout consumed by :func:`mlp_eval_k`."""
        return np.concatenate([
            self.w1.ravel(), self.b1, self.w2.ravel(), self.b2, self.w3.ravel(), self.b3,
            self.x_mean, self.x_scale, self.y_mean, self.y_scale,
        ]).astype(np.float64)


_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3", "x_mean", "x_scale", "y_mean", "y_scale")


def _payload(model: MlpModel) -> dict:
    return {
        "format": FORMAT_TAG,
        "activation": "tanh",
        "layer_sizes": model.layer_sizes,
        "tensors": {f: getattr(model, f).ravel().tolist() for f in _FIELDS},
    }


def _checksum(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def save_model(model: MlpModel, path) -> None:
    """Write the versioned JSON container with a content checksum."""
    payload = _payload(model)
    doc = dict(payload)
    doc["checksum"] = _checksum(payload)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="ascii") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not a valid model file (line {e.lineno}: {e.msg})") from e
    if doc.get("format") != FORMAT_TAG:
        raise ValueError(f"{path}: unsupported model format {doc.get('format')!r}")
    stored = doc.pop("checksum", None)
    if stored != _checksum(doc):
        raise ValueError(f"{path}: checksum mismatch, file corrupted")
    sizes = doc["layer_sizes"]
    n_in, n_out = int(sizes[0]), int(sizes[-1])
    shapes = {
        "w1": (HIDDEN, n_in), "b1": (HIDDEN,), "w2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
        "w3": (n_out, HIDDEN), "b3": (n_out,),
        "x_mean": (n_in,), "x_scale": (n_in,), "y_mean": (n_out,), "y_scale": (n_out,),
    }
    tensors = {}
    for f in _FIELDS:
        arr = np.asarray(doc["tensors"][f], dtype=np.float64)
        if arr.size != int(np.prod(shapes[f])):
            raise ValueError(f"{path}: tensor {f} has {arr.size} values, expected {shapes[f]}")
        tensors[f] = arr.reshape(shapes[f])
    return MlpModel(**tensors)


def _forward_cache(model: MlpModel, xn: np.ndarray):
    h1 = np.tanh(xn @ model.w1.T + model.b1)
    h2 = np.tanh(h1 @ model.w2.T + model.b2)
    yn = h2 @ model.w3.T + model.b3
    return h1, h2, yn


def mse_loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Normalized-target MSE and its gradients w.r.t. every parameter tensor.

    Returns (loss, dict of gradients keyed like the tensor fields).
    """
    xn = (x - model.x_mean) / model.x_scale
    tn = (y - model.y_mean) / model.y_scale
    h1, h2, yn = _forward_cache(model, xn)
    diff = yn - tn
    n = diff.size
    loss = float(np.mean(diff * diff))

    d_yn = (2.0 / n) * diff
    g_w3 = d_yn.T @ h2
    g_b3 = d_yn.sum(axis=0)
    d_h2 = d_yn @ model.w3
    d_z2 = d_h2 * (1.0 - h2 * h2)
    g_w2 = d_z2.T @ h1
    g_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ model.w2
    d_z1 = d_h1 * (1.0 - h1 * h1)
    g_w1 = d_z1.T @ xn
    g_b1 = d_z1.sum(axis=0)
    return loss, {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2, "w3": g_w3, "b3": g_b3}


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    model: MlpModel,
    epochs: int,
    lr: float = 1e-3,
    batch: int = 256,
    seed: int = 0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> MlpModel:
    """Mini-batch Adam on normalized-target MSE. Deterministic given the seed;
    epochs=0 returns the initial model unchanged. Raises on NaN loss."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    out = model.copy()
    if epochs == 0:
        return out
    rng = np.random.default_rng(seed)
    params = ("w1", "b1", "w2", "b2", "w3", "b3")
    m = {p: np.zeros_like(getattr(out, p)) for p in params}
    v = {p: np.zeros_like(getattr(out, p)) for p in params}
    step = 0
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads = mse_loss_and_grads(out, x[idx], y[idx])
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at update {step} (lr={lr}, batch={batch})"
                )
            step += 1
            c1 = 1.0 - beta1 ** step
            c2 = 1.0 - beta2 ** step
            for p in params:
                gp = grads[p]
                m[p] = beta1 * m[p] + (1.0 - beta1) * gp
                v[p] = beta2 * v[p] + (1.0 - beta2) * gp * gp
                getattr(out, p)[...] -= lr * (m[p] / c1) / (np.sqrt(v[p] / c2) + eps)
    return out


def held_out_mse(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Raw-unit mean squared error on an evaluation set."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    pred = model.forward(x)
    return float(np.mean((pred - y) ** 2))
