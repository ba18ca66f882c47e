"""Channel-shared linear forecasters (plain and DLinear-style decomposition).

Data enters as column matrices: ``X`` is ``l x n`` and ``Y`` is ``t x n``,
where every column is one (window, channel) sample. The numpy path uses
closed-form gradients; the taped path builds the same computation from
:mod:`hdt.autodiff` primitives so training steps can be differentiated.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels
from .data import window_arrays
from .errors import EmptyDataset, NonFiniteLoss, ShapeMismatch

DEFAULT_KERNEL = 25


@dataclass
class LinearForecaster:
    lookback: int
    horizon: int
    W: object = None
    b: object = None
    kind = "linear"
    param_names = ("W", "b")

    def __post_init__(self):
        if self.W is None:
            self.W = np.zeros((self.horizon, self.lookback))
        if self.b is None:
            self.b = np.zeros(self.horizon)

    def params(self) -> dict:
        return {name: getattr(self, name) for name in self.param_names}

    def with_params(self, params: dict):
        return replace(self, **params)


@dataclass
class DecompLinearForecaster:
    lookback: int
    horizon: int
    kernel_size: int = DEFAULT_KERNEL
    W_trend: object = None
    b_trend: object = None
    W_seasonal: object = None
    b_seasonal: object = None
    kind = "dlinear"
    param_names = ("W_trend", "b_trend", "W_seasonal", "b_seasonal")

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        for name in ("W_trend", "W_seasonal"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros((self.horizon, self.lookback)))
        for name in ("b_trend", "b_seasonal"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.horizon))

    def params(self) -> dict:
        return {name: getattr(self, name) for name in self.param_names}

    def with_params(self, params: dict):
        return replace(self, **params)


MODEL_KINDS = {"linear": LinearForecaster, "dlinear": DecompLinearForecaster}


def make_model(kind: str, lookback: int, horizon: int, rng=None, std: float = 0.0, kernel_size=DEFAULT_KERNEL):
    """Zero model, or Gaussian weights with the given std when ``rng`` is set."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    if kind == "dlinear":
        model = DecompLinearForecaster(lookback, horizon, kernel_size)
    else:
        model = LinearForecaster(lookback, horizon)
    if rng is not None and std > 0:
        model = model.with_params(
            {k: rng.normal(0.0, std, size=np.shape(v)) for k, v in model.params().items()}
        )
    return model


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    steps: int = 20
    batch_size: int | None = None  # None = full batch
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class EarlyStopConfig:
    learning_rate: float = 0.005
    max_epochs: int = 200
    patience: int = 10
    batch_size: int = 32
    seed: int = 0
    # a few hundred windows give only a handful of batches per epoch; this
    # floor keeps small (distilled) sets from stopping undertrained
    min_steps_per_epoch: int = 100


@dataclass
class TrainLog:
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")


# ------------------------------------------------------------------ data


def series_matrices(values, l: int, t: int):
    """All stride-1 windows of an ``N x C`` array as ``(X, Y)`` column matrices."""
    x, y = window_arrays(values, l, t)
    w, _, c = x.shape
    X = np.ascontiguousarray(x.transpose(1, 0, 2).reshape(l, w * c))
    Y = np.ascontiguousarray(y.transpose(1, 0, 2).reshape(t, w * c))
    return X, Y


def windows_to_matrices(windows):
    if isinstance(windows, tuple) and len(windows) == 2:
        return windows
    windows = list(windows)
    if not windows:
        raise EmptyDataset("no windows")
    x = np.stack([w.x for w in windows])  # (W, l, C)
    y = np.stack([w.y for w in windows])
    X = x.transpose(1, 0, 2).reshape(x.shape[1], -1)
    Y = y.transpose(1, 0, 2).reshape(y.shape[1], -1)
    return X, Y


@lru_cache(maxsize=16)
def moving_average_matrix(length: int, kernel_size: int) -> np.ndarray:
    """``A`` with ``A @ x`` equal to the replicate-padded moving average of ``x``."""
    a = kernels.moving_average(np.eye(length), kernel_size)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------- forward


def _effective_weight(model):
    if model.kind == "linear":
        return model.W, model.b
    a = moving_average_matrix(model.lookback, model.kernel_size)
    w = model.W_trend @ a + model.W_seasonal @ (np.eye(model.lookback) - a)
    return w, model.b_trend + model.b_seasonal


def predict_matrix(model, X: np.ndarray) -> np.ndarray:
    if X.shape[0] != model.lookback:
        raise ShapeMismatch(f"input has {X.shape[0]} rows, model expects {model.lookback}")
    w, b = _effective_weight(model)
    return w @ X + b[:, None]


def decompose(x: np.ndarray, kernel_size: int):
    """Trend (moving average along time) and seasonal remainder."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    trend = kernels.moving_average(x, kernel_size)
    seasonal = x - trend
    if squeeze:
        return trend[:, 0], seasonal[:, 0]
    return trend, seasonal


def forward(model, x) -> np.ndarray:
    """Forecast ``t x C`` from a lookback ``l x C``; channels share weights."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != model.lookback:
        raise ShapeMismatch(f"lookback of shape {x.shape} for l={model.lookback}")
    if model.kind == "linear":
        return model.W @ x + model.b[:, None]
    trend, seasonal = decompose(x, model.kernel_size)
    return (
        model.W_trend @ trend
        + model.W_seasonal @ seasonal
        + (model.b_trend + model.b_seasonal)[:, None]
    )


def forward_var(model, X):
    """Taped forward pass; parameters and ``X`` may be Variables."""
    if model.kind == "linear":
        return ad.add(ad.matmul(model.W, X), ad.reshape(model.b, (-1, 1)))
    trend = ad.moving_average(X, model.kernel_size)
    seasonal = ad.sub(X, trend)
    out = ad.add(ad.matmul(model.W_trend, trend), ad.matmul(model.W_seasonal, seasonal))
    bias = ad.add(model.b_trend, model.b_seasonal)
    return ad.add(out, ad.reshape(bias, (-1, 1)))


# ------------------------------------------------------------------ loss


def mse_matrix(model, X, Y) -> float:
    if X.shape[1] == 0:
        raise EmptyDataset("no samples")
    r = predict_matrix(model, X) - Y
    return float(np.mean(r * r))


def mse_loss(model, windows) -> float:
    """Mean squared error over windows, horizon steps and channels."""
    X, Y = windows_to_matrices(windows)
    return mse_matrix(model, X, Y)


def mse_var(model, X, Y):
    return ad.mean(ad.square(ad.sub(forward_var(model, X), Y)))


def loss_and_grad(model, X, Y):
    """MSE and its closed-form gradient w.r.t. every parameter."""
    n = X.shape[1]
    if n == 0:
        raise EmptyDataset("no samples")
    r = predict_matrix(model, X) - Y
    loss = float(np.mean(r * r))
    G = 2.0 * r / r.size
    gb = G.sum(axis=1)
    GX = G @ X.T
    if model.kind == "linear":
        return loss, {"W": GX, "b": gb}
    a = moving_average_matrix(model.lookback, model.kernel_size)
    g_trend = GX @ a.T
    return loss, {
        "W_trend": g_trend,
        "b_trend": gb,
        "W_seasonal": GX - g_trend,
        "b_seasonal": gb.copy(),
    }


# -------------------------------------------------------------- training


def _batches(n, cfg: TrainConfig):
    if cfg.batch_size is None or cfg.batch_size >= n:
        return None
    rng = np.random.default_rng(cfg.seed)
    return [rng.choice(n, size=cfg.batch_size, replace=False) for _ in range(cfg.steps)]


def sgd_train(model, windows, cfg: TrainConfig, record_on_tape: bool = False):
    """Run exactly ``cfg.steps`` SGD steps ``theta <- theta - lr * grad``.

    ``windows`` is a list of :class:`WindowPair` or an ``(X, Y)`` pair of
    column matrices. With ``record_on_tape`` every step is recorded on the
    active tape (``X``/``Y`` may then be Variables) and the returned model
    holds Variables that stay differentiable w.r.t. the data.
    """
    X, Y = windows_to_matrices(windows)
    n = X.shape[1]
    if n == 0:
        raise EmptyDataset("no samples")
    batches = _batches(n, cfg)
    lr = cfg.learning_rate
    if not record_on_tape:
        X = X.value if isinstance(X, ad.Variable) else np.asarray(X)
        Y = Y.value if isinstance(Y, ad.Variable) else np.asarray(Y)
        params = {k: np.array(v, dtype=np.float64) for k, v in model.params().items()}
        for step in range(cfg.steps):
            cols = None if batches is None else batches[step]
            xb = X if cols is None else X[:, cols]
            yb = Y if cols is None else Y[:, cols]
            loss, grads = loss_and_grad(model.with_params(params), xb, yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at step {step}")
            params = {k: params[k] - lr * grads[k] for k in params}
        return model.with_params(params)

    tape = ad.current_tape()
    if tape is None:
        raise RuntimeError("record_on_tape requires an active Tape")
    params = {}
    for k, v in model.params().items():
        params[k] = v if isinstance(v, ad.Variable) and v.requires_grad else tape.leaf(
            v.value if isinstance(v, ad.Variable) else v, name=k
        )
    for step in range(cfg.steps):
        cols = None if batches is None else batches[step]
        xb = X if cols is None else ad.getitem(X, (slice(None), cols))
        yb = Y if cols is None else ad.getitem(Y, (slice(None), cols))
        loss = mse_var(model.with_params(params), xb, yb)
        if not np.isfinite(loss.value):
            raise NonFiniteLoss(f"loss became {loss.value} at step {step}")
        names = list(params)
        grads = ad.grad(loss, [params[k] for k in names], create_graph=True)
        params = {k: ad.sub(params[k], ad.scale(g, lr)) for k, g in zip(names, grads)}
    return model.with_params(params)


def train_to_convergence(model, windows, val_windows, cfg: EarlyStopConfig | None = None, log: TrainLog | None = None):
    """Mini-batch SGD epochs with early stopping on validation MSE.

    Returns the parameters from the epoch with the lowest validation loss;
    stops after ``cfg.patience`` epochs without improvement.
    """
    cfg = cfg or EarlyStopConfig()
    log = log if log is not None else TrainLog()
    X, Y = windows_to_matrices(windows)
    Xv, Yv = windows_to_matrices(val_windows)
    if X.shape[1] == 0 or Xv.shape[1] == 0:
        raise EmptyDataset("training and validation sets must be nonempty")
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[1]
    params = {k: np.array(v, dtype=np.float64) for k, v in model.params().items()}
    best = dict(params)
    best_val = mse_matrix(model.with_params(params), Xv, Yv)
    log.best_val, log.best_epoch = best_val, 0
    stale = 0
    per_pass = -(-n // cfg.batch_size)
    passes = max(1, -(-cfg.min_steps_per_epoch // per_pass))
    for epoch in range(1, cfg.max_epochs + 1):
        for _ in range(passes):
            order = rng.permutation(n)
            for s in range(0, n, cfg.batch_size):
                cols = order[s : s + cfg.batch_size]
                loss, grads = loss_and_grad(model.with_params(params), X[:, cols], Y[:, cols])
                if not np.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss} in epoch {epoch}")
                for k in params:
                    params[k] = params[k] - cfg.learning_rate * grads[k]
        val = mse_matrix(model.with_params(params), Xv, Yv)
        log.val_losses.append(val)
        if val < best_val:
            best_val, best, stale = val, dict(params), 0
            log.best_val, log.best_epoch = val, epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return model.with_params(best)


# ----------------------------------------------------------- checkpoints

_MAGIC = b"HDTCKPT1"


def _header(model) -> dict:
    return {
        "kind": model.kind,
        "lookback": model.lookback,
        "horizon": model.horizon,
        "kernel_size": getattr(model, "kernel_size", None),
        "params": [[k, list(np.shape(v))] for k, v in model.params().items()],
    }


def flat_params(model) -> np.ndarray:
    """Parameters concatenated row-major in declaration order."""
    return np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in model.params().values()])


def _from_flat(header: dict, flat: np.ndarray):
    model = make_model(
        header["kind"], header["lookback"], header["horizon"], kernel_size=header.get("kernel_size") or DEFAULT_KERNEL
    )
    params, pos = {}, 0
    for name, shape in header["params"]:
        size = int(np.prod(shape))
        params[name] = flat[pos : pos + size].reshape(shape).copy()
        pos += size
    if pos != flat.size:
        raise ValueError("checkpoint size does not match its header")
    return model.with_params(params)


def save_checkpoint(model, path) -> None:
    """``.json`` files hold a header plus a flat list; anything else is binary
    (magic, uint32 header length, JSON header, little-endian float64 data)."""
    path = Path(path)
    header = _header(model)
    flat = flat_params(model)
    if path.suffix == ".json":
        path.write_text(json.dumps({**header, "values": flat.tolist()}))
        return
    blob = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path):
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return _from_flat(doc, np.asarray(doc["values"], dtype=np.float64))
    raw = path.read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint")
    (size,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + size])
    flat = np.frombuffer(raw[12 + size :], dtype="<f8").astype(np.float64)
    return _from_flat(header, flat)

