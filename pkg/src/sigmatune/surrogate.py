"""Error-prediction network: dense blocks with batch norm, ReLU and dropout.

Pure numpy, float64. The functional core (``init_net``, ``forward``,
``backward``, ``adam_step``) works on a :class:`RegressionNet`; the
scikit-learn style :class:`ErrorSurrogate` wraps it with input
standardization, the training schedule and checkpointing.

Each block is ``dense -> batch norm -> ReLU``. The dense layers inside the
blocks carry no bias, the batch-norm shift makes it redundant. The last
block applies inverted dropout (train mode only) and feeds a scalar linear
output.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import DegenerateBatch, DimensionMismatch, EmptyDataset, Untrained

CHECKPOINT_VERSION = 1
FEATURES = ("t", "x", "v", "s1", "s2")
FEATURES_WITH_U = FEATURES + ("u",)

TRAIN = "train"
INFER = "infer"


@dataclass
class NetConfig:
    input_dim: int = 5
    hidden_width: int = 32
    blocks: int = 5
    dropout_rate: float = 0.2
    bn_momentum: float = 0.9
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        if self.hidden_width < 1 or self.blocks < 1 or self.input_dim < 1:
            raise ValueError("input_dim, hidden_width and blocks must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class RegressionNet:
    config: NetConfig
    params: dict
    running_mean: list
    running_var: list
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    def param_names(self):
        return list(self.params)


@dataclass
class TrainLog:
    train_rmse: list = field(default_factory=list)
    test_rmse: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    batch_size: int = 64

    def rows(self):
        return [
            (epoch, lr, tr, te)
            for epoch, (lr, tr, te) in enumerate(zip(self.lr, self.train_rmse, self.test_rmse))
        ]


def init_net(config: NetConfig, rng: np.random.Generator) -> RegressionNet:
    params = {}
    fan_in = config.input_dim
    for i in range(config.blocks):
        params[f"W{i}"] = rng.standard_normal((fan_in, config.hidden_width)) * math.sqrt(2.0 / fan_in)
        params[f"gamma{i}"] = np.ones(config.hidden_width)
        params[f"beta{i}"] = np.zeros(config.hidden_width)
        fan_in = config.hidden_width
    params["W_out"] = rng.standard_normal((fan_in, 1)) * math.sqrt(1.0 / fan_in)
    params["b_out"] = np.zeros(1)
    return RegressionNet(
        config=config,
        params=params,
        running_mean=[np.zeros(config.hidden_width) for _ in range(config.blocks)],
        running_var=[np.ones(config.hidden_width) for _ in range(config.blocks)],
    )


def relu(z):
    return np.maximum(0.0, z)


def forward(net: RegressionNet, X, mode=INFER, dropout_mask=None, update_stats=True):
    """Run the network on standardized rows ``X``.

    Returns ``(predictions, cache)``. In train mode the batch statistics are
    used and, when ``update_stats`` is set, folded into the running
    statistics. ``dropout_mask`` (already scaled by 1/(1-p)) is only used in
    train mode.
    """
    cfg = net.config
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"expected rows of width {cfg.input_dim}, got shape {X.shape}")
    train = mode == TRAIN
    n = X.shape[0]
    if train and n < 2:
        raise DegenerateBatch("train-mode batch norm needs at least 2 rows")

    cache = {"X": X, "blocks": []}
    h = X
    for i in range(cfg.blocks):
        z = h @ net.params[f"W{i}"]
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            if update_stats:
                mom = cfg.bn_momentum
                net.running_mean[i] = mom * net.running_mean[i] + (1 - mom) * mu
                net.running_var[i] = mom * net.running_var[i] + (1 - mom) * var * n / (n - 1)
        else:
            mu, var = net.running_mean[i], net.running_var[i]
        inv_std = 1.0 / np.sqrt(var + cfg.bn_epsilon)
        xhat = (z - mu) * inv_std
        a = net.params[f"gamma{i}"] * xhat + net.params[f"beta{i}"]
        h_in = h
        h = relu(a)
        cache["blocks"].append({"h_in": h_in, "xhat": xhat, "inv_std": inv_std, "a": a})

    if train and dropout_mask is not None:
        h = h * dropout_mask
    cache["h_last"] = h
    cache["mask"] = dropout_mask if train else None
    out = h @ net.params["W_out"] + net.params["b_out"]
    return out[:, 0], cache


def loss_mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if pred.shape != target.shape:
        raise DimensionMismatch(f"{pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise DimensionMismatch("loss of an empty batch")
    r = pred - target
    return float(np.mean(r * r))


def backward(net: RegressionNet, cache, pred, target) -> dict:
    """Gradients of ``loss_mse(pred, target)`` w.r.t. every parameter.

    ``cache`` must come from a train-mode ``forward``; the dropout mask stored
    there is held fixed.
    """
    target = np.asarray(target, dtype=float).ravel()
    n = pred.shape[0]
    grads = {}
    dout = (2.0 / n) * (pred - target)[:, None]
    grads["W_out"] = cache["h_last"].T @ dout
    grads["b_out"] = dout.sum(axis=0)
    dh = dout @ net.params["W_out"].T
    if cache["mask"] is not None:
        dh = dh * cache["mask"]

    for i in reversed(range(net.config.blocks)):
        c = cache["blocks"][i]
        da = dh * (c["a"] > 0)
        xhat = c["xhat"]
        grads[f"gamma{i}"] = (da * xhat).sum(axis=0)
        grads[f"beta{i}"] = da.sum(axis=0)
        dxhat = da * net.params[f"gamma{i}"]
        dz = (c["inv_std"] / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
        grads[f"W{i}"] = c["h_in"].T @ dz
        dh = dz @ net.params[f"W{i}"].T
    return grads


def adam_step(net: RegressionNet, grads: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    if not net.adam_m:
        net.adam_m = {k: np.zeros_like(v) for k, v in net.params.items()}
        net.adam_v = {k: np.zeros_like(v) for k, v in net.params.items()}
    net.adam_t += 1
    t = net.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = net.adam_m[name] = beta1 * net.adam_m[name] + (1 - beta1) * g
        v = net.adam_v[name] = beta2 * net.adam_v[name] + (1 - beta2) * g * g
        net.params[name] = net.params[name] - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net


def lr_schedule(epoch: int, lr0: float = 1e-3, decay: float = 0.2, every: int = 5) -> float:
    return lr0 * decay ** (epoch // every)


def _rmse(a, b):
    return math.sqrt(loss_mse(a, b))


class ErrorSurrogate(RegressorMixin, BaseEstimator):
    """Regression network predicting tracking error from (t, x, v, s1, s2[, u]).

    Parameters
    ----------
    hidden_width : int
    n_blocks : int
        Dense/batch-norm/ReLU blocks; 5 in the reference configuration.
    dropout_rate : float
    bn_momentum, bn_epsilon : float
    epochs : int
    lr : float
        Initial Adam learning rate.
    lr_decay, decay_every : float, int
        Learning rate is multiplied by ``lr_decay`` every ``decay_every`` epochs.
    batch_size : int
    standardize_target : bool
        Train on z-scored targets and map predictions back. Input features
        are always standardized with the training mean/std.
    target_transform : {"none", "log1p"}
        Fit ``log1p(y)`` instead of ``y``; predictions are mapped back with
        ``expm1``. Keeps a few huge errors from diverged runs from
        dominating the loss.
    horizon : int
        How many steps ahead the target error lies. Not used by ``fit``;
        carried with the model so data preparation and the adaptive loop
        agree on it.
    include_u : bool
        Whether the control signal is a sixth input feature (same remark).
    warm_start : bool
        Refit from the current weights and input scaling instead of a fresh
        initialization; the learning-rate schedule restarts either way.
    random_state : int
    """

    def __init__(
        self,
        hidden_width=32,
        n_blocks=5,
        dropout_rate=0.2,
        bn_momentum=0.9,
        bn_epsilon=1e-5,
        epochs=5,
        lr=1e-3,
        lr_decay=0.2,
        decay_every=5,
        batch_size=64,
        standardize_target=True,
        target_transform="none",
        horizon=20,
        include_u=False,
        warm_start=False,
        random_state=0,
    ):
        self.hidden_width = hidden_width
        self.n_blocks = n_blocks
        self.dropout_rate = dropout_rate
        self.bn_momentum = bn_momentum
        self.bn_epsilon = bn_epsilon
        self.epochs = epochs
        self.lr = lr
        self.lr_decay = lr_decay
        self.decay_every = decay_every
        self.batch_size = batch_size
        self.standardize_target = standardize_target
        self.target_transform = target_transform
        self.horizon = horizon
        self.include_u = include_u
        self.warm_start = warm_start
        self.random_state = random_state

    @property
    def feature_names(self):
        return FEATURES_WITH_U if self.include_u else FEATURES

    def _net_config(self, n_features):
        return NetConfig(
            input_dim=n_features,
            hidden_width=self.hidden_width,
            blocks=self.n_blocks,
            dropout_rate=self.dropout_rate,
            bn_momentum=self.bn_momentum,
            bn_epsilon=self.bn_epsilon,
        )

    def _forward_target(self, y):
        if self.target_transform == "log1p":
            return np.log1p(y)
        return y

    def _inverse_target(self, z):
        if self.target_transform == "log1p":
            # never extrapolate past the largest target seen in training
            return np.expm1(np.minimum(z, self.z_max_))
        return z

    def fit(self, X, y, eval_set=None):
        if self.target_transform not in ("none", "log1p"):
            raise ValueError(f"unknown target_transform {self.target_transform!r}")
        if len(X) == 0:
            raise EmptyDataset("no training rows")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        y_raw = y
        y = self._forward_target(y)
        if X.shape[0] < 2:
            raise EmptyDataset("need at least 2 training rows")
        rng = np.random.default_rng(self.random_state)
        warm = self.warm_start and hasattr(self, "net_")
        if warm:
            if X.shape[1] != self.n_features_in_:
                raise DimensionMismatch(f"model has {self.n_features_in_} inputs, got {X.shape[1]}")
            # fresh moments, the schedule restarts
            net = self.net_
            net.adam_m, net.adam_v, net.adam_t = {}, {}, 0
            # a distinct stream per refit keeps shuffles from repeating
            rng = np.random.default_rng([self.random_state, self.n_refits_ + 1])
            self.n_refits_ += 1
            self.z_max_ = max(self.z_max_, float(y.max()))
        else:
            self.n_features_in_ = X.shape[1]
            self.x_mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.x_scale_ = np.where(scale > 0, scale, 1.0)
            if self.standardize_target:
                self.y_mean_ = float(y.mean())
                y_scale = float(y.std())
                self.y_scale_ = y_scale if y_scale > 0 else 1.0
            else:
                self.y_mean_, self.y_scale_ = 0.0, 1.0
            self.z_max_ = float(y.max())
            net = init_net(self._net_config(X.shape[1]), rng)
            self.n_refits_ = 0

        Xs = self._scale(X)
        ys = (y - self.y_mean_) / self.y_scale_
        if eval_set is not None:
            X_te, y_te = check_X_y(eval_set[0], eval_set[1], dtype=np.float64, y_numeric=True)
        log = TrainLog(batch_size=self.batch_size)
        p = net.config.dropout_rate
        n = Xs.shape[0]
        for epoch in range(self.epochs):
            lr = lr_schedule(epoch, self.lr, self.lr_decay, self.decay_every)
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                if idx.size < 2:
                    continue
                mask = None
                if p > 0:
                    mask = (rng.random((idx.size, net.config.hidden_width)) >= p) / (1.0 - p)
                pred, cache = forward(net, Xs[idx], TRAIN, dropout_mask=mask)
                grads = backward(net, cache, pred, ys[idx])
                adam_step(net, grads, lr)
            self.net_ = net
            log.lr.append(lr)
            log.train_rmse.append(_rmse(self._predict_scaled(Xs), y_raw))
            if eval_set is not None:
                log.test_rmse.append(_rmse(self.predict(X_te), y_te))
            else:
                log.test_rmse.append(math.nan)
        self.net_ = net
        self.train_log_ = log
        return self

    def _scale(self, X):
        return (X - self.x_mean_) / self.x_scale_

    def _predict_scaled(self, Xs):
        out, _ = forward(self.net_, Xs, INFER)
        return self._inverse_target(out * self.y_scale_ + self.y_mean_)

    def predict(self, X):
        if not hasattr(self, "net_"):
            raise Untrained("surrogate has not been trained")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"model has {self.n_features_in_} inputs, got {X.shape[1]}")
        return self._predict_scaled(self._scale(X))

    def predict_fast(self, X):
        """``predict`` without input validation, for the control loop."""
        return self._predict_scaled(self._scale(np.asarray(X, dtype=np.float64)))

    # -- checkpoints -------------------------------------------------------

    def save(self, path):
        if not hasattr(self, "net_"):
            raise Untrained("surrogate has not been trained")
        net = self.net_
        arrays = {f"param/{k}": v for k, v in net.params.items()}
        for i, (m, v) in enumerate(zip(net.running_mean, net.running_var)):
            arrays[f"running_mean/{i}"] = m
            arrays[f"running_var/{i}"] = v
        arrays["x_mean"] = self.x_mean_
        arrays["x_scale"] = self.x_scale_
        arrays["y_stats"] = np.array([self.y_mean_, self.y_scale_, self.z_max_])
        meta = {
            "format": "sigmatune-surrogate",
            "version": CHECKPOINT_VERSION,
            "estimator_params": self.get_params(),
            "n_features_in": int(self.n_features_in_),
            "n_refits": int(self.n_refits_),
            "train_log": {
                "train_rmse": self.train_log_.train_rmse,
                "test_rmse": [None if math.isnan(v) else v for v in self.train_log_.test_rmse],
                "lr": self.train_log_.lr,
                "batch_size": self.train_log_.batch_size,
            },
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("format") != "sigmatune-surrogate":
                raise ValueError(f"{path}: not a surrogate checkpoint")
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {meta['version']}")
            model = cls(**meta["estimator_params"])
            model.n_features_in_ = meta["n_features_in"]
            model.n_refits_ = meta["n_refits"]
            config = model._net_config(model.n_features_in_)
            params = {k.split("/", 1)[1]: data[k].copy() for k in data.files if k.startswith("param/")}
            model.net_ = RegressionNet(
                config=config,
                params=params,
                running_mean=[data[f"running_mean/{i}"].copy() for i in range(config.blocks)],
                running_var=[data[f"running_var/{i}"].copy() for i in range(config.blocks)],
            )
            model.x_mean_ = data["x_mean"].copy()
            model.x_scale_ = data["x_scale"].copy()
            model.y_mean_, model.y_scale_, model.z_max_ = (float(v) for v in data["y_stats"])
        tl = meta["train_log"]
        model.train_log_ = TrainLog(
            train_rmse=tl["train_rmse"],
            test_rmse=[math.nan if v is None else v for v in tl["test_rmse"]],
            lr=tl["lr"],
            batch_size=tl["batch_size"],
        )
        return model


def predict_error(net: ErrorSurrogate, t, x, v, s1, s2, u=None) -> float:
    if not hasattr(net, "net_"):
        raise Untrained("surrogate has not been trained")
    row = [t, x, v, s1, s2]
    if net.include_u:
        if u is None:
            raise DimensionMismatch("this surrogate also needs the control signal u")
        row.append(u)
    return float(net.predict_fast(np.array([row]))[0])
