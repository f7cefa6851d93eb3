"""Single-hidden-layer ReLU network that predicts prompt scores from embeddings.

The functional core (:func:`train`, :func:`predict`, :func:`loss_and_grads`)
operates on :class:`MlpParams`; :class:`ScoreNetwork` wraps it as a
scikit-learn regressor so it can be cross-validated, cloned and pipelined.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

PARAMS_FORMAT_VERSION = 1


class DivergenceError(FloatingPointError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class ShapeError(ValueError):
    pass


@dataclass
class MlpParams:
    """Weights of ``x -> w2 . relu(w1 x + b1) + b2``."""

    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def from_flat(cls, vec, in_dim, hidden) -> "MlpParams":
        vec = np.asarray(vec, dtype=np.float64)
        n1 = hidden * in_dim
        return cls(
            vec[:n1].reshape(hidden, in_dim).copy(),
            vec[n1:n1 + hidden].copy(),
            vec[n1 + hidden:n1 + 2 * hidden].copy(),
            float(vec[n1 + 2 * hidden]),
        )

    @classmethod
    def zeros(cls, in_dim, hidden) -> "MlpParams":
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden), np.zeros(hidden), 0.0)

    def validate(self) -> None:
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h,):
            raise ShapeError(f"inconsistent parameter shapes for hidden={h}, in={d}")
        if not (np.isfinite(self.flat()).all()):
            raise ValueError("parameters contain non-finite entries")

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, version=np.array(PARAMS_FORMAT_VERSION), w1=self.w1, b1=self.b1,
                 w2=self.w2, b2=np.array(self.b2))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MlpParams":
        with np.load(io.BytesIO(blob)) as data:
            if int(data["version"]) != PARAMS_FORMAT_VERSION:
                raise ValueError(f"unsupported parameter file version {int(data['version'])}")
            return cls(data["w1"].copy(), data["b1"].copy(), data["w2"].copy(), float(data["b2"]))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MlpParams":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class TrainConfig:
    hidden_width: int = 1536
    epochs: int = 500
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # "adam" or "gd" (plain full-batch gradient descent)
    warm_start: bool = True

    def __post_init__(self):
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_params(in_dim: int, hidden: int, rng) -> MlpParams:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(rng)
    a1 = 1.0 / np.sqrt(in_dim)
    a2 = 1.0 / np.sqrt(hidden)
    return MlpParams(
        rng.uniform(-a1, a1, (hidden, in_dim)),
        rng.uniform(-a1, a1, hidden),
        rng.uniform(-a2, a2, hidden),
        float(rng.uniform(-a2, a2)),
    )


def _check_input(params: MlpParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != params.in_dim:
        raise ShapeError(f"input dim {X.shape[1]} does not match network input dim {params.in_dim}")
    return X


def predict(params: MlpParams, x) -> np.ndarray | float:
    """Predicted score(s); a 1-D input gives a float, a 2-D batch gives an array."""
    single = np.ndim(x) == 1
    X = _check_input(params, x)
    hidden = np.maximum(X @ params.w1.T + params.b1, 0.0)
    out = hidden @ params.w2 + params.b2
    return float(out[0]) if single else out


def loss_and_grads(params: MlpParams, X, y) -> tuple[float, MlpParams]:
    """Mean squared error and its gradient with respect to every parameter."""
    X = _check_input(params, X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    pre = X @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    resid = hidden @ params.w2 + params.b2 - y
    loss = float(np.mean(resid ** 2))
    d_out = 2.0 * resid / n
    d_pre = np.outer(d_out, params.w2) * (pre > 0)
    grads = MlpParams(d_pre.T @ X, d_pre.sum(axis=0), hidden.T @ d_out, float(d_out.sum()))
    return loss, grads


def train_with_history(X, y, cfg: TrainConfig, init: MlpParams | None = None) -> tuple[MlpParams, list[float]]:
    """Full-batch training on ``(X, y)``; returns final params and the per-epoch loss.

    The loss recorded for epoch ``e`` is evaluated before that epoch's update,
    so ``losses[0]`` is the loss of the initial parameters.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError("training set must be a non-empty 2-D array")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    if init is None:
        params = init_params(X.shape[1], cfg.hidden_width, cfg.seed)
    else:
        if init.in_dim != X.shape[1] or init.hidden != cfg.hidden_width:
            raise ShapeError(
                f"initial params are ({init.hidden}, {init.in_dim}), need ({cfg.hidden_width}, {X.shape[1]})")
        params = init.copy()

    theta = params.flat()
    shape = (params.in_dim, params.hidden)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    losses = []
    for epoch in range(cfg.epochs):
        loss, grads = loss_and_grads(MlpParams.from_flat(theta, *shape), X, y)
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        losses.append(loss)
        g = grads.flat()
        if cfg.optimizer == "gd":
            theta = theta - cfg.learning_rate * g
        else:
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** (epoch + 1))
            v_hat = v / (1 - beta2 ** (epoch + 1))
            theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    params = MlpParams.from_flat(theta, *shape)
    final, _ = loss_and_grads(params, X, y)
    if not np.isfinite(final):
        raise DivergenceError(cfg.epochs)
    losses.append(final)
    return params, losses


def train(X, y, cfg: TrainConfig, init: MlpParams | None = None) -> MlpParams:
    return train_with_history(X, y, cfg, init)[0]


def grad_check(params: MlpParams, X, y, h: float = 1e-5) -> float:
    """Largest relative error between backprop and central finite differences.

    Relative error is ``|a - n| / max(|a| + |n|, 1e-8)`` per coordinate, so
    coordinates whose true gradient is zero do not blow up the ratio.
    """
    _, analytic = loss_and_grads(params, X, y)
    a = analytic.flat()
    theta = params.flat()
    shape = (params.in_dim, params.hidden)
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        lp, _ = loss_and_grads(MlpParams.from_flat(tp, *shape), X, y)
        lm, _ = loss_and_grads(MlpParams.from_flat(tm, *shape), X, y)
        numeric[i] = (lp - lm) / (2 * h)
    return float(np.max(np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), 1e-8)))


class ScoreNetwork(RegressorMixin, BaseEstimator):
    """Prompt-score regressor: one ReLU hidden layer, full-batch MSE training.

    Parameters
    ----------
    hidden_width : int, default=1536
        Width of the hidden layer.
    epochs : int, default=500
        Full-batch epochs per call to :meth:`fit`.
    learning_rate : float, default=1e-3
        Step size of the optimizer.
    optimizer : {"adam", "gd"}, default="adam"
        Adam with (0.9, 0.999), or plain gradient descent.
    warm_start : bool, default=True
        When True, a refit starts from the current ``params_`` (if the input
        dimension still matches) instead of a fresh initialisation.
    random_state : int, default=0
        Seed of the initial weights.

    Attributes
    ----------
    params_ : MlpParams
        Fitted weights.
    loss_curve_ : list of float
        Training loss per epoch of the last fit.
    n_features_in_ : int
    """

    def __init__(self, hidden_width=1536, epochs=500, learning_rate=1e-3, optimizer="adam",
                 warm_start=True, random_state=0):
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.warm_start = warm_start
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(self.hidden_width, self.epochs, self.learning_rate, self.random_state,
                           self.optimizer, self.warm_start)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        cfg = self._config()
        init = None
        if self.warm_start and hasattr(self, "params_") and self.params_.in_dim == X.shape[1] \
                and self.params_.hidden == cfg.hidden_width:
            init = self.params_
        self.params_, self.loss_curve_ = train_with_history(X, y, cfg, init)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return predict(self.params_, X)

    def snapshot(self) -> MlpParams:
        check_is_fitted(self, "params_")
        return self.params_.copy()
