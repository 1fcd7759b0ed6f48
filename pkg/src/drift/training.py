"""Maximum-likelihood fitting: positive-weight initialization, Adam with
minibatches, early stopping, and the activation-saturation probe.

Initialization schemes for positive-weight layers draw effective weights
from ``U(0, b)`` with

* ``xavier_positive``:       b = sqrt(6 / (fan_in + fan_out))
* ``variance_preserving_positive``: b = sqrt(3 / (fan_in + fan_out))
* ``max_fan_positive``:      b = 3 / max(fan_in, fan_out)

The first two saturate deep tanh stacks (see :func:`saturation_probe`);
the last keeps activation variance roughly constant across layers and is
the default.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import diffcore as dc, likelihood
from .diffcore import NonFiniteError
from .flows import BernsteinFlow, MonotoneNetFlow, OrdinalCutpoints
from .model import DriftModel

INIT_SCHEMES = ("xavier_positive", "variance_preserving_positive",
                "max_fan_positive")
GRAD_CLIP_NORM = 10.0


class DivergenceError(RuntimeError):
    """Objective became non-finite during training."""


def init_bound(scheme: str, fan_in: int, fan_out: int) -> float:
    """Upper bound of the uniform law for positive effective weights."""
    if scheme == "xavier_positive":
        return math.sqrt(6.0 / (fan_in + fan_out))
    if scheme == "variance_preserving_positive":
        return math.sqrt(3.0 / (fan_in + fan_out))
    if scheme == "max_fan_positive":
        # sqrt(9 / max(fan_in, fan_out)^2), simplified
        return 3.0 / max(fan_in, fan_out)
    raise ValueError(f"unknown init scheme {scheme!r}; "
                     f"choose one of {INIT_SCHEMES}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    validation_fraction: float = 0.1
    patience: int = 15
    seed: int = 0
    init: str = "max_fan_positive"
    decay: float = 0.0   # per-step learning-rate decay: lr / (1 + decay * t)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "epochs": self.epochs,
                "batch_size": self.batch_size,
                "validation_fraction": self.validation_fraction,
                "patience": self.patience, "seed": self.seed,
                "init": self.init, "decay": self.decay}

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


@dataclass
class FitReport:
    train_nll: list[float]
    val_nll: list[float]
    best_epoch: int            # 1-based; 0 when no validation split
    stopping_reason: str       # "early_stopping" | "max_epochs"
    wall_seconds: float

    def to_dict(self, include_wall: bool = True) -> dict:
        d = {"train_nll": self.train_nll, "val_nll": self.val_nll,
             "best_epoch": self.best_epoch,
             "stopping_reason": self.stopping_reason}
        if include_wall:
            d["wall_seconds"] = self.wall_seconds
        return d

    @staticmethod
    def from_dict(d: dict) -> "FitReport":
        return FitReport(list(d["train_nll"]), list(d["val_nll"]),
                         d["best_epoch"], d["stopping_reason"],
                         d.get("wall_seconds", 0.0))


def init_model(model: DriftModel, scheme: str = "max_fan_positive",
               seed: int = 0) -> DriftModel:
    """Fill the parameter vector: positive-weight flow layers per the
    scheme, predictor networks with symmetric Glorot, linear terms zero.
    Deterministic for a fixed seed."""
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    params = model.params
    flow = model.cif.reference
    if isinstance(flow, MonotoneNetFlow):
        flow.init(params, lambda fi, fo, size:
                  rng.uniform(0.0, init_bound(scheme, fi, fo), size))
    elif isinstance(flow, (BernsteinFlow, OrdinalCutpoints)):
        flow.init(params)
    model.cif.location.init(params, rng)
    if model.cif.scale is not None:
        model.cif.scale.init(params, rng)
    return model


def _batches(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i:i + size]


def adam_update(m: np.ndarray, v: np.ndarray, g: np.ndarray, step: int,
                lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> np.ndarray:
    """One bias-corrected Adam step; updates moments in place and returns
    the parameter delta ``lr * m_hat / (sqrt(v_hat) + eps)``."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    return lr * m_hat / (np.sqrt(v_hat) + eps)


def fit(model: DriftModel, dataset, cfg: TrainConfig) -> FitReport:
    """Adam on the mean negative log-likelihood.

    Initializes parameters from ``cfg.init``/``cfg.seed``, shuffles
    deterministically, clips gradients at global norm 10, and with a
    validation split restores the best-validation parameters on exit.
    """
    if dataset.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    likelihood.check_compatible(model, dataset)
    t0 = time.perf_counter()
    init_model(model, cfg.init, cfg.seed)

    shuffle_ss, dropout_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    n = dataset.n
    perm = shuffle_rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        raise ValueError("validation split leaves no training data")

    m = np.zeros_like(model.params)
    v = np.zeros_like(model.params)
    step = 0

    train_nll: list[float] = []
    val_nll: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_params: Optional[np.ndarray] = None
    stale = 0
    reason = "max_epochs"

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(train_idx)
        loss_sum = 0.0
        for bi, batch in enumerate(_batches(order, cfg.batch_size)):
            tape = dc.Tape()
            bound = model.bind(tape, dropout_rng)
            try:
                loss = likelihood.nll(model, dataset, batch, bound)
                if not math.isfinite(loss.value):
                    raise NonFiniteError(f"nll={loss.value}")
                grads = dc.gradient(loss, bound.params)
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite objective at epoch {epoch}, batch {bi}: "
                    f"{exc}") from exc
            g = np.asarray(grads)
            gnorm = float(np.sqrt(np.sum(g * g)))
            if gnorm > GRAD_CLIP_NORM:
                g *= GRAD_CLIP_NORM / gnorm
            step += 1
            lr = cfg.learning_rate / (1.0 + cfg.decay * step)
            model.params -= adam_update(m, v, g, step, lr)
            loss_sum += loss.value * len(batch)
        train_nll.append(loss_sum / len(train_idx))

        if n_val:
            val = dc.value_of(likelihood.nll(model, dataset, val_idx))
            val_nll.append(val)
            if val < best_val:
                best_val = val
                best_epoch = epoch
                best_params = model.params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    reason = "early_stopping"
                    break

    if best_params is not None:
        model.params[:] = best_params
    report = FitReport(train_nll, val_nll, best_epoch, reason,
                       time.perf_counter() - t0)
    model.fit_report = report
    return report


@dataclass
class LayerStats:
    layer: int                   # 0 is the raw input
    width: int
    quantiles: dict[str, float]
    saturated_fraction: float    # share with |activation| > 0.999


_PROBE_QS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


def saturation_probe(net_or_widths, scheme: str, n: int = 10_000,
                     seed: int = 0) -> list[LayerStats]:
    """Push standard-normal samples through a freshly initialized
    positive-weight tanh network and summarize activations per layer.

    Accepts a flow instance or a tuple of hidden widths; the appendix
    architecture is ``(100, 100, 20)`` hidden plus the linear output.
    """
    if isinstance(net_or_widths, MonotoneNetFlow):
        hidden = net_or_widths.hidden
    else:
        hidden = tuple(int(w) for w in net_or_widths)
    widths = [1, *hidden, 1]
    rng = np.random.default_rng(seed)
    acts = rng.standard_normal(n).reshape(-1, 1)
    out = [_layer_stats(0, acts)]
    last = len(widths) - 2
    for l, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
        w = rng.uniform(0.0, init_bound(scheme, fi, fo), size=(fi, fo))
        acts = acts @ w
        if l < last:
            acts = np.tanh(acts)
        out.append(_layer_stats(l + 1, acts))
    return out


def _layer_stats(layer: int, acts: np.ndarray) -> LayerStats:
    flat = acts.reshape(-1)
    qs = {f"q{int(q * 100):02d}": float(np.quantile(flat, q))
          for q in _PROBE_QS}
    return LayerStats(layer, acts.shape[1], qs,
                      float(np.mean(np.abs(flat) > 0.999)))
