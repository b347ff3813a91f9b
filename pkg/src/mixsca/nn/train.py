"""RMSprop training loop with best-epoch selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkSpec, NonFiniteError, backward, cce_loss, copy_params, forward

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    rho: float = 0.9
    epsilon: float = 1e-7
    batch_size: int = 100
    max_epochs: int = 50
    validation_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not 0 <= self.rho < 1 or self.epsilon < 0:
            raise ValueError("invalid RMSprop decay/epsilon")
        return self


def rmsprop_init(params):
    return [{k: np.zeros_like(v) for k, v in p.items()} for p in params]


def rmsprop_step(params, grads, state, config: TrainConfig):
    """s <- rho*s + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(s)+eps). Returns new (params, state)."""
    new_params, new_state = [], []
    for p, g, s in zip(params, grads, state):
        np_, ns = {}, {}
        for k in p:
            if p[k].shape != g[k].shape:
                raise ValueError(f"gradient shape {g[k].shape} != parameter shape {p[k].shape}")
            with np.errstate(over="ignore"):
                s_k = config.rho * s[k] + (1.0 - config.rho) * g[k] * g[k]
                np_[k] = p[k] - config.learning_rate * g[k] / (np.sqrt(s_k) + config.epsilon)
            ns[k] = s_k
        new_params.append(np_)
        new_state.append(ns)
    return new_params, new_state


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    best_epoch: int | None = None
    best_params: list | None = None
    final_params: list | None = None

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)


def select_best_epoch(losses) -> int:
    """Index of the smallest value; ties go to the earliest epoch."""
    if isinstance(losses, TrainReport):
        losses = losses.scores or losses.val_loss
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("no recorded epochs")
    return int(np.argmin(losses))


def split_validation(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = min(max(1, int(round(fraction * n))), n - 1)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _mean_loss(spec, params, x, y, batch_size=2000):
    total = 0.0
    for i in range(0, len(x), batch_size):
        total += cce_loss(forward(spec, params, x[i : i + batch_size]), y[i : i + batch_size]) * len(
            x[i : i + batch_size]
        )
    return total / len(x)


def train(spec: NetworkSpec, x, y, config: TrainConfig, params=None, epoch_score=None) -> TrainReport:
    """Mini-batch RMSprop on (x, y) with a held-out validation split.

    ``y`` holds one probability row per trace (hard or mixed). The best epoch
    minimizes validation loss, or ``epoch_score(epoch, params)`` when given
    (lower is better). Only the best snapshot is retained.
    """
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("training needs at least two examples")
    if y.shape != (len(x), spec.n_classes):
        raise ValueError(f"labels shape {y.shape} does not match ({len(x)}, {spec.n_classes})")
    init_ss, split_ss, shuffle_ss = np.random.SeedSequence(config.seed).spawn(3)
    if params is None:
        params = spec.init_params(np.random.default_rng(init_ss))
    params = copy_params(params)
    tr_idx, va_idx = split_validation(len(x), config.validation_fraction, np.random.default_rng(split_ss))
    xt, yt, xv, yv = x[tr_idx], y[tr_idx], x[va_idx], y[va_idx]
    shuffle_rng = np.random.default_rng(shuffle_ss)
    state = rmsprop_init(params)
    report = TrainReport(final_params=params)
    best = np.inf

    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(len(xt))
        try:
            for s in range(0, len(order), config.batch_size):
                b = order[s : s + config.batch_size]
                _, grads = backward(spec, params, xt[b], yt[b])
                params, state = rmsprop_step(params, grads, state, config)
            for i, p in enumerate(params):
                for name, v in p.items():
                    if not np.all(np.isfinite(v)):
                        raise NonFiniteError(f"parameter {name} of layer {i}")
            tl = _mean_loss(spec, params, xt, yt)
            vl = _mean_loss(spec, params, xv, yv)
        except NonFiniteError as exc:
            raise TrainingDivergedError(f"training diverged in epoch {epoch}: {exc}") from exc
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise TrainingDivergedError(f"non-finite loss in epoch {epoch}: train={tl} val={vl}")
        report.train_loss.append(tl)
        report.val_loss.append(vl)
        score = vl
        if epoch_score is not None:
            score = float(epoch_score(epoch, params))
            report.scores.append(score)
        if score < best or report.best_epoch is None:
            best = score
            report.best_epoch = epoch
            report.best_params = copy_params(params)
        log.debug("epoch %d train %.5f val %.5f nats", epoch, tl, vl)

    report.final_params = params
    return report
