"""Attack-phase scoring, key rank and averaged rank curves."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .labeling import LeakageModel, label_table
from .nn.network import PROB_FLOOR
from .tracestore import TraceSet


@dataclass(frozen=True)
class AttackConfig:
    n_repetitions: int = 50
    n_max: int | None = None
    seed: int = 0
    leakage: LeakageModel = LeakageModel.LSB

    def validate(self, n_attack: int) -> "AttackConfig":
        if self.n_repetitions < 1:
            raise ValueError("need at least one repetition")
        if self.n_max is not None and not 1 <= self.n_max <= n_attack:
            raise ValueError(f"n_max={self.n_max} must be in [1, {n_attack}]")
        return self


@dataclass(frozen=True)
class RankCurve:
    avg_rank: np.ndarray  # index n-1 holds the average rank after n traces
    n_repetitions: int
    seed: int

    def __len__(self):
        return len(self.avg_rank)


def log_probs(probs) -> np.ndarray:
    return np.log(np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0))


def candidate_labels(plaintexts, leakage: LeakageModel) -> np.ndarray:
    """(N, 256) label of Sbox(p_i ^ k) for every trace i and key candidate k."""
    return label_table(LeakageModel.parse(leakage))[np.asarray(plaintexts, dtype=np.uint8)]


def accumulate_scores(probs, plaintexts, leakage: LeakageModel) -> np.ndarray:
    """Running log-likelihood of every key candidate: row n holds scores after n+1 traces."""
    leakage = LeakageModel.parse(leakage)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != leakage.n_classes:
        raise ValueError(f"classifier width {probs.shape[-1]} does not match {leakage.value} "
                         f"({leakage.n_classes} classes)")
    terms = np.take_along_axis(log_probs(probs), candidate_labels(plaintexts, leakage), axis=1)
    return np.cumsum(terms, axis=0)


def key_rank(scores, true_key: int) -> int:
    """Number of candidates scoring strictly above the true key."""
    scores = np.asarray(scores)
    return int(np.count_nonzero(scores > scores[true_key]))


def _predict(model, traces):
    if hasattr(model, "predict"):
        return model.predict(traces)
    return np.asarray(model, dtype=np.float64)


def average_rank_curve(model, attack: TraceSet, config: AttackConfig) -> RankCurve:
    """Average key rank vs. number of traces over independent random orderings.

    ``model`` is anything with ``predict(traces)`` or a precomputed (N, c)
    probability matrix aligned with ``attack``.
    """
    config.validate(attack.n_traces)
    leakage = LeakageModel.parse(config.leakage)
    probs = _predict(model, attack.traces)
    if probs.shape != (attack.n_traces, leakage.n_classes):
        raise ValueError(f"predictions shape {probs.shape} does not match the attack set/leakage model")
    n_max = config.n_max or attack.n_traces
    logp = log_probs(probs)
    labels = candidate_labels(attack.target_plaintexts, leakage)
    true_key = attack.true_key
    total = np.zeros(n_max)
    for rep in range(config.n_repetitions):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed & (2**64 - 1), rep]))
        order = rng.permutation(attack.n_traces)[:n_max]
        total += kernels.prefix_ranks(logp, labels, order, true_key)
    return RankCurve(total / config.n_repetitions, config.n_repetitions, config.seed)


def traces_to_rank0(curve, threshold: float = 0.5):
    """Smallest n (1-based) with average rank below ``threshold`` from n onwards; None if never."""
    ranks = np.asarray(curve.avg_rank if isinstance(curve, RankCurve) else curve, dtype=np.float64)
    below = ranks < threshold
    if below.size == 0 or not below[-1]:
        return None
    above = np.flatnonzero(~below)
    return 1 if above.size == 0 else int(above[-1]) + 2


def format_count(n) -> str:
    return "NA" if n is None else str(n)


def write_rank_curve_csv(path, curve: RankCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_traces", "avg_rank"])
        for i, r in enumerate(curve.avg_rank):
            w.writerow([i + 1, repr(float(r))])
        w.writerow(["traces_to_rank0", format_count(traces_to_rank0(curve))])
