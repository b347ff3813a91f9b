"""Mixup: Beta-weighted convex combinations of trace/label pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tracestore import SoftLabels, TraceSet

PAIRINGS = ("disjoint-shuffle", "with-replacement")


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.5
    pairing: str = "disjoint-shuffle"
    expansion_ratio: float = 0.5
    seed: int = 0

    def validate(self) -> "MixupConfig":
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.expansion_ratio <= 1:
            raise ValueError(f"expansion ratio must be in (0, 1], got {self.expansion_ratio}")
        if self.pairing not in PAIRINGS:
            raise ValueError(f"pairing must be one of {PAIRINGS}, got {self.pairing!r}")
        return self


@dataclass(frozen=True)
class MixedExample:
    trace: np.ndarray
    soft_label: np.ndarray
    lam: float
    parents: tuple[int, int] | None = None


@dataclass(frozen=True)
class AugmentedData:
    """Originals followed by generated rows; ``parents``/``lambdas`` describe the latter."""

    traces: np.ndarray
    labels: np.ndarray
    parents: np.ndarray
    lambdas: np.ndarray
    n_original: int

    @property
    def n_generated(self) -> int:
        return len(self.lambdas)


def sample_lambda(alpha: float, rng: np.random.Generator, size=None):
    """Draw from Beta(alpha, alpha) as G1 / (G1 + G2) with G ~ Gamma(alpha, 1)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    g1 = rng.standard_gamma(alpha, size=size)
    g2 = rng.standard_gamma(alpha, size=size)
    total = g1 + g2
    # both gammas can underflow to 0 for very small alpha; the limit is a fair coin
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(total > 0, g1 / np.where(total > 0, total, 1.0), 0.5)
    lam = np.where(total > 0, lam, np.round(rng.random(size=size)))
    return float(lam) if size is None else lam


def mix_pair(x_i, y_i, x_j, y_j, lam: float) -> MixedExample:
    x_i, x_j = np.asarray(x_i, dtype=np.float64), np.asarray(x_j, dtype=np.float64)
    y_i, y_j = np.asarray(y_i, dtype=np.float64), np.asarray(y_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ValueError(f"trace shapes differ: {x_i.shape} vs {x_j.shape}")
    if y_i.shape != y_j.shape:
        raise ValueError(f"label shapes differ: {y_i.shape} vs {y_j.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return MixedExample(lam * x_i + (1.0 - lam) * x_j, lam * y_i + (1.0 - lam) * y_j, float(lam))


def mix_kway(examples, weights) -> MixedExample:
    """Convex combination of k >= 2 (trace, label) tuples with caller-given weights."""
    examples = list(examples)
    w = np.asarray(weights, dtype=np.float64)
    if len(examples) < 2 or w.shape != (len(examples),):
        raise ValueError("need k >= 2 examples and one weight per example")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must be >= 0 and sum to 1, got sum {w.sum()!r}")
    xs = np.stack([np.asarray(e[0], dtype=np.float64) for e in examples])
    ys = np.stack([np.asarray(e[1], dtype=np.float64) for e in examples])
    return MixedExample(np.tensordot(w, xs, axes=1), np.tensordot(w, ys, axes=1), float(w[0]))


def draw_pairs(n: int, count: int, pairing: str, rng: np.random.Generator) -> np.ndarray:
    """Pick ``count`` parent index pairs from ``n`` rows."""
    if pairing == "disjoint-shuffle":
        per_round = n // 2
        chunks, have = [], 0
        while have < count:
            perm = rng.permutation(n)
            chunks.append(perm[: 2 * per_round].reshape(per_round, 2))
            have += per_round
        pairs = np.concatenate(chunks)[:count] if chunks else np.zeros((0, 2), dtype=np.int64)
    elif pairing == "with-replacement":
        i = rng.integers(0, n, size=count)
        j = rng.integers(0, n - 1, size=count)
        j = j + (j >= i)
        pairs = np.stack([i, j], axis=1)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    return pairs.astype(np.int64)


def augment_dataset(traces, labels, config: MixupConfig) -> AugmentedData:
    """Append floor(ratio * N) mixed examples to the N originals."""
    config.validate()
    x = np.asarray(traces, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("mixup needs at least two examples")
    if y.shape[0] != n:
        raise ValueError("traces and labels have different row counts")
    count = int(np.floor(config.expansion_ratio * n))
    rng = np.random.default_rng(config.seed)
    pairs = draw_pairs(n, count, config.pairing, rng)
    lam = sample_lambda(config.alpha, rng, size=count)
    li = lam[:, None]
    gx = li * x[pairs[:, 0]] + (1.0 - li) * x[pairs[:, 1]]
    gy = li * y[pairs[:, 0]] + (1.0 - li) * y[pairs[:, 1]]
    return AugmentedData(
        traces=np.concatenate([x, gx]),
        labels=np.concatenate([y, gy]),
        parents=pairs,
        lambdas=lam,
        n_original=n,
    )


def augment_trace_set(ts: TraceSet, labels, config: MixupConfig) -> tuple[TraceSet, SoftLabels]:
    """Augment a trace set; generated rows inherit plaintext/key metadata of their first parent."""
    aug = augment_dataset(ts.traces, labels, config)
    first = aug.parents[:, 0]
    out = TraceSet(
        aug.traces,
        np.concatenate([ts.plaintexts, ts.plaintexts[first]]),
        np.concatenate([ts.keys, ts.keys[first]]),
        role=ts.role,
        target_byte=ts.target_byte,
        descriptor=ts.descriptor,
    )
    return out, SoftLabels(aug.labels, aug.parents, aug.lambdas)
