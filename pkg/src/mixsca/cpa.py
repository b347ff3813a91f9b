"""Correlation power analysis with Hamming-weight hypotheses."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .labeling import HW, SBOX
from .tracestore import TraceSet


class ConstantInputWarning(RuntimeWarning):
    """Pearson correlation requested for a constant vector; 0 was returned."""


@dataclass(frozen=True)
class CpaTrace:
    correlations: np.ndarray
    key: int
    n_traces: int


@dataclass(frozen=True)
class CpaResult:
    per_key: np.ndarray  # (256, D)
    best_key: int
    best_sample: int
    n_traces: int

    def peak(self, key: int) -> float:
        return float(np.abs(self.per_key[key]).max())


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("pearson needs at least two points")
    r = _correlate(x[:, None], y[:, None])[0, 0]
    return float(r)


def _correlate(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(H, D) matrix of Pearson correlations between columns of h and columns of x."""
    n, sh, sx, shh, sxx, shx = kernels.cpa_sums(h, x)
    var_h = shh - sh * sh / n
    var_x = sxx - sx * sx / n
    cov = shx - np.outer(sh, sx) / n
    denom = np.sqrt(np.outer(np.maximum(var_h, 0.0), np.maximum(var_x, 0.0)))
    degenerate = denom <= 0.0
    if np.any(degenerate):
        warnings.warn("constant input: correlation set to 0", ConstantInputWarning, stacklevel=3)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(degenerate, 0.0, cov / np.where(degenerate, 1.0, denom))
    return np.clip(r, -1.0, 1.0)


def hw_hypothesis(plaintexts, key_byte) -> np.ndarray:
    """HW(Sbox(p ^ k)) for a vector of plaintext bytes and one or more key guesses."""
    p = np.asarray(plaintexts, dtype=np.uint8)
    k = np.asarray(key_byte, dtype=np.uint8)
    if k.ndim:
        return HW[SBOX[p[:, None] ^ k[None, :]]].astype(np.float64)
    return HW[SBOX[p ^ k]].astype(np.float64)


def mixed_hypothesis(plaintexts, parents, lambdas, key_byte) -> np.ndarray:
    """Hypothesis for generated rows: the mixing-weighted HW of both parents."""
    h = hw_hypothesis(plaintexts, key_byte)
    parents = np.asarray(parents, dtype=np.int64)
    lam = np.asarray(lambdas, dtype=np.float64)
    if h.ndim == 2:
        lam = lam[:, None]
    return lam * h[parents[:, 0]] + (1.0 - lam) * h[parents[:, 1]]


def cpa_correct_key(ts: TraceSet, key_byte: int, hypothesis=None) -> CpaTrace:
    """Per-sample correlation for one key guess.

    ``hypothesis`` overrides the default HW(Sbox(p ^ k)) vector, e.g. with
    :func:`mixed_hypothesis` for generated traces.
    """
    if ts.n_traces < 2:
        raise ValueError("CPA needs at least two traces")
    h = hw_hypothesis(ts.target_plaintexts, key_byte) if hypothesis is None else hypothesis
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (ts.n_traces,):
        raise ValueError(f"hypothesis shape {h.shape} does not match {ts.n_traces} traces")
    r = _correlate(h[:, None], ts.traces)[0]
    return CpaTrace(r, int(key_byte), ts.n_traces)


def cpa_key_recovery(ts: TraceSet, hypotheses=None) -> CpaResult:
    """Correlate all 256 key guesses; best key maximizes the peak |r| over samples."""
    if ts.n_traces < 2:
        raise ValueError("CPA needs at least two traces")
    h = hw_hypothesis(ts.target_plaintexts, np.arange(256)) if hypotheses is None else hypotheses
    r = _correlate(np.asarray(h, dtype=np.float64), ts.traces)
    a = np.abs(r)
    best_key = int(np.argmax(a.max(axis=1)))
    return CpaResult(r, best_key, int(np.argmax(a[best_key])), ts.n_traces)


def write_cpa_csv(path, traces: list[CpaTrace]) -> None:
    """One row per sample: ``sample_index`` then one correlation column per key guess."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index"] + [f"key_0x{t.key:02x}" for t in traces])
        d = len(traces[0].correlations) if traces else 0
        for s in range(d):
            w.writerow([s] + [repr(float(t.correlations[s])) for t in traces])
