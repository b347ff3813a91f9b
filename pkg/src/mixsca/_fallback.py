"""Pure numpy versions of the hot kernels.

Each function mirrors the signature of its counterpart in ``_ckernels.pyx``
and must return the same values (bit-identical where the summation order
allows it).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_forward(x, w, b, stride):
    # x: (N, Lpad, Cin), w: (K, Cin, Cout) -> (N, Lout, Cout)
    k = w.shape[0]
    win = sliding_window_view(x, k, axis=1)[:, ::stride]  # (N, Lout, Cin, K)
    return np.einsum("nlck,kco->nlo", win, w, optimize=True) + b


def conv1d_backward(x, w, dout, stride):
    k, cin, cout = w.shape
    n, lout, _ = dout.shape
    win = sliding_window_view(x, k, axis=1)[:, ::stride]
    dw = np.einsum("nlck,nlo->kco", win, dout, optimize=True)
    db = dout.sum(axis=(0, 1))
    dx = np.zeros_like(x)
    contrib = np.einsum("nlo,kco->nlkc", dout, w, optimize=True)
    for j in range(k):
        dx[:, j : j + stride * (lout - 1) + 1 : stride, :] += contrib[:, :, j, :]
    return dx, dw, db


def cpa_sums(h, x):
    """Shifted single-pass moment sums for Pearson correlation.

    Returns (n, sh, sx, shh, sxx, shx), all computed on data shifted by the
    first row so that large offsets do not cancel catastrophically.
    """
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    hc = h - h[0]
    xc = x - x[0]
    return (
        h.shape[0],
        hc.sum(axis=0),
        xc.sum(axis=0),
        (hc * hc).sum(axis=0),
        (xc * xc).sum(axis=0),
        hc.T @ xc,
    )


def prefix_ranks(logp, labels, order, true_key):
    """Key rank after each prefix of ``order``.

    logp: (N, c) log-probabilities, labels: (N, K) class of each key candidate
    per trace, order: trace indices to accumulate in sequence.
    """
    terms = np.take_along_axis(logp[order], labels[order], axis=1)
    scores = np.cumsum(terms, axis=0)
    return (scores > scores[:, true_key : true_key + 1]).sum(axis=1).astype(np.int64)


def insert_delays(traces, positions, counts, delay_len):
    """Insert flat-hold segments in each row, truncating the tail to keep D."""
    out = np.array(traces, dtype=np.float64, copy=True)
    n, d = out.shape
    for i in range(n):
        src = np.arange(d)
        for j in range(counts[i]):
            p = positions[i, j]
            hold = src[p - 1] if p > 0 else src[0]
            src = np.concatenate([src[:p], np.full(delay_len, hold), src[p:]])[:d]
        out[i] = traces[i, src]
    return out
