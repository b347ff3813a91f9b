"""Hot-kernel dispatch: the compiled extension when built, numpy otherwise.

Set ``MIXSCA_PURE_PYTHON=1`` to force the numpy fallback.  Kernels that are
one large matrix product (the convolution forward pass and the CPA cross
sums) stay on numpy even when the extension is present, since BLAS beats the
hand-written loops there; ``benchmarks/bench_kernels.py`` shows the split.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("MIXSCA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


# kernels routed to numpy regardless of BACKEND
_BLAS_BOUND = {"conv1d_forward", "cpa_sums"}


def _pick(name, impl):
    if impl is not None:
        return impl
    return _fallback if name in _BLAS_BOUND else _impl


def conv1d_forward(x, w, b, stride=1, impl=None):
    impl = _pick("conv1d_forward", impl)
    return impl.conv1d_forward(_f64(x), _f64(w), _f64(b), int(stride))


def conv1d_backward(x, w, dout, stride=1, impl=None):
    impl = _pick("conv1d_backward", impl)
    return impl.conv1d_backward(_f64(x), _f64(w), _f64(dout), int(stride))


def cpa_sums(h, x, impl=None):
    impl = _pick("cpa_sums", impl)
    return impl.cpa_sums(_f64(h), _f64(x))


def prefix_ranks(logp, labels, order, true_key, impl=None):
    impl = _pick("prefix_ranks", impl)
    return impl.prefix_ranks(_f64(logp), _i64(labels), _i64(order), int(true_key))


def insert_delays(traces, positions, counts, delay_len, impl=None):
    impl = _pick("insert_delays", impl)
    return impl.insert_delays(_f64(traces), _i64(positions), _i64(counts), int(delay_len))
