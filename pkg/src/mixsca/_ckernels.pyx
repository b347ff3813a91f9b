# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``mixsca._fallback``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                   const double[::1] b, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], lpad = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], cout = w.shape[2]
    cdef Py_ssize_t lout = (lpad - k) // stride + 1
    out_arr = np.empty((n, lout, cout), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, l, j, c, o, base
    cdef double v
    for i in range(n):
        for l in range(lout):
            for o in range(cout):
                out[i, l, o] = b[o]
            base = l * stride
            for j in range(k):
                for c in range(cin):
                    v = x[i, base + j, c]
                    if v != 0.0:
                        for o in range(cout):
                            out[i, l, o] += v * w[j, c, o]
    return out_arr


def conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                    const double[:, :, ::1] dout, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], lpad = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], cout = w.shape[2]
    cdef Py_ssize_t lout = dout.shape[1]
    dx_arr = np.zeros((n, lpad, cin), dtype=np.float64)
    dw_arr = np.zeros((k, cin, cout), dtype=np.float64)
    db_arr = np.zeros(cout, dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, l, j, c, o, base
    cdef double g, acc, xv
    for i in range(n):
        for l in range(lout):
            for o in range(cout):
                db[o] += dout[i, l, o]
            base = l * stride
            for j in range(k):
                for c in range(cin):
                    xv = x[i, base + j, c]
                    acc = 0.0
                    for o in range(cout):
                        g = dout[i, l, o]
                        acc += g * w[j, c, o]
                        dw[j, c, o] += xv * g
                    dx[i, base + j, c] += acc
    return dx_arr, dw_arr, db_arr


def cpa_sums(const double[:, ::1] h, const double[:, ::1] x):
    cdef Py_ssize_t n = h.shape[0], nh = h.shape[1], d = x.shape[1]
    sh_arr = np.zeros(nh)
    sx_arr = np.zeros(d)
    shh_arr = np.zeros(nh)
    sxx_arr = np.zeros(d)
    shx_arr = np.zeros((nh, d))
    cdef double[::1] sh = sh_arr, sx = sx_arr, shh = shh_arr, sxx = sxx_arr
    cdef double[:, ::1] shx = shx_arr
    cdef double[::1] hrow = np.empty(nh), xrow = np.empty(d)
    cdef Py_ssize_t i, a, t
    cdef double hv
    if n == 0:
        return 0, sh_arr, sx_arr, shh_arr, sxx_arr, shx_arr
    for i in range(n):
        for a in range(nh):
            hrow[a] = h[i, a] - h[0, a]
            sh[a] += hrow[a]
            shh[a] += hrow[a] * hrow[a]
        for t in range(d):
            xrow[t] = x[i, t] - x[0, t]
            sx[t] += xrow[t]
            sxx[t] += xrow[t] * xrow[t]
        for a in range(nh):
            hv = hrow[a]
            if hv != 0.0:
                for t in range(d):
                    shx[a, t] += hv * xrow[t]
    return n, sh_arr, sx_arr, shh_arr, sxx_arr, shx_arr


def prefix_ranks(const double[:, ::1] logp, const cnp.int64_t[:, ::1] labels,
                 const cnp.int64_t[::1] order, Py_ssize_t true_key):
    cdef Py_ssize_t m = order.shape[0], nk = labels.shape[1]
    cdef double[::1] scores = np.zeros(nk)
    ranks_arr = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] ranks = ranks_arr
    cdef Py_ssize_t j, i, kk
    cdef cnp.int64_t r
    cdef double ref
    for j in range(m):
        i = order[j]
        for kk in range(nk):
            scores[kk] += logp[i, labels[i, kk]]
        ref = scores[true_key]
        r = 0
        for kk in range(nk):
            if scores[kk] > ref:
                r += 1
        ranks[j] = r
    return ranks_arr


def insert_delays(const double[:, ::1] traces, const cnp.int64_t[:, ::1] positions,
                  const cnp.int64_t[::1] counts, Py_ssize_t delay_len):
    cdef Py_ssize_t n = traces.shape[0], d = traces.shape[1]
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef cnp.int64_t[::1] src = np.empty(d, dtype=np.int64)
    cdef cnp.int64_t[::1] tmp = np.empty(d, dtype=np.int64)
    cdef Py_ssize_t i, j, t, p, hold, w
    for i in range(n):
        for t in range(d):
            src[t] = t
        for j in range(counts[i]):
            p = positions[i, j]
            hold = src[p - 1] if p > 0 else src[0]
            w = 0
            for t in range(p):
                tmp[w] = src[t]
                w += 1
            t = 0
            while t < delay_len and w < d:
                tmp[w] = hold
                w += 1
                t += 1
            t = p
            while w < d:
                tmp[w] = src[t]
                w += 1
                t += 1
            src, tmp = tmp, src
        for t in range(d):
            out[i, t] = traces[i, src[t]]
    return out_arr
