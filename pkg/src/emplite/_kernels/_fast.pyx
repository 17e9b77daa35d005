# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: 1-D convolution and LSTM sequence passes.

Same contracts as ``_ref.py``. Gate math runs in double precision
internally regardless of the array dtype; stores round back down.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

ctypedef fused floating:
    float
    double


cdef inline double _sig(double v) nogil:
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    cdef double e = exp(v)
    return e / (1.0 + e)


def conv1d_fwd(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[::1] b):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], f = w.shape[2]
    cdef Py_ssize_t pad = k // 2
    cdef Py_ssize_t ni, t, kk, c, ff, s
    if floating is float:
        y_np = np.empty((n, length, f), dtype=np.float32)
    else:
        y_np = np.empty((n, length, f), dtype=np.float64)
    cdef floating[:, :, ::1] y = y_np
    cdef floating xv
    # innermost loop runs over the contiguous output-channel axis
    with nogil:
        for ni in range(n):
            for t in range(length):
                for ff in range(f):
                    y[ni, t, ff] = b[ff]
                for kk in range(k):
                    s = t + kk - pad
                    if s < 0 or s >= length:
                        continue
                    for c in range(cin):
                        xv = x[ni, s, c]
                        if xv == 0:
                            continue
                        for ff in range(f):
                            y[ni, t, ff] += xv * w[kk, c, ff]
    return y_np


def conv1d_bwd(floating[:, :, ::1] x, floating[:, :, ::1] w, floating[:, :, ::1] gy):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], f = w.shape[2]
    cdef Py_ssize_t pad = k // 2
    cdef Py_ssize_t ni, t, kk, c, ff, s
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_np = np.zeros((n, length, cin), dtype=dt)
    gw_np = np.zeros((k, cin, f), dtype=dt)
    gb_np = np.zeros(f, dtype=dt)
    cdef floating[:, :, ::1] gx = gx_np
    cdef floating[:, :, ::1] gw = gw_np
    cdef floating[::1] gb = gb_np
    cdef floating xv
    cdef double acc
    with nogil:
        for ni in range(n):
            for t in range(length):
                for ff in range(f):
                    gb[ff] += gy[ni, t, ff]
                for kk in range(k):
                    s = t + kk - pad
                    if s < 0 or s >= length:
                        continue
                    for c in range(cin):
                        xv = x[ni, s, c]
                        acc = 0.0
                        for ff in range(f):
                            gw[kk, c, ff] += xv * gy[ni, t, ff]
                            acc += w[kk, c, ff] * gy[ni, t, ff]
                        gx[ni, s, c] += <floating> acc
    return gx_np, gw_np, gb_np


def lstm_fwd(floating[:, ::1] x, floating[:, ::1] wx, floating[:, ::1] wh,
             floating[::1] b, floating[::1] rmask, const unsigned char[::1] mask):
    cdef Py_ssize_t t_len = x.shape[0], d = x.shape[1], h = wh.shape[0]
    cdef Py_ssize_t t, j, hh
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    out_np = np.zeros((t_len, h), dtype=dt)
    states_np = np.zeros((t_len, h), dtype=dt)
    cells_np = np.zeros((t_len, h), dtype=dt)
    gates_np = np.zeros((t_len, 4 * h), dtype=dt)
    a_np = np.zeros(4 * h, dtype=np.float64)
    hp_np = np.zeros(h, dtype=np.float64)
    cp_np = np.zeros(h, dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef floating[:, ::1] states = states_np
    cdef floating[:, ::1] cells = cells_np
    cdef floating[:, ::1] gates = gates_np
    cdef double[::1] a = a_np
    cdef double[::1] hp = hp_np
    cdef double[::1] cp = cp_np
    cdef double hm, iv, fv, gv, ov, cv
    with nogil:
        for t in range(t_len):
            if mask[t] == 0:
                for hh in range(h):
                    states[t, hh] = <floating> hp[hh]
                    cells[t, hh] = <floating> cp[hh]
                continue
            for j in range(4 * h):
                a[j] = b[j]
                for hh in range(d):
                    a[j] += x[t, hh] * wx[hh, j]
            for hh in range(h):
                hm = hp[hh] * rmask[hh]
                if hm != 0.0:
                    for j in range(4 * h):
                        a[j] += hm * wh[hh, j]
            for hh in range(h):
                iv = _sig(a[hh])
                fv = _sig(a[h + hh])
                gv = tanh(a[2 * h + hh])
                ov = _sig(a[3 * h + hh])
                cv = fv * cp[hh] + iv * gv
                gates[t, hh] = <floating> iv
                gates[t, h + hh] = <floating> fv
                gates[t, 2 * h + hh] = <floating> gv
                gates[t, 3 * h + hh] = <floating> ov
                # Round-trip carried state through the storage dtype so the
                # backward pass reads exactly the values the forward used.
                cells[t, hh] = <floating> cv
                cp[hh] = <double> cells[t, hh]
                states[t, hh] = <floating> (ov * tanh(cp[hh]))
                hp[hh] = <double> states[t, hh]
                out[t, hh] = states[t, hh]
    return out_np, states_np, cells_np, gates_np


def lstm_bwd(floating[:, ::1] x, floating[:, ::1] wx, floating[:, ::1] wh,
             floating[::1] rmask, const unsigned char[::1] mask,
             floating[:, ::1] states, floating[:, ::1] cells,
             floating[:, ::1] gates, floating[:, ::1] gout):
    cdef Py_ssize_t t_len = x.shape[0], d = x.shape[1], h = wh.shape[0]
    cdef Py_ssize_t t, j, hh
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_np = np.zeros((t_len, d), dtype=dt)
    gwx_np = np.zeros((d, 4 * h), dtype=dt)
    gwh_np = np.zeros((h, 4 * h), dtype=dt)
    gb_np = np.zeros(4 * h, dtype=dt)
    da_np = np.zeros(4 * h, dtype=np.float64)
    dh_np = np.zeros(h, dtype=np.float64)
    dc_np = np.zeros(h, dtype=np.float64)
    cdef floating[:, ::1] gx = gx_np
    cdef floating[:, ::1] gwx = gwx_np
    cdef floating[:, ::1] gwh = gwh_np
    cdef floating[::1] gb = gb_np
    cdef double[::1] da = da_np
    cdef double[::1] dh = dh_np
    cdef double[::1] dc = dc_np
    cdef double iv, fv, gv, ov, tc, dht, dct, hprev, cprev, hm, acc
    with nogil:
        for t in range(t_len - 1, -1, -1):
            if mask[t] == 0:
                continue
            for hh in range(h):
                iv = gates[t, hh]
                fv = gates[t, h + hh]
                gv = gates[t, 2 * h + hh]
                ov = gates[t, 3 * h + hh]
                cprev = cells[t - 1, hh] if t > 0 else 0.0
                tc = tanh(<double> cells[t, hh])
                dht = gout[t, hh] + dh[hh]
                dct = dc[hh] + dht * ov * (1.0 - tc * tc)
                da[hh] = dct * gv * iv * (1.0 - iv)
                da[h + hh] = dct * cprev * fv * (1.0 - fv)
                da[2 * h + hh] = dct * iv * (1.0 - gv * gv)
                da[3 * h + hh] = dht * tc * ov * (1.0 - ov)
                dc[hh] = dct * fv
            for hh in range(d):
                acc = 0.0
                for j in range(4 * h):
                    acc += da[j] * wx[hh, j]
                gx[t, hh] = <floating> acc
                for j in range(4 * h):
                    gwx[hh, j] += <floating> (x[t, hh] * da[j])
            for hh in range(h):
                hprev = states[t - 1, hh] if t > 0 else 0.0
                hm = hprev * rmask[hh]
                acc = 0.0
                for j in range(4 * h):
                    gwh[hh, j] += <floating> (hm * da[j])
                    acc += da[j] * wh[hh, j]
                dh[hh] = acc * rmask[hh]
            for j in range(4 * h):
                gb[j] += <floating> da[j]
    return gx_np, gwx_np, gwh_np, gb_np
