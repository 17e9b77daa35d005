"""NumPy fallback kernels: 1-D convolution and LSTM sequence passes.

Semantics must stay in lockstep with the compiled twin in ``_fast.pyx``;
``tests/test_kernels.py`` holds the two side by side.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv1d_fwd(x, w, b):
    """Same-padded 1-D convolution.

    x: [N, L, C_in], w: [K, C_in, F] with K odd, b: [F]  ->  [N, L, F]
    """
    n, length, _ = x.shape
    k = w.shape[0]
    pad = k // 2
    xp = np.zeros((n, length + 2 * pad, x.shape[2]), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    y = np.tile(b, (n, length, 1))
    for kk in range(k):
        y += xp[:, kk : kk + length, :] @ w[kk]
    return y


def conv1d_bwd(x, w, gy):
    """Gradients of conv1d_fwd for input, kernel, and bias."""
    n, length, _ = x.shape
    k = w.shape[0]
    pad = k // 2
    xp = np.zeros((n, length + 2 * pad, x.shape[2]), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for kk in range(k):
        gw[kk] = np.einsum("nlc,nlf->cf", xp[:, kk : kk + length, :], gy)
        gxp[:, kk : kk + length, :] += gy @ w[kk].T
    gx = np.ascontiguousarray(gxp[:, pad : pad + length, :])
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb


def lstm_fwd(x, wx, wh, b, rmask, mask):
    """One LSTM direction over a full sequence.

    x: [T, D], wx: [D, 4H], wh: [H, 4H], b: [4H]. Gate order (i, f, g, o).
    rmask: [H] recurrent dropout keep-mask (already inverse-scaled).
    mask: [T] uint8; a zero step carries state through and outputs zeros.

    Returns (out, states, cells, gates); the last three are the saved
    activations the backward pass needs.
    """
    t_len = x.shape[0]
    h = wh.shape[0]
    gates = np.zeros((t_len, 4 * h), dtype=x.dtype)
    states = np.zeros((t_len, h), dtype=x.dtype)
    cells = np.zeros((t_len, h), dtype=x.dtype)
    xproj = x @ wx + b
    h_prev = np.zeros(h, dtype=x.dtype)
    c_prev = np.zeros(h, dtype=x.dtype)
    for t in range(t_len):
        if not mask[t]:
            states[t] = h_prev
            cells[t] = c_prev
            continue
        a = xproj[t] + (h_prev * rmask) @ wh
        i = _sigmoid(a[:h])
        f = _sigmoid(a[h : 2 * h])
        g = np.tanh(a[2 * h : 3 * h])
        o = _sigmoid(a[3 * h :])
        c = f * c_prev + i * g
        gates[t, :h] = i
        gates[t, h : 2 * h] = f
        gates[t, 2 * h : 3 * h] = g
        gates[t, 3 * h :] = o
        cells[t] = c
        states[t] = o * np.tanh(c)
        h_prev = states[t]
        c_prev = c
    out = states * mask.astype(x.dtype)[:, None]
    return out, states, cells, gates


def lstm_bwd(x, wx, wh, rmask, mask, states, cells, gates, gout):
    """Gradients of lstm_fwd for x, wx, wh, and b given d(out)."""
    t_len = x.shape[0]
    h = wh.shape[0]
    gx = np.zeros_like(x)
    gwx = np.zeros_like(wx)
    gwh = np.zeros_like(wh)
    gb = np.zeros(4 * h, dtype=x.dtype)
    dh = np.zeros(h, dtype=x.dtype)
    dc = np.zeros(h, dtype=x.dtype)
    for t in range(t_len - 1, -1, -1):
        if not mask[t]:
            continue
        i = gates[t, :h]
        f = gates[t, h : 2 * h]
        g = gates[t, 2 * h : 3 * h]
        o = gates[t, 3 * h :]
        h_prev = states[t - 1] if t > 0 else np.zeros(h, dtype=x.dtype)
        c_prev = cells[t - 1] if t > 0 else np.zeros(h, dtype=x.dtype)
        tc = np.tanh(cells[t])
        dht = gout[t] + dh
        dct = dc + dht * o * (1.0 - tc * tc)
        da = np.empty(4 * h, dtype=x.dtype)
        da[:h] = dct * g * i * (1.0 - i)
        da[h : 2 * h] = dct * c_prev * f * (1.0 - f)
        da[2 * h : 3 * h] = dct * i * (1.0 - g * g)
        da[3 * h :] = dht * tc * o * (1.0 - o)
        gx[t] = da @ wx.T
        gwx += np.outer(x[t], da)
        gwh += np.outer(h_prev * rmask, da)
        gb += da
        dh = (da @ wh.T) * rmask
        dc = dct * f
    return gx, gwx, gwh, gb
