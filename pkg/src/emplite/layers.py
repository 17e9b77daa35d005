"""Network building blocks: embedding tables, char encoders, BiLSTM,
additive attention, time-distributed dense layers, dropout, and the
masked training loss.

Parameters are mutated only by the optimizer; forward passes over frozen
parameters are safe to run concurrently. Training itself is
single-threaded.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as kernels
from .errors import ConfigError, DegenerateInputError, DegenerateMaskError, ShapeError
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    _accum,
    _make_op,
    concat,
    conv1d,
    gather_rows,
    global_max_pool,
    masked_softmax,
    matmul,
    mul,
    reshape,
    sigmoid,
    tanh,
)

ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "linear": lambda t: t}


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=DEFAULT_DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class EmbeddingTable:
    """Lookup table whose pad row is pinned to zero.

    The pad row never receives gradient, so it stays zero for the life of
    the model. Non-trainable tables are excluded from the optimizer
    entirely and stay bit-identical through training.
    """

    def __init__(self, table: Tensor, trainable=True, pad_id=0):
        self.table = table
        self.trainable = bool(trainable)
        self.pad_id = pad_id
        self.table.requires_grad = self.trainable
        self.table.data[pad_id] = 0.0

    @property
    def vocab_size(self):
        return self.table.data.shape[0]

    @property
    def dim(self):
        return self.table.data.shape[1]

    @classmethod
    def random(cls, vocab_size, dim, rng, scale=0.05, trainable=True, dtype=DEFAULT_DTYPE):
        data = rng.uniform(-scale, scale, size=(vocab_size, dim)).astype(dtype)
        return cls(Tensor(data, dtype=dtype), trainable=trainable)


def embed(table: EmbeddingTable, ids):
    """Gather embedding rows for ``ids``; gradient scatters back into the
    table only when it is trainable."""
    return gather_rows(table.table, ids, freeze_rows=(table.pad_id,))


class LstmParams:
    """Gate kernels for one LSTM direction. Gate order is (input, forget,
    cell, output); the forget-gate bias slice starts at 1.0."""

    def __init__(self, input_kernel: Tensor, recurrent_kernel: Tensor, bias: Tensor):
        h4 = input_kernel.data.shape[1]
        if recurrent_kernel.data.shape != (h4 // 4, h4) or bias.data.shape != (h4,):
            raise ShapeError(
                f"inconsistent LSTM parameter shapes: {tuple(input_kernel.data.shape)}, "
                f"{tuple(recurrent_kernel.data.shape)}, {tuple(bias.data.shape)}"
            )
        self.input_kernel = input_kernel
        self.recurrent_kernel = recurrent_kernel
        self.bias = bias

    @property
    def hidden(self):
        return self.recurrent_kernel.data.shape[0]

    @classmethod
    def create(cls, input_dim, hidden, rng, dtype=DEFAULT_DTYPE):
        wx = glorot_uniform((input_dim, 4 * hidden), input_dim, 4 * hidden, rng, dtype)
        wh = glorot_uniform((hidden, 4 * hidden), hidden, 4 * hidden, rng, dtype)
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden : 2 * hidden] = 1.0
        return cls(
            Tensor(wx, requires_grad=True, dtype=dtype),
            Tensor(wh, requires_grad=True, dtype=dtype),
            Tensor(b, requires_grad=True, dtype=dtype),
        )

    def tensors(self):
        return {
            "input_kernel": self.input_kernel,
            "recurrent_kernel": self.recurrent_kernel,
            "bias": self.bias,
        }


class AttentionParams:
    """Additive-attention scoring vector."""

    def __init__(self, w: Tensor):
        if w.data.ndim != 1:
            raise ShapeError(f"attention vector must be 1-d; got {tuple(w.data.shape)}")
        self.w = w

    @classmethod
    def create(cls, dim, rng, dtype=DEFAULT_DTYPE):
        return cls(Tensor(glorot_uniform((dim,), dim, 1, rng, dtype), requires_grad=True, dtype=dtype))


def lstm(inputs, params: LstmParams, reverse=False, mask=None, recurrent_mask=None):
    """Run one LSTM direction over [T, D] -> [T, H].

    Masked timesteps carry the previous state through unchanged and output
    zeros. ``recurrent_mask`` is a per-sequence dropout keep-mask on the
    recurrent state (already inverse-scaled).
    """
    xd = inputs.data
    if xd.ndim != 2 or xd.shape[1] != params.input_kernel.data.shape[0]:
        raise ShapeError(
            f"lstm input {tuple(xd.shape)} does not match kernel "
            f"{tuple(params.input_kernel.data.shape)}"
        )
    mask_arr = None
    if mask is not None:
        mask_arr = np.ascontiguousarray(np.asarray(mask, dtype=bool), dtype=np.uint8)
    if reverse:
        x_run = np.ascontiguousarray(xd[::-1])
        m_run = None if mask_arr is None else np.ascontiguousarray(mask_arr[::-1])
    else:
        x_run, m_run = np.ascontiguousarray(xd), mask_arr
    wx, wh, b = params.input_kernel, params.recurrent_kernel, params.bias
    out, states, cells, gates = kernels.lstm_fwd(
        x_run, wx.data, wh.data, b.data, recurrent_mask, m_run
    )
    result = np.ascontiguousarray(out[::-1]) if reverse else out

    def backward(g):
        gy = np.ascontiguousarray(g[::-1]) if reverse else g
        gx, gwx, gwh, gb = kernels.lstm_bwd(
            x_run, wx.data, wh.data, recurrent_mask, m_run, states, cells, gates, gy
        )
        _accum(inputs, gx[::-1] if reverse else gx)
        _accum(wx, gwx)
        _accum(wh, gwh)
        _accum(b, gb)

    return _make_op(result, (inputs, wx, wh, b), backward)


def bilstm(inputs, fwd: LstmParams, bwd: LstmParams, mask=None, recurrent_masks=(None, None)):
    """Concatenate forward and backward LSTM states per timestep: [T, 2H]."""
    f = lstm(inputs, fwd, mask=mask, recurrent_mask=recurrent_masks[0])
    b = lstm(inputs, bwd, reverse=True, mask=mask, recurrent_mask=recurrent_masks[1])
    return concat([f, b], axis=1)


def char_cnn_encode(char_embs, kernel, bias):
    """Same-padded convolution over character positions followed by a
    global max pool: [L, C] -> [F] (or [N, L, C] -> [N, F])."""
    if char_embs.data.shape[-2] < 1:
        raise DegenerateInputError("char encoder needs at least one character")
    return global_max_pool(conv1d(char_embs, kernel, bias))


def attention(h, params: AttentionParams, mask=None, mode="scale"):
    """Score each timestep with w . tanh(h_t), normalize over unmasked
    positions, and recombine.

    mode "scale" keeps a sequence by scaling each timestep by its weight;
    "concat_context" appends the weight-pooled context vector to every
    timestep instead. Returns (recombined, weights).
    """
    t_len, dim = h.data.shape
    if params.w.data.shape != (dim,):
        raise ShapeError(
            f"attention vector {tuple(params.w.data.shape)} does not match features {dim}"
        )
    if mask is None:
        mask = np.ones(t_len, dtype=bool)
    scores = reshape(matmul(tanh(h), reshape(params.w, (dim, 1))), (t_len,))
    z = masked_softmax(scores, mask)
    if mode == "scale":
        weighted = mul(h, reshape(z, (t_len, 1)))
    elif mode == "concat_context":
        context = matmul(reshape(z, (1, t_len)), h)
        tiled = matmul(Tensor(np.ones((t_len, 1)), dtype=h.dtype), context)
        weighted = concat([h, tiled], axis=1)
    else:
        raise ConfigError(f"unknown attention mode {mode!r}")
    return weighted, z


def time_distributed_dense(h, weights, bias, activation="sigmoid"):
    """Apply the same affine map + activation independently at every
    timestep: [T, D] x [D, U] -> [T, U]."""
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    return ACTIVATIONS[activation](matmul(h, weights) + bias)


def dropout(x, rate, training, rng):
    """Inverted dropout: zero with probability ``rate`` and scale survivors
    by 1/(1-rate). Identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.data.shape) >= rate
    m = keep.astype(x.data.dtype) / np.asarray(1.0 - rate, dtype=x.data.dtype)
    return mul(x, Tensor(m, dtype=x.data.dtype))


def recurrent_dropout_mask(hidden, rate, training, rng, dtype=DEFAULT_DTYPE):
    """Per-sequence keep-mask for the recurrent state (variational style)."""
    if not training or rate == 0.0:
        return None
    keep = rng.random(hidden) >= rate
    return keep.astype(dtype) / np.asarray(1.0 - rate, dtype=dtype)


def masked_bce_loss(probs, labels, mask):
    """Mean binary cross-entropy over unmasked positions.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; the clamp passes
    gradient straight through so saturated sigmoid outputs keep learning.
    """
    labels = np.asarray(labels, dtype=probs.data.dtype)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != probs.data.shape or mask.shape != probs.data.shape:
        raise ShapeError(
            f"loss shapes differ: probs {tuple(probs.data.shape)}, labels "
            f"{tuple(labels.shape)}, mask {tuple(mask.shape)}"
        )
    if not mask.any():
        raise DegenerateMaskError("loss mask has no active positions")
    eps = np.asarray(1e-7, dtype=probs.data.dtype)
    p = np.clip(probs.data, eps, 1.0 - eps)
    n = mask.sum()
    terms = -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))
    value = np.asarray(terms[mask].sum() / n, dtype=probs.data.dtype)

    def backward(g):
        gp = np.zeros_like(probs.data)
        gp[mask] = (p[mask] - labels[mask]) / (p[mask] * (1.0 - p[mask])) / n
        _accum(probs, gp * g)

    return _make_op(value, (probs,), backward)
