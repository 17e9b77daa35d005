"""Backend selection for the hot kernels.

The compiled extension is preferred when it imported cleanly; the NumPy
fallback is always available. Set ``EMPLITE_BACKEND=python`` (or
``cython``) to force a choice, or call :func:`use_backend` at runtime
(benchmarks and tests do this to compare the two).
"""

import os

import numpy as np

from . import _ref

_BACKENDS = {"python": _ref}
try:
    from . import _fast

    _BACKENDS["cython"] = _fast
except ImportError:
    _fast = None

_active_name = None
_active = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def use_backend(name):
    """Switch the active kernel backend. Returns the previous name."""
    global _active, _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    prev = _active_name
    _active = _BACKENDS[name]
    _active_name = name
    return prev


def backend_name():
    return _active_name


def _normalize(x, dtype):
    return np.ascontiguousarray(x, dtype=dtype)


def conv1d_fwd(x, w, b):
    return _active.conv1d_fwd(x, w, b)


def conv1d_bwd(x, w, gy):
    return _active.conv1d_bwd(x, w, _normalize(gy, x.dtype))


def _ones_rmask(h, dtype):
    return np.ones(h, dtype=dtype)


def _ones_mask(t):
    return np.ones(t, dtype=np.uint8)


def lstm_fwd(x, wx, wh, b, rmask=None, mask=None):
    if rmask is None:
        rmask = _ones_rmask(wh.shape[0], x.dtype)
    if mask is None:
        mask = _ones_mask(x.shape[0])
    else:
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
    return _active.lstm_fwd(x, wx, wh, b, _normalize(rmask, x.dtype), mask)


def lstm_bwd(x, wx, wh, rmask, mask, states, cells, gates, gout):
    if rmask is None:
        rmask = _ones_rmask(wh.shape[0], x.dtype)
    if mask is None:
        mask = _ones_mask(x.shape[0])
    else:
        mask = np.ascontiguousarray(mask, dtype=np.uint8)
    return _active.lstm_bwd(
        x, wx, wh, _normalize(rmask, x.dtype), mask, states, cells, gates,
        _normalize(gout, x.dtype),
    )


_env = os.environ.get("EMPLITE_BACKEND", "auto").lower()
if _env == "auto":
    use_backend("cython" if "cython" in _BACKENDS else "python")
else:
    use_backend(_env)
