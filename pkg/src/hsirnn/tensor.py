"""Dense float64 tensor arithmetic and elementwise nonlinearities.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Every function here is pure and returns a new array.
"""
import numpy as np

from .exceptions import DimensionError


def as_tensor(x):
    """Coerce to a C-ordered float64 array (extended precision is kept as is)."""
    a = np.asarray(x)
    dtype = np.longdouble if a.dtype == np.longdouble else np.float64
    return np.ascontiguousarray(a, dtype=dtype)


def matmul(a, b):
    """Matrix product of ``a`` (m x k) and ``b`` (k x n)."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def sigmoid(x):
    """Logistic function, evaluated without overflow for large ``|x|``."""
    x = as_tensor(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x):
    return np.tanh(as_tensor(x))


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def identity(x):
    return as_tensor(x).copy()


def softmax(logits, axis=-1):
    """Softmax along ``axis`` with max subtraction."""
    z = as_tensor(logits)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = as_tensor(logits)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# name -> (forward, derivative expressed through the forward output)
ACTIVATIONS = {
    "tanh": (tanh_act, lambda y: 1.0 - y * y),
    "sigmoid": (sigmoid, lambda y: y * (1.0 - y)),
    "relu": (relu, lambda y: (y > 0).astype(np.float64)),
    "identity": (identity, lambda y: np.ones_like(y)),
}


def get_activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None
