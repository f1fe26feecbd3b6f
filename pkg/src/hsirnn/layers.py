"""Recurrent cells, convolutional front ends, and their reverse-mode gradients.

Two levels of API live here:

* pure forward functions (``gru_cell_forward``, ``run_sequence``, ...) that take
  a parameter dataclass and accept either a single sample or a leading batch
  axis;
* ``Layer`` subclasses that wrap the same arithmetic, cache activations during
  ``forward`` and accumulate parameter gradients during ``backward``.

Vectors are rows: a weight ``W`` of shape ``(H, I)`` is applied as ``x @ W.T``.
"""
import copy
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from .exceptions import ArgumentError, ConfigurationError, DimensionError, StateError
from .tensor import as_tensor, get_activation, sigmoid

FILTER_SIZES = (1, 3, 5)


# ---------------------------------------------------------------------------
# parameter containers


class _Params:
    """Mixin: expose the ndarray fields of a parameter dataclass by name."""

    def tensors(self):
        return {f.name: getattr(self, f.name) for f in fields(self)
                if isinstance(getattr(self, f.name), np.ndarray)}


@dataclass
class RnnCellParams(_Params):
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    activation: str = "tanh"

    @property
    def input_size(self):
        return self.W_h.shape[1]

    @property
    def hidden_size(self):
        return self.W_h.shape[0]


@dataclass
class LstmCellParams(_Params):
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def input_size(self):
        return self.W_f.shape[1]

    @property
    def hidden_size(self):
        return self.W_f.shape[0]


@dataclass
class GruCellParams(_Params):
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_size(self):
        return self.W_z.shape[1]

    @property
    def hidden_size(self):
        return self.W_z.shape[0]


@dataclass
class OutputHeadParams(_Params):
    W_y: np.ndarray
    b_y: np.ndarray


@dataclass
class ShortenConvParams(_Params):
    kernel: np.ndarray  # (M, L, N_in)
    bias: np.ndarray  # (M,)
    stride: int
    activation: str = "tanh"

    @property
    def length(self):
        return self.kernel.shape[1]


@dataclass
class PerBandConvParams(_Params):
    """Spatial filters shared across bands, grouped by kernel size.

    ``w1``, ``w3``, ``w5`` hold the 1x1, 3x3 and 5x5 kernels with shapes
    ``(n_s, s, s)``; ``bias`` has one entry per filter in the concatenated
    order 1x1, 3x3, 5x5.
    """
    w1: np.ndarray
    w3: np.ndarray
    w5: np.ndarray
    bias: np.ndarray
    activation: str = "tanh"

    def groups(self):
        return [(s, w) for s, w in zip(FILTER_SIZES, (self.w1, self.w3, self.w5))
                if w.shape[0] > 0]

    @property
    def n_filters(self):
        return self.w1.shape[0] + self.w3.shape[0] + self.w5.shape[0]

    @property
    def filters(self):
        """The filters as a list of ``(size, weights, bias)`` triples."""
        out = []
        k = 0
        for s, w in self.groups():
            for j in range(w.shape[0]):
                out.append((s, w[j], float(self.bias[k])))
                k += 1
        return out

    @property
    def max_size(self):
        return max((s for s, _ in self.groups()), default=1)


@dataclass
class ParallelGruParams:
    units: list = field(default_factory=list)

    def tensors(self):
        out = {}
        for k, unit in enumerate(self.units):
            for name, t in unit.tensors().items():
                out[f"unit{k}.{name}"] = t
        return out

    def validate(self):
        if not self.units:
            raise ConfigurationError("parallel GRU needs at least one unit")
        ref = self.units[0]
        for k, u in enumerate(self.units[1:], start=1):
            for name, t in u.tensors().items():
                if t.shape != getattr(ref, name).shape:
                    raise ConfigurationError(
                        f"unit {k} {name} has shape {t.shape}, "
                        f"unit 0 has {getattr(ref, name).shape}")


# ---------------------------------------------------------------------------
# initialization


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_rnn_cell(input_size, hidden_size, rng, activation="tanh"):
    H, I = hidden_size, input_size
    return RnnCellParams(
        W_h=glorot(rng, (H, I), I, H),
        U_h=glorot(rng, (H, H), H, H),
        b_h=np.zeros(H),
        activation=activation,
    )


def init_lstm_cell(input_size, hidden_size, rng):
    H, I = hidden_size, input_size
    Ws = [glorot(rng, (H, I), I, H) for _ in range(4)]
    Us = [glorot(rng, (H, H), H, H) for _ in range(4)]
    bs = [np.zeros(H) for _ in range(4)]
    return LstmCellParams(*Ws, *Us, *bs)


def init_gru_cell(input_size, hidden_size, rng):
    H, I = hidden_size, input_size
    Ws = [glorot(rng, (H, I), I, H) for _ in range(3)]
    Us = [glorot(rng, (H, H), H, H) for _ in range(3)]
    bs = [np.zeros(H) for _ in range(3)]
    return GruCellParams(*Ws, *Us, *bs)


def init_output_head(hidden_size, n_classes, rng):
    return OutputHeadParams(
        W_y=glorot(rng, (n_classes, hidden_size), hidden_size, n_classes),
        b_y=np.zeros(n_classes),
    )


def init_shorten_conv(n_in, n_filters, length, stride, rng, activation="tanh"):
    kernel = glorot(rng, (n_filters, length, n_in), length * n_in, length * n_filters)
    return ShortenConvParams(kernel=kernel, bias=np.zeros(n_filters),
                             stride=int(stride), activation=activation)


def split_filters(n_filters, max_size=5):
    """Split ``n_filters`` across the 1x1/3x3/5x5 sizes, remainder to the larger kernels.

    Sizes above ``max_size`` (the patch side) get no filters.

    >>> split_filters(16)
    (5, 5, 6)
    >>> split_filters(4, max_size=3)
    (2, 2, 0)
    """
    k = sum(1 for s in FILTER_SIZES if s <= max_size)
    if k == 0:
        raise ArgumentError(f"no filter size fits a {max_size}x{max_size} patch")
    base, rem = divmod(n_filters, k)
    counts = [base] * k + [0] * (len(FILTER_SIZES) - k)
    for j in range(rem):
        counts[k - 1 - j] += 1
    return tuple(counts)


def init_per_band_conv(n_filters, rng, split=None, activation="tanh"):
    split = tuple(split) if split is not None else split_filters(n_filters)
    if len(split) != 3 or sum(split) != n_filters or min(split) < 0:
        raise ConfigurationError(
            f"filter split {split} must be three non-negative counts summing to {n_filters}")
    ws = [glorot(rng, (n, s, s), s * s, s * s) for n, s in zip(split, FILTER_SIZES)]
    return PerBandConvParams(*ws, bias=np.zeros(n_filters), activation=activation)


def init_parallel_gru(input_size, hidden_size, n_units, rng):
    return ParallelGruParams([init_gru_cell(input_size, hidden_size, rng)
                              for _ in range(n_units)])


# ---------------------------------------------------------------------------
# single-step arithmetic shared by the pure functions and the layers


def _check_last(name, t, size):
    if t.shape[-1] != size:
        raise DimensionError(f"{name} has trailing extent {t.shape[-1]}, expected {size}")


def _affine(x, W, h, U, b):
    return x @ W.T + h @ U.T + b


def _rnn_step(p, x, h):
    act, _ = get_activation(p.activation)
    h_new = act(_affine(x, p.W_h, h, p.U_h, p.b_h))
    return h_new, (x, h, h_new)


def _rnn_step_back(p, cache, dh_new, grads):
    x, h, h_new = cache
    _, dact = get_activation(p.activation)
    da = dh_new * dact(h_new)
    grads["W_h"] += da.T @ x
    grads["U_h"] += da.T @ h
    grads["b_h"] += da.sum(axis=0)
    return da @ p.W_h, da @ p.U_h


def _lstm_step(p, x, h, c):
    f = sigmoid(_affine(x, p.W_f, h, p.U_f, p.b_f))
    i = sigmoid(_affine(x, p.W_i, h, p.U_i, p.b_i))
    o = sigmoid(_affine(x, p.W_o, h, p.U_o, p.b_o))
    g = np.tanh(_affine(x, p.W_c, h, p.U_c, p.b_c))
    c_new = i * g + f * c
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, f, i, o, g, tc)


def _lstm_step_back(p, cache, dh_new, dc_new, grads):
    x, h, c, f, i, o, g, tc = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    dx = 0.0
    dh = 0.0
    for gate, dgate, deriv in (
        ("f", dc * c, f * (1.0 - f)),
        ("i", dc * g, i * (1.0 - i)),
        ("o", do, o * (1.0 - o)),
        ("c", dc * i, 1.0 - g * g),
    ):
        da = dgate * deriv
        W = getattr(p, "W_" + gate)
        U = getattr(p, "U_" + gate)
        grads["W_" + gate] += da.T @ x
        grads["U_" + gate] += da.T @ h
        grads["b_" + gate] += da.sum(axis=0)
        dx = dx + da @ W
        dh = dh + da @ U
    return dx, dh, dc * f


def _gru_step(p, x, h):
    z = sigmoid(_affine(x, p.W_z, h, p.U_z, p.b_z))
    r = sigmoid(_affine(x, p.W_r, h, p.U_r, p.b_r))
    rh = r * h
    ht = np.tanh(_affine(x, p.W_h, rh, p.U_h, p.b_h))
    h_new = (1.0 - z) * h + z * ht
    return h_new, (x, h, z, r, rh, ht)


def _gru_step_back(p, cache, dh_new, grads):
    x, h, z, r, rh, ht = cache
    dz = dh_new * (ht - h)
    dh = dh_new * (1.0 - z)

    da_h = dh_new * z * (1.0 - ht * ht)
    grads["W_h"] += da_h.T @ x
    grads["U_h"] += da_h.T @ rh
    grads["b_h"] += da_h.sum(axis=0)
    drh = da_h @ p.U_h
    dx = da_h @ p.W_h
    dh = dh + drh * r

    da_z = dz * z * (1.0 - z)
    grads["W_z"] += da_z.T @ x
    grads["U_z"] += da_z.T @ h
    grads["b_z"] += da_z.sum(axis=0)
    dx = dx + da_z @ p.W_z
    dh = dh + da_z @ p.U_z

    da_r = drh * h * r * (1.0 - r)
    grads["W_r"] += da_r.T @ x
    grads["U_r"] += da_r.T @ h
    grads["b_r"] += da_r.sum(axis=0)
    dx = dx + da_r @ p.W_r
    dh = dh + da_r @ p.U_r
    return dx, dh


# ---------------------------------------------------------------------------
# pure forward functions


def rnn_cell_forward(p, x_t, h_prev):
    x_t, h_prev = as_tensor(x_t), as_tensor(h_prev)
    _check_last("x_t", x_t, p.input_size)
    _check_last("h_prev", h_prev, p.hidden_size)
    return _rnn_step(p, x_t, h_prev)[0]


def lstm_cell_forward(p, x_t, h_prev, c_prev):
    """One LSTM step; returns ``(h_t, c_t)``."""
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    _check_last("x_t", x_t, p.input_size)
    _check_last("h_prev", h_prev, p.hidden_size)
    _check_last("c_prev", c_prev, p.hidden_size)
    h, c, _ = _lstm_step(p, x_t, h_prev, c_prev)
    return h, c


def gru_cell_forward(p, x_t, h_prev):
    x_t, h_prev = as_tensor(x_t), as_tensor(h_prev)
    _check_last("x_t", x_t, p.input_size)
    _check_last("h_prev", h_prev, p.hidden_size)
    return _gru_step(p, x_t, h_prev)[0]


def run_sequence(p, xs):
    """Run a cell over ``xs`` of shape ``(T, I)`` (or ``(B, T, I)``) from a zero
    state and return the final hidden state."""
    xs = as_tensor(xs)
    if xs.ndim < 2 or xs.shape[-2] == 0:
        raise ArgumentError("run_sequence needs a non-empty (T, I) sequence")
    _check_last("xs", xs, p.input_size)
    h = np.zeros(xs.shape[:-2] + (p.hidden_size,))
    c = np.zeros_like(h)
    for t in range(xs.shape[-2]):
        x = xs[..., t, :]
        if isinstance(p, GruCellParams):
            h = _gru_step(p, x, h)[0]
        elif isinstance(p, LstmCellParams):
            h, c, _ = _lstm_step(p, x, h, c)
        elif isinstance(p, RnnCellParams):
            h = _rnn_step(p, x, h)[0]
        else:
            raise TypeError(f"not a recurrent cell: {type(p).__name__}")
    return h


def parallel_gru_forward(p, xs):
    """Elementwise sum of the final states of every GRU unit run on ``xs``."""
    p.validate()
    out = run_sequence(p.units[0], xs)
    for unit in p.units[1:]:
        out = out + run_sequence(unit, xs)
    return out


def output_head(p, h):
    h = as_tensor(h)
    _check_last("h", h, p.W_y.shape[1])
    return h @ p.W_y.T + p.b_y


def derive_shorten_geometry(D, T):
    """Kernel length and stride that turn ``D`` timesteps into exactly ``T``.

    The stride is ``D // T`` and the kernel stretches so the last window ends
    on the last band.
    """
    if not 1 <= T <= D:
        raise ArgumentError(f"need 1 <= T <= D, got T={T}, D={D}")
    S = D // T
    L = D - S * (T - 1)
    return L, S


def shorten_output_length(D, L, S):
    return (D - L) // S + 1


def _windows(seq, L, S):
    T_out = shorten_output_length(seq.shape[-2], L, S)
    idx = np.arange(T_out)[:, None] * S + np.arange(L)[None, :]
    return seq[..., idx, :]  # (..., T_out, L, N_in)


def shorten_conv_forward(p, seq):
    """Valid strided 1D convolution along the band axis: ``(D, N_in) -> (T_out, M)``."""
    seq = as_tensor(seq)
    M, L, n_in = p.kernel.shape
    _check_last("seq", seq, n_in)
    D = seq.shape[-2]
    if D < L:
        raise ArgumentError(f"sequence length D={D} is shorter than kernel L={L}")
    act, _ = get_activation(p.activation)
    win = _windows(seq, L, p.stride)
    return act(np.tensordot(win, p.kernel, axes=([-2, -1], [1, 2])) + p.bias)


def _per_band_pre(p, patch):
    P = patch.shape[-3]
    if patch.shape[-2] != P or P % 2 == 0:
        raise DimensionError(f"patch must be square with odd side, got {patch.shape[-3:-1]}")
    if p.max_size > P:
        raise ArgumentError(f"filter size {p.max_size} exceeds patch size {P}")
    c = P // 2
    parts, subs = [], []
    for s, w in p.groups():
        r = s // 2
        sub = patch[..., c - r:c + r + 1, c - r:c + r + 1, :]
        subs.append(sub)
        parts.append(np.tensordot(sub, w, axes=([-3, -2], [1, 2])))
    return np.concatenate(parts, axis=-1) + p.bias, subs


def per_band_conv_forward(p, patch):
    """Center-aligned valid evaluation of every spatial filter on every band.

    ``patch`` is ``(P, P, D)`` (optionally batched); the result is ``(D, N)``.
    """
    patch = as_tensor(patch)
    act, _ = get_activation(p.activation)
    return act(_per_band_pre(p, patch)[0])


# ---------------------------------------------------------------------------
# layers with reverse-mode gradients


class Layer:
    """Base class. ``forward`` caches what ``backward`` needs; ``backward``
    adds into ``self.grads`` and returns gradients for the inputs."""

    def __init__(self, params):
        self.params = params
        self._cache = None
        self.zero_grad()

    def parameters(self):
        return self.params.tensors()

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a forward pass")
        cache, self._cache = self._cache, None
        return cache

    def example_inputs(self, rng, batch=2):
        raise NotImplementedError

    def astype(self, dtype):
        """Deep copy with every parameter tensor cast to ``dtype``."""
        new = copy.deepcopy(self)
        new._cast_params(dtype)
        return new

    def _cast_params(self, dtype):
        _cast_dataclass(self.params, dtype)


def _cast_dataclass(obj, dtype):
    if is_dataclass(obj):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, np.ndarray):
                setattr(obj, f.name, v.astype(dtype))
            elif isinstance(v, list):
                for item in v:
                    _cast_dataclass(item, dtype)


class Activation(Layer):
    """Elementwise nonlinearity as a standalone layer (no parameters)."""

    def __init__(self, name):
        self.name = name
        self._fwd, self._deriv = get_activation(name)
        super().__init__(None)

    def parameters(self):
        return {}

    def forward(self, x):
        y = self._fwd(x)
        self._cache = y
        return y

    def backward(self, dy):
        return dy * self._deriv(self._take_cache())

    def example_inputs(self, rng, batch=2):
        return (rng.normal(size=(batch, 4)),)


class RNNCell(Layer):
    def forward(self, x, h_prev):
        h, self._cache = _rnn_step(self.params, as_tensor(x), as_tensor(h_prev))
        return h

    def backward(self, dh):
        return _rnn_step_back(self.params, self._take_cache(), dh, self.grads)

    def example_inputs(self, rng, batch=2):
        p = self.params
        return (rng.normal(size=(batch, p.input_size)),
                rng.normal(size=(batch, p.hidden_size)))


class LSTMCell(Layer):
    def forward(self, x, h_prev, c_prev):
        h, c, self._cache = _lstm_step(self.params, as_tensor(x), as_tensor(h_prev),
                                       as_tensor(c_prev))
        return h, c

    def backward(self, dh, dc):
        return _lstm_step_back(self.params, self._take_cache(), dh, dc, self.grads)

    def example_inputs(self, rng, batch=2):
        p = self.params
        return (rng.normal(size=(batch, p.input_size)),
                rng.normal(size=(batch, p.hidden_size)),
                rng.normal(size=(batch, p.hidden_size)))


class GRUCell(Layer):
    def forward(self, x, h_prev):
        h, self._cache = _gru_step(self.params, as_tensor(x), as_tensor(h_prev))
        return h

    def backward(self, dh):
        return _gru_step_back(self.params, self._take_cache(), dh, self.grads)

    def example_inputs(self, rng, batch=2):
        p = self.params
        return (rng.normal(size=(batch, p.input_size)),
                rng.normal(size=(batch, p.hidden_size)))


class Recurrent(Layer):
    """Runs a cell over ``(B, T, I)`` from a zero state; outputs the last state."""

    def forward(self, xs):
        p = self.params
        xs = as_tensor(xs)
        if xs.ndim != 3 or xs.shape[1] == 0:
            raise ArgumentError(f"expected a non-empty (B, T, I) batch, got {xs.shape}")
        _check_last("xs", xs, p.input_size)
        h = np.zeros((xs.shape[0], p.hidden_size))
        c = np.zeros_like(h)
        steps = []
        for t in range(xs.shape[1]):
            x = xs[:, t, :]
            if isinstance(p, GruCellParams):
                h, cache = _gru_step(p, x, h)
            elif isinstance(p, LstmCellParams):
                h, c, cache = _lstm_step(p, x, h, c)
            else:
                h, cache = _rnn_step(p, x, h)
            steps.append(cache)
        self._cache = (xs.shape, steps)
        return h

    def backward(self, dh):
        p = self.params
        shape, steps = self._take_cache()
        dxs = np.zeros(shape)
        dc = np.zeros_like(dh)
        for t in range(len(steps) - 1, -1, -1):
            if isinstance(p, GruCellParams):
                dx, dh = _gru_step_back(p, steps[t], dh, self.grads)
            elif isinstance(p, LstmCellParams):
                dx, dh, dc = _lstm_step_back(p, steps[t], dh, dc, self.grads)
            else:
                dx, dh = _rnn_step_back(p, steps[t], dh, self.grads)
            dxs[:, t, :] = dx
        return dxs

    def example_inputs(self, rng, batch=2, steps=3):
        return (rng.normal(size=(batch, steps, self.params.input_size)),)


class ParallelGRU(Layer):
    def __init__(self, params):
        params.validate()
        self.units = [Recurrent(u) for u in params.units]
        super().__init__(params)

    def zero_grad(self):
        for u in self.units:
            u.zero_grad()

    @property
    def grads(self):
        out = {}
        for k, u in enumerate(self.units):
            for name, g in u.grads.items():
                out[f"unit{k}.{name}"] = g
        return out

    @grads.setter
    def grads(self, value):
        pass  # owned by the units

    def forward(self, xs):
        out = self.units[0].forward(xs)
        for u in self.units[1:]:
            out = out + u.forward(xs)
        self._cache = True
        return out

    def backward(self, dh):
        self._take_cache()
        dxs = self.units[0].backward(dh)
        for u in self.units[1:]:
            dxs = dxs + u.backward(dh)
        return dxs

    def example_inputs(self, rng, batch=2, steps=3):
        return (rng.normal(size=(batch, steps, self.params.units[0].input_size)),)


class OutputHead(Layer):
    def forward(self, h):
        h = as_tensor(h)
        self._cache = h
        return output_head(self.params, h)

    def backward(self, dy):
        h = self._take_cache()
        self.grads["W_y"] += dy.T @ h
        self.grads["b_y"] += dy.sum(axis=0)
        return dy @ self.params.W_y

    def example_inputs(self, rng, batch=2):
        return (rng.normal(size=(batch, self.params.W_y.shape[1])),)


class ShortenConv(Layer):
    def forward(self, seq):
        p = self.params
        seq = as_tensor(seq)
        out = shorten_conv_forward(p, seq)
        self._cache = (seq.shape, _windows(seq, p.length, p.stride), out)
        return out

    def backward(self, dout):
        p = self.params
        shape, win, out = self._take_cache()
        _, dact = get_activation(p.activation)
        dpre = dout * dact(out)  # (B, T, M)
        self.grads["kernel"] += np.tensordot(dpre, win, axes=([0, 1], [0, 1]))
        self.grads["bias"] += dpre.sum(axis=(0, 1))
        dwin = np.tensordot(dpre, p.kernel, axes=([2], [0]))  # (B, T, L, N)
        dseq = np.zeros(shape)
        L, S = p.length, p.stride
        for t in range(dwin.shape[1]):
            dseq[:, t * S:t * S + L, :] += dwin[:, t]
        return dseq

    def example_inputs(self, rng, batch=2, length=None):
        M, L, n_in = self.params.kernel.shape
        D = length or L + 2 * self.params.stride
        return (rng.normal(size=(batch, D, n_in)),)


class PerBandConv(Layer):
    def forward(self, patch):
        p = self.params
        patch = as_tensor(patch)
        act, _ = get_activation(p.activation)
        pre, subs = _per_band_pre(p, patch)
        out = act(pre)
        self._cache = (patch.shape, subs, out)
        return out

    def backward(self, dout):
        p = self.params
        shape, subs, out = self._take_cache()
        _, dact = get_activation(p.activation)
        dpre = dout * dact(out)  # (B, D, N)
        self.grads["bias"] += dpre.sum(axis=(0, 1))
        dpatch = np.zeros(shape)
        P = shape[1]
        c = P // 2
        k = 0
        names = {1: "w1", 3: "w3", 5: "w5"}
        for (s, w), sub in zip(p.groups(), subs):
            n = w.shape[0]
            dg = dpre[..., k:k + n]
            k += n
            # sub: (B, s, s, D), dg: (B, D, n)
            self.grads[names[s]] += np.tensordot(dg, sub, axes=([0, 1], [0, 3]))
            dsub = np.tensordot(dg, w, axes=([2], [0]))  # (B, D, s, s)
            r = s // 2
            dpatch[:, c - r:c + r + 1, c - r:c + r + 1, :] += dsub.transpose(0, 2, 3, 1)
        return dpatch

    def example_inputs(self, rng, batch=2, patch=None, bands=4):
        P = patch or max(self.params.max_size, 1)
        if P % 2 == 0:
            P += 1
        return (rng.normal(size=(batch, P, P, bands)),)


# ---------------------------------------------------------------------------
# finite-difference gradient check


@dataclass
class GradcheckReport:
    max_rel_err: float
    passed: bool
    n_checked: int = 0
    worst: str = ""

    @property
    def pass_(self):
        return self.passed


def _as_tuple(x):
    return x if isinstance(x, tuple) else (x,)


def _rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def _perturbable(layer, inputs):
    targets = {f"param:{k}": v for k, v in layer.parameters().items()}
    targets.update({f"input:{j}": x for j, x in enumerate(inputs)})
    return targets


def gradcheck(layer, seed=0, inputs=None, step=1e-6, tol=1e-6):
    """Compare ``layer.backward`` against central differences.

    The scalar probed is ``sum(r * forward(inputs))`` with a random projection
    ``r``, so every output component contributes. Both parameter and input
    gradients are checked, element by element. The difference quotients are
    evaluated on an extended-precision copy of the layer: in float64 the
    rounding of the loss alone is ~1e-16, which at ``step=1e-6`` swamps
    gradient entries below ~1e-4.
    """
    rng = np.random.default_rng(seed)
    if inputs is None:
        inputs = layer.example_inputs(rng)
    inputs = tuple(np.array(x, dtype=np.float64) for x in inputs)
    outs = _as_tuple(layer.forward(*inputs))
    layer._cache = None
    proj = tuple(rng.normal(size=o.shape) for o in outs)

    layer.zero_grad()
    layer.forward(*inputs)
    d_inputs = _as_tuple(layer.backward(*proj))
    analytic = {f"param:{k}": g for k, g in layer.grads.items()}
    analytic.update({f"input:{j}": np.asarray(g) for j, g in enumerate(d_inputs)})

    ext = np.longdouble
    probe = layer.astype(ext)
    probe_inputs = tuple(x.astype(ext) for x in inputs)
    probe_proj = tuple(r.astype(ext) for r in proj)

    def loss():
        o = _as_tuple(probe.forward(*probe_inputs))
        probe._cache = None
        return sum(np.sum(r * v) for r, v in zip(probe_proj, o))

    worst, worst_name, count = 0.0, "", 0
    for name, arr in _perturbable(probe, probe_inputs).items():
        flat = arr.reshape(-1)
        g = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + ext(step)
            up = loss()
            flat[i] = orig - ext(step)
            down = loss()
            flat[i] = orig
            numeric = float((up - down) / (2 * ext(step)))
            err = float(_rel_err(g[i], numeric))
            count += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    return GradcheckReport(max_rel_err=worst, passed=worst < tol,
                           n_checked=count, worst=worst_name)
