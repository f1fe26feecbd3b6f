"""The six classifiers, assembled from layers, plus the binary model file format."""
import io
import json
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import ConfigurationError, DimensionError, FormatError
from .layers import (
    FILTER_SIZES,
    Layer,
    OutputHead,
    ParallelGRU,
    PerBandConv,
    Recurrent,
    ShortenConv,
    derive_shorten_geometry,
    init_gru_cell,
    init_lstm_cell,
    init_output_head,
    init_parallel_gru,
    init_per_band_conv,
    init_rnn_cell,
    init_shorten_conv,
    split_filters,
)
from .tensor import ACTIVATIONS, as_tensor

VARIANTS = ("rnn", "lstm", "gru", "st_gru", "st_ss_gru", "st_ss_pgru")
SPECTRAL_VARIANTS = ("rnn", "lstm", "gru", "st_gru")
SHORTENED_VARIANTS = ("st_gru", "st_ss_gru", "st_ss_pgru")
SPATIAL_VARIANTS = ("st_ss_gru", "st_ss_pgru")

MAGIC = b"HSRN"
FORMAT_VERSION = 1


def canonical_variant(name):
    """Accept ``st-ss-pgru`` / ``St-SS-pGRU`` style spellings."""
    key = str(name).strip().lower().replace("-", "_")
    if key not in VARIANTS:
        raise ConfigurationError(
            f"unknown model {name!r}; choose from {', '.join(v.replace('_', '-') for v in VARIANTS)}")
    return key


@dataclass
class ModelSpec:
    """Architecture description.

    ``D`` bands, ``P`` patch side, ``N`` spatial filters, ``M`` shorten filters,
    ``T`` shortened timesteps, ``H`` hidden units, ``K`` parallel GRU units,
    ``C`` classes. Fields that a variant does not use are ignored by it.
    """
    variant: str
    D: int
    C: int
    H: int = 128
    P: int = None
    N: int = 16
    M: int = 16
    T: int = 5
    K: int = 2
    rnn_activation: str = "tanh"
    shorten_activation: str = "tanh"
    spatial_activation: str = "tanh"
    filter_split: tuple = None
    seed: int = 0

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        if self.P is None:
            self.P = 5 if self.variant in SPATIAL_VARIANTS else 1
        if self.variant in SPATIAL_VARIANTS and self.filter_split is None:
            self.filter_split = split_filters(self.N, self.P)
        if self.filter_split is not None:
            self.filter_split = tuple(int(n) for n in self.filter_split)
        if self.variant != "st_ss_pgru":
            self.K = 1

    def violations(self):
        v = []
        if self.D < 1:
            v.append(f"D={self.D} must be >= 1")
        if self.C < 2:
            v.append(f"C={self.C} must be >= 2")
        if self.H < 1:
            v.append(f"H={self.H} must be >= 1")
        if self.K < 1:
            v.append(f"K={self.K} must be >= 1")
        if self.variant in SPECTRAL_VARIANTS and self.P != 1:
            v.append(f"P={self.P} must be 1 for spectral-only variant {self.variant}")
        if self.variant in SHORTENED_VARIANTS:
            if not 1 <= self.T <= self.D:
                v.append(f"T={self.T} must satisfy 1 <= T <= D={self.D}")
            if self.M < 1:
                v.append(f"M={self.M} must be >= 1")
        if self.variant in SPATIAL_VARIANTS:
            if self.N < 1:
                v.append(f"N={self.N} must be >= 1")
            if self.P % 2 == 0 or self.P < 1:
                v.append(f"P={self.P} must be a positive odd number")
            split = self.filter_split or ()
            if len(split) != 3 or sum(split) != self.N or min(split) < 0:
                v.append(f"filter_split={split} must be three counts summing to N={self.N}")
            else:
                largest = max((s for s, n in zip(FILTER_SIZES, split) if n), default=1)
                if largest > self.P:
                    v.append(f"P={self.P} is smaller than the {largest}x{largest} filters")
        for name in ("rnn_activation", "shorten_activation", "spatial_activation"):
            if getattr(self, name) not in ACTIVATIONS:
                v.append(f"{name}={getattr(self, name)!r} is not one of {sorted(ACTIVATIONS)}")
        return v

    def validate(self):
        v = self.violations()
        if v:
            raise ConfigurationError(v)
        return self

    @property
    def shorten_geometry(self):
        return derive_shorten_geometry(self.D, self.T)

    @property
    def sample_shape(self):
        if self.variant in SPATIAL_VARIANTS:
            return (self.P, self.P, self.D)
        return (self.D,)

    def to_dict(self):
        d = asdict(self)
        d["filter_split"] = list(self.filter_split) if self.filter_split is not None else None
        return d

    def to_text(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model spec keys: {sorted(unknown)}")
        return cls(**d)


class Network(Layer):
    """The layer stack of one variant; batched ``forward`` returns logits."""

    def __init__(self, spec, stages):
        self.spec = spec
        self.stages = stages  # list of (name, layer)
        self._cache = None

    def parameters(self):
        out = {}
        for name, layer in self.stages:
            for k, v in layer.parameters().items():
                out[f"{name}.{k}"] = v
        return out

    @property
    def grads(self):
        out = {}
        for name, layer in self.stages:
            for k, g in layer.grads.items():
                out[f"{name}.{k}"] = g
        return out

    def zero_grad(self):
        for _, layer in self.stages:
            layer.zero_grad()

    def _cast_params(self, dtype):
        for _, layer in self.stages:
            layer._cast_params(dtype)

    def prepare(self, X):
        """Coerce a batch of samples into the array the first stage expects."""
        X = as_tensor(X)
        spec = self.spec
        if spec.variant in SPATIAL_VARIANTS:
            want = (spec.P, spec.P, spec.D)
            if X.ndim != 4 or X.shape[1:] != want:
                raise DimensionError(f"expected samples of shape {want}, got {X.shape[1:]}")
            return X
        if X.ndim == 4 and X.shape[1:3] == (1, 1):
            X = X.reshape(X.shape[0], X.shape[3])
        if X.ndim != 2 or X.shape[1] != spec.D:
            raise DimensionError(f"expected spectra of length {spec.D}, got shape {X.shape[1:]}")
        return X[:, :, None]

    def forward(self, X):
        out = self.prepare(X)
        for _, layer in self.stages:
            out = layer.forward(out)
        self._cache = True
        return out

    def backward(self, dlogits):
        self._take_cache()
        grad = dlogits
        for _, layer in reversed(self.stages):
            grad = layer.backward(grad)
        if self.spec.variant not in SPATIAL_VARIANTS:
            grad = grad[:, :, 0]
        return grad

    def example_inputs(self, rng, batch=2):
        return (rng.normal(size=(batch,) + self.spec.sample_shape),)


def _make_network(spec, rng):
    stages = []
    v = spec.variant
    seq_in = 1
    if v in SPATIAL_VARIANTS:
        stages.append(("spatial", PerBandConv(init_per_band_conv(
            spec.N, rng, split=spec.filter_split, activation=spec.spatial_activation))))
        seq_in = spec.N
    if v in SHORTENED_VARIANTS:
        L, S = spec.shorten_geometry
        stages.append(("shorten", ShortenConv(init_shorten_conv(
            seq_in, spec.M, L, S, rng, activation=spec.shorten_activation))))
        seq_in = spec.M
    if v == "rnn":
        cell = Recurrent(init_rnn_cell(seq_in, spec.H, rng, activation=spec.rnn_activation))
    elif v == "lstm":
        cell = Recurrent(init_lstm_cell(seq_in, spec.H, rng))
    elif v == "st_ss_pgru":
        cell = ParallelGRU(init_parallel_gru(seq_in, spec.H, spec.K, rng))
    else:
        cell = Recurrent(init_gru_cell(seq_in, spec.H, rng))
    stages.append(("recurrent", cell))
    stages.append(("head", OutputHead(init_output_head(spec.H, spec.C, rng))))
    return Network(spec, stages)


@dataclass(eq=False)
class ModelState:
    spec: ModelSpec
    network: Network = field(repr=False)

    def parameters(self):
        return self.network.parameters()

    @property
    def n_parameters(self):
        return sum(t.size for t in self.parameters().values())

    def __eq__(self, other):
        if not isinstance(other, ModelState):
            return NotImplemented
        if self.spec.to_text() != other.spec.to_text():
            return False
        a, b = self.parameters(), other.parameters()
        return list(a) == list(b) and all(
            a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)


def build(spec):
    """Allocate and initialize every parameter of ``spec`` from ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    return ModelState(spec=spec, network=_make_network(spec, rng))


def predict_logits(m, X, batch_size=1024):
    """Logits for a batch of samples, evaluated in chunks."""
    X = np.asarray(X)
    outs = []
    for start in range(0, len(X), batch_size):
        outs.append(m.network.forward(X[start:start + batch_size]))
        m.network._cache = None
    if not outs:
        return np.zeros((0, m.spec.C))
    return np.concatenate(outs, axis=0)


def forward_classify(m, sample):
    """Logits of one sample: a ``(P, P, D)`` patch or a length-``D`` spectrum."""
    sample = as_tensor(sample)
    spec = m.spec
    if spec.variant in SPATIAL_VARIANTS:
        if sample.shape != (spec.P, spec.P, spec.D):
            raise DimensionError(
                f"expected a {(spec.P, spec.P, spec.D)} patch, got {sample.shape}")
    elif sample.shape not in ((spec.D,), (1, 1, spec.D)):
        raise DimensionError(f"expected a length-{spec.D} spectrum, got {sample.shape}")
    return predict_logits(m, sample[None])[0]


# ---------------------------------------------------------------------------
# model files


def _dump(m, f):
    spec_text = m.spec.to_text().encode("utf-8")
    params = m.parameters()
    f.write(MAGIC)
    f.write(struct.pack("<I", FORMAT_VERSION))
    f.write(struct.pack("<I", len(spec_text)))
    f.write(spec_text)
    f.write(struct.pack("<I", len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(struct.pack("<I", t.ndim))
        f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def save(m, sink):
    """Write ``m`` to a path or binary file object."""
    if hasattr(sink, "write"):
        _dump(m, sink)
    else:
        with open(sink, "wb") as f:
            _dump(m, f)


def dumps(m):
    buf = io.BytesIO()
    _dump(m, buf)
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated model file while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def loads(data):
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic; not a model file", 0)
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    spec_len = r.u32("spec length")
    spec_at = r.pos
    try:
        spec = ModelSpec.from_dict(json.loads(r.take(spec_len, "spec").decode("utf-8")))
        m = build(spec)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid spec block: {exc}", spec_at) from exc
    expected = m.parameters()
    count_at = r.pos
    count = r.u32("tensor count")
    if count != len(expected):
        raise FormatError(f"file holds {count} tensors, spec needs {len(expected)}", count_at)
    for _ in range(count):
        at = r.pos
        name = r.take(r.u32("name length"), "tensor name").decode("utf-8", "replace")
        if name not in expected:
            raise FormatError(f"unexpected tensor {name!r}", at)
        rank = r.u32("rank")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, "extents"))
        target = expected[name]
        if tuple(shape) != target.shape:
            raise FormatError(
                f"tensor {name!r} has shape {tuple(shape)}, spec needs {target.shape}", at)
        payload = r.take(8 * target.size, f"payload of {name!r}")
        target[...] = np.frombuffer(payload, dtype="<f8").reshape(target.shape)
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after last tensor", r.pos)
    return m


def load(source):
    """Read a model from a path or binary file object."""
    if hasattr(source, "read"):
        return loads(source.read())
    with open(source, "rb") as f:
        return loads(f.read())
