"""Gradient checks over every layer type and one complete tiny model."""
import numpy as np

from .layers import (
    GRUCell,
    LSTMCell,
    OutputHead,
    ParallelGRU,
    PerBandConv,
    RNNCell,
    Recurrent,
    ShortenConv,
    gradcheck,
    init_gru_cell,
    init_lstm_cell,
    init_output_head,
    init_parallel_gru,
    init_per_band_conv,
    init_rnn_cell,
    init_shorten_conv,
)
from .models import ModelSpec, build

TINY_MODEL = dict(variant="st_ss_pgru", P=5, D=12, N=4, M=4, T=3, H=6, K=2, C=3)


def _with_random_biases(params, rng):
    # zero biases would leave the bias-dependent curvature untested
    for name, t in params.tensors().items():
        if name.startswith("b") or name == "bias":
            t[...] = rng.normal(scale=0.1, size=t.shape)
    return params


def _parallel_biases(params, rng):
    for unit in params.units:
        _with_random_biases(unit, rng)
    return params


def check_instances(seed):
    """``(name, layer, inputs)`` triples for one seed."""
    rng = np.random.default_rng(seed)
    I, H = 3, 4
    b = _with_random_biases
    layers = [
        ("rnn_cell", RNNCell(b(init_rnn_cell(I, H, rng), rng))),
        ("lstm_cell", LSTMCell(b(init_lstm_cell(I, H, rng), rng))),
        ("gru_cell", GRUCell(b(init_gru_cell(I, H, rng), rng))),
        ("rnn_sequence", Recurrent(b(init_rnn_cell(I, H, rng), rng))),
        ("lstm_sequence", Recurrent(b(init_lstm_cell(I, H, rng), rng))),
        ("gru_sequence", Recurrent(b(init_gru_cell(I, H, rng), rng))),
        ("output_head", OutputHead(b(init_output_head(H, 3, rng), rng))),
        ("shorten_conv", ShortenConv(b(init_shorten_conv(2, 3, 4, 3, rng), rng))),
        ("per_band_conv", PerBandConv(b(init_per_band_conv(4, rng), rng))),
        ("parallel_gru", ParallelGRU(_parallel_biases(init_parallel_gru(I, H, 2, rng), rng))),
    ]
    out = []
    for name, layer in layers:
        if name == "per_band_conv":
            inputs = layer.example_inputs(rng, patch=5, bands=3)
        elif name == "shorten_conv":
            inputs = layer.example_inputs(rng, length=10)
        else:
            inputs = layer.example_inputs(rng)
        out.append((name, layer, inputs))
    model = build(ModelSpec(seed=seed, **TINY_MODEL))
    out.append(("st_ss_pgru_model", model.network, model.network.example_inputs(rng)))
    return out


def gradcheck_suite(seed=0, tol=1e-6):
    """Run ``gradcheck`` on every instance; returns ``[(name, report), ...]``."""
    return [(name, gradcheck(layer, seed=seed, inputs=inputs, tol=tol))
            for name, layer, inputs in check_instances(seed)]
