"""Multi-level binary weight approximation, fixed-point reference and a
cycle-level model of a binary-weight systolic array accelerator."""

import json
import os

import numpy as np

from ._core import (
    AssembleError,
    CompileError,
    ConfigError,
    FormatError,
    InvalidInput,
    approximate,
    assemble,
    compression_factor,
    disassemble,
    quantize,
    quantize_image,
    requantize,
)

__all__ = [
    "AssembleError",
    "CompileError",
    "ConfigError",
    "FormatError",
    "InvalidInput",
    "approximate",
    "assemble",
    "compile_network",
    "compression_factor",
    "disassemble",
    "estimate",
    "load_network",
    "network_compression",
    "quantize",
    "quantize_image",
    "requantize",
    "simulate",
]

from . import _core


def load_network(spec):
    """Accepts a dict, a JSON string or a path to a JSON file; returns a dict."""
    if isinstance(spec, dict):
        return spec
    if isinstance(spec, (str, os.PathLike)) and os.path.exists(spec):
        with open(spec) as f:
            return json.load(f)
    return json.loads(spec)


def _text(spec):
    return json.dumps(load_network(spec))


def network_compression(spec, levels):
    return json.loads(_core._network_compression(_text(spec), levels))


def compile_network(spec, config="1x8x2"):
    """Assembly text of the program that runs the network."""
    return _core._compile(_text(spec), config)


def estimate(spec, config="1x8x2", formula="output", offload=False, clock_mhz=400.0):
    return json.loads(_core._estimate(_text(spec), config, formula, offload, clock_mhz))


def simulate(spec, weights, images, biases=None, config="1x8x2", mode="high_throughput", algorithm="refined"):
    """Approximates `weights` (one array per layer), runs `images` (raw 8-bit
    activations, [C][H][W]) through the simulated array and returns the outputs,
    the fixed-point reference outputs and per-frame cycle reports."""
    r = _core._simulate(
        _text(spec),
        [np.asarray(w, dtype=np.float64) for w in weights],
        [np.asarray(b, dtype=np.float64) for b in (biases or [])],
        [np.asarray(i, dtype=np.int32) for i in images],
        config,
        mode,
        algorithm,
    )
    r["frames"] = [json.loads(f) for f in r["frames"]]
    r["network"] = json.loads(r["network"])
    return r
