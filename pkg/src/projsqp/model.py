"""Minimal fully-connected tanh network over a flat parameter vector.

Parameters live in one 1-d array: per layer, the weight matrix row-major
followed by the bias vector.  Everything here is a pure function of the
spec and that vector, so evaluations are freely parallel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output); tanh on hidden layers only."""

    widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be positive")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def n_params(self) -> int:
        return sum(wi * wo + wo for wi, wo in zip(self.widths, self.widths[1:]))


def init_params(spec: MlpSpec, seed) -> np.ndarray:
    """Glorot-uniform weights, zero biases; bit-identical for a fixed seed.

    `seed` may be anything numpy's default_rng accepts (an int or an
    already-split SeedSequence/Generator).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chunks = []
    for wi, wo in zip(spec.widths, spec.widths[1:]):
        bound = np.sqrt(6.0 / (wi + wo))
        chunks.append(rng.uniform(-bound, bound, size=wi * wo))
        chunks.append(np.zeros(wo))
    return np.concatenate(chunks)


def unflatten(spec: MlpSpec, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split the flat vector into per-layer (W, b) views."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise DimensionMismatch(
            f"theta has shape {theta.shape}, spec needs ({spec.n_params},)"
        )
    layers = []
    pos = 0
    for wi, wo in zip(spec.widths, spec.widths[1:]):
        w = theta[pos:pos + wi * wo].reshape(wo, wi)
        pos += wi * wo
        b = theta[pos:pos + wo]
        pos += wo
        layers.append((w, b))
    return layers


def flatten(spec: MlpSpec, layers) -> np.ndarray:
    out = np.empty(spec.n_params)
    pos = 0
    for w, b in layers:
        out[pos:pos + w.size] = np.asarray(w).ravel()
        pos += w.size
        out[pos:pos + b.size] = np.asarray(b).ravel()
        pos += b.size
    return out


def forward(spec: MlpSpec, theta: np.ndarray, x) -> np.ndarray:
    """Plain numpy forward pass; x is (d_in,) or (d_in, batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != spec.widths[0]:
        raise DimensionMismatch(
            f"input has {x.shape[0]} rows, spec expects {spec.widths[0]}"
        )
    layers = unflatten(spec, theta)
    h = x
    for w, b in layers[:-1]:
        h = np.tanh(w @ h + (b[:, None] if h.ndim == 2 else b))
    w, b = layers[-1]
    return w @ h + (b[:, None] if h.ndim == 2 else b)


def param_leaves(spec: MlpSpec, theta: np.ndarray, tape: ad.Tape):
    """Register every layer's W and b as leaves on a tape, in flat order."""
    return [(tape.leaf(w), tape.leaf(b)) for w, b in unflatten(spec, theta)]


def grads_to_flat(spec: MlpSpec, leaf_grads: list[np.ndarray]) -> np.ndarray:
    """Stitch backward()'s per-leaf partials into flat-vector order."""
    pairs = list(zip(leaf_grads[0::2], leaf_grads[1::2]))
    return flatten(spec, pairs)


def forward_on_tape(spec: MlpSpec, leaves, tape: ad.Tape, x) -> ad.Node:
    """Forward pass recorded on the tape; equals forward() exactly."""
    x = np.asarray(x, dtype=float)
    h = tape.constant(x)
    for w, b in leaves[:-1]:
        h = ad.tanh(ad.affine(w, h, b))
    w, b = leaves[-1]
    return ad.affine(w, h, b)


def forward_jet(spec: MlpSpec, leaves, tape: ad.Tape, t) -> ad.Jet2:
    """Jet forward pass for a one-input network.

    Returns (u, u', u'') with respect to the scalar input t, each a node
    differentiable with respect to the parameter leaves; t may be a batch.
    """
    if spec.widths[0] != 1:
        raise DimensionMismatch("jet forward needs a single-input network")
    jet = ad.input_jet(tape, t)
    for w, b in leaves[:-1]:
        jet = ad.tanh_jet(ad.affine_jet(w, jet, b))
    w, b = leaves[-1]
    return ad.affine_jet(w, jet, b)


def forward_jet_stacked(spec: MlpSpec, leaves, tape: ad.Tape, t) -> ad.Node:
    """Fused jet forward: returns one stacked node (3, out, batch).

    Mathematically identical to forward_jet (a dual-path test pins them
    together); fuses each layer's three jet components into one node so
    training loops spend less time on tape bookkeeping.
    """
    if spec.widths[0] != 1:
        raise DimensionMismatch("jet forward needs a single-input network")
    x = ad.input_jet_stacked(tape, t)
    for w, b in leaves[:-1]:
        x = ad.tanh_jet_stacked(ad.affine_jet_stacked(w, x, b))
    w, b = leaves[-1]
    return ad.affine_jet_stacked(w, x, b)


def forward_jet_values(spec: MlpSpec, theta: np.ndarray, t
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tape-free (u, u', u'') of a one-input network over a batch of t.

    Same propagation rules as forward_jet but on raw arrays; use when only
    the values are needed (diagnostics, constraint values without rows).
    """
    if spec.widths[0] != 1:
        raise DimensionMismatch("jet forward needs a single-input network")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x0 = t[None, :]
    x1 = np.ones_like(x0)
    x2 = np.zeros_like(x0)
    layers = unflatten(spec, theta)
    for w, b in layers[:-1]:
        z0 = w @ x0 + b[:, None]
        z1 = w @ x1
        z2 = w @ x2
        y0 = np.tanh(z0)
        s = 1.0 - y0 * y0
        x0 = y0
        x2 = s * z2 - 2.0 * y0 * s * z1 * z1
        x1 = s * z1
    w, b = layers[-1]
    return (w @ x0 + b[:, None])[0], (w @ x1)[0], (w @ x2)[0]


_MAGIC = b"PSQ1"


def save_params(path, spec: MlpSpec, theta: np.ndarray) -> None:
    """Checkpoint format: widths as little-endian int32 (count first),
    then the flat parameters as little-endian float64."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise DimensionMismatch("theta does not match spec")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<i", len(spec.widths)))
        fh.write(struct.pack(f"<{len(spec.widths)}i", *spec.widths))
        fh.write(theta.astype("<f8").tobytes())


def load_params(path) -> tuple[MlpSpec, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a parameter checkpoint: {path}")
        (count,) = struct.unpack("<i", fh.read(4))
        widths = struct.unpack(f"<{count}i", fh.read(4 * count))
        spec = MlpSpec(widths)
        theta = np.frombuffer(fh.read(8 * spec.n_params), dtype="<f8").copy()
    if theta.shape != (spec.n_params,):
        raise ValueError(f"truncated checkpoint: {path}")
    return spec, theta
