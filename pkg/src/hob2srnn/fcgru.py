"""Fully connected GRU cell: two-layer tanh input enrichment ahead of a GRU update.

The tape-level functions (`*_t`) work on mini-batches, one B x n tensor per
timestep. The plain functions at the bottom are single-sample numpy wrappers
around the same graph, convenient for tests and inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from types import SimpleNamespace

import numpy as np

from . import tape
from .errors import InputError, ShapeError
from .kernel import SeededRng, glorot_init


@dataclass
class FcgruParams:
    """All weight matrices of the cell. Biases are 1 x n rows.

    W1/b1/W2/b2 are None when enrichment is disabled (plain GRU; requires
    u2 == input channel count). With candidate_raw_input the candidate branch
    consumes the raw timestep input, so Whx is C x d instead of u2 x d.
    """

    W1: np.ndarray | None
    b1: np.ndarray | None
    W2: np.ndarray | None
    b2: np.ndarray | None
    Wzx: np.ndarray
    Wzh: np.ndarray
    bz: np.ndarray
    Wrx: np.ndarray
    Wrh: np.ndarray
    br: np.ndarray
    Whx: np.ndarray
    Whr: np.ndarray
    bh: np.ndarray
    candidate_raw_input: bool = False

    @property
    def input_channels(self) -> int:
        return self.W1.shape[0] if self.W1 is not None else self.Wzx.shape[0]

    @property
    def enriched_width(self) -> int:
        return self.Wzx.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.Wzh.shape[0]


def init_params(
    channels: int,
    u1: int,
    u2: int,
    hidden: int,
    rng: SeededRng,
    enrich: bool = True,
    candidate_raw_input: bool = False,
) -> FcgruParams:
    """Glorot-uniform weights, zero biases."""
    if enrich:
        W1, b1 = glorot_init(channels, u1, rng), np.zeros((1, u1))
        W2, b2 = glorot_init(u1, u2, rng), np.zeros((1, u2))
    else:
        if u2 != channels:
            raise ShapeError(f"identity enrichment needs u2 == channels, got u2={u2}, channels={channels}")
        W1 = b1 = W2 = b2 = None
    cand_in = channels if candidate_raw_input else u2
    return FcgruParams(
        W1=W1, b1=b1, W2=W2, b2=b2,
        Wzx=glorot_init(u2, hidden, rng), Wzh=glorot_init(hidden, hidden, rng), bz=np.zeros((1, hidden)),
        Wrx=glorot_init(u2, hidden, rng), Wrh=glorot_init(hidden, hidden, rng), br=np.zeros((1, hidden)),
        Whx=glorot_init(cand_in, hidden, rng), Whr=glorot_init(hidden, hidden, rng), bh=np.zeros((1, hidden)),
        candidate_raw_input=candidate_raw_input,
    )


def named_arrays(params: FcgruParams, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for f in fields(params):
        v = getattr(params, f.name)
        if isinstance(v, np.ndarray):
            out[f"{prefix}.{f.name}"] = v
    return out


def tensorize(params: FcgruParams) -> SimpleNamespace:
    ns = SimpleNamespace(candidate_raw_input=params.candidate_raw_input)
    for f in fields(params):
        v = getattr(params, f.name)
        if isinstance(v, np.ndarray):
            setattr(ns, f.name, tape.leaf(v))
        elif v is None:
            setattr(ns, f.name, None)
    return ns


@dataclass
class FcgruTrace:
    """Per-timestep values recorded during unroll (numpy snapshots)."""

    inputs: list
    enriched: list
    z: list
    r: list
    candidate: list
    hidden: list
    fc1_masks: list
    gate_masks: list


def _dropout_mask(rng: SeededRng, rate: float, shape) -> np.ndarray:
    # Inverted dropout: mask already carries the 1/(1-rate) rescale.
    return rng.bernoulli(1.0 - rate, shape) / (1.0 - rate)


def enrich_t(pt, x_t: tape.Tensor, dropout_rate: float = 0.0,
             training: bool = False, rng: SeededRng | None = None):
    """Eq.-style enrichment tanh(W2 tanh(W1 x + b1) + b2); returns (x', fc1 mask)."""
    if pt.W1 is None:
        return x_t, None
    if x_t.shape[1] != pt.W1.value.shape[0]:
        raise ShapeError(f"enrich: input has {x_t.shape[1]} channels, expected {pt.W1.value.shape[0]}")
    h1 = tape.tanh(tape.add(tape.matmul(x_t, pt.W1), pt.b1))
    mask = None
    if training and dropout_rate > 0.0:
        mask = _dropout_mask(rng, dropout_rate, h1.shape)
        h1 = tape.mul_const(h1, mask)
    return tape.tanh(tape.add(tape.matmul(h1, pt.W2), pt.b2)), mask


def step_t(pt, x_enr: tape.Tensor, h_prev: tape.Tensor, x_raw: tape.Tensor | None = None):
    """One gated update; returns (h_t, z, r, candidate)."""
    if x_enr.shape[1] != pt.Wzx.value.shape[0]:
        raise ShapeError(f"step: enriched width {x_enr.shape[1]} != {pt.Wzx.value.shape[0]}")
    if h_prev.shape[1] != pt.Wzh.value.shape[0]:
        raise ShapeError(f"step: hidden width {h_prev.shape[1]} != {pt.Wzh.value.shape[0]}")
    z = tape.sigmoid(tape.add(tape.add(tape.matmul(x_enr, pt.Wzx), tape.matmul(h_prev, pt.Wzh)), pt.bz))
    r = tape.sigmoid(tape.add(tape.add(tape.matmul(x_enr, pt.Wrx), tape.matmul(h_prev, pt.Wrh)), pt.br))
    cand_src = x_raw if pt.candidate_raw_input else x_enr
    cand = tape.tanh(tape.add(tape.add(tape.matmul(cand_src, pt.Whx),
                                       tape.matmul(tape.mul(r, h_prev), pt.Whr)), pt.bh))
    one_minus_z = tape.sub(tape.constant(np.ones(z.shape)), z)
    h_t = tape.add(tape.mul(z, h_prev), tape.mul(one_minus_z, cand))
    return h_t, z, r, cand


def unroll_t(pt, series: np.ndarray, dropout_rate: float = 0.0,
             training: bool = False, rng: SeededRng | None = None):
    """Run a (B, T, C) batch through the cell from h_0 = 0.

    Returns (list of T hidden tensors, each B x d, FcgruTrace).
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 3 or series.shape[1] < 1:
        raise InputError(f"unroll expects a nonempty (B, T, C) series, got shape {series.shape}")
    batch, steps, _ = series.shape
    d = pt.Wzh.value.shape[0]
    h = tape.constant(np.zeros((batch, d)))
    trace = FcgruTrace([], [], [], [], [], [], [], [])
    hs = []
    for t in range(steps):
        x_t = tape.constant(series[:, t, :])
        x_enr, fc1_mask = enrich_t(pt, x_t, dropout_rate, training, rng)
        gate_mask = None
        if training and dropout_rate > 0.0:
            gate_mask = _dropout_mask(rng, dropout_rate, x_enr.shape)
            x_enr = tape.mul_const(x_enr, gate_mask)
        h, z, r, cand = step_t(pt, x_enr, h, x_raw=x_t)
        hs.append(h)
        trace.inputs.append(series[:, t, :])
        trace.enriched.append(x_enr.value)
        trace.z.append(z.value)
        trace.r.append(r.value)
        trace.candidate.append(cand.value)
        trace.hidden.append(h.value)
        trace.fc1_masks.append(fc1_mask)
        trace.gate_masks.append(gate_mask)
    return hs, trace


# ---------------------------------------------------------------------------
# Single-sample numpy wrappers


def enrich(params: FcgruParams, x_t: np.ndarray, dropout_rate: float = 0.0,
           training: bool = False, rng: SeededRng | None = None) -> np.ndarray:
    x = np.asarray(x_t, dtype=np.float64).reshape(1, -1)
    out, _ = enrich_t(tensorize(params), tape.constant(x), dropout_rate, training, rng)
    return out.value[0]


def step(params: FcgruParams, x_enr: np.ndarray, h_prev: np.ndarray,
         x_raw: np.ndarray | None = None):
    """Single-row gated update; returns (h_t, z, r, candidate) as 1-D arrays."""
    pt = tensorize(params)
    xe = tape.constant(np.asarray(x_enr, dtype=np.float64).reshape(1, -1))
    hp = tape.constant(np.asarray(h_prev, dtype=np.float64).reshape(1, -1))
    xr = None
    if params.candidate_raw_input:
        if x_raw is None:
            raise InputError("candidate_raw_input cell needs the raw x_t")
        xr = tape.constant(np.asarray(x_raw, dtype=np.float64).reshape(1, -1))
    h_t, z, r, cand = step_t(pt, xe, hp, x_raw=xr)
    return h_t.value[0], z.value[0], r.value[0], cand.value[0]


def unroll(params: FcgruParams, series: np.ndarray, dropout_rate: float = 0.0,
           training: bool = False, rng: SeededRng | None = None):
    """Run one (T, C) series; returns (H as T x d array, FcgruTrace)."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise InputError(f"expected a (T, C) series, got shape {series.shape}")
    hs, trace = unroll_t(tensorize(params), series[None, :, :], dropout_rate, training, rng)
    return np.vstack([h.value for h in hs]), trace
