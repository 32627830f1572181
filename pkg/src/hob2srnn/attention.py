"""Temporal pooling of hidden-state sequences.

Three modes: the tanh-relaxed attention (per-timestamp weights in [-1,1], no
sum constraint), the conventional softmax attention, and plain temporal mean
pooling for the no-attention ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import tape
from .errors import ShapeError
from .kernel import SeededRng, glorot_init


@dataclass
class AttentionParams:
    W: np.ndarray  # d x d
    b: np.ndarray  # 1 x d
    u: np.ndarray  # d x 1


def init_params(hidden: int, rng: SeededRng) -> AttentionParams:
    return AttentionParams(
        W=glorot_init(hidden, hidden, rng),
        b=np.zeros((1, hidden)),
        u=glorot_init(hidden, 1, rng),
    )


def named_arrays(params: AttentionParams, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.W": params.W, f"{prefix}.b": params.b, f"{prefix}.u": params.u}


def tensorize(params: AttentionParams) -> SimpleNamespace:
    return SimpleNamespace(W=tape.leaf(params.W), b=tape.leaf(params.b), u=tape.leaf(params.u))


@dataclass
class AttentionOutput:
    """Single-sample pooling result: one score/weight per timestamp."""

    scores: np.ndarray   # (N,)
    lambdas: np.ndarray  # (N,)
    feat: np.ndarray     # (d,)


def _scores_t(pt, hs) -> list[tape.Tensor]:
    # score_t = tanh(h_t W + b) . u, one B x 1 column per timestep
    out = []
    for h in hs:
        if h.shape[1] != pt.W.value.shape[0]:
            raise ShapeError(f"attention: hidden width {h.shape[1]} != {pt.W.value.shape[0]}")
        out.append(tape.matmul(tape.tanh(tape.add(tape.matmul(h, pt.W), pt.b)), pt.u))
    return out


def attend_tanh_t(pt, hs):
    """Batched tanh attention over a list of B x d tensors.

    Returns (scores B x N, lambdas B x N, feat B x d).
    """
    score_cols = _scores_t(pt, hs)
    lam_cols = [tape.tanh(s) for s in score_cols]
    feat = tape.add_n([tape.mul(lam, h) for lam, h in zip(lam_cols, hs)])
    return tape.hstack(score_cols), tape.hstack(lam_cols), feat


def attend_softmax_t(pt, hs):
    """Batched softmax attention; lambdas are a probability row per sample."""
    scores = tape.hstack(_scores_t(pt, hs))
    lambdas = tape.row_softmax(scores)
    feat = tape.add_n([tape.mul(tape.col(lambdas, i), h) for i, h in enumerate(hs)])
    return scores, lambdas, feat


def pool_noatt_t(hs) -> tape.Tensor:
    """Temporal mean of the hidden states (no-attention ablation)."""
    return tape.scale(tape.add_n(hs), 1.0 / len(hs))


def _rows(H: np.ndarray) -> list[tape.Tensor]:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise ShapeError(f"expected a nonempty (N, d) hidden matrix, got shape {H.shape}")
    return [tape.constant(H[i : i + 1, :]) for i in range(H.shape[0])]


def attend_tanh(params: AttentionParams, H: np.ndarray) -> AttentionOutput:
    scores, lambdas, feat = attend_tanh_t(tensorize(params), _rows(H))
    return AttentionOutput(scores.value[0], lambdas.value[0], feat.value[0])


def attend_softmax(params: AttentionParams, H: np.ndarray) -> AttentionOutput:
    scores, lambdas, feat = attend_softmax_t(tensorize(params), _rows(H))
    return AttentionOutput(scores.value[0], lambdas.value[0], feat.value[0])


def pool_noatt(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1:
        raise ShapeError(f"expected a nonempty (N, d) hidden matrix, got shape {H.shape}")
    return H.mean(axis=0)
