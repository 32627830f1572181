"""The full two-branch classifier: per-source FCGRU + attention, fused attention
over the concatenated hidden states, and three linear+softmax heads per
hierarchy level, trained with the 0.5/0.5/1.0 weighted loss and predicted with
the same weighting of the three probability rows.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import attention, fcgru, tape
from .errors import InputError, ShapeError, StateError
from .kernel import SeededRng, glorot_init

FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    c_rad: int
    c_opt: int
    class_counts: list[int]          # classes per hierarchy level, general first
    u1: int = 64
    u2: int = 128
    hidden: int = 512
    dropout: float = 0.4
    attention_mode: str = "tanh"     # tanh | softmax | none
    enrich: bool = True
    candidate_raw_input: bool = False
    source: str = "both"             # both | radar | optical


@dataclass
class LevelHeads:
    w_rad: np.ndarray | None
    b_rad: np.ndarray | None
    w_opt: np.ndarray | None
    b_opt: np.ndarray | None
    w_fused: np.ndarray
    b_fused: np.ndarray


@dataclass
class LossBreakdown:
    l_rad: float
    l_opt: float
    l_fused: float
    l_total: float


@dataclass
class PredictionScores:
    score_rad: np.ndarray
    score_opt: np.ndarray
    score_fused: np.ndarray
    score_combined: np.ndarray


@dataclass
class ForwardResult:
    level: int
    loss: tape.Tensor | None
    breakdown: LossBreakdown | None
    scores: PredictionScores
    lambdas: dict          # rad/opt/fused -> (B, N) arrays, or None in NoAtt mode
    att_scores: dict       # same keying, raw attention scores
    traces: dict           # rad/opt -> FcgruTrace
    tensors: dict          # parameter namespaces used by this pass (for grads)


def loss_total(l_rad: float, l_opt: float, l_fused: float) -> float:
    """Auxiliary losses weighted 0.5 each, fused loss weighted 1."""
    return 0.5 * l_rad + 0.5 * l_opt + l_fused


def combine_scores(score_rad: np.ndarray, score_opt: np.ndarray, score_fused: np.ndarray) -> np.ndarray:
    """0.5/0.5/1.0 weighting of the three classifiers' probability rows."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (score_rad, score_opt, score_fused))
    if not (a.shape == b.shape == c.shape):
        raise ShapeError(f"score shapes differ: {a.shape}, {b.shape}, {c.shape}")
    return 0.5 * a + 0.5 * b + c


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _collect_grads(prefix: str, params_obj, tensor_ns, out: dict) -> None:
    for f in fields(params_obj):
        v = getattr(params_obj, f.name)
        if isinstance(v, np.ndarray):
            t = getattr(tensor_ns, f.name)
            out[f"{prefix}.{f.name}"] = t.grad if t.grad is not None else np.zeros_like(v)


def _tensorize_heads(heads: LevelHeads):
    from types import SimpleNamespace

    ns = SimpleNamespace()
    for f in fields(heads):
        v = getattr(heads, f.name)
        setattr(ns, f.name, tape.leaf(v) if isinstance(v, np.ndarray) else None)
    return ns


class Hob2srnnModel:
    def __init__(self, config: ModelConfig, rng: SeededRng):
        self.config = config
        d = config.hidden
        self.rad = None
        self.opt = None
        if config.source in ("both", "radar"):
            u2 = config.u2 if config.enrich else config.c_rad
            self.rad = fcgru.init_params(config.c_rad, config.u1, u2, d, rng,
                                         enrich=config.enrich,
                                         candidate_raw_input=config.candidate_raw_input)
        if config.source in ("both", "optical"):
            u2 = config.u2 if config.enrich else config.c_opt
            self.opt = fcgru.init_params(config.c_opt, config.u1, u2, d, rng,
                                         enrich=config.enrich,
                                         candidate_raw_input=config.candidate_raw_input)
        self.att_rad = self.att_opt = self.att_fused = None
        if config.attention_mode != "none":
            if config.source == "both":
                self.att_rad = attention.init_params(d, rng)
                self.att_opt = attention.init_params(d, rng)
            self.att_fused = attention.init_params(d, rng)
        self.heads: list[LevelHeads] = []
        for level in range(len(config.class_counts)):
            self.heads.append(self._make_heads(level, rng))
        self.trained_levels: set[int] = set()

    def _make_heads(self, level: int, rng: SeededRng) -> LevelHeads:
        d, k = self.config.hidden, self.config.class_counts[level]
        if self.config.source == "both":
            return LevelHeads(
                w_rad=glorot_init(d, k, rng), b_rad=np.zeros((1, k)),
                w_opt=glorot_init(d, k, rng), b_opt=np.zeros((1, k)),
                w_fused=glorot_init(d, k, rng), b_fused=np.zeros((1, k)),
            )
        return LevelHeads(w_rad=None, b_rad=None, w_opt=None, b_opt=None,
                          w_fused=glorot_init(d, k, rng), b_fused=np.zeros((1, k)))

    def init_heads(self, level: int, rng: SeededRng) -> None:
        self._check_level(level)
        self.heads[level] = self._make_heads(level, rng)
        self.trained_levels.discard(level)

    def clone(self) -> "Hob2srnnModel":
        return copy.deepcopy(self)

    def _check_level(self, level: int) -> None:
        if not 0 <= level < len(self.config.class_counts):
            raise InputError(f"unknown hierarchy level {level}; model has {len(self.config.class_counts)}")

    # -- parameter registry ------------------------------------------------

    def parameters(self, level: int | None = None) -> dict[str, np.ndarray]:
        """Name -> array map; with a level, only that level's heads are included."""
        out: dict[str, np.ndarray] = {}
        if self.rad is not None:
            out.update(fcgru.named_arrays(self.rad, "rad"))
        if self.opt is not None:
            out.update(fcgru.named_arrays(self.opt, "opt"))
        for name, p in (("att_rad", self.att_rad), ("att_opt", self.att_opt), ("att_fused", self.att_fused)):
            if p is not None:
                out.update(attention.named_arrays(p, name))
        levels = range(len(self.heads)) if level is None else [level]
        for lv in levels:
            self._check_level(lv)
            for f in fields(self.heads[lv]):
                v = getattr(self.heads[lv], f.name)
                if isinstance(v, np.ndarray):
                    out[f"head{lv}.{f.name}"] = v
        return out

    def param_digest(self, include_heads: bool = False) -> str:
        h = hashlib.sha256()
        for name in sorted(self.parameters()):
            if not include_heads and name.startswith("head"):
                continue
            h.update(name.encode())
            h.update(self.parameters()[name].tobytes())
        return h.hexdigest()

    # -- forward -----------------------------------------------------------

    def forward_batch(self, x_rad, x_opt, labels, level: int,
                      training: bool = False, rng: SeededRng | None = None) -> ForwardResult:
        """Run a mini-batch through both branches at one hierarchy level.

        x_rad: (B, T_r, C_r) or None; x_opt: (B, T_o, C_o) or None;
        labels: (B,) int class indices at `level`, or None for inference.
        """
        self._check_level(level)
        cfg = self.config
        if training and cfg.dropout > 0.0 and rng is None:
            raise InputError("training with dropout needs an rng")
        drop = cfg.dropout if training else 0.0

        tensors: dict = {}
        traces: dict = {}
        hs_rad = hs_opt = None
        if cfg.source in ("both", "radar"):
            if x_rad is None:
                raise InputError("model expects a radar series")
            tensors["rad"] = fcgru.tensorize(self.rad)
            hs_rad, traces["rad"] = fcgru.unroll_t(tensors["rad"], x_rad, drop, training, rng)
        if cfg.source in ("both", "optical"):
            if x_opt is None:
                raise InputError("model expects an optical series")
            tensors["opt"] = fcgru.tensorize(self.opt)
            hs_opt, traces["opt"] = fcgru.unroll_t(tensors["opt"], x_opt, drop, training, rng)

        lambdas: dict = {"rad": None, "opt": None, "fused": None}
        att_scores: dict = {"rad": None, "opt": None, "fused": None}

        def pool(att_name, hs):
            if cfg.attention_mode == "none":
                return attention.pool_noatt_t(hs)
            pt = attention.tensorize(getattr(self, att_name))
            tensors[att_name] = pt
            fn = attention.attend_tanh_t if cfg.attention_mode == "tanh" else attention.attend_softmax_t
            scores, lams, feat = fn(pt, hs)
            key = att_name.removeprefix("att_")
            lambdas[key] = lams.value
            att_scores[key] = scores.value
            return feat

        heads = self.heads[level]
        tensors[f"head{level}"] = head_t = _tensorize_heads(heads)

        onehot = None
        if labels is not None:
            labels = np.asarray(labels)
            k = cfg.class_counts[level]
            if labels.min() < 0 or labels.max() >= k:
                raise InputError(f"label out of range for level {level} with {k} classes")
            onehot = np.zeros((labels.size, k))
            onehot[np.arange(labels.size), labels] = 1.0

        def classify(feat, w, b):
            logits = tape.add(tape.matmul(feat, w), b)
            if onehot is None:
                return None, _softmax_rows(logits.value)
            return tape.softmax_xent_mean(logits, onehot)

        if cfg.source == "both":
            feat_rad = pool("att_rad", hs_rad)
            feat_opt = pool("att_opt", hs_opt)
            feat_fused = pool("att_fused", hs_rad + hs_opt)
            loss_rad, p_rad = classify(feat_rad, head_t.w_rad, head_t.b_rad)
            loss_opt, p_opt = classify(feat_opt, head_t.w_opt, head_t.b_opt)
            loss_fused, p_fused = classify(feat_fused, head_t.w_fused, head_t.b_fused)
            loss = breakdown = None
            if onehot is not None:
                loss = tape.add(tape.scale(tape.add(loss_rad, loss_opt), 0.5), loss_fused)
                breakdown = LossBreakdown(
                    l_rad=float(loss_rad.value[0, 0]), l_opt=float(loss_opt.value[0, 0]),
                    l_fused=float(loss_fused.value[0, 0]),
                    l_total=loss_total(float(loss_rad.value[0, 0]), float(loss_opt.value[0, 0]),
                                       float(loss_fused.value[0, 0])))
        else:
            # Single-source variant: aux and fused classifiers collapse to one.
            hs = hs_rad if cfg.source == "radar" else hs_opt
            feat = pool("att_fused", hs)
            loss_single, p_fused = classify(feat, head_t.w_fused, head_t.b_fused)
            p_rad = p_opt = p_fused
            loss = breakdown = None
            if onehot is not None:
                loss = loss_single
                l = float(loss_single.value[0, 0])
                breakdown = LossBreakdown(l_rad=0.0, l_opt=0.0, l_fused=l, l_total=loss_total(0.0, 0.0, l))

        scores = PredictionScores(score_rad=p_rad, score_opt=p_opt, score_fused=p_fused,
                                  score_combined=combine_scores(p_rad, p_opt, p_fused))
        return ForwardResult(level=level, loss=loss, breakdown=breakdown, scores=scores,
                             lambdas=lambdas, att_scores=att_scores, traces=traces, tensors=tensors)

    def forward(self, sample, level: int, training: bool = False,
                rng: SeededRng | None = None) -> ForwardResult:
        """Single-sample convenience wrapper; sample is a data.SegmentSample."""
        xr = sample.radar[None, :, :] if sample.radar is not None else None
        xo = sample.optical[None, :, :] if sample.optical is not None else None
        labels = np.array([sample.label]) if sample.label is not None else None
        return self.forward_batch(xr, xo, labels, level, training, rng)

    def gradients(self, result: ForwardResult) -> dict[str, np.ndarray]:
        """Backpropagate result.loss and collect gradients keyed like parameters(level)."""
        if result.loss is None:
            raise StateError("forward pass had no labels; nothing to backpropagate")
        tape.backward(result.loss)
        out: dict[str, np.ndarray] = {}
        for key, ns in result.tensors.items():
            if key == "rad":
                _collect_grads("rad", self.rad, ns, out)
            elif key == "opt":
                _collect_grads("opt", self.opt, ns, out)
            elif key.startswith("att_"):
                _collect_grads(key, getattr(self, key), ns, out)
            elif key.startswith("head"):
                _collect_grads(key, self.heads[result.level], ns, out)
        return out

    def predict_batch(self, x_rad, x_opt, level: int) -> np.ndarray:
        """Argmax of the combined scores, dropout off; ties go to the lowest index."""
        if level not in self.trained_levels:
            raise StateError(f"level {level} has no trained heads")
        result = self.forward_batch(x_rad, x_opt, None, level, training=False)
        return np.argmax(result.scores.score_combined, axis=1)

    def predict(self, sample, level: int) -> int:
        xr = sample.radar[None, :, :] if sample.radar is not None else None
        xo = sample.optical[None, :, :] if sample.optical is not None else None
        return int(self.predict_batch(xr, xo, level)[0])

    def mark_trained(self, level: int) -> None:
        self._check_level(level)
        self.trained_levels.add(level)


# ---------------------------------------------------------------------------
# Checkpoints: one .npz with every parameter under "p::<name>", a JSON metadata
# string under "meta", and optional normalization stats under "norm::min/max".


def save_checkpoint(model: Hob2srnnModel, path, hierarchy_digest: str = "",
                    seed: int = 0, norm_stats=None) -> None:
    arrays = {f"p::{name}": arr for name, arr in model.parameters().items()}
    meta = {
        "version": FORMAT_VERSION,
        "config": asdict(model.config),
        "trained_levels": sorted(model.trained_levels),
        "hierarchy_digest": hierarchy_digest,
        "seed": int(seed),
    }
    arrays["meta"] = np.array(json.dumps(meta))
    if norm_stats is not None:
        arrays["norm::min"] = norm_stats.minimum
        arrays["norm::max"] = norm_stats.maximum
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (model, meta dict, norm_stats or None)."""
    from .data import NormalizationStats

    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        cfg = ModelConfig(**meta["config"])
        model = Hob2srnnModel(cfg, SeededRng(0))
        params = model.parameters()
        for key in z.files:
            if not key.startswith("p::"):
                continue
            name = key[3:]
            if name not in params:
                raise ShapeError(f"checkpoint parameter {name!r} not in model built from its config")
            if params[name].shape != z[key].shape:
                raise ShapeError(f"checkpoint shape {z[key].shape} != model shape {params[name].shape} for {name!r}")
            params[name][...] = z[key]
        model.trained_levels = set(meta["trained_levels"])
        norm = None
        if "norm::min" in z.files:
            norm = NormalizationStats(minimum=z["norm::min"], maximum=z["norm::max"])
    return model, meta, norm
