"""Training loop, hierarchical schedule, metrics, multi-split averaging,
ablation configuration, and attention-weight export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from .data import Dataset
from .errors import InputError
from .hierarchy import ClassHierarchy, pretrain_schedule, pretrain_transfer
from .kernel import AdamState, SeededRng, adam_step
from .model import Hob2srnnModel, ModelConfig

ABLATIONS = ("none", "noAtt", "softmaxAtt", "noHierPre", "noEnrich", "noNDVI")
SOURCES = ("both", "radar", "optical")

_EVAL_BATCH = 256


@dataclass
class TrainConfig:
    epochs_per_level: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-4
    dropout: float = 0.4
    seed: int = 0
    ablation: str = "none"
    source: str = "both"
    # Architecture widths (overridable for desk-scale runs)
    u1: int = 64
    u2: int = 128
    hidden: int = 512

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise InputError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.source not in SOURCES:
            raise InputError(f"unknown source {self.source!r}; choose from {SOURCES}")


def model_config(config: TrainConfig, header, hierarchy: ClassHierarchy) -> ModelConfig:
    """Derive the architecture configuration for a dataset + ablation choice."""
    mode = {"noAtt": "none", "softmaxAtt": "softmax"}.get(config.ablation, "tanh")
    return ModelConfig(
        c_rad=header.c_rad,
        c_opt=header.c_opt,
        class_counts=hierarchy.class_counts(),
        u1=config.u1,
        u2=config.u2,
        hidden=config.hidden,
        dropout=config.dropout,
        attention_mode=mode,
        enrich=config.ablation != "noEnrich",
        source=config.source,
    )


@dataclass
class EpochRecord:
    level: int
    epoch: int
    train_loss: float
    l_rad: float
    l_opt: float
    l_fused: float
    val_accuracy: float


@dataclass
class MetricsReport:
    accuracy: float
    f1_weighted: float
    kappa: float
    per_class_f1: np.ndarray
    confusion: np.ndarray  # counts[true, pred]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_weighted": self.f1_weighted,
            "kappa": self.kappa,
            "per_class_f1": [float(x) for x in self.per_class_f1],
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(y_true, y_pred, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
        cm[t, p] += 1
    return cm


def metrics_from_confusion(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise InputError("empty confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)   # true counts per class
    predicted = cm.sum(axis=0).astype(np.float64)
    accuracy = tp.sum() / total
    denom = 2 * tp + (predicted - tp) + (support - tp)
    per_class_f1 = np.where(denom == 0.0, 0.0, 2 * tp / np.where(denom == 0.0, 1.0, denom))
    f1_weighted = float((support / total) @ per_class_f1)
    p_o = accuracy
    p_e = float((support / total) @ (predicted / total))
    kappa = 0.0 if p_e == 1.0 else (p_o - p_e) / (1.0 - p_e)
    return MetricsReport(accuracy=float(accuracy), f1_weighted=f1_weighted, kappa=float(kappa),
                         per_class_f1=per_class_f1, confusion=cm)


def _level_labels(samples, hierarchy: ClassHierarchy, level: int) -> np.ndarray:
    return np.array([hierarchy.ancestor_label(s.label, level) for s in samples])


def _batch_arrays(samples):
    xr = np.stack([s.radar for s in samples])
    xo = np.stack([s.optical for s in samples])
    return xr, xo


def _predict_all(model: Hob2srnnModel, samples, level: int) -> np.ndarray:
    preds = []
    for i in range(0, len(samples), _EVAL_BATCH):
        chunk = samples[i : i + _EVAL_BATCH]
        xr, xo = _batch_arrays(chunk)
        preds.append(model.predict_batch(xr, xo, level))
    return np.concatenate(preds)


def evaluate(model: Hob2srnnModel, samples, hierarchy: ClassHierarchy, level: int) -> MetricsReport:
    """Dropout-free evaluation via combined-score argmax."""
    if not samples:
        raise InputError("evaluate needs a nonempty sample set")
    y_true = _level_labels(samples, hierarchy, level)
    y_pred = _predict_all(model, samples, level)
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, len(hierarchy.levels[level])))


def train(model: Hob2srnnModel, train_samples, val_samples, hierarchy: ClassHierarchy,
          config: TrainConfig, rng: SeededRng):
    """Run the (possibly hierarchical) schedule; returns (best model, epoch log).

    Per level: shuffled mini-batches of `batch_size`, Adam on the mean total
    loss, validation accuracy after every epoch, and the best-accuracy
    checkpoint (earliest epoch on ties) carried forward. Between levels all
    weights transfer except the next level's freshly initialized heads; Adam
    accumulators restart.
    """
    if not train_samples or not val_samples:
        raise InputError("train and validation partitions must be nonempty")
    log: list[EpochRecord] = []
    if config.epochs_per_level == 0:
        return model, log

    if config.ablation == "noHierPre":
        schedule = [(hierarchy.target_level, config.epochs_per_level)]
    else:
        schedule = pretrain_schedule(hierarchy, config.epochs_per_level)

    xr_val, xo_val = _batch_arrays(val_samples)
    n = len(train_samples)
    for stage, (level, epochs) in enumerate(schedule):
        labels = _level_labels(train_samples, hierarchy, level)
        val_labels = _level_labels(val_samples, hierarchy, level)
        params = model.parameters(level)
        state = AdamState()
        best_acc = -1.0
        best_model = None
        for epoch in range(epochs):
            order = rng.permutation(n)
            losses = np.zeros(4)
            batches = 0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                xr, xo = _batch_arrays([train_samples[i] for i in idx])
                result = model.forward_batch(xr, xo, labels[idx], level, training=True, rng=rng)
                grads = model.gradients(result)
                adam_step(params, grads, state, config.learning_rate)
                b = result.breakdown
                losses += (b.l_total, b.l_rad, b.l_opt, b.l_fused)
                batches += 1
            model.mark_trained(level)
            preds = _predict_all(model, val_samples, level)
            val_acc = float((preds == val_labels).mean())
            losses /= batches
            log.append(EpochRecord(level=level, epoch=epoch, train_loss=float(losses[0]),
                                   l_rad=float(losses[1]), l_opt=float(losses[2]),
                                   l_fused=float(losses[3]), val_accuracy=val_acc))
            if val_acc > best_acc:
                best_acc = val_acc
                best_model = model.clone()
        model = best_model
        if stage + 1 < len(schedule):
            model = pretrain_transfer(model, hierarchy, schedule[stage + 1][0], rng)
    return model, log


def single_run(dataset: Dataset, hierarchy: ClassHierarchy, config: TrainConfig, seed: int):
    """split -> normalize -> build -> train -> evaluate on test at the target level."""
    rng = SeededRng(seed)
    if config.ablation == "noNDVI":
        dataset = data_mod.drop_ndvi(dataset)
    train_s, val_s, test_s = data_mod.split_grouped(dataset, rng=rng.child(1))
    stats = data_mod.fit_normalize(train_s)
    train_s = [data_mod.apply_normalize(stats, s) for s in train_s]
    val_s = [data_mod.apply_normalize(stats, s) for s in val_s]
    test_s = [data_mod.apply_normalize(stats, s) for s in test_s]
    model = Hob2srnnModel(model_config(config, dataset.header, hierarchy), rng.child(2))
    model, log = train(model, train_s, val_s, hierarchy, config, rng.child(3))
    report = evaluate(model, test_s, hierarchy, hierarchy.target_level)
    return model, report, log, stats


def multi_run(dataset: Dataset, hierarchy: ClassHierarchy, config: TrainConfig,
              n_splits: int = 10, base_seed: int = 0):
    """Repeat single_run over n_splits seeds; per-metric mean and sample std."""
    if n_splits < 1:
        raise InputError("n_splits must be >= 1")
    reports = []
    for i in range(n_splits):
        _, report, _, _ = single_run(dataset, hierarchy, config, base_seed + i)
        reports.append(report)
    summary = {}
    for metric in ("accuracy", "f1_weighted", "kappa"):
        vals = np.array([getattr(r, metric) for r in reports])
        std = float(vals.std(ddof=1)) if n_splits > 1 else 0.0
        summary[metric] = (float(vals.mean()), std)
    return summary, reports


@dataclass
class AttentionExport:
    """Per-sample attention weights with their timestamp labels."""

    dates: dict            # rad/opt/fused -> list of date strings
    rows: dict             # rad/opt/fused -> list of (segment_id, class_name, weights)


def export_attention(model: Hob2srnnModel, samples, hierarchy: ClassHierarchy,
                     level: int, header) -> AttentionExport:
    """Tabulate lambda_rad / lambda_opt / lambda_fused; the fused axis is the
    radar timestamps followed by the optical ones."""
    dates = {
        "rad": list(header.radar_dates),
        "opt": list(header.optical_dates),
        "fused": list(header.radar_dates) + list(header.optical_dates),
    }
    if model.config.source == "radar":
        dates["fused"] = dates["rad"]
    elif model.config.source == "optical":
        dates["fused"] = dates["opt"]
    names = hierarchy.levels[level]
    rows = {"rad": [], "opt": [], "fused": []}
    for i in range(0, len(samples), _EVAL_BATCH):
        chunk = samples[i : i + _EVAL_BATCH]
        xr, xo = _batch_arrays(chunk)
        result = model.forward_batch(xr, xo, None, level, training=False)
        for key in rows:
            lam = result.lambdas.get(key)
            if lam is None:
                continue
            for j, s in enumerate(chunk):
                cls = names[hierarchy.ancestor_label(s.label, level)]
                rows[key].append((s.segment_id, cls, lam[j].copy()))
    return AttentionExport(dates=dates, rows=rows)
