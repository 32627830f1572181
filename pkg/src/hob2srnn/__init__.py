"""Two-branch gated-recurrent classifier for multi-source satellite image time
series, with tanh-relaxed attention pooling and hierarchical label pretraining."""

__version__ = "0.1.0"

from .errors import InputError, OracleError, ParseError, ShapeError, StateError
from .kernel import AdamState, SeededRng, adam_step, elementwise, finite_diff_grad, glorot_init, matmul
from .model import Hob2srnnModel, ModelConfig, combine_scores, load_checkpoint, loss_total, save_checkpoint
from .hierarchy import ClassHierarchy, load_hierarchy, parse_hierarchy, pretrain_schedule, pretrain_transfer
from .data import Dataset, DatasetHeader, SegmentSample, SynthSpec, synth_generate
from .traineval import MetricsReport, TrainConfig, evaluate, multi_run, train

__all__ = [
    "AdamState", "ClassHierarchy", "Dataset", "DatasetHeader", "Hob2srnnModel",
    "InputError", "MetricsReport", "ModelConfig", "OracleError", "ParseError",
    "SeededRng", "SegmentSample", "ShapeError", "StateError", "SynthSpec",
    "TrainConfig", "adam_step", "combine_scores", "elementwise", "evaluate",
    "finite_diff_grad", "glorot_init", "load_checkpoint", "load_hierarchy",
    "loss_total", "matmul", "multi_run", "parse_hierarchy", "pretrain_schedule",
    "pretrain_transfer", "save_checkpoint", "synth_generate", "train",
]
