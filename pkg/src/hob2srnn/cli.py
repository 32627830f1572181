"""Command-line entry point.

Commands: synth, split, train, eval, attention, ablate. Configuration comes
from defaults, overridden by a JSON config file, overridden by flags.
Exit codes: 0 success, 2 usage error, 3 input/validation error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, data as data_mod, traineval
from .errors import InputError, ParseError, ShapeError, StateError
from .hierarchy import load_hierarchy
from .kernel import SeededRng
from .model import load_checkpoint, save_checkpoint

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


class UsageError(Exception):
    pass


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _dataset_paths(dataset_dir: Path):
    return dataset_dir / "data.csv", dataset_dir / "header.json", dataset_dir / "hierarchy.txt"


def _load_dataset(dataset_dir: Path, ndvi_dropped: bool = False):
    data_path, header_path, hier_path = _dataset_paths(dataset_dir)
    if not hier_path.exists():
        raise InputError(f"hierarchy not found: {hier_path}")
    if not data_path.exists() or not header_path.exists():
        raise InputError(f"dataset files not found under {dataset_dir}")
    return data_mod.load_dataset(data_path, header_path, hier_path, ndvi_dropped=ndvi_dropped)


def _train_config(args) -> traineval.TrainConfig:
    values = {f.name: f.default for f in dataclasses.fields(traineval.TrainConfig)}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ParseError(f"bad config file {path}: {e}") from e
        unknown = set(loaded) - set(values)
        if unknown:
            raise ParseError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return traineval.TrainConfig(**values)


def _run_dir(out_dir: Path, config: traineval.TrainConfig) -> Path:
    digest = hashlib.sha256(json.dumps(dataclasses.asdict(config), sort_keys=True).encode()).hexdigest()[:8]
    run = out_dir / f"run-seed{config.seed}-{digest}"
    run.mkdir(parents=True, exist_ok=True)
    return run


def cmd_synth(args) -> int:
    spec = data_mod.SynthSpec()
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise InputError(f"spec file not found: {path}")
        spec = data_mod.SynthSpec.from_json(path.read_text())
    dataset, hier = data_mod.synth_generate(spec, SeededRng(args.seed))
    problems = hier.validate()
    if problems:
        raise InputError("generated hierarchy invalid: " + "; ".join(problems))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path, header_path, hier_path = _dataset_paths(out)
    data_mod.save_dataset(dataset, data_path, header_path, hier_path)
    for p in (data_path, header_path, hier_path):
        print(f"{_file_digest(p)}  {p}")
    return 0


def cmd_split(args) -> int:
    dataset = _load_dataset(Path(args.dataset))
    parts = data_mod.split_grouped(dataset, tuple(args.fractions), SeededRng(args.seed))
    payload = {name: sorted(s.segment_id for s in part)
               for name, part in zip(("train", "val", "test"), parts)}
    payload["seed"] = args.seed
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2))
    print(f"wrote {out}: " + ", ".join(f"{k}={len(payload[k])}" for k in ("train", "val", "test")))
    return 0


def _write_metrics(report: traineval.MetricsReport, path: Path | None) -> str:
    text = json.dumps(report.as_dict(), indent=2)
    if path is not None:
        path.write_text(text)
    return text


def cmd_train(args) -> int:
    config = _train_config(args)
    dataset_dir = Path(args.dataset)
    dataset = _load_dataset(dataset_dir)
    hier = dataset.hierarchy
    run_dir = _run_dir(Path(args.out), config)
    data_path, _, hier_path = _dataset_paths(dataset_dir)
    manifest = {
        "tool_version": __version__,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "dataset_digest": _file_digest(data_path),
        "hierarchy_digest": hier.digest(),
        "outputs": {
            "checkpoint": str(run_dir / "checkpoint.npz"),
            "epoch_log": str(run_dir / "epochs.csv"),
            "metrics": str(run_dir / "metrics.json"),
        },
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))

    model, report, log, stats = traineval.single_run(dataset, hier, config, config.seed)
    save_checkpoint(model, run_dir / "checkpoint.npz", hierarchy_digest=hier.digest(),
                    seed=config.seed, norm_stats=stats)
    with open(run_dir / "epochs.csv", "w", encoding="utf-8") as fh:
        fh.write("level,epoch,train_loss,l_rad,l_opt,l_fused,val_accuracy\n")
        for rec in log:
            fh.write(f"{rec.level},{rec.epoch},{rec.train_loss!r},{rec.l_rad!r},"
                     f"{rec.l_opt!r},{rec.l_fused!r},{rec.val_accuracy!r}\n")
    print(_write_metrics(report, run_dir / "metrics.json"))
    print(f"run artifacts in {run_dir}")
    return 0


def _restore(checkpoint_path: Path, dataset_dir: Path):
    if not checkpoint_path.exists():
        raise InputError(f"checkpoint not found: {checkpoint_path}")
    model, meta, stats = load_checkpoint(checkpoint_path)
    dataset = _load_dataset(dataset_dir, ndvi_dropped=meta["config"]["c_opt"] == 4)
    if dataset.hierarchy.digest() != meta["hierarchy_digest"]:
        raise InputError("checkpoint was trained against a different hierarchy")
    if stats is not None:
        dataset.samples = [data_mod.apply_normalize(stats, s) for s in dataset.samples]
    return model, meta, dataset


def cmd_eval(args) -> int:
    model, meta, dataset = _restore(Path(args.checkpoint), Path(args.dataset))
    samples = dataset.samples
    if args.split_file:
        split = json.loads(Path(args.split_file).read_text())
        wanted = set(split[args.partition])
        samples = [s for s in samples if s.segment_id in wanted]
    level = args.level if args.level is not None else dataset.hierarchy.target_level
    report = traineval.evaluate(model, samples, dataset.hierarchy, level)
    out = Path(args.out) if args.out else None
    print(_write_metrics(report, out))
    return 0


def cmd_attention(args) -> int:
    model, meta, dataset = _restore(Path(args.checkpoint), Path(args.dataset))
    hier = dataset.hierarchy
    level = args.level if args.level is not None else hier.target_level
    samples = dataset.samples
    if args.class_name is not None:
        names = hier.levels[level]
        if args.class_name not in names:
            raise UsageError(f"unknown class {args.class_name!r} at level {level}")
        target = names.index(args.class_name)
        if args.filter_by == "true":
            samples = [s for s in samples if hier.ancestor_label(s.label, level) == target]
        else:
            xr = np.stack([s.radar for s in samples])
            xo = np.stack([s.optical for s in samples])
            preds = model.predict_batch(xr, xo, level)
            samples = [s for s, p in zip(samples, preds) if p == target]
    export = traineval.export_attention(model, samples, hier, level, dataset.header)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for key, rows in export.rows.items():
        path = out / f"attention_{key}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("segment_id,class," + ",".join(export.dates[key]) + "\n")
            for seg_id, cls, weights in rows:
                fh.write(f"{seg_id},{cls}," + ",".join(repr(float(w)) for w in weights) + "\n")
        print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_ablate(args) -> int:
    dataset = _load_dataset(Path(args.dataset))
    hier = dataset.hierarchy
    base = _train_config(args)
    variants = [("none", "both"), ("noAtt", "both"), ("softmaxAtt", "both"),
                ("noHierPre", "both"), ("noEnrich", "both"), ("noNDVI", "both"),
                ("none", "radar"), ("none", "optical")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for ablation, source in variants:
        config = dataclasses.replace(base, ablation=ablation, source=source)
        _, report, _, _ = traineval.single_run(dataset, hier, config, config.seed)
        name = ablation if source == "both" else f"single_{source}"
        summary[name] = report.as_dict()
        print(f"{name:>14}: accuracy={report.accuracy:.4f} f1={report.f1_weighted:.4f} kappa={report.kappa:.4f}")
    (out / "ablation_summary.json").write_text(json.dumps(summary, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hob2srnn",
                                     description="Two-branch recurrent time-series classifier")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", help="JSON synthetic spec file (defaults mirror 16x2 + 19x5 shapes)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="write a group-exclusive train/val/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", type=float, nargs=3, default=[0.5, 0.2, 0.3])
    p.set_defaults(func=cmd_split)

    def add_train_flags(p):
        p.add_argument("--config", help="JSON file with TrainConfig fields")
        p.add_argument("--epochs-per-level", dest="epochs_per_level", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--dropout", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--u1", type=int)
        p.add_argument("--u2", type=int)
        p.add_argument("--hidden", type=int)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    add_train_flags(p)
    p.add_argument("--ablate", dest="ablation", choices=traineval.ABLATIONS)
    p.add_argument("--source", choices=traineval.SOURCES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split-file", help="split JSON from the split/train commands")
    p.add_argument("--partition", default="test", choices=["train", "val", "test"])
    p.add_argument("--level", type=int)
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("attention", help="export per-sample attention weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--class-name", dest="class_name")
    p.add_argument("--filter-by", dest="filter_by", default="true", choices=["true", "pred"])
    p.add_argument("--level", type=int)
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("ablate", help="sweep all ablation variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, ParseError, ShapeError, StateError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
