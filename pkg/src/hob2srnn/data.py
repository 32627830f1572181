"""Dataset model, file formats, feature utilities, splits, synthetic generator.

On disk a dataset is three files:

* ``data.csv``   — one row per segment: ``id,group,label,<T_r*C_r radar values>,
  <T_o*C_o optical values>`` (radar flattened timestamp-major, then optical).
  A header row naming the columns is written and skipped on load.
* ``header.json`` — shapes, channel names and acquisition dates.
* ``hierarchy.txt`` — the class taxonomy (see hierarchy.py for the grammar).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError, ParseError
from .hierarchy import ClassHierarchy, load_hierarchy, parse_hierarchy, save_hierarchy
from .kernel import SeededRng


@dataclass
class DatasetHeader:
    t_rad: int
    c_rad: int
    t_opt: int
    c_opt: int
    radar_channels: list[str]
    optical_channels: list[str]
    radar_dates: list[str]
    optical_dates: list[str]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetHeader":
        try:
            return cls(**json.loads(text))
        except (TypeError, json.JSONDecodeError) as e:
            raise ParseError(f"bad header file: {e}") from e


@dataclass
class SegmentSample:
    segment_id: int
    group_id: int
    label: int                # leaf class index at the hierarchy's target level
    radar: np.ndarray         # (T_r, C_r)
    optical: np.ndarray       # (T_o, C_o)


@dataclass
class Dataset:
    header: DatasetHeader
    samples: list[SegmentSample]
    hierarchy: ClassHierarchy


@dataclass
class NormalizationStats:
    """Per-band min/max over all timestamps; bands ordered radar then optical."""

    minimum: np.ndarray
    maximum: np.ndarray


def ndvi(nir, red):
    """(NIR - Red)/(NIR + Red); defined as 0 where the sum vanishes."""
    nir = np.asarray(nir, dtype=np.float64)
    red = np.asarray(red, dtype=np.float64)
    denom = nir + red
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom == 0.0, 0.0, (nir - red) / np.where(denom == 0.0, 1.0, denom))
    return out if out.ndim else float(out)


def gapfill_linear(series, valid_mask) -> np.ndarray:
    """Linear interpolation of masked-out points; edges take the nearest valid value."""
    series = np.asarray(series, dtype=np.float64)
    mask = np.asarray(valid_mask, dtype=bool)
    if series.shape != mask.shape or series.ndim != 1:
        raise InputError("series and valid_mask must be equal-length 1-D arrays")
    if not mask.any():
        raise InputError("gapfill needs at least one valid timestamp")
    idx = np.arange(series.size)
    out = np.interp(idx, idx[mask], series[mask])
    out[mask] = series[mask]  # valid entries stay bit-identical
    return out


def fit_normalize(samples: list[SegmentSample]) -> NormalizationStats:
    if not samples:
        raise InputError("fit_normalize needs at least one training sample")
    rad = np.stack([s.radar for s in samples])      # (n, T_r, C_r)
    opt = np.stack([s.optical for s in samples])
    mins = np.concatenate([rad.min(axis=(0, 1)), opt.min(axis=(0, 1))])
    maxs = np.concatenate([rad.max(axis=(0, 1)), opt.max(axis=(0, 1))])
    return NormalizationStats(minimum=mins, maximum=maxs)


def apply_normalize(stats: NormalizationStats, sample: SegmentSample) -> SegmentSample:
    c_rad = sample.radar.shape[1]

    def scale(values, lo, hi):
        span = hi - lo
        out = np.where(span == 0.0, 0.0, (values - lo) / np.where(span == 0.0, 1.0, span))
        return np.clip(out, 0.0, 1.0)

    return replace(
        sample,
        radar=scale(sample.radar, stats.minimum[:c_rad], stats.maximum[:c_rad]),
        optical=scale(sample.optical, stats.minimum[c_rad:], stats.maximum[c_rad:]),
    )


def split_grouped(dataset: Dataset, fractions=(0.5, 0.2, 0.3), rng: SeededRng | None = None):
    """Assign whole polygon groups to train/val/test targeting the fractions
    by segment count. Returns three sample lists."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InputError(f"fractions must sum to 1, got {fractions}")
    groups: dict[int, list[SegmentSample]] = {}
    for s in dataset.samples:
        groups.setdefault(s.group_id, []).append(s)
    if len(groups) < len(fractions):
        raise InputError(f"only {len(groups)} groups for {len(fractions)} partitions")
    keys = sorted(groups)
    order = rng.permutation(len(keys)) if rng is not None else np.arange(len(keys))
    total = len(dataset.samples)
    targets = [f * total for f in fractions]
    counts = [0] * len(fractions)
    parts: list[list[SegmentSample]] = [[] for _ in fractions]
    for gi in order:
        deficits = [t - c for t, c in zip(targets, counts)]
        p = int(np.argmax(deficits))  # ties go to the lowest partition index
        members = groups[keys[gi]]
        parts[p].extend(members)
        counts[p] += len(members)
    if any(len(p) == 0 for p in parts):
        raise InputError("grouping too coarse: an empty partition resulted")
    return tuple(parts)


def drop_ndvi(dataset: Dataset) -> Dataset:
    """noNDVI variant: remove the NDVI optical channel from header and samples."""
    names = [c.lower() for c in dataset.header.optical_channels]
    if "ndvi" not in names:
        raise InputError("dataset has no 'ndvi' optical channel to drop")
    j = names.index("ndvi")
    keep = [i for i in range(len(names)) if i != j]
    header = replace(
        dataset.header,
        c_opt=dataset.header.c_opt - 1,
        optical_channels=[dataset.header.optical_channels[i] for i in keep],
    )
    samples = [replace(s, optical=s.optical[:, keep]) for s in dataset.samples]
    return Dataset(header=header, samples=samples, hierarchy=dataset.hierarchy)


# ---------------------------------------------------------------------------
# Load / save


def _column_names(header: DatasetHeader) -> list[str]:
    cols = ["id", "group", "label"]
    for t in range(header.t_rad):
        cols += [f"rad_t{t:02d}_{c}" for c in header.radar_channels]
    for t in range(header.t_opt):
        cols += [f"opt_t{t:02d}_{c}" for c in header.optical_channels]
    return cols


def save_dataset(dataset: Dataset, data_path, header_path, hierarchy_path) -> None:
    with open(header_path, "w", encoding="utf-8") as fh:
        fh.write(dataset.header.to_json())
    save_hierarchy(dataset.hierarchy, hierarchy_path)
    leaf_names = dataset.hierarchy.levels[dataset.hierarchy.target_level]
    with open(data_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(_column_names(dataset.header)) + "\n")
        for s in dataset.samples:
            values = np.concatenate([s.radar.ravel(), s.optical.ravel()])
            fh.write(f"{s.segment_id},{s.group_id},{leaf_names[s.label]},")
            fh.write(",".join(repr(float(v)) for v in values) + "\n")


def load_dataset(data_path, header_path, hierarchy_path, ndvi_dropped: bool = False) -> Dataset:
    with open(header_path, "r", encoding="utf-8") as fh:
        header = DatasetHeader.from_json(fh.read())
    hier = load_hierarchy(hierarchy_path)
    problems = hier.validate()
    if problems:
        raise ParseError("invalid hierarchy: " + "; ".join(problems))
    leaf_names = hier.levels[hier.target_level]
    n_rad = header.t_rad * header.c_rad
    n_opt = header.t_opt * header.c_opt
    samples = []
    with open(data_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{data_path}: empty dataset file")
    start = 1 if lines[0].split(",")[0] == "id" else 0
    if len(lines) <= start:
        raise ParseError(f"{data_path}: no data rows")
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3 + n_rad + n_opt:
            raise ParseError(f"{data_path}:{lineno}: expected {3 + n_rad + n_opt} fields, got {len(parts)}")
        try:
            seg_id, group_id = int(parts[0]), int(parts[1])
            values = np.array([float(v) for v in parts[3:]])
        except ValueError as e:
            raise ParseError(f"{data_path}:{lineno}: {e}") from e
        if parts[2] not in leaf_names:
            raise ParseError(f"{data_path}:{lineno}: unknown label {parts[2]!r}")
        if not np.all(np.isfinite(values)):
            raise ParseError(f"{data_path}:{lineno}: non-finite value")
        samples.append(SegmentSample(
            segment_id=seg_id, group_id=group_id, label=leaf_names.index(parts[2]),
            radar=values[:n_rad].reshape(header.t_rad, header.c_rad),
            optical=values[n_rad:].reshape(header.t_opt, header.c_opt),
        ))
    ds = Dataset(header=header, samples=samples, hierarchy=hier)
    return drop_ndvi(ds) if ndvi_dropped else ds


# ---------------------------------------------------------------------------
# Synthetic generator


@dataclass
class SynthSpec:
    """Desk-scale stand-in for the real corpora. Default shapes mirror a
    16x2 radar + 19x5 optical layout with a 2/4/8 three-level taxonomy."""

    level_sizes: list[int] = field(default_factory=lambda: [2, 4, 8])
    total_segments: int = 500
    t_rad: int = 16
    c_rad: int = 2
    t_opt: int = 19
    c_opt: int = 5            # blue/green/red/nir + derived ndvi
    noise: float = 0.05
    group_size: int = 5

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            return cls(**json.loads(text))
        except (TypeError, json.JSONDecodeError) as e:
            raise ParseError(f"bad synthetic spec: {e}") from e


def _make_taxonomy(level_sizes: list[int]) -> ClassHierarchy:
    levels = [[f"c{k}_{i}" for i in range(n)] for k, n in enumerate(level_sizes)]
    parents: list[list[int]] = [[]]
    for k in range(1, len(level_sizes)):
        n_prev, n_cur = level_sizes[k - 1], level_sizes[k]
        if n_cur < n_prev:
            raise InputError("level sizes must be nondecreasing")
        parents.append([i * n_prev // n_cur for i in range(n_cur)])
    return ClassHierarchy(levels=levels, parents=parents)


def _leaf_prototypes(spec: SynthSpec, hier: ClassHierarchy, rng: SeededRng):
    """Smooth per-class temporal curves; children perturb their parent's
    parameters with shrinking scale so siblings stay family-alike."""
    n_bands = spec.c_rad + (spec.c_opt - 1)  # ndvi derived, not drawn
    scales = [1.0] + [0.45] * max(0, hier.num_levels - 2) + [0.22]
    params: list[list[np.ndarray]] = []
    for k, names in enumerate(hier.levels):
        row = []
        for i in range(len(names)):
            if k == 0:
                base = np.stack([
                    rng.uniform(0.35, 0.65, n_bands),   # mean
                    rng.uniform(0.15, 0.30, n_bands),   # amplitude
                    rng.uniform(1.0, 2.5, n_bands),     # frequency
                    rng.uniform(0.0, 2 * np.pi, n_bands),  # phase
                ])
            else:
                base = params[k - 1][hier.parents[k][i]].copy()
                s = scales[min(k, len(scales) - 1)]
                base[0] += rng.uniform(-0.10, 0.10, n_bands) * s
                base[1] += rng.uniform(-0.06, 0.06, n_bands) * s
                base[2] += rng.uniform(-0.5, 0.5, n_bands) * s
                base[3] += rng.uniform(-np.pi, np.pi, n_bands) * s
            row.append(base)
        params.append(row)

    def curve(p, t_steps, band_lo, band_hi):
        t = np.arange(t_steps) / max(t_steps - 1, 1)
        mean, amp, freq, phase = (p[j, band_lo:band_hi] for j in range(4))
        return mean + amp * np.sin(2 * np.pi * freq * t[:, None] + phase)

    protos = []
    for p in params[-1]:
        rad = curve(p, spec.t_rad, 0, spec.c_rad)
        opt = curve(p, spec.t_opt, spec.c_rad, n_bands)
        protos.append((rad, opt))
    return protos


def _with_ndvi(opt_bands: np.ndarray) -> np.ndarray:
    """Append the derived NDVI channel; bands are blue/green/red/nir."""
    bands = np.clip(opt_bands, 0.01, None)
    idx = ndvi(bands[:, 3], bands[:, 2])
    return np.hstack([bands, np.asarray(idx)[:, None]])


def synth_generate(spec: SynthSpec, rng: SeededRng):
    """Seeded synthetic dataset + taxonomy. Identical (spec, seed) pairs give
    identical datasets."""
    if spec.c_opt != 5:
        raise InputError("synthetic optical source is 5 channels (4 bands + ndvi)")
    hier = _make_taxonomy(spec.level_sizes)
    protos = _leaf_prototypes(spec, hier, rng)
    n_leaves = len(protos)
    per_class = [spec.total_segments // n_leaves] * n_leaves
    for i in range(spec.total_segments % n_leaves):
        per_class[i] += 1

    samples = []
    seg_id = 0
    group_id = 0
    for leaf, n in enumerate(per_class):
        rad_proto, opt_proto = protos[leaf]
        made = 0
        while made < n:
            members = min(spec.group_size, n - made)
            g_rad = rng.normal(0.0, spec.noise, rad_proto.shape)
            g_opt = rng.normal(0.0, spec.noise, opt_proto.shape)
            for _ in range(members):
                rad = rad_proto + g_rad + rng.normal(0.0, spec.noise, rad_proto.shape)
                opt = opt_proto + g_opt + rng.normal(0.0, spec.noise, opt_proto.shape)
                samples.append(SegmentSample(
                    segment_id=seg_id, group_id=group_id, label=leaf,
                    radar=rad, optical=_with_ndvi(opt)))
                seg_id += 1
            group_id += 1
            made += members

    header = DatasetHeader(
        t_rad=spec.t_rad, c_rad=spec.c_rad, t_opt=spec.t_opt, c_opt=spec.c_opt,
        radar_channels=(["vv", "vh"] + [f"r{i}" for i in range(2, spec.c_rad)])[: spec.c_rad],
        optical_channels=["blue", "green", "red", "nir", "ndvi"],
        radar_dates=[f"2020-{1 + (14 * t) // 30:02d}-{1 + (14 * t) % 30:02d}" for t in range(spec.t_rad)],
        optical_dates=[f"2020-{1 + (12 * t) // 30:02d}-{1 + (12 * t) % 30:02d}" for t in range(spec.t_opt)],
    )
    return Dataset(header=header, samples=samples, hierarchy=hier), hier


def leaf_prototypes(spec: SynthSpec, rng: SeededRng):
    """Expose the generator's class prototypes (for nearest-prototype oracles)."""
    hier = _make_taxonomy(spec.level_sizes)
    protos = _leaf_prototypes(spec, hier, rng)
    return [(rad, _with_ndvi(opt)) for rad, opt in protos]
