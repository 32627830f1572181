"""Land-cover class taxonomy: levels, parent links, pretraining schedule, transfer.

File grammar (one class per line, two spaces of indent per level, '#' comments
and blank lines ignored)::

    crop
      cereal
        maize
        millet
      legume
        groundnut
    non_crop
      water
        water_body

Depth 0 lines are the most general level; the deepest level is the target
classification level. A child belongs to the closest shallower line above it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import hashlib

from .errors import InputError, ParseError


@dataclass
class ClassHierarchy:
    """levels[k] lists class names at level k (most general first);
    parents[k][i] is the parent index at level k-1 (parents[0] is empty)."""

    levels: list[list[str]]
    parents: list[list[int]] = field(default_factory=list)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def target_level(self) -> int:
        return len(self.levels) - 1

    def class_counts(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    def label_index(self, level: int, name: str) -> int:
        try:
            return self.levels[level].index(name)
        except ValueError:
            raise InputError(f"unknown class {name!r} at level {level}") from None

    def ancestor_label(self, leaf: int, level: int) -> int:
        if not 0 <= level <= self.target_level:
            raise InputError(f"level {level} out of range 0..{self.target_level}")
        if not 0 <= leaf < len(self.levels[self.target_level]):
            raise InputError(f"leaf index {leaf} out of range")
        idx = leaf
        for k in range(self.target_level, level, -1):
            idx = self.parents[k][idx]
        return idx

    def validate(self) -> list[str]:
        """Return all invariant violations (empty list means well-formed)."""
        problems = []
        if not self.levels or not self.levels[0]:
            problems.append("hierarchy has no classes")
            return problems
        if len(self.parents) != len(self.levels):
            problems.append("parents table does not match level count")
            return problems
        for k, names in enumerate(self.levels):
            seen: dict[str, int] = {}
            for name in names:
                seen[name] = seen.get(name, 0) + 1
            for name, n in seen.items():
                if n > 1:
                    problems.append(f"class {name!r} appears {n} times at level {k} (multiple parents)")
            if k == 0:
                if self.parents[0]:
                    problems.append("level 0 classes must not have parents")
                continue
            if len(self.parents[k]) != len(names):
                problems.append(f"level {k}: {len(names)} classes but {len(self.parents[k])} parent links")
                continue
            for i, p in enumerate(self.parents[k]):
                if not 0 <= p < len(self.levels[k - 1]):
                    problems.append(f"class {names[i]!r} at level {k} has invalid parent index {p}")
            if len(names) < len(self.levels[k - 1]):
                problems.append(f"class count decreases from level {k - 1} ({len(self.levels[k - 1])}) to level {k} ({len(names)})")
        return problems

    def digest(self) -> str:
        h = hashlib.sha256()
        for names in self.levels:
            h.update(("|".join(names)).encode())
            h.update(b"\n")
        for ps in self.parents:
            h.update(",".join(map(str, ps)).encode())
            h.update(b"\n")
        return h.hexdigest()

    def to_text(self) -> str:
        lines = []

        def emit(level: int, idx: int):
            lines.append("  " * level + self.levels[level][idx])
            if level + 1 < self.num_levels:
                for j, p in enumerate(self.parents[level + 1]):
                    if p == idx:
                        emit(level + 1, j)

        for i in range(len(self.levels[0])):
            emit(0, i)
        return "\n".join(lines) + "\n"


def parse_hierarchy(text: str) -> ClassHierarchy:
    levels: list[list[str]] = []
    parents: list[list[int]] = [[]]
    last_at_level: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if indent % 2 != 0:
            raise ParseError(f"line {lineno}: indent must be a multiple of two spaces")
        depth = indent // 2
        if depth > len(last_at_level):
            raise ParseError(f"line {lineno}: class {stripped!r} skips a hierarchy level")
        while len(levels) <= depth:
            levels.append([])
            if depth > 0:
                parents.append([])
        if depth == 0:
            levels[0].append(stripped)
        else:
            levels[depth].append(stripped)
            parents[depth].append(last_at_level[depth - 1])
        del last_at_level[depth:]
        last_at_level.append(len(levels[depth]) - 1)
    if not levels:
        raise ParseError("hierarchy file contains no classes")
    while len(parents) < len(levels):
        parents.append([])
    return ClassHierarchy(levels=levels, parents=parents)


def load_hierarchy(path) -> ClassHierarchy:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())


def save_hierarchy(h: ClassHierarchy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(h.to_text())


def pretrain_schedule(h: ClassHierarchy, epochs_per_level: int) -> list[tuple[int, int]]:
    """Training stages, most general level first, each with the epoch budget."""
    if epochs_per_level < 1:
        raise InputError("epochs_per_level must be >= 1")
    return [(level, epochs_per_level) for level in range(h.num_levels)]


def pretrain_transfer(model, h: ClassHierarchy, next_level: int, rng):
    """Clone the model for the next level: all branch/attention weights copied
    bit-exactly, the next level's output heads freshly initialized."""
    if not 0 < next_level <= h.target_level:
        raise InputError(f"next_level {next_level} out of range 1..{h.target_level}")
    clone = model.clone()
    clone.init_heads(next_level, rng)
    return clone
