"""Pragma directives, design spaces, configurations, and source-text merging.

A directive assigns one value out of an ordered domain to a loop or array.
Disabled values (``off`` for pipeline, factor ``1`` otherwise) render as an
absent pragma so that the "no pragma" case looks identical in the text and in
the graph. Canonical pragma renderings are frozen here; text embeddings
depend on them being stable.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .docio import SchemaError, dump_document, read_document

DIRECTIVE_KINDS = ("pipeline", "unroll", "array_partition", "tile")
PIPELINE_VALUES = ("off", "on", "flatten")

SLOT_PATTERN = re.compile(r"__PRAGMA\(([^)]*)\)__")


class DesignSpaceError(ValueError):
    pass


class MergeError(ValueError):
    pass


@dataclass(frozen=True)
class PragmaDirective:
    name: str
    kind: str
    target: str
    domain: tuple

    def __post_init__(self):
        if self.kind not in DIRECTIVE_KINDS:
            raise DesignSpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if not self.domain:
            raise DesignSpaceError(f"{self.name}: empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise DesignSpaceError(f"{self.name}: duplicate domain values")
        if self.kind == "pipeline":
            bad = [v for v in self.domain if v not in PIPELINE_VALUES]
        else:
            bad = [v for v in self.domain
                   if not isinstance(v, int) or isinstance(v, bool) or v < 1]
        if bad:
            raise DesignSpaceError(f"{self.name}: invalid domain values {bad!r}")

    def value(self, index: int):
        return self.domain[index]

    def is_active(self, index: int) -> bool:
        v = self.domain[index]
        return v != "off" if self.kind == "pipeline" else v != 1

    def render(self, index: int) -> str:
        """Canonical pragma line for a value; empty string when disabled."""
        v = self.domain[index]
        if not self.is_active(index):
            return ""
        if self.kind == "pipeline":
            return "#pragma HLS PIPELINE" if v == "on" else "#pragma HLS PIPELINE flatten"
        if self.kind == "unroll":
            return f"#pragma HLS UNROLL factor={v}"
        if self.kind == "array_partition":
            return f"#pragma HLS ARRAY_PARTITION variable={self.target} cyclic factor={v}"
        return f"#pragma HLS TILE factor={v}"


@dataclass(frozen=True)
class DesignSpace:
    directives: tuple[PragmaDirective, ...]

    def __post_init__(self):
        names = [d.name for d in self.directives]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DesignSpaceError(f"duplicate directive names {dupes}")

    @property
    def size(self) -> int:
        return math.prod(len(d.domain) for d in self.directives)

    def directive(self, name: str) -> PragmaDirective:
        for d in self.directives:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass(frozen=True)
class DesignConfiguration:
    """An assignment of a value index to every directive in a space."""

    assignment: dict = field(hash=False)

    def key(self) -> str:
        return ";".join(f"{k}={v}" for k, v in sorted(self.assignment.items()))


@dataclass(frozen=True)
class BehavioralDescription:
    kernel_id: str
    source_template: str


def validate_configuration(space: DesignSpace, config: DesignConfiguration) -> None:
    names = {d.name for d in space.directives}
    missing = sorted(names - set(config.assignment))
    extra = sorted(set(config.assignment) - names)
    if missing:
        raise DesignSpaceError(f"configuration missing directives {missing}")
    if extra:
        raise DesignSpaceError(f"configuration has unknown directives {extra}")
    for d in space.directives:
        idx = config.assignment[d.name]
        if not isinstance(idx, int) or isinstance(idx, bool) or not 0 <= idx < len(d.domain):
            raise DesignSpaceError(f"{d.name}: value index {idx!r} outside domain "
                                   f"of size {len(d.domain)}")


# ---------------------------------------------------------------------------
# enumeration and sampling
# ---------------------------------------------------------------------------

def space_size(space: DesignSpace) -> int:
    return space.size


def _config_from_indices(space: DesignSpace, indices) -> DesignConfiguration:
    return DesignConfiguration(
        {d.name: int(i) for d, i in zip(space.directives, indices)})


def config_from_rank(space: DesignSpace, rank: int) -> DesignConfiguration:
    """Decode a mixed-radix rank (last directive varies fastest)."""
    indices = []
    for d in reversed(space.directives):
        rank, idx = divmod(rank, len(d.domain))
        indices.append(idx)
    return _config_from_indices(space, reversed(indices))


def enumerate_space(space: DesignSpace, limit: int | None = None) -> Iterator[DesignConfiguration]:
    """Lexicographic stream over value indices; first directive most significant."""
    ranges = [range(len(d.domain)) for d in space.directives]
    stream = itertools.product(*ranges)
    if limit is not None:
        stream = itertools.islice(stream, limit)
    for indices in stream:
        yield _config_from_indices(space, indices)


def sample_random(space: DesignSpace, seed, k: int) -> list[DesignConfiguration]:
    """k independent uniform draws (with replacement); seed-deterministic."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    return [_config_from_indices(space, [rng.integers(len(d.domain))
                                         for d in space.directives])
            for _ in range(k)]


def sample_distinct(space: DesignSpace, seed, k: int) -> list[DesignConfiguration]:
    """k distinct uniform configurations; requires k <= space size."""
    size = space.size
    if k > size:
        raise DesignSpaceError(f"cannot draw {k} distinct configurations from "
                               f"a space of size {size}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    if size <= 10 ** 6:
        ranks = rng.permutation(size)[:k]
    else:
        chosen: set[int] = set()
        while len(chosen) < k:
            chosen.add(int(rng.integers(size)))
        ranks = sorted(chosen)
    return [config_from_rank(space, int(r)) for r in ranks]


def neighbor(space: DesignSpace, config: DesignConfiguration, seed) -> DesignConfiguration:
    """A configuration differing from ``config`` in exactly one directive."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    movable = [d for d in space.directives if len(d.domain) > 1]
    if not movable:
        return DesignConfiguration(dict(config.assignment))
    d = movable[int(rng.integers(len(movable)))]
    current = config.assignment[d.name]
    offset = 1 + int(rng.integers(len(d.domain) - 1))
    assignment = dict(config.assignment)
    assignment[d.name] = (current + offset) % len(d.domain)
    return DesignConfiguration(assignment)


# ---------------------------------------------------------------------------
# merge into source text
# ---------------------------------------------------------------------------

def merge(config: DesignConfiguration, desc: BehavioralDescription,
          space: DesignSpace) -> str:
    """Substitute every pragma slot with its canonical line (or nothing)."""
    slots = SLOT_PATTERN.findall(desc.source_template)
    unassigned = [s for s in slots if s not in config.assignment]
    if unassigned:
        raise MergeError(f"slot {unassigned[0]!r} has no assignment")
    by_name = {d.name: d for d in space.directives}
    unknown = [s for s in slots if s not in by_name]
    if unknown:
        raise MergeError(f"slot {unknown[0]!r} names no directive in the space")

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        return by_name[name].render(config.assignment[name])

    return SLOT_PATTERN.sub(_sub, desc.source_template)


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------

def space_to_document(space: DesignSpace) -> dict:
    return {"directives": [
        {"name": d.name, "kind": d.kind, "target": d.target, "domain": list(d.domain)}
        for d in space.directives
    ]}


def space_from_document(doc: dict) -> DesignSpace:
    if not isinstance(doc.get("directives"), list) or not doc["directives"]:
        raise SchemaError("directives", "expected a non-empty list")
    directives = []
    for i, dd in enumerate(doc["directives"]):
        path = f"directives[{i}]"
        if not isinstance(dd, dict):
            raise SchemaError(path, "expected an object")
        for key in ("name", "kind", "target"):
            if not isinstance(dd.get(key), str):
                raise SchemaError(f"{path}.{key}", "missing or not a string")
        if not isinstance(dd.get("domain"), list):
            raise SchemaError(f"{path}.domain", "expected a list")
        try:
            directives.append(PragmaDirective(
                name=dd["name"], kind=dd["kind"], target=dd["target"],
                domain=tuple(dd["domain"])))
        except DesignSpaceError as exc:
            raise SchemaError(path, str(exc)) from exc
    try:
        return DesignSpace(tuple(directives))
    except DesignSpaceError as exc:
        raise SchemaError("directives", str(exc)) from exc


def config_to_document(kernel_id: str, config: DesignConfiguration) -> dict:
    return {"kernel_id": kernel_id,
            "assignment": {k: config.assignment[k] for k in sorted(config.assignment)}}


def config_from_document(doc: dict, space: DesignSpace) -> tuple[str, DesignConfiguration]:
    if not isinstance(doc.get("kernel_id"), str):
        raise SchemaError("kernel_id", "missing or not a string")
    if not isinstance(doc.get("assignment"), dict):
        raise SchemaError("assignment", "expected an object")
    config = DesignConfiguration(dict(doc["assignment"]))
    try:
        validate_configuration(space, config)
    except DesignSpaceError as exc:
        raise SchemaError("assignment", str(exc)) from exc
    return doc["kernel_id"], config


def write_space(path: str | Path, space: DesignSpace) -> None:
    Path(path).write_text(dump_document(space_to_document(space)), encoding="utf-8")


def read_space(path: str | Path) -> DesignSpace:
    return space_from_document(read_document(path))
