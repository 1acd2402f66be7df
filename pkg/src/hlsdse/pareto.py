"""Multi-objective machinery: dominance, archives, reference fronts, ADRS.

Objectives are minimized. The default objective vector is two-dimensional —
(latency cycles, max resource-utilization fraction) — with a five-objective
mode available for callers that want the raw QoR vector. Front quality is
scored as the mean, over reference points, of the smallest worst-coordinate
relative gap to the approximating front (lower is better, zero means the
approximation covers the reference).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np


class ParetoError(ValueError):
    pass


def dominates(a, b) -> bool:
    """True iff ``a`` is no worse everywhere and strictly better somewhere."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParetoError(f"objective length mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


@dataclass(frozen=True)
class ArchiveEntry:
    key: str
    config: object
    objectives: np.ndarray


class ParetoArchive:
    """Mutually non-dominated (configuration, objective vector) pairs."""

    def __init__(self):
        self._entries: list[ArchiveEntry] = []
        self._keys: set[str] = set()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> list[ArchiveEntry]:
        return list(self._entries)

    def objectives_array(self) -> np.ndarray:
        if not self._entries:
            raise ParetoError("archive is empty")
        return np.vstack([e.objectives for e in self._entries])

    def insert(self, config, objectives, key: str | None = None) -> bool:
        """Add a candidate; reject duplicates and dominated points, evict the
        members the candidate dominates. Returns True when accepted."""
        objectives = np.asarray(objectives, dtype=np.float64)
        if key is None:
            key = config.key() if hasattr(config, "key") else repr(config)
        if key in self._keys:
            return False
        for entry in self._entries:
            if dominates(entry.objectives, objectives):
                return False
        survivors = [e for e in self._entries if not dominates(objectives, e.objectives)]
        self._keys = {e.key for e in survivors}
        self._entries = survivors
        self._entries.append(ArchiveEntry(key=key, config=config, objectives=objectives))
        self._keys.add(key)
        return True


def objectives_from_metrics(metrics, capacities: dict, mode: str = "2d") -> np.ndarray:
    """Objective vector for a QoR result: (latency, max utilization) or raw 5-d."""
    if mode == "5d":
        return metrics.as_vector()
    util = max(metrics.lut / capacities["lut"], metrics.dsp / capacities["dsp"],
               metrics.ff / capacities["ff"], metrics.bram / capacities["bram"])
    return np.array([float(metrics.latency_cycles), util])


def reference_front(space, evaluator: Callable, exhaustive_limit: int = 100_000) -> ParetoArchive:
    """Exhaustively evaluate a space and keep the non-dominated feasible points."""
    from .designspace import enumerate_space

    if space.size > exhaustive_limit:
        raise ParetoError(
            f"space size {space.size} exceeds the exhaustive limit {exhaustive_limit}; "
            "use a sampled front instead")
    archive = ParetoArchive()
    for config in enumerate_space(space):
        result = evaluator(config)
        if result.feasible:
            archive.insert(config, result.objectives)
    if len(archive) == 0:
        raise ParetoError("no feasible configuration in the space")
    return archive


# ---------------------------------------------------------------------------
# ADRS
# ---------------------------------------------------------------------------

def _pair_distance(ref: np.ndarray, approx: np.ndarray) -> float:
    """Worst-coordinate relative shortfall of ``approx`` against ``ref``.

    Coordinates where the reference is zero contribute their absolute excess.
    """
    gaps = np.where(ref > 0, (approx - ref) / np.where(ref > 0, ref, 1.0), approx - ref)
    return float(np.maximum(gaps, 0.0).max())


def adrs(reference, approximation) -> float:
    ref = reference.objectives_array() if isinstance(reference, ParetoArchive) \
        else np.asarray(reference, dtype=np.float64)
    apx = approximation.objectives_array() if isinstance(approximation, ParetoArchive) \
        else np.asarray(approximation, dtype=np.float64)
    if ref.size == 0 or apx.size == 0:
        raise ParetoError("ADRS needs non-empty reference and approximation sets")
    if ref.ndim != 2 or apx.ndim != 2 or ref.shape[1] != apx.shape[1]:
        raise ParetoError(f"objective shape mismatch: {ref.shape} vs {apx.shape}")
    total = 0.0
    for lam in ref:
        total += min(_pair_distance(lam, mu) for mu in apx)
    return total / ref.shape[0]


def adrs_report(reference, approximation) -> dict:
    ref = reference.objectives_array() if isinstance(reference, ParetoArchive) \
        else np.asarray(reference, dtype=np.float64)
    apx = approximation.objectives_array() if isinstance(approximation, ParetoArchive) \
        else np.asarray(approximation, dtype=np.float64)
    distances = [min(_pair_distance(lam, mu) for mu in apx) for lam in ref]
    return {
        "adrs": float(np.mean(distances)),
        "reference_size": int(ref.shape[0]),
        "approximation_size": int(apx.shape[0]),
        "distances": [float(d) for d in distances],
    }


# ---------------------------------------------------------------------------
# front files
# ---------------------------------------------------------------------------

def write_front(path: str | Path, archive: ParetoArchive,
                objective_names: Iterable[str] = ("latency", "utilization")) -> None:
    names = list(objective_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config"] + names)
        rows = sorted(archive.entries, key=lambda e: tuple(e.objectives))
        for entry in rows:
            writer.writerow([entry.key] + [f"{v:.12g}" for v in entry.objectives])


def read_front(path: str | Path) -> ParetoArchive:
    archive = ParetoArchive()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "config":
            raise ParetoError(f"{path}: not a front file (missing 'config' header)")
        for row in reader:
            if not row:
                continue
            archive.insert(config=row[0], key=row[0],
                           objectives=np.array([float(v) for v in row[1:]]))
    if len(archive) == 0:
        raise ParetoError(f"{path}: front file has no points")
    return archive
