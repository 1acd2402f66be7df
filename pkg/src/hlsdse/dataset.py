"""Graph-text training samples: generation, target scaling, manifest I/O.

A sample couples a pragma-annotated graph with the embedding of its merged
source text and a five-component target vector (latency, LUT, DSP, FF,
BRAM). Targets are stored on a normalized scale so the five error magnitudes
are comparable: resources as a fraction of platform capacity, latency as
log1p(cycles) / log1p(C_max) with the dataset-level C_max taken from the
slowest (all-pragmas-disabled) configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cdfg import Cdfg, build_cdfg, encode_node_features, insert_pragma_nodes, \
    read_graph, write_graph
from .designspace import BehavioralDescription, DesignConfiguration, DesignSpace, \
    merge, sample_distinct
from .docio import SchemaError, dump_document, read_document
from .oracle import OracleKernelModel, RESOURCE_KEYS, describe_kernel, evaluate, \
    max_latency
from .textembed import EmbeddingCache, TextEmbedding, content_key

TARGET_NAMES = ("latency", "lut", "dsp", "ff", "bram")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TargetScaler:
    """Invertible normalization of raw QoR vectors onto comparable scales."""

    capacities: dict
    c_max: int

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        out = np.empty(5)
        out[0] = np.log1p(raw[0]) / np.log1p(self.c_max)
        for i, key in enumerate(RESOURCE_KEYS, start=1):
            out[i] = raw[i] / self.capacities[key]
        return out

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        normalized = np.asarray(normalized, dtype=np.float64)
        out = np.empty(5)
        out[0] = np.round(np.expm1(normalized[0] * np.log1p(self.c_max)))
        for i, key in enumerate(RESOURCE_KEYS, start=1):
            out[i] = np.round(normalized[i] * self.capacities[key])
        return out

    def to_document(self) -> dict:
        return {"capacities": {k: int(self.capacities[k]) for k in RESOURCE_KEYS},
                "c_max": int(self.c_max)}

    @classmethod
    def from_document(cls, doc: dict) -> "TargetScaler":
        caps = doc.get("capacities")
        if not isinstance(caps, dict):
            raise SchemaError("capacities", "expected an object")
        for key in RESOURCE_KEYS:
            if key not in caps:
                raise SchemaError(f"capacities.{key}", "missing required field")
        if "c_max" not in doc:
            raise SchemaError("c_max", "missing required field")
        return cls(capacities={k: int(caps[k]) for k in RESOURCE_KEYS},
                   c_max=int(doc["c_max"]))


@dataclass
class GraphTextSample:
    graph: Cdfg
    node_features: np.ndarray
    text_embedding: TextEmbedding
    targets: np.ndarray
    config: DesignConfiguration | None = None
    embed_key: str | None = None


@dataclass
class Dataset:
    kernel_id: str
    samples: list[GraphTextSample]
    scaler: TargetScaler
    numeric_maxima: tuple
    d_text: int
    provider_id: str
    merged_texts: dict = field(default_factory=dict)  # embed_key -> text

    @property
    def d_node(self) -> int:
        return self.samples[0].node_features.shape[1]


def gen_dataset(model: OracleKernelModel, space: DesignSpace, n: int, seed: int,
                provider) -> Dataset:
    """n distinct seeded configurations rendered to (graph, embedding, targets).

    Targets come from the oracle closed form; infeasible configurations keep
    their metrics (normalized resources then exceed 1) so learners see the
    whole space.
    """
    if n > space.size:
        raise DatasetError(f"requested {n} samples from a space of size {space.size}")
    if n < 1:
        raise DatasetError("need at least one sample")
    desc = describe_kernel(model, space)
    base_graph = build_cdfg(desc)
    behavioral = BehavioralDescription(kernel_id=model.kernel_id,
                                       source_template=desc.source_template)
    scaler = TargetScaler(capacities=dict(model.capacities),
                          c_max=max_latency(model, space))
    numeric = np.array([[nd.latency_cycles, nd.lut, nd.dsp, nd.ff]
                        for nd in base_graph.nodes], dtype=np.float64)
    maxima = tuple(float(v) for v in numeric.max(axis=0))

    samples: list[GraphTextSample] = []
    texts: dict[str, str] = {}
    for config in sample_distinct(space, seed, n):
        text = merge(config, behavioral, space)
        key = content_key(text)
        texts[key] = text
        graph = insert_pragma_nodes(base_graph, space, config)
        metrics = evaluate(model, space, config)
        samples.append(GraphTextSample(
            graph=graph,
            node_features=encode_node_features(graph, maxima),
            text_embedding=provider.embed(text),
            targets=scaler.normalize(metrics.as_vector()),
            config=config,
            embed_key=key))
    return Dataset(kernel_id=model.kernel_id, samples=samples, scaler=scaler,
                   numeric_maxima=maxima, d_text=samples[0].text_embedding.d_text,
                   provider_id=provider.provider_id, merged_texts=texts)


# ---------------------------------------------------------------------------
# on-disk layout: manifest + graph files + embedding cache
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write manifest.json, graphs/NNNN.json and embeddings.bin under out_dir."""
    out = Path(out_dir)
    graphs_dir = out / "graphs"
    graphs_dir.mkdir(parents=True, exist_ok=True)
    cache = EmbeddingCache()
    entries = []
    for i, s in enumerate(dataset.samples):
        rel = f"graphs/{i:04d}.json"
        write_graph(out / rel, s.graph)
        cache.put(s.embed_key, s.text_embedding)
        entry = {"graph": rel,
                 "embedding_key": s.embed_key,
                 "targets": [float(v) for v in s.targets]}
        if s.config is not None:
            entry["config"] = {k: s.config.assignment[k]
                               for k in sorted(s.config.assignment)}
        entries.append(entry)
    cache.save(out / "embeddings.bin")
    manifest = {
        "kernel_id": dataset.kernel_id,
        "capacities": dataset.scaler.to_document()["capacities"],
        "c_max": dataset.scaler.c_max,
        "numeric_maxima": [float(v) for v in dataset.numeric_maxima],
        "d_text": dataset.d_text,
        "provider_id": dataset.provider_id,
        "samples": entries,
    }
    path = out / "manifest.json"
    path.write_text(dump_document(manifest), encoding="utf-8")
    return path


def load_dataset(manifest_path: str | Path) -> Dataset:
    manifest_path = Path(manifest_path)
    doc = read_document(manifest_path)
    for key in ("kernel_id", "capacities", "c_max", "numeric_maxima", "d_text",
                "provider_id", "samples"):
        if key not in doc:
            raise SchemaError(key, "missing required field")
    scaler = TargetScaler.from_document(doc)
    root = manifest_path.parent
    cache = EmbeddingCache.load(root / "embeddings.bin")
    maxima = tuple(float(v) for v in doc["numeric_maxima"])
    samples = []
    for i, entry in enumerate(doc["samples"]):
        path = f"samples[{i}]"
        for key in ("graph", "embedding_key", "targets"):
            if key not in entry:
                raise SchemaError(f"{path}.{key}", "missing required field")
        graph = read_graph(root / entry["graph"])
        emb = cache.get(entry["embedding_key"])
        if emb is None:
            raise SchemaError(f"{path}.embedding_key",
                              f"key {entry['embedding_key']} not in embedding cache")
        targets = np.asarray(entry["targets"], dtype=np.float64)
        if targets.shape != (5,):
            raise SchemaError(f"{path}.targets", "expected 5 values")
        config = None
        if "config" in entry:
            config = DesignConfiguration(dict(entry["config"]))
        samples.append(GraphTextSample(
            graph=graph,
            node_features=encode_node_features(graph, maxima),
            text_embedding=emb,
            targets=targets,
            config=config,
            embed_key=entry["embedding_key"]))
    if not samples:
        raise SchemaError("samples", "dataset is empty")
    return Dataset(kernel_id=str(doc["kernel_id"]), samples=samples, scaler=scaler,
                   numeric_maxima=maxima, d_text=int(doc["d_text"]),
                   provider_id=str(doc["provider_id"]))
