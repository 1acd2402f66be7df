"""Text-embedding providers and the layer-averaged summary-vector contract.

The training pipeline treats embeddings as opaque vectors produced by a
provider: a pure function of (text, provider config). Two providers ship
built in — a hashed n-gram featurizer (hermetic, no model weights needed)
and a reader for directories of precomputed vectors keyed by content hash,
so externally exported language-model embeddings can be dropped in.
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .docio import SchemaError

DEFAULT_D_TEXT = 768

_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|[0-9]+|[^\sA-Za-z0-9_]")


class CacheError(ValueError):
    pass


@dataclass(frozen=True)
class TextEmbedding:
    vector: np.ndarray
    provider_id: str
    d_text: int

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", v)
        if v.ndim != 1 or v.shape[0] != self.d_text:
            raise ValueError(f"embedding length {v.shape} != d_text {self.d_text}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embedding contains non-finite values")


@dataclass(frozen=True)
class LayerClsStack:
    """Per-layer summary vectors from a language model, one row per layer."""

    layers: np.ndarray
    provider_id: str = "lm"

    def __post_init__(self):
        arr = np.asarray(self.layers, dtype=np.float64)
        object.__setattr__(self, "layers", arr)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"expected (layers >= 1, d) stack, got shape {arr.shape}")


def average_cls(stack: LayerClsStack) -> TextEmbedding:
    """Elementwise mean of the per-layer summary vectors."""
    mean = stack.layers.mean(axis=0)
    return TextEmbedding(vector=mean, provider_id=stack.provider_id,
                         d_text=int(mean.shape[0]))


# ---------------------------------------------------------------------------
# hashed featurizer
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


def _signed_bucket(feature: str, d_text: int, seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8,
                             key=seed.to_bytes(8, "little", signed=False)).digest()
    h = int.from_bytes(digest, "little")
    return h % d_text, 1.0 if (h >> 63) & 1 else -1.0


def hashed_featurizer(text: str, d_text: int = DEFAULT_D_TEXT, seed: int = 0) -> TextEmbedding:
    """Deterministic signed-hash embedding of unigrams and bigrams.

    Pragma lines tokenize into their constituent parts (``factor``, ``=``,
    ``4``, ...), so configurations that differ only in a directive value map
    to different vectors. The output is L2-normalized; only the empty text
    yields the zero vector.
    """
    if d_text < 8:
        raise ValueError(f"d_text must be >= 8, got {d_text}")
    tokens = tokenize(text)
    vec = np.zeros(d_text)
    for tok in tokens:
        b, s = _signed_bucket("u:" + tok, d_text, seed)
        vec[b] += s
    for a, b_tok in zip(tokens, tokens[1:]):
        b, s = _signed_bucket("b:" + a + "\x1f" + b_tok, d_text, seed)
        vec[b] += s
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return TextEmbedding(vector=vec, provider_id=f"hashed-{d_text}-{seed}", d_text=d_text)


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------

class HashedTextProvider:
    """Hermetic provider backed by :func:`hashed_featurizer`."""

    def __init__(self, d_text: int = DEFAULT_D_TEXT, seed: int = 0):
        self.d_text = d_text
        self.seed = seed

    @property
    def provider_id(self) -> str:
        return f"hashed-{self.d_text}-{self.seed}"

    def embed(self, text: str) -> TextEmbedding:
        return hashed_featurizer(text, self.d_text, self.seed)


class PrecomputedDirProvider:
    """Serves vectors from a directory of per-text documents keyed by content hash.

    Each file is named ``<key>.json`` and holds ``{"key", "d_text", "values"}``.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.provider_id = f"precomputed:{self.directory.name}"

    def embed(self, text: str) -> TextEmbedding:
        key = content_key(text)
        path = self.directory / f"{key}.json"
        if not path.exists():
            raise CacheError(f"no precomputed embedding for key {key}")
        import json
        doc = json.loads(path.read_text(encoding="utf-8"))
        for fieldname in ("key", "d_text", "values"):
            if fieldname not in doc:
                raise SchemaError(f"{path.name}.{fieldname}", "missing required field")
        if doc["key"] != key:
            raise CacheError(f"embedding file {path.name} declares mismatched key {doc['key']}")
        return TextEmbedding(vector=np.asarray(doc["values"], dtype=np.float64),
                             provider_id=self.provider_id, d_text=int(doc["d_text"]))


# ---------------------------------------------------------------------------
# content-addressed cache
# ---------------------------------------------------------------------------

def content_key(text: str) -> str:
    """32-byte content hash of a merged source text, as 64 hex characters."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """In-memory embedding store with a binary on-disk form.

    File layout is a sequence of records: 64 ascii hex chars (key), a
    little-endian uint32 ``d_text``, then ``d_text`` little-endian float64
    values. Safe for concurrent readers; writing is single-threaded.
    """

    def __init__(self):
        self._entries: dict[str, TextEmbedding] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def put(self, key: str, embedding: TextEmbedding) -> None:
        _check_key(key)
        self._entries[key] = embedding

    def get(self, key: str) -> TextEmbedding | None:
        return self._entries.get(key)

    def keys(self) -> list[str]:
        return sorted(self._entries)

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            for key in sorted(self._entries):
                emb = self._entries[key]
                fh.write(key.encode("ascii"))
                fh.write(struct.pack("<I", emb.d_text))
                fh.write(emb.vector.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingCache":
        cache = cls()
        raw = Path(path).read_bytes()
        offset = 0
        while offset < len(raw):
            key_bytes = raw[offset:offset + 64]
            key = key_bytes.decode("ascii", errors="replace")
            if len(key_bytes) < 64:
                raise CacheError(f"truncated record at key {key!r}")
            _check_key(key)
            offset += 64
            if offset + 4 > len(raw):
                raise CacheError(f"truncated record at key {key}")
            (d_text,) = struct.unpack("<I", raw[offset:offset + 4])
            offset += 4
            end = offset + 8 * d_text
            if end > len(raw):
                raise CacheError(f"truncated record at key {key}")
            values = np.frombuffer(raw[offset:end], dtype="<f8")
            if not np.all(np.isfinite(values)):
                raise CacheError(f"non-finite values at key {key}")
            offset = end
            cache._entries[key] = TextEmbedding(vector=values.copy(),
                                                provider_id="cache", d_text=d_text)
        return cache


def _check_key(key: str) -> None:
    if len(key) != 64 or any(c not in "0123456789abcdef" for c in key):
        raise CacheError(f"corrupt entry key {key!r} (expected 64 hex characters)")
