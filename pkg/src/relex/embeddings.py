"""Embedding providers, the exact-scan vector store, and its binary format.

Store file layout: one UTF-8 JSON header line
``{"dimension": d, "count": n, "provider_fingerprint": s}`` terminated by
``\\n``, followed by ``n`` binary records.  Each record is a little-endian
uint32 byte length, that many bytes of UTF-8 instance id, then ``d``
little-endian float32 coordinates.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relex.data import RelationInstance
from relex.errors import ParseError, ProtocolError, TransportError, ValidationError

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_MASK64 = (1 << 64) - 1

TEST_PROVIDER_DIMENSION = 64


def _fnv1a64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _MASK64
    return value


@dataclass(frozen=True)
class EmbeddingRecord:
    instance_id: str
    vector: np.ndarray
    norm: float


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    neighbor_id: str
    similarity: float


class EmbeddingProvider:
    """Turns sentence text into a fixed-dimension vector."""

    fingerprint: str
    dimension: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def expected_fingerprint(self, store_dimension: int) -> str:
        """Fingerprint this provider would stamp on a store of that dimension."""
        return self.fingerprint


class DeterministicHashProvider(EmbeddingProvider):
    """Offline test provider: token-hash-seeded LCG coordinates, mean-pooled.

    Each whitespace token is hashed with 64-bit FNV-1a; the hash seeds a
    fixed linear congruential generator emitting 64 coordinates in [-1, 1);
    the sentence vector is the coordinate-wise mean over tokens.
    """

    def __init__(self):
        self.dimension = TEST_PROVIDER_DIMENSION
        self.fingerprint = f"test:token-hash-lcg:d={self.dimension}"

    def embed(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ValidationError("cannot embed empty text")
        total = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            state = _fnv1a64(token.encode("utf-8"))
            coords = np.empty(self.dimension, dtype=np.float64)
            for i in range(self.dimension):
                state = (_LCG_MULT * state + _LCG_INC) & _MASK64
                coords[i] = state / 2.0**63 - 1.0
            total += coords
        return total / len(tokens)


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for the embedding wire contract: POST {model, input} -> {embedding}."""

    def __init__(self, url: str, model: str, retry_policy=None, session=None):
        import requests

        from relex.client import RetryPolicy

        self.url = url
        self.model = model
        self.dimension = 0  # resolved on first response
        self._retry_policy = retry_policy or RetryPolicy()
        self._session = session or requests.Session()

    @property
    def fingerprint(self) -> str:
        return self.fingerprint_for_dimension(self.dimension)

    def fingerprint_for_dimension(self, dimension: int) -> str:
        return f"http:{self.model}:d={dimension}"

    def expected_fingerprint(self, store_dimension: int) -> str:
        return self.fingerprint_for_dimension(self.dimension or store_dimension)

    def _post(self, text: str) -> np.ndarray:
        import requests

        try:
            response = self._session.post(
                self.url, json={"model": self.model, "input": text}, timeout=60
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding endpoint {self.url}: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise TransportError(f"embedding endpoint {self.url}: HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError(f"embedding endpoint {self.url}: non-JSON body") from exc
        if "embedding" not in payload:
            raise ProtocolError(f"embedding endpoint {self.url}: missing 'embedding' field")
        return np.asarray(payload["embedding"], dtype=np.float64)

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValidationError("cannot embed empty text")
        vector = self._retry_policy.run(lambda: self._post(text))
        if self.dimension == 0:
            self.dimension = vector.shape[0]
        elif vector.shape[0] != self.dimension:
            raise ProtocolError(
                f"embedding endpoint returned dimension {vector.shape[0]}, expected {self.dimension}"
            )
        return vector


def make_embedding_provider(spec: str, model: str = "", retry_policy=None) -> EmbeddingProvider:
    if spec == "test":
        return DeterministicHashProvider()
    if spec.startswith(("http://", "https://")):
        return HttpEmbeddingProvider(spec, model, retry_policy=retry_policy)
    raise ValidationError(f"unknown embedding provider {spec!r}; use 'test' or an http(s) URL")


def cosine_similarity(a, b) -> float:
    """dot(a, b) / (|a| |b|), computed as dot / sqrt(dot(a,a) * dot(b,b))."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na2 = float(np.dot(va, va))
    nb2 = float(np.dot(vb, vb))
    if na2 == 0.0 or nb2 == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / np.sqrt(na2 * nb2))


class EmbeddingStore:
    """Immutable exact-scan store over fixed-dimension float32 vectors."""

    def __init__(self, dimension: int, provider_fingerprint: str, ids: Sequence[str], vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float32)
        if dimension < 1:
            raise ValidationError("store dimension must be >= 1")
        if vectors.ndim != 2 or vectors.shape != (len(ids), dimension):
            raise ValidationError(
                f"vector table shape {vectors.shape} does not match {len(ids)} ids x {dimension}"
            )
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate instance ids in store")
        if not np.all(np.isfinite(vectors)):
            bad = [ids[i] for i in np.nonzero(~np.isfinite(vectors).all(axis=1))[0][:5]]
            raise ValidationError(f"non-finite vectors rejected for instances {bad}")
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        zero = [ids[i] for i in np.nonzero(norms == 0.0)[0]]
        if zero:
            raise ValidationError(f"zero vectors rejected for instances {zero}")
        self.dimension = dimension
        self.provider_fingerprint = provider_fingerprint
        self.ids = list(ids)
        self.vectors = vectors
        self.norms = norms
        self.id_index = {instance_id: i for i, instance_id in enumerate(self.ids)}
        self._vectors64 = vectors.astype(np.float64)

    def __len__(self) -> int:
        return len(self.ids)

    def record(self, instance_id: str) -> EmbeddingRecord:
        i = self.id_index[instance_id]
        return EmbeddingRecord(instance_id=instance_id, vector=self.vectors[i], norm=float(self.norms[i]))

    @property
    def records(self) -> list[EmbeddingRecord]:
        return [self.record(instance_id) for instance_id in self.ids]


def build_store(instances: Sequence[RelationInstance], provider: EmbeddingProvider) -> EmbeddingStore:
    """Embed each instance's sentence text, insertion order = input order."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen = set()
    for inst in instances:
        if inst.id in seen:
            raise ValidationError(f"duplicate instance id {inst.id!r} in store input")
        seen.add(inst.id)
        try:
            vector = provider.embed(inst.sentence)
        except TransportError as exc:
            raise TransportError(
                f"store build aborted after {len(rows)} of {len(instances)} embeddings: {exc}"
            ) from exc
        vector = np.asarray(vector, dtype=np.float64)
        if rows and vector.shape[0] != rows[0].shape[0]:
            raise ValidationError(
                f"instance {inst.id!r}: dimension {vector.shape[0]} != {rows[0].shape[0]}"
            )
        if float(np.linalg.norm(vector)) == 0.0:
            raise ValidationError(f"provider returned a zero vector for instance {inst.id!r}")
        ids.append(inst.id)
        rows.append(vector)
    if not rows:
        raise ValidationError("cannot build a store from an empty instance list")
    dimension = rows[0].shape[0]
    fingerprint = provider.fingerprint
    return EmbeddingStore(dimension, fingerprint, ids, np.vstack(rows).astype(np.float32))


def query_top_k(store: EmbeddingStore, query_vector, k: int, query_id: str = "") -> list[RetrievalResult]:
    """Exact top-k by cosine, ties broken by ascending instance id."""
    q = np.asarray(query_vector, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != store.dimension:
        raise ValueError(f"query dimension {q.shape} does not match store dimension {store.dimension}")
    if not 1 <= k <= len(store):
        raise ValueError(f"k={k} out of range for store of size {len(store)}")
    qnorm = float(np.linalg.norm(q))
    if qnorm == 0.0:
        raise ValueError("cannot query with a zero vector")
    sims = (store._vectors64 @ q) / (store.norms * qnorm)
    order = sorted(range(len(store)), key=lambda i: (-sims[i], store.ids[i]))
    return [
        RetrievalResult(query_id=query_id, neighbor_id=store.ids[i], similarity=float(sims[i]))
        for i in order[:k]
    ]


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    if not text.strip():
        raise ValidationError("cannot embed empty text")
    return np.asarray(provider.embed(text), dtype=np.float64)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "dimension": store.dimension,
        "count": len(store),
        "provider_fingerprint": store.provider_fingerprint,
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, ensure_ascii=False).encode("utf-8") + b"\n")
        for i, instance_id in enumerate(store.ids):
            id_bytes = instance_id.encode("utf-8")
            handle.write(struct.pack("<I", len(id_bytes)))
            handle.write(id_bytes)
            handle.write(store.vectors[i].astype("<f4").tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    with open(path, "rb") as handle:
        header_line = handle.readline()
        if not header_line.endswith(b"\n"):
            raise ParseError(f"{path}: missing store header line")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: malformed store header: {exc}") from exc
        for key in ("dimension", "count", "provider_fingerprint"):
            if key not in header:
                raise ParseError(f"{path}: store header missing {key!r}")
        dimension, count = header["dimension"], header["count"]
        ids = []
        vectors = np.empty((count, dimension), dtype=np.float32)
        record_bytes = 4 * dimension
        for i in range(count):
            length_raw = handle.read(4)
            if len(length_raw) != 4:
                raise ParseError(f"{path}: truncated at record {i}")
            (id_length,) = struct.unpack("<I", length_raw)
            id_bytes = handle.read(id_length)
            vec_bytes = handle.read(record_bytes)
            if len(id_bytes) != id_length or len(vec_bytes) != record_bytes:
                raise ParseError(f"{path}: truncated at record {i}")
            ids.append(id_bytes.decode("utf-8"))
            vectors[i] = np.frombuffer(vec_bytes, dtype="<f4")
        if handle.read(1):
            raise ParseError(f"{path}: trailing bytes after {count} records")
    return EmbeddingStore(dimension, header["provider_fingerprint"], ids, vectors)
