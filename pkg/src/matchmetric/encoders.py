"""Initial embeddings for task text and code, via pluggable backends.

Three backends produce per-token vectors plus a mean-pooled vector:

* ``toy``     - trainable embedding table over a whitespace/punctuation
                tokenizer; out-of-vocabulary tokens hash into a fixed range
                of reserved bucket rows.
* ``file``    - precomputed embeddings looked up by text digest in a binary
                container written by :func:`write_embedding_file`.
* ``service`` - HTTP provider: one POST per batch with ``{"texts": [...]}``
                returning ``{"vectors": [...], "tokens": [...]}``.

Embedding container layout (little-endian)::

    magic  b"MEC1"
    header <IIQI>: format_version, d_enc, count, crc32(payload)
    count records:
        key_len  <I>, key utf-8
        tok_len  <I>, tokens as JSON list utf-8
        L        <I>
        vectors  L*d_enc float64
        pooled   d_enc float64
"""

from __future__ import annotations

import json
import os
import re
import struct
import zlib
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np

from .seeding import substream

OOV_BUCKETS = 1024
BACKENDS = ("toy", "file", "service")
DEFAULT_TOY_DIMENSION = 32
DEFAULT_REAL_DIMENSION = 768
SERVICE_ENDPOINT_ENV = "MATCHMETRIC_EMBEDDING_ENDPOINT"

_MAGIC = b"MEC1"
_HEADER = struct.Struct("<IIQI")
_FORMAT_VERSION = 1
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class EncodingError(RuntimeError):
    """Backend failed to produce embeddings."""


class MissingEmbeddingError(EncodingError):
    """Text not present in a file-backend container."""


class ServiceError(EncodingError):
    """Embedding service transport failure or bad response."""


class CacheError(RuntimeError):
    """Embedding container is corrupt or incompatible."""


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercased tokens split on whitespace and punctuation boundaries.

    Punctuation marks are their own tokens: ``"foo(bar)"`` tokenizes to
    ``foo ( bar )``.
    """
    tokens = tuple(_TOKEN_RE.findall(text.lower()))
    if not tokens:
        raise ValueError("cannot tokenize whitespace-only text")
    return tokens


@dataclass(frozen=True)
class EmbeddingOutput:
    """Per-token vectors plus their arithmetic mean."""

    tokens: tuple[str, ...]
    vectors: np.ndarray  # (L, d_enc)
    pooled: np.ndarray  # (d_enc,)

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or len(self.tokens) != self.vectors.shape[0]:
            raise EncodingError("vectors must be one row per token")
        if self.vectors.shape[0] < 1:
            raise EncodingError("embedding has no tokens")
        if not np.all(np.isfinite(self.vectors)) or not np.all(np.isfinite(self.pooled)):
            raise EncodingError("embedding contains non-finite values")


def _mean_pooled(tokens, vectors: np.ndarray) -> EmbeddingOutput:
    return EmbeddingOutput(tokens=tuple(tokens), vectors=vectors, pooled=vectors.mean(axis=0))


@dataclass(frozen=True)
class EncoderSpec:
    """Which backend encodes one side (task or code), and whether it trains."""

    backend: str
    name: str
    dimension: int
    trainable: bool = False

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown encoder backend {self.backend!r}")
        if self.dimension < 1:
            raise ValueError("encoder dimension must be positive")
        if self.backend in ("file", "service") and self.trainable:
            raise ValueError(f"{self.backend} backend cannot be trainable")


@dataclass
class ToyEncoderParameters:
    """Embedding table over a fixed vocabulary plus OOV hash buckets.

    Rows ``0..len(vocabulary)-1`` belong to in-vocabulary tokens; the last
    ``OOV_BUCKETS`` rows are shared hash buckets for everything else.
    """

    vocabulary: dict[str, int]
    table: np.ndarray  # (len(vocabulary) + OOV_BUCKETS, d_enc)

    def row_index(self, token: str) -> int:
        idx = self.vocabulary.get(token)
        if idx is not None:
            return idx
        bucket = zlib.crc32(token.encode("utf-8")) % OOV_BUCKETS
        return len(self.vocabulary) + bucket

    def row_indices(self, tokens) -> np.ndarray:
        return np.array([self.row_index(t) for t in tokens], dtype=np.intp)


def build_toy_encoder(texts, dimension: int, seed: int, stream: str = "toy") -> ToyEncoderParameters:
    """Vocabulary from the given texts; table seeded uniform +-1/sqrt(d)."""
    vocab_tokens = sorted({tok for text in texts for tok in tokenize(text)})
    vocabulary = {tok: i for i, tok in enumerate(vocab_tokens)}
    rng = substream(seed, "init", stream)
    bound = 1.0 / np.sqrt(dimension)
    table = rng.uniform(-bound, bound, size=(len(vocabulary) + OOV_BUCKETS, dimension))
    return ToyEncoderParameters(vocabulary=vocabulary, table=table)


def text_key(text: str) -> str:
    """Stable lookup key for the file backend: digest of the exact text."""
    return sha256(text.encode("utf-8")).hexdigest()


@dataclass
class ServiceConfig:
    """Connection settings for the HTTP embedding provider."""

    endpoint: str = ""
    timeout: float = 10.0
    retries: int = 2

    def resolved_endpoint(self) -> str:
        endpoint = self.endpoint or os.environ.get(SERVICE_ENDPOINT_ENV, "")
        if not endpoint:
            raise ServiceError(
                f"no embedding service endpoint configured "
                f"(set {SERVICE_ENDPOINT_ENV} or ServiceConfig.endpoint)"
            )
        return endpoint


def _encode_toy(params: ToyEncoderParameters, text: str) -> EmbeddingOutput:
    tokens = tokenize(text)
    vectors = params.table[params.row_indices(tokens)]
    return _mean_pooled(tokens, vectors)


def _encode_file(records: dict[str, EmbeddingOutput], spec: EncoderSpec, text: str) -> EmbeddingOutput:
    key = text_key(text)
    if key not in records:
        raise MissingEmbeddingError(
            f"text with digest {key[:12]}... not present in embedding file for {spec.name!r}"
        )
    return records[key]


def _service_request(spec: EncoderSpec, config: ServiceConfig, texts: list[str]) -> list[EmbeddingOutput]:
    import requests

    endpoint = config.resolved_endpoint()
    last_error: Exception | None = None
    for _ in range(config.retries + 1):
        try:
            response = requests.post(endpoint, json={"texts": texts}, timeout=config.timeout)
            response.raise_for_status()
            payload = response.json()
            break
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
    else:
        raise ServiceError(f"embedding service unreachable at {endpoint}: {last_error}")

    if not isinstance(payload, dict) or "vectors" not in payload or "tokens" not in payload:
        raise ServiceError("malformed service response: expected 'vectors' and 'tokens'")
    vectors_list, tokens_list = payload["vectors"], payload["tokens"]
    if len(vectors_list) != len(texts) or len(tokens_list) != len(texts):
        raise ServiceError(
            f"service returned {len(vectors_list)} embeddings for {len(texts)} texts"
        )
    outputs = []
    for text, vecs, toks in zip(texts, vectors_list, tokens_list):
        arr = np.asarray(vecs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != spec.dimension:
            raise ServiceError(
                f"service returned shape {arr.shape} for dimension {spec.dimension}"
            )
        if arr.shape[0] != len(toks):
            raise ServiceError("service token/vector row count mismatch")
        if not np.all(np.isfinite(arr)):
            raise ServiceError("service returned non-finite values")
        outputs.append(_mean_pooled([str(t) for t in toks], arr))
    return outputs


def encode(spec: EncoderSpec, params, text: str) -> EmbeddingOutput:
    """Encode one text with the backend selected by ``spec``.

    ``params`` is backend-specific: :class:`ToyEncoderParameters`, a record
    map loaded by :func:`read_embedding_file`, or a :class:`ServiceConfig`.
    """
    if spec.backend == "toy":
        return _encode_toy(params, text)
    if spec.backend == "file":
        return _encode_file(params, spec, text)
    return _service_request(spec, params, [text])[0]


def encode_batch(spec: EncoderSpec, params, texts: list[str]) -> list[EmbeddingOutput]:
    if spec.backend == "service":
        return _service_request(spec, params, texts)
    return [encode(spec, params, text) for text in texts]


def _pack_records(records: dict[str, EmbeddingOutput], d_enc: int) -> bytes:
    chunks = []
    for key, emb in records.items():
        if emb.vectors.shape[1] != d_enc:
            raise CacheError(f"record {key!r} has dimension {emb.vectors.shape[1]}, expected {d_enc}")
        key_bytes = key.encode("utf-8")
        tok_bytes = json.dumps(list(emb.tokens), ensure_ascii=False).encode("utf-8")
        chunks.append(struct.pack("<I", len(key_bytes)))
        chunks.append(key_bytes)
        chunks.append(struct.pack("<I", len(tok_bytes)))
        chunks.append(tok_bytes)
        chunks.append(struct.pack("<I", emb.vectors.shape[0]))
        chunks.append(np.ascontiguousarray(emb.vectors, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(emb.pooled, dtype="<f8").tobytes())
    return b"".join(chunks)


def write_embedding_file(path: str | Path, records: dict[str, EmbeddingOutput], d_enc: int) -> None:
    """Write a record container atomically (temp file + rename)."""
    path = Path(path)
    payload = _pack_records(records, d_enc)
    header = _HEADER.pack(_FORMAT_VERSION, d_enc, len(records), zlib.crc32(payload))
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as handle:
        handle.write(_MAGIC)
        handle.write(header)
        handle.write(payload)
    os.replace(tmp, path)


def read_embedding_file(path: str | Path) -> tuple[dict[str, EmbeddingOutput], int]:
    """Load a record container, verifying version and checksum."""
    blob = Path(path).read_bytes()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CacheError(f"{path}: not an embedding container")
    version, d_enc, count, checksum = _HEADER.unpack_from(blob, len(_MAGIC))
    if version != _FORMAT_VERSION:
        raise CacheError(f"{path}: unsupported container version {version}")
    payload = blob[len(_MAGIC) + _HEADER.size :]
    if zlib.crc32(payload) != checksum:
        raise CacheError(f"{path}: checksum mismatch, file is corrupt")
    records: dict[str, EmbeddingOutput] = {}
    offset = 0
    for _ in range(count):
        (key_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        key = payload[offset : offset + key_len].decode("utf-8")
        offset += key_len
        (tok_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        tokens = tuple(json.loads(payload[offset : offset + tok_len].decode("utf-8")))
        offset += tok_len
        (rows,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        vectors = np.frombuffer(payload, dtype="<f8", count=rows * d_enc, offset=offset)
        vectors = vectors.reshape(rows, d_enc).copy()
        offset += rows * d_enc * 8
        pooled = np.frombuffer(payload, dtype="<f8", count=d_enc, offset=offset).copy()
        offset += d_enc * 8
        records[key] = EmbeddingOutput(tokens=tokens, vectors=vectors, pooled=pooled)
    if offset != len(payload):
        raise CacheError(f"{path}: trailing bytes after {count} records")
    return records, d_enc


def _cache_key(pair_id: str, side: str) -> str:
    return f"{pair_id}\t{side}"


def cache_embeddings(spec: EncoderSpec, params, dataset, path: str | Path, side_texts=None) -> None:
    """Encode every pair of ``dataset`` and persist id -> (task, code) embeddings.

    Idempotent: re-running produces an identical file.  A failed write never
    leaves a truncated cache behind.
    """
    records: dict[str, EmbeddingOutput] = {}
    for pair in dataset:
        records[_cache_key(pair.id, "task")] = encode(spec, params, pair.task)
        records[_cache_key(pair.id, "code")] = encode(spec, params, pair.code)
    write_embedding_file(path, records, spec.dimension)


def load_cached_embeddings(path: str | Path) -> dict[str, tuple[EmbeddingOutput, EmbeddingOutput]]:
    records, _ = read_embedding_file(path)
    out: dict[str, tuple[EmbeddingOutput, EmbeddingOutput]] = {}
    for key, emb in records.items():
        pair_id, _, side = key.partition("\t")
        if side == "task":
            out[pair_id] = (emb, out[pair_id][1]) if pair_id in out else (emb, None)
        elif side == "code":
            out[pair_id] = (out[pair_id][0], emb) if pair_id in out else (None, emb)
        else:
            raise CacheError(f"unexpected cache key {key!r}")
    for pair_id, (task_emb, code_emb) in out.items():
        if task_emb is None or code_emb is None:
            raise CacheError(f"cache entry for {pair_id!r} is incomplete")
    return out
