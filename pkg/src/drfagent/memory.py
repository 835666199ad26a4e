"""Append-only vector memory of past driving decisions with exact cosine retrieval."""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .errors import (
    BackendUnavailable,
    CorruptStore,
    DimensionMismatch,
    EmptyText,
    SchemaVersionMismatch,
)
from .scene import Action

SCHEMA_VERSION = 1
DEFAULT_DIMENSION = 256
OUTCOMES = ("correct", "corrected")

_TOKEN = re.compile(r"[a-z0-9]+")


class Embedder(Protocol):
    tag: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def hash_token(token: str, dimension: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


class HashingEmbedder:
    """Offline embedder: lowercase word tokens hashed into a term-frequency vector, L2-normalized."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.tag = f"hash-tf-blake2b-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        tokens = _TOKEN.findall(text.lower())
        if not tokens:
            raise EmptyText(f"no word tokens in {text[:40]!r}")
        vec = np.zeros(self.dimension)
        for tok in tokens:
            vec[hash_token(tok, self.dimension)] += 1.0
        return vec / np.linalg.norm(vec)


class WireEmbedder:
    """``POST {base_url}/embeddings`` with ``{"model": ..., "input": [text]}``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key_env = api_key_env
        self.tag = f"wire-{model}-{dimension}"
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": [text]},
                headers=headers,
            )
            resp.raise_for_status()
            vec = np.asarray(resp.json()["data"][0]["embedding"], dtype=float)
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"embedding request failed: {exc}") from exc
        if vec.shape != (self.dimension,):
            raise DimensionMismatch(f"backend returned {vec.shape}, expected ({self.dimension},)")
        return vec


def embed(text: str, backend: Embedder | None = None) -> np.ndarray:
    return (backend or HashingEmbedder()).embed(text)


@dataclass(frozen=True)
class MemoryRecord:
    scene_text: str
    embedding: tuple[float, ...]
    risk_text: str
    reasoning: str
    action: Action
    outcome: str = "correct"
    reflection: str | None = None
    created_at: float = 0.0
    record_id: int = -1  # assigned by the store

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(v) for v in self.embedding))
        object.__setattr__(self, "action", Action(self.action))
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}")
        if not any(self.embedding):
            raise ValueError("embedding norm must be > 0")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "scene_text": self.scene_text,
            "risk_text": self.risk_text,
            "reasoning": self.reasoning,
            "action": self.action.token,
            "outcome": self.outcome,
            "reflection": self.reflection,
            "created_at": self.created_at,
            "embedding": list(self.embedding),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MemoryRecord":
        return cls(
            scene_text=d["scene_text"],
            embedding=d["embedding"],
            risk_text=d["risk_text"],
            reasoning=d["reasoning"],
            action=Action.from_token(d["action"]),
            outcome=d["outcome"],
            reflection=d.get("reflection"),
            created_at=float(d["created_at"]),
            record_id=int(d["record_id"]),
        )


class VectorStore:
    """Append-only record collection of a fixed embedding dimension.

    Readers may call :meth:`retrieve` concurrently; writers must be serialized
    by the caller.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, embedder_tag: str | None = None,
                 embedder: Embedder | None = None):
        if embedder is not None and embedder.dimension != dimension:
            raise DimensionMismatch("embedder dimension differs from the store dimension")
        self.dimension = dimension
        self.embedder = embedder or HashingEmbedder(dimension)
        self.embedder_tag = embedder_tag or self.embedder.tag
        self._records: list[MemoryRecord] = []
        self._buf = np.zeros((16, dimension))
        self._norm_buf = np.zeros(16)
        self.retrieve_calls = 0

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[MemoryRecord, ...]:
        return tuple(self._records)

    def _append(self, record: MemoryRecord) -> None:
        n = len(self._records)
        if n == len(self._buf):
            self._buf = np.concatenate([self._buf, np.zeros_like(self._buf)])
            self._norm_buf = np.concatenate([self._norm_buf, np.zeros_like(self._norm_buf)])
        vec = np.asarray(record.embedding)
        self._buf[n] = vec
        self._norm_buf[n] = np.linalg.norm(vec)
        self._records.append(record)

    def update(self, record: MemoryRecord) -> int:
        """Append a record and return its newly assigned id."""
        if len(record.embedding) != self.dimension:
            raise DimensionMismatch(f"record has dimension {len(record.embedding)}, store has {self.dimension}")
        rid = self._records[-1].record_id + 1 if self._records else 0
        stored = MemoryRecord(**{**record.__dict__, "record_id": rid})
        self._append(stored)
        return rid

    def add(self, scene_text: str, risk_text: str, reasoning: str, action: Action,
            outcome: str = "correct", reflection: str | None = None,
            index_text: str | None = None, created_at: float | None = None) -> int:
        """Embed ``index_text`` (default: the scene text) and append a record."""
        vec = self.embedder.embed(index_text or scene_text)
        rec = MemoryRecord(scene_text, tuple(vec), risk_text, reasoning, action, outcome, reflection,
                           time.time() if created_at is None else created_at)
        return self.update(rec)

    def retrieve(self, query_text: str, n: int) -> list[tuple[MemoryRecord, float]]:
        if n < 0:
            raise ValueError("n must be >= 0")
        self.retrieve_calls += 1
        if n == 0 or not self._records:
            return []
        q = np.asarray(self.embedder.embed(query_text), dtype=float)
        if q.shape != (self.dimension,):
            raise DimensionMismatch(f"query has shape {q.shape}, store has dimension {self.dimension}")
        return self.retrieve_vector(q, n)

    def retrieve_vector(self, q: np.ndarray, n: int) -> list[tuple[MemoryRecord, float]]:
        if len(q) != self.dimension:
            raise DimensionMismatch(f"query has dimension {len(q)}, store has {self.dimension}")
        if n == 0 or not self._records:
            return []
        n_rec = len(self._records)
        sims = (self._buf[:n_rec] @ q) / (self._norm_buf[:n_rec] * np.linalg.norm(q))
        ids = np.array([r.record_id for r in self._records])
        order = np.lexsort((ids, -sims))[:n]
        return [(self._records[k], float(sims[k])) for k in order]


def retrieve(store: VectorStore, query_text: str, n: int) -> list[tuple[MemoryRecord, float]]:
    return store.retrieve(query_text, n)


def update(store: VectorStore, record: MemoryRecord) -> int:
    return store.update(record)


def seed_memory(store: VectorStore, exemplars: Sequence[Mapping], created_at: float = 0.0) -> int:
    """Bulk-insert exemplar dicts (scene_text, risk_text, reasoning, action) as correct records."""
    for ex in exemplars:
        store.add(ex["scene_text"], ex.get("risk_text", ""), ex["reasoning"],
                  Action.from_token(ex["action"]), "correct", created_at=created_at)
    return len(exemplars)


def bundled_exemplars() -> dict[str, list[dict]]:
    """Hand-written seed exemplars keyed by dataset tag."""
    text = resources.files("drfagent").joinpath("data/exemplars.json").read_text(encoding="utf-8")
    return json.loads(text)


def save(store: VectorStore, path) -> None:
    header = {
        "schema_version": SCHEMA_VERSION,
        "dimension": store.dimension,
        "embedder_tag": store.embedder_tag,
        "count": len(store),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in store.records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path, embedder: Embedder | None = None) -> VectorStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptStore(f"not UTF-8: {exc}") from None
    lines = text.split("\n")
    if not text.endswith("\n") or not lines[0]:
        raise CorruptStore("file is empty or truncated")
    lines = lines[:-1]
    try:
        header = json.loads(lines[0])
        version = int(header["schema_version"])
        dimension = int(header["dimension"])
        tag = str(header["embedder_tag"])
        count = int(header["count"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptStore(f"bad header: {exc}") from None
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"store schema_version {version}, supported {SCHEMA_VERSION}")
    if embedder is None and tag == HashingEmbedder(dimension).tag:
        embedder = HashingEmbedder(dimension)
    store = VectorStore(dimension, tag, embedder)
    if len(lines) - 1 != count:
        raise CorruptStore(f"header announces {count} records, found {len(lines) - 1}")
    for k, line in enumerate(lines[1:], start=2):
        try:
            rec = MemoryRecord.from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptStore(f"line {k}: {exc}") from None
        if len(rec.embedding) != dimension:
            raise CorruptStore(f"line {k}: embedding dimension {len(rec.embedding)} != {dimension}")
        if store._records and rec.record_id <= store._records[-1].record_id:
            raise CorruptStore(f"line {k}: record ids must increase")
        store._append(rec)
    return store
