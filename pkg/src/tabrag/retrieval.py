"""Exact dense-vector retrieval over chunk embeddings.

The index is a flat matrix of unit-norm float32 vectors; search scores every
entry by inner product (cosine, given unit norms) in float64 and sorts
descending with ties broken by ascending chunk_id.  No approximation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chunking import Chunk
from .errors import CorruptRecord, DuplicateId, EmptyIndex, IoFailure, UnknownChunkId


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 3

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    rank: int  # 1-based


@dataclass(frozen=True)
class VectorIndex:
    dimension: int
    strategy: str
    chunk_ids: tuple[str, ...]
    vectors: np.ndarray  # shape (n, dimension), float32, unit rows

    def __len__(self) -> int:
        return len(self.chunk_ids)


@dataclass(frozen=True)
class TargetSimilarity:
    chunk_id: str
    score: float
    rank: int
    retrieved: bool  # True iff rank <= top_k


@dataclass(frozen=True)
class SimilarityReport:
    """Per-query diagnostics: how close are the designated target chunks."""

    strategy: str
    query: str
    top_k: int
    targets: tuple[TargetSimilarity, ...]
    best_non_target_id: str | None
    best_non_target_score: float | None


def build_index(chunks: list[Chunk], backend, strategy: str | None = None) -> VectorIndex:
    """Embed all chunk texts in order and assemble the index."""
    if not chunks:
        raise ValueError("cannot build an index from zero chunks")
    ids = [c.chunk_id for c in chunks]
    seen: set[str] = set()
    for cid in ids:
        if cid in seen:
            raise DuplicateId(f"chunk id {cid!r} appears more than once")
        seen.add(cid)
    if strategy is None:
        strategy = chunks[0].strategy
    vectors = np.asarray(backend.embed([c.text for c in chunks]), dtype=np.float32)
    if vectors.shape != (len(chunks), backend.dimension):
        raise ValueError(
            f"backend returned shape {vectors.shape}, expected {(len(chunks), backend.dimension)}"
        )
    return VectorIndex(
        dimension=backend.dimension,
        strategy=strategy,
        chunk_ids=tuple(ids),
        vectors=vectors,
    )


def _scores(index: VectorIndex, query: str, backend) -> np.ndarray:
    q = np.asarray(backend.embed([query])[0], dtype=np.float64)
    return index.vectors.astype(np.float64) @ q


def _ranked_order(index: VectorIndex, scores: np.ndarray) -> list[int]:
    return sorted(range(len(index)), key=lambda i: (-scores[i], index.chunk_ids[i]))


def search(index: VectorIndex, query: str, cfg: RetrievalConfig, backend) -> list[RetrievalHit]:
    """Return the min(top_k, n) best entries for the query, exactly."""
    if len(index) == 0:
        raise EmptyIndex("search over an empty index")
    scores = _scores(index, query, backend)
    order = _ranked_order(index, scores)[: cfg.top_k]
    return [
        RetrievalHit(chunk_id=index.chunk_ids[i], score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order, start=1)
    ]


def similarity_report(
    index: VectorIndex,
    query: str,
    target_chunk_ids: list[str],
    cfg: RetrievalConfig,
    backend,
) -> SimilarityReport:
    """Score and rank the target chunks against the query.

    For each target the report carries its score, its exact rank among all
    entries, and whether it falls within top_k; plus the best-scoring
    non-target entry (None when every entry is a target).  An empty target
    list yields an empty report.
    """
    if len(index) == 0:
        raise EmptyIndex("similarity report over an empty index")
    position = {cid: i for i, cid in enumerate(index.chunk_ids)}
    for cid in target_chunk_ids:
        if cid not in position:
            raise UnknownChunkId(f"target chunk {cid!r} is not in the index")
    scores = _scores(index, query, backend)
    order = _ranked_order(index, scores)
    rank_of = {index.chunk_ids[i]: rank for rank, i in enumerate(order, start=1)}
    targets = tuple(
        TargetSimilarity(
            chunk_id=cid,
            score=float(scores[position[cid]]),
            rank=rank_of[cid],
            retrieved=rank_of[cid] <= cfg.top_k,
        )
        for cid in target_chunk_ids
    )
    target_set = set(target_chunk_ids)
    best_id = None
    best_score = None
    for i in order:
        cid = index.chunk_ids[i]
        if cid not in target_set:
            best_id = cid
            best_score = float(scores[i])
            break
    return SimilarityReport(
        strategy=index.strategy,
        query=query,
        top_k=cfg.top_k,
        targets=targets,
        best_non_target_id=best_id,
        best_non_target_score=best_score,
    )


# --- persistence: vectors.bin + index.json sidecar --------------------------

def save_index(index: VectorIndex, directory) -> None:
    """Write vectors as raw little-endian float32 plus a JSON sidecar."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "vectors.bin", "wb") as fh:
            fh.write(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
        sidecar = {
            "dimension": index.dimension,
            "strategy": index.strategy,
            "chunk_ids": list(index.chunk_ids),
        }
        with open(directory / "index.json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write index to {directory}: {exc}") from exc


def load_index(directory) -> VectorIndex:
    directory = Path(directory)
    try:
        with open(directory / "index.json", "r", encoding="utf-8") as fh:
            sidecar = json.load(fh)
        raw = (directory / "vectors.bin").read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read index from {directory}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptRecord(f"{directory / 'index.json'}: not valid JSON ({exc})") from exc
    try:
        dimension = int(sidecar["dimension"])
        strategy = sidecar["strategy"]
        chunk_ids = tuple(sidecar["chunk_ids"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptRecord(f"{directory / 'index.json'}: missing field ({exc})") from exc
    expected = len(chunk_ids) * dimension * 4
    if len(raw) != expected:
        raise CorruptRecord(
            f"{directory / 'vectors.bin'}: {len(raw)} bytes, expected {expected}"
        )
    vectors = np.frombuffer(raw, dtype="<f4").reshape(len(chunk_ids), dimension)
    return VectorIndex(
        dimension=dimension,
        strategy=strategy,
        chunk_ids=chunk_ids,
        vectors=vectors.astype(np.float32),
    )
