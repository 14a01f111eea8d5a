"""Greedy sentence-preserving chunking of a corpus, plus chunk persistence."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import CorruptRecord, IoFailure
from .tabletext import Corpus

log = logging.getLogger(__name__)

DEFAULT_MAX_CHUNK_CHARS = 3000


@dataclass(frozen=True)
class ChunkingConfig:
    """Size cap in Unicode scalar values and the sentence-terminator set."""

    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS
    sentence_terminators: str = ".!?"


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    strategy: str
    text: str
    char_len: int
    sentence_count: int
    oversize: bool = False


def split_sentences(text: str, terminators: str = ".!?") -> list[str]:
    """Split on terminator characters followed by whitespace or end of text.

    Abbreviations are not special-cased.  Each sentence is stripped of
    leading/trailing whitespace; empty segments are dropped.
    """
    sentences: list[str] = []
    start = 0
    n = len(text)
    for i in range(n):
        if text[i] in terminators and (i + 1 == n or text[i + 1].isspace()):
            segment = text[start:i + 1].strip()
            if segment:
                sentences.append(segment)
            start = i + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def chunk_corpus(corpus: Corpus, cfg: ChunkingConfig | None = None) -> list[Chunk]:
    """Pack whole sentences greedily into chunks of at most max_chunk_chars.

    Sentences within a chunk are joined with single spaces, so a chunk of k
    sentences costs their combined length plus k - 1 separators.  Crossing a
    document boundary always starts a new chunk; passage boundaries inside a
    document do not.  A single sentence longer than the cap becomes its own
    chunk flagged ``oversize=True`` (with a logged warning) rather than being
    split mid-sentence.

    Chunk ids are ``{strategy}/{doc_id}/{seq:06d}`` with seq dense ascending
    per document.
    """
    cfg = cfg or ChunkingConfig()
    if cfg.max_chunk_chars < 1:
        raise ValueError("max_chunk_chars must be >= 1")
    chunks: list[Chunk] = []

    def flush(doc_id: str, seq: int, parts: list[str], oversize: bool = False) -> int:
        if not parts:
            return seq
        text = " ".join(parts)
        chunks.append(
            Chunk(
                chunk_id=f"{corpus.strategy}/{doc_id}/{seq:06d}",
                doc_id=doc_id,
                strategy=corpus.strategy,
                text=text,
                char_len=len(text),
                sentence_count=len(parts),
                oversize=oversize,
            )
        )
        return seq + 1

    current_doc: str | None = None
    parts: list[str] = []
    length = 0
    seq = 0
    for passage in corpus.passages:
        if passage.doc_id != current_doc:
            if current_doc is not None:
                seq = flush(current_doc, seq, parts)
            current_doc = passage.doc_id
            parts = []
            length = 0
            seq = 0
        for sentence in split_sentences(passage.text, cfg.sentence_terminators):
            if len(sentence) > cfg.max_chunk_chars:
                seq = flush(current_doc, seq, parts)
                parts = []
                length = 0
                log.warning(
                    "sentence of %d chars exceeds cap %d in %s; emitting oversize chunk",
                    len(sentence), cfg.max_chunk_chars, current_doc,
                )
                seq = flush(current_doc, seq, [sentence], oversize=True)
                continue
            candidate = len(sentence) if not parts else length + 1 + len(sentence)
            if parts and candidate > cfg.max_chunk_chars:
                seq = flush(current_doc, seq, parts)
                parts = []
                candidate = len(sentence)
            parts.append(sentence)
            length = candidate
    if current_doc is not None:
        flush(current_doc, seq, parts)
    return chunks


# --- persistence (JSON Lines + sidecar manifest) ----------------------------

def _manifest_path(path) -> Path:
    return Path(path).with_suffix(".manifest.json")


def persist_chunks(chunks: list[Chunk], path, cfg: ChunkingConfig | None = None) -> dict:
    """Write chunks as JSON Lines plus a sidecar manifest; returns the manifest."""
    strategy_counts: dict[str, int] = {}
    for c in chunks:
        strategy_counts[c.strategy] = strategy_counts.get(c.strategy, 0) + 1
    manifest = {
        "chunk_count": len(chunks),
        "total_sentences": sum(c.sentence_count for c in chunks),
        "oversize_count": sum(1 for c in chunks if c.oversize),
        "strategy_counts": dict(sorted(strategy_counts.items())),
        "config": None if cfg is None else {
            "max_chunk_chars": cfg.max_chunk_chars,
            "sentence_terminators": cfg.sentence_terminators,
        },
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for c in chunks:
                record = {
                    "chunk_id": c.chunk_id,
                    "doc_id": c.doc_id,
                    "strategy": c.strategy,
                    "text": c.text,
                    "char_len": c.char_len,
                    "sentence_count": c.sentence_count,
                    "oversize": c.oversize,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        with open(_manifest_path(path), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write chunk store {path}: {exc}") from exc
    return manifest


def load_chunks(path) -> list[Chunk]:
    """Read a chunk store; rejects malformed lines with their line number."""
    chunks: list[Chunk] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read chunk store {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            try:
                chunk = Chunk(
                    chunk_id=record["chunk_id"],
                    doc_id=record["doc_id"],
                    strategy=record["strategy"],
                    text=record["text"],
                    char_len=record["char_len"],
                    sentence_count=record["sentence_count"],
                    oversize=record["oversize"],
                )
            except (KeyError, TypeError) as exc:
                raise CorruptRecord(f"{path}:{lineno}: missing field ({exc})") from exc
            if not isinstance(chunk.text, str) or not isinstance(chunk.chunk_id, str):
                raise CorruptRecord(f"{path}:{lineno}: wrong field type")
            if chunk.char_len != len(chunk.text):
                raise CorruptRecord(
                    f"{path}:{lineno}: char_len {chunk.char_len} != len(text) {len(chunk.text)}"
                )
            chunks.append(chunk)
    return chunks
