"""Retrieve-then-generate question answering and instruction-record formatting."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .chunking import Chunk
from .errors import CorruptRecord, MissingAnswer, TabragError, UnknownChunkId
from .retrieval import RetrievalConfig, RetrievalHit, VectorIndex, search

DEFAULT_ABSTENTION_PREFIX = "I don't know"

DEFAULT_RAG_INSTRUCTION = (
    "Answer the question using only the knowledge between the page markers "
    "below. If the knowledge does not contain the answer, reply \"I don't "
    "know the answer.\""
)

DEFAULT_INSTRUCTION_PREAMBLE = "Please answer the following questions concerning ICT products."

_INSTRUCTION_SCAFFOLD = (
    "Below is an instruction that describes a task, paired with an input "
    "that provides further context. Write a response that appropriately "
    "completes the request.\n\n"
    "Instruction:\n{instruction}\n\n"
    "Input:\n{question}\n\n"
    "Response:\n{answer}"
)


@dataclass(frozen=True)
class QARecord:
    question: str
    golden_answer: str = ""
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class AnswerTrace:
    """Everything one answering run produced for one (question, strategy) pair."""

    question: str
    strategy: str
    hits: tuple[RetrievalHit, ...]
    prompt: str
    answer: str
    abstained: bool
    error: str | None = None


def is_abstention(answer: str, prefix: str = DEFAULT_ABSTENTION_PREFIX) -> bool:
    """Abstention is a pure predicate of the answer text: an exact prefix match."""
    return answer.startswith(prefix)


def build_rag_prompt(
    question: str,
    chunks: list[Chunk],
    titles: dict[str, str] | None = None,
    instruction: str = DEFAULT_RAG_INSTRUCTION,
) -> str:
    """Assemble the reader prompt: instruction, ranked context pages, question.

    Each chunk becomes one page block ``<Page_Start>: Title: {title} {text}
    <Page_End>`` in rank order; the title falls back to the chunk's doc_id
    when no mapping is supplied.
    """
    pages = []
    for chunk in chunks:
        title = (titles or {}).get(chunk.doc_id, chunk.doc_id)
        pages.append(f"<Page_Start>: Title: {title} {chunk.text} <Page_End>")
    context = "\n".join(pages)
    return f"{instruction}\n\n{context}\n\nQuestion: {question}\nAnswer:"


def answer(
    question: str,
    index: VectorIndex,
    chunk_lookup: dict[str, Chunk],
    cfg: RetrievalConfig,
    gen_backend,
    embed_backend,
    titles: dict[str, str] | None = None,
    abstention_prefix: str = DEFAULT_ABSTENTION_PREFIX,
) -> AnswerTrace:
    """Retrieve top-k chunks for the question, prompt the reader, trace it all.

    ``chunk_lookup`` must cover every id the index can return; it supplies
    the chunk texts that the index itself does not store.
    """
    hits = search(index, question, cfg, embed_backend)
    chunks = []
    for hit in hits:
        if hit.chunk_id not in chunk_lookup:
            raise UnknownChunkId(f"retrieved chunk {hit.chunk_id!r} has no stored text")
        chunks.append(chunk_lookup[hit.chunk_id])
    prompt = build_rag_prompt(question, chunks, titles)
    text = gen_backend.generate(prompt)
    return AnswerTrace(
        question=question,
        strategy=index.strategy,
        hits=tuple(hits),
        prompt=prompt,
        answer=text,
        abstained=is_abstention(text, abstention_prefix),
    )


def batch_answer(
    questions: list[QARecord],
    indices: dict[str, VectorIndex],
    chunk_lookups: dict[str, dict[str, Chunk]],
    cfg: RetrievalConfig,
    gen_backend,
    embed_backend,
    titles: dict[str, str] | None = None,
    abstention_prefix: str = DEFAULT_ABSTENTION_PREFIX,
) -> dict[str, list[AnswerTrace]]:
    """Answer every question against every strategy index.

    Failures are isolated per (question, strategy) pair: a failing pair gets a
    trace with ``error`` set and an empty answer, and the run continues, so
    traces stay aligned with the question list for every strategy.
    """
    out: dict[str, list[AnswerTrace]] = {}
    for strategy, index in indices.items():
        traces: list[AnswerTrace] = []
        for record in questions:
            try:
                traces.append(
                    answer(
                        record.question, index, chunk_lookups[strategy], cfg,
                        gen_backend, embed_backend, titles, abstention_prefix,
                    )
                )
            except TabragError as exc:
                traces.append(
                    AnswerTrace(
                        question=record.question,
                        strategy=strategy,
                        hits=(),
                        prompt="",
                        answer="",
                        abstained=False,
                        error=str(exc),
                    )
                )
        out[strategy] = traces
    return out


def build_instruction_record(
    record: QARecord,
    instruction: str = DEFAULT_INSTRUCTION_PREAMBLE,
) -> str:
    """Fine-tuning text for one QA pair; the golden answer is mandatory."""
    if not record.golden_answer:
        raise MissingAnswer(f"question {record.question!r} has no golden answer")
    return _INSTRUCTION_SCAFFOLD.format(
        instruction=instruction, question=record.question, answer=record.golden_answer
    )


# --- wire formats -----------------------------------------------------------

def load_questions(path) -> list[QARecord]:
    """Questions file: JSON Lines {"question", "golden_answer"?, "tags"?}."""
    records: list[QARecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            question = obj.get("question")
            if not isinstance(question, str) or not question:
                raise CorruptRecord(f"{path}:{lineno}: missing non-empty 'question'")
            golden = obj.get("golden_answer", "")
            if not isinstance(golden, str):
                raise CorruptRecord(f"{path}:{lineno}: 'golden_answer' must be a string")
            tags = obj.get("tags", [])
            if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                raise CorruptRecord(f"{path}:{lineno}: 'tags' must be a list of strings")
            records.append(QARecord(question=question, golden_answer=golden, tags=tuple(tags)))
    return records


def save_traces(traces: list[AnswerTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            record = {
                "question": t.question,
                "strategy": t.strategy,
                "hits": [
                    {"chunk_id": h.chunk_id, "score": h.score, "rank": h.rank}
                    for h in t.hits
                ],
                "prompt": t.prompt,
                "answer": t.answer,
                "abstained": t.abstained,
                "error": t.error,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_traces(path) -> list[AnswerTrace]:
    traces: list[AnswerTrace] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            try:
                hits = tuple(
                    RetrievalHit(chunk_id=h["chunk_id"], score=h["score"], rank=h["rank"])
                    for h in obj["hits"]
                )
                traces.append(
                    AnswerTrace(
                        question=obj["question"],
                        strategy=obj["strategy"],
                        hits=hits,
                        prompt=obj["prompt"],
                        answer=obj["answer"],
                        abstained=obj["abstained"],
                        error=obj.get("error"),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise CorruptRecord(f"{path}:{lineno}: missing field ({exc})") from exc
    return traces


def save_instruction_dataset(records: list[QARecord], path,
                             instruction: str = DEFAULT_INSTRUCTION_PREAMBLE) -> None:
    """Instruction dataset: JSON Lines {"text": scaffold}, one per QA pair."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            text = build_instruction_record(record, instruction)
            fh.write(json.dumps({"text": text}, ensure_ascii=False) + "\n")
