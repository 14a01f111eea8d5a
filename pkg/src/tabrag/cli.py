"""Command-line pipeline: ingest, convert, chunk, index, ask, eval, analyze, report.

Stages communicate only through files in the --out directory, so any stage can
be re-run in isolation.  With --stub every backend is deterministic and
re-running a command produces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path

from filelock import FileLock, Timeout

from . import backends, chunking, documents, evaluation, qa, retrieval, tabletext
from .errors import (
    BackendRefusal,
    BackendUnavailable,
    CorpusBuildError,
    CorruptRecord,
    DimensionMismatch,
    DuplicateId,
    EmptyIndex,
    IncompleteSheet,
    IoFailure,
    LengthMismatch,
    MalformedReply,
    MissingAnswer,
    MissingDemonstration,
    MissingLabel,
    MissingUpstreamArtifact,
    OutOfRange,
    OverlappingSpans,
    SchemaViolation,
    TabragError,
    TooFewStrategies,
    UnknownChunkId,
    WrongEvaluatorCount,
)

STRATEGIES = tabletext.STRATEGIES

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_SCHEMA = 2
EXIT_MISSING_UPSTREAM = 3
EXIT_BACKEND = 4
EXIT_CORRUPT = 5
EXIT_EVAL_INPUT = 6
EXIT_LOCKED = 7

_EXIT_BY_CLASS = (
    ((SchemaViolation, OverlappingSpans, MissingDemonstration, MissingAnswer,
      DuplicateId, UnknownChunkId, EmptyIndex), EXIT_SCHEMA),
    ((MissingUpstreamArtifact,), EXIT_MISSING_UPSTREAM),
    ((BackendUnavailable, BackendRefusal, DimensionMismatch, CorpusBuildError), EXIT_BACKEND),
    ((CorruptRecord, IoFailure), EXIT_CORRUPT),
    ((MalformedReply, OutOfRange, MissingLabel, IncompleteSheet,
      TooFewStrategies, LengthMismatch, WrongEvaluatorCount), EXIT_EVAL_INPUT),
)

_DEFAULTS = {
    "out": ".",
    "strategy": "all",
    "gen_endpoint": None,
    "embed_endpoint": None,
    "dimension": backends.DEFAULT_DIMENSION,
    "top_k": 3,
    "max_chunk_chars": chunking.DEFAULT_MAX_CHUNK_CHARS,
    "stub": False,
    "seed": 0,
}


@dataclass(frozen=True)
class RunConfig:
    out: Path
    strategy: str
    gen_endpoint: str | None
    embed_endpoint: str | None
    dimension: int
    top_k: int
    max_chunk_chars: int
    stub: bool
    seed: int

    @property
    def strategies(self) -> tuple[str, ...]:
        return STRATEGIES if self.strategy == "all" else (self.strategy,)

    @property
    def chunking_config(self) -> chunking.ChunkingConfig:
        return chunking.ChunkingConfig(max_chunk_chars=self.max_chunk_chars)

    @property
    def retrieval_config(self) -> retrieval.RetrievalConfig:
        return retrieval.RetrievalConfig(top_k=self.top_k)


def _merge_config(args: argparse.Namespace) -> RunConfig:
    # precedence: explicit flag > config file > built-in default
    merged = dict(_DEFAULTS)
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise IoFailure(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CorruptRecord(f"{args.config}: not valid JSON ({exc})") from exc
        unknown = set(file_cfg) - set(_DEFAULTS)
        if unknown:
            raise CorruptRecord(f"{args.config}: unknown keys {sorted(unknown)}")
        merged.update(file_cfg)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if key == "stub":
            if value:
                merged[key] = True
        elif value is not None:
            merged[key] = value
    if merged["strategy"] not in STRATEGIES + ("all",):
        raise SchemaViolation(f"unknown strategy {merged['strategy']!r}")
    return RunConfig(
        out=Path(merged["out"]),
        strategy=merged["strategy"],
        gen_endpoint=merged["gen_endpoint"],
        embed_endpoint=merged["embed_endpoint"],
        dimension=int(merged["dimension"]),
        top_k=int(merged["top_k"]),
        max_chunk_chars=int(merged["max_chunk_chars"]),
        stub=bool(merged["stub"]),
        seed=int(merged["seed"]),
    )


def _gen_backend(cfg: RunConfig):
    if cfg.stub:
        return backends.StubGenerator()
    if cfg.gen_endpoint:
        return backends.RemoteGenerator(cfg.gen_endpoint)
    raise BackendUnavailable("no generation backend configured; pass --stub or --gen-endpoint")


def _embed_backend(cfg: RunConfig):
    if cfg.stub:
        return backends.StubEmbedder(dimension=cfg.dimension, seed=cfg.seed)
    if cfg.embed_endpoint:
        return backends.RemoteEmbedder(cfg.embed_endpoint, dimension=cfg.dimension)
    raise BackendUnavailable("no embedding backend configured; pass --stub or --embed-endpoint")


def _write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require_file(path: Path) -> Path:
    if not path.exists():
        raise MissingUpstreamArtifact(f"missing upstream artifact: {path.name}")
    return path


# --- artifact names ---------------------------------------------------------

def _documents_path(cfg) -> Path:
    return cfg.out / "documents.jsonl"


def _corpus_path(cfg, strategy: str) -> Path:
    return cfg.out / f"corpus_{strategy}.jsonl"


def _partial_corpus_path(cfg, strategy: str) -> Path:
    return cfg.out / f"corpus_{strategy}.partial.jsonl"


def _resume_path(cfg, strategy: str) -> Path:
    return cfg.out / f"convert_resume_{strategy}.json"


def _chunks_path(cfg, strategy: str) -> Path:
    return cfg.out / f"chunks_{strategy}.jsonl"


def _index_dir(cfg, strategy: str) -> Path:
    return cfg.out / f"index_{strategy}"


# --- commands ---------------------------------------------------------------

def _load_documents(cfg) -> list[documents.HybridDocument]:
    path = _require_file(_documents_path(cfg))
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            docs.append(documents.document_from_dict(obj, source=f"{path}:{lineno}"))
    return docs


def cmd_ingest(cfg: RunConfig, paths: list[str]) -> int:
    stored = []
    rejected = []
    seen_ids: set[str] = set()
    for raw_path in paths:
        try:
            doc = documents.load_document(raw_path)
            if doc.doc_id in seen_ids:
                raise SchemaViolation(f"{raw_path}: duplicate doc_id {doc.doc_id!r}")
            normalized = documents.normalize_document(doc)
        except (SchemaViolation, OverlappingSpans) as exc:
            rejected.append({"file": str(raw_path), "error": str(exc)})
            continue
        except OSError as exc:
            rejected.append({"file": str(raw_path), "error": f"unreadable: {exc}"})
            continue
        seen_ids.add(doc.doc_id)
        stored.append(normalized)
    with open(_documents_path(cfg), "w", encoding="utf-8") as fh:
        for doc in stored:
            fh.write(json.dumps(documents.document_to_dict(doc), ensure_ascii=False) + "\n")
    report = {
        "stored": [d.doc_id for d in stored],
        "rejected": rejected,
        "warnings": {
            d.doc_id: sum(
                len(b.table.warnings)
                for b in d.blocks
                if b.kind == documents.TABLE and b.table is not None
            )
            for d in stored
        },
    }
    _write_json(report, cfg.out / "ingest_report.json")
    print(f"ingest: stored {len(stored)} document(s), rejected {len(rejected)}")
    for item in rejected:
        print(f"  rejected {item['file']}: {item['error']}", file=sys.stderr)
    return EXIT_OK if not rejected else EXIT_SCHEMA


def cmd_convert(cfg: RunConfig) -> int:
    docs = _load_documents(cfg)
    failures: list[str] = []
    for strategy in cfg.strategies:
        cache: dict[tuple[str, str], str] = {}
        partial = _partial_corpus_path(cfg, strategy)
        resume = _resume_path(cfg, strategy)
        if resume.exists() and partial.exists():
            for p in tabletext.load_corpus(partial).passages:
                if p.origin == tabletext.FROM_TABLE:
                    cache[(p.doc_id, p.block_id)] = p.text
        backend = None
        if strategy in (tabletext.TPLM, tabletext.LLM):
            backend = _gen_backend(cfg)
        try:
            corpus = tabletext.assemble_corpus(
                docs, strategy, backend=backend, precomputed=cache
            )
        except CorpusBuildError as exc:
            tabletext.save_corpus(
                tabletext.Corpus(strategy=strategy, passages=tuple(exc.completed)), partial
            )
            _write_json(
                {"strategy": strategy, "failed": [list(f) for f in exc.failed]}, resume
            )
            failures.append(f"{strategy}: {exc}")
            print(f"convert: {strategy} failed, resume manifest written", file=sys.stderr)
            continue
        tabletext.save_corpus(corpus, _corpus_path(cfg, strategy))
        partial.unlink(missing_ok=True)
        resume.unlink(missing_ok=True)
        print(f"convert: {strategy} -> {len(corpus.passages)} passages")
    if failures:
        raise CorpusBuildError("; ".join(failures))
    return EXIT_OK


def cmd_chunk(cfg: RunConfig) -> int:
    for strategy in cfg.strategies:
        corpus = tabletext.load_corpus(_require_file(_corpus_path(cfg, strategy)))
        chunks = chunking.chunk_corpus(corpus, cfg.chunking_config)
        manifest = chunking.persist_chunks(chunks, _chunks_path(cfg, strategy), cfg.chunking_config)
        print(f"chunk: {strategy} -> {manifest['chunk_count']} chunk(s)")
    return EXIT_OK


def cmd_index(cfg: RunConfig) -> int:
    embedder = _embed_backend(cfg)
    for strategy in cfg.strategies:
        chunks = chunking.load_chunks(_require_file(_chunks_path(cfg, strategy)))
        index = retrieval.build_index(chunks, embedder, strategy=strategy)
        retrieval.save_index(index, _index_dir(cfg, strategy))
        print(f"index: {strategy} -> {len(index)} vector(s)")
    return EXIT_OK


def _load_titles(cfg) -> dict[str, str]:
    if not _documents_path(cfg).exists():
        return {}
    return {d.doc_id: d.title for d in _load_documents(cfg)}


def cmd_ask(cfg: RunConfig, question: str | None, questions_file: str | None) -> int:
    if question is None and questions_file is None:
        raise SchemaViolation("ask needs --question or --questions")
    if questions_file is not None:
        records = qa.load_questions(_require_file(Path(questions_file)))
    else:
        records = [qa.QARecord(question=question)]
    gen = _gen_backend(cfg)
    embed = _embed_backend(cfg)
    titles = _load_titles(cfg)
    indices = {}
    lookups = {}
    for strategy in cfg.strategies:
        index_dir = _index_dir(cfg, strategy)
        _require_file(index_dir / "index.json")
        indices[strategy] = retrieval.load_index(index_dir)
        chunks = chunking.load_chunks(_require_file(_chunks_path(cfg, strategy)))
        lookups[strategy] = {c.chunk_id: c for c in chunks}
    traces_by_strategy = qa.batch_answer(
        records, indices, lookups, cfg.retrieval_config, gen, embed, titles
    )
    flat = [t for strategy in cfg.strategies for t in traces_by_strategy[strategy]]
    qa.save_traces(flat, cfg.out / "traces.jsonl")
    if question is not None:
        for strategy in cfg.strategies:
            trace = traces_by_strategy[strategy][0]
            print(f"[{strategy}] {trace.answer}")
    else:
        print(f"ask: wrote {len(flat)} trace(s)")
    return EXIT_OK


def _question_ids(records) -> list[str]:
    return [f"q{i:04d}" for i in range(len(records))]


def _traces_by_question(cfg, strategies) -> dict[str, dict[str, qa.AnswerTrace]]:
    traces = qa.load_traces(_require_file(cfg.out / "traces.jsonl"))
    by_strategy: dict[str, list[qa.AnswerTrace]] = {}
    for t in traces:
        by_strategy.setdefault(t.strategy, []).append(t)
    out: dict[str, dict[str, qa.AnswerTrace]] = {}
    for strategy in strategies:
        if strategy not in by_strategy:
            raise MissingUpstreamArtifact(f"traces.jsonl has no {strategy!r} traces")
        for i, t in enumerate(by_strategy[strategy]):
            out.setdefault(f"q{i:04d}", {})[strategy] = t
    return out


def _build_eval_prompts(cfg: RunConfig, questions_file: str) -> int:
    records = qa.load_questions(_require_file(Path(questions_file)))
    ids = _question_ids(records)
    per_question = _traces_by_question(cfg, STRATEGIES)
    label_maps: dict[str, dict[str, str]] = {}
    with open(cfg.out / "eval_prompts.jsonl", "w", encoding="utf-8") as fh:
        for qid, record in zip(ids, records):
            if qid not in per_question:
                raise MissingUpstreamArtifact(f"traces.jsonl lacks traces for {qid}")
            shuffled = list(STRATEGIES)
            random.Random(f"{cfg.seed}:{qid}").shuffle(shuffled)
            label_map = dict(zip(evaluation.LABELS, shuffled))
            candidates = {
                label: per_question[qid][strategy].answer
                for label, strategy in label_map.items()
            }
            eval_record = evaluation.EvalRecord(
                question=record.question,
                golden_answer=record.golden_answer,
                candidates=candidates,
                label_map=label_map,
            )
            prompt = evaluation.build_evaluator_prompt(eval_record)
            fh.write(json.dumps({"question_id": qid, "prompt": prompt}, ensure_ascii=False) + "\n")
            label_maps[qid] = label_map
    evaluation.save_label_maps(label_maps, cfg.out / "label_map.json")
    print(f"eval: wrote {len(label_maps)} prompt(s) and label_map.json")
    return EXIT_OK


def _parse_eval_replies(cfg: RunConfig, replies_file: str, evaluator_id: str) -> int:
    import csv as _csv

    path = _require_file(Path(replies_file))
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            if "question_id" not in obj or "reply" not in obj:
                raise CorruptRecord(f"{path}:{lineno}: needs question_id and reply")
            scores = evaluation.parse_scores(obj["reply"])
            rows.append([obj["question_id"], evaluator_id] +
                        [str(scores[label]) for label in evaluation.LABELS])
    out_path = cfg.out / f"scores_{evaluator_id}.csv"
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["question_id", "evaluator_id", "A", "B", "C", "D"])
        writer.writerows(rows)
    print(f"eval: parsed {len(rows)} repl(ies) -> {out_path.name}")
    return EXIT_OK


def _aggregate_sheets(sheets: list[evaluation.ScoreSheet]) -> dict:
    pooled = evaluation.pooled_mean_scores(sheets)
    strategies = sorted(pooled)
    question_ids = sorted(sheets[0].scores)
    # win rates over all (question, evaluator) samples, strict wins only
    matrix: dict[str, dict[str, float]] = {s: {} for s in strategies}
    samples = {
        s: [sheet.scores[qid][s] for sheet in sheets for qid in sorted(sheet.scores)]
        for s in strategies
    }
    for a in strategies:
        for b in strategies:
            if a == b:
                continue
            a_wins, _ = evaluation.win_rate(samples[a], samples[b])
            matrix[a][b] = a_wins
    distribution: dict[str, dict[int, int]] = {s: {} for s in strategies}
    for sheet in sheets:
        for s, hist in evaluation.score_distribution(sheet).items():
            for value, count in hist.items():
                distribution[s][value] = distribution[s].get(value, 0) + count
    reliability = None
    if len(sheets) == 3:
        verdicts = {
            qid: evaluation.check_reliability([sheet.scores[qid] for sheet in sheets])
            for qid in question_ids
        }
        reliability = {
            "reliable": sum(1 for v in verdicts.values() if v == evaluation.RELIABLE),
            "needs_reassessment": sum(
                1 for v in verdicts.values() if v == evaluation.NEEDS_REASSESSMENT
            ),
            "per_question": verdicts,
        }
    return {
        "evaluators": [sheet.evaluator_id for sheet in sheets],
        "question_count": len(question_ids),
        "means_per_evaluator": {
            sheet.evaluator_id: evaluation.mean_scores(sheet) for sheet in sheets
        },
        "pooled_means": pooled,
        "rsd": evaluation.rsd(pooled) if len(pooled) >= 2 else None,
        "win_rate_matrix": matrix,
        "score_distribution": {
            s: {str(v): c for v, c in sorted(hist.items())}
            for s, hist in distribution.items()
        },
        "reliability": reliability,
    }


def cmd_eval(cfg: RunConfig, args) -> int:
    if args.build_prompts:
        if not args.questions:
            raise SchemaViolation("eval --build-prompts needs --questions")
        return _build_eval_prompts(cfg, args.questions)
    if args.parse_replies:
        if not args.evaluator_id:
            raise SchemaViolation("eval --parse-replies needs --evaluator-id")
        return _parse_eval_replies(cfg, args.parse_replies, args.evaluator_id)
    if not args.scores:
        raise SchemaViolation("eval needs --scores (or --build-prompts / --parse-replies)")
    label_map_path = Path(args.label_map) if args.label_map else cfg.out / "label_map.json"
    label_maps = evaluation.load_label_maps(_require_file(label_map_path))
    sheets = evaluation.load_score_sheets(_require_file(Path(args.scores)), label_maps)
    if not sheets:
        raise IncompleteSheet(f"{args.scores}: no score rows")
    _write_json(_aggregate_sheets(sheets), cfg.out / "eval_report.json")
    print(f"eval: aggregated {len(sheets)} sheet(s) -> eval_report.json")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, args) -> int:
    analysis: dict = {"frequency": None, "avg_generated_length": None, "question_taxonomy": None}
    corpora = {}
    for strategy in cfg.strategies:
        path = _corpus_path(cfg, strategy)
        if path.exists():
            corpora[strategy] = tabletext.load_corpus(path)
    if args.terms and args.verbs:
        if not corpora:
            raise MissingUpstreamArtifact("no corpus files found for frequency analysis")
        terms = evaluation.load_lexicon(args.terms)
        verbs = evaluation.load_lexicon(args.verbs)
        analysis["frequency"] = {
            strategy: dict(zip(("term_count", "verb_count"),
                               evaluation.term_verb_frequency(corpus, terms, verbs)))
            for strategy, corpus in sorted(corpora.items())
        }
    if corpora:
        passages = [
            tabletext.GeneratedPassage(p.doc_id, p.block_id, strategy, p.text, len(p.text))
            for strategy, corpus in sorted(corpora.items())
            for p in corpus.passages
            if p.origin == tabletext.FROM_TABLE
        ]
        if passages:
            analysis["avg_generated_length"] = evaluation.avg_generated_length(passages)
    if args.questions:
        records = qa.load_questions(_require_file(Path(args.questions)))
        first_counts: dict[str, int] = {}
        tag_counts: dict[str, int] = {}
        for record in records:
            first, tag = evaluation.classify_question(record.question)
            first_counts[first] = first_counts.get(first, 0) + 1
            tag_counts[tag] = tag_counts.get(tag, 0) + 1
        analysis["question_taxonomy"] = {
            "first_word": dict(sorted(first_counts.items())),
            "tag": dict(sorted(tag_counts.items())),
        }
    _write_json(analysis, cfg.out / "analysis.json")
    print("analyze: wrote analysis.json")
    return EXIT_OK


def _similarity_section(cfg: RunConfig, query: str, targets: list[str]) -> list[dict]:
    embedder = _embed_backend(cfg)
    section = []
    for strategy in cfg.strategies:
        index_dir = _index_dir(cfg, strategy)
        if not (index_dir / "index.json").exists():
            continue
        index = retrieval.load_index(index_dir)
        in_index = [t for t in targets if t in set(index.chunk_ids)]
        report = retrieval.similarity_report(index, query, in_index, cfg.retrieval_config, embedder)
        section.append(
            {
                "strategy": strategy,
                "query": query,
                "top_k": report.top_k,
                "targets": [
                    {
                        "chunk_id": t.chunk_id,
                        "score": t.score,
                        "rank": t.rank,
                        "retrieved": t.retrieved,
                    }
                    for t in report.targets
                ],
                "best_non_target_id": report.best_non_target_id,
                "best_non_target_score": report.best_non_target_score,
            }
        )
    return section


def cmd_report(cfg: RunConfig, args) -> int:
    report: dict = {
        "strategies": list(cfg.strategies),
        "profiles": {
            s: {
                "resource": tabletext.strategy_profile(s).resource,
                "speed": tabletext.strategy_profile(s).speed,
                "diversity": tabletext.strategy_profile(s).diversity,
            }
            for s in cfg.strategies
        },
        "evaluation": None,
        "abstention_rate": None,
        "similarity": None,
        "rsd_by_group": None,
        "analysis": None,
    }
    if args.scores:
        label_map_path = Path(args.label_map) if args.label_map else cfg.out / "label_map.json"
        label_maps = evaluation.load_label_maps(_require_file(label_map_path))
        sheets = evaluation.load_score_sheets(_require_file(Path(args.scores)), label_maps)
        report["evaluation"] = _aggregate_sheets(sheets)
    elif (cfg.out / "eval_report.json").exists():
        report["evaluation"] = _read_json(cfg.out / "eval_report.json")
    if (cfg.out / "traces.jsonl").exists():
        traces = qa.load_traces(cfg.out / "traces.jsonl")
        per_strategy: dict[str, list[qa.AnswerTrace]] = {}
        for t in traces:
            per_strategy.setdefault(t.strategy, []).append(t)
        report["abstention_rate"] = {
            s: round(sum(1 for t in ts if t.abstained) / len(ts), 4)
            for s, ts in sorted(per_strategy.items())
        }
    if args.query:
        report["similarity"] = _similarity_section(cfg, args.query, args.target or [])
    if args.means:
        groups = _read_json(_require_file(Path(args.means)))
        if not isinstance(groups, dict) or "groups" not in groups:
            raise CorruptRecord(f"{args.means}: expected an object with a 'groups' key")
        report["rsd_by_group"] = {
            label: evaluation.rsd(means) for label, means in sorted(groups["groups"].items())
        }
    if (cfg.out / "analysis.json").exists():
        report["analysis"] = _read_json(cfg.out / "analysis.json")
    _write_json(report, cfg.out / "report.json")
    text = _render_report_text(report)
    with open(cfg.out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    print("report: wrote report.json and report.txt")
    return EXIT_OK


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _render_report_text(report: dict) -> str:
    sections = ["Strategy report", "==============="]
    ev = report.get("evaluation")
    if ev:
        rows = [[s, f"{ev['pooled_means'][s]:.2f}"] for s in sorted(ev["pooled_means"])]
        sections += ["", "Pooled mean scores", _render_table(["strategy", "mean"], rows)]
        if ev.get("rsd") is not None:
            sections += ["", f"Relative score difference: {ev['rsd']:.2f}"]
        strategies = sorted(ev["win_rate_matrix"])
        rows = [
            [a] + [f"{ev['win_rate_matrix'][a].get(b, 0):.2f}" if a != b else "-"
                   for b in strategies]
            for a in strategies
        ]
        sections += ["", "Win rate (% row beats column)",
                     _render_table(["strategy"] + strategies, rows)]
        rows = []
        for s in sorted(ev["score_distribution"]):
            hist = ev["score_distribution"][s]
            rows.append([s] + [str(hist.get(str(v), 0)) for v in range(6)])
        sections += ["", "Score distribution",
                     _render_table(["strategy"] + [str(v) for v in range(6)], rows)]
        if ev.get("reliability"):
            rel = ev["reliability"]
            sections += ["", (f"Reliability: {rel['reliable']} reliable, "
                              f"{rel['needs_reassessment']} need reassessment")]
    if report.get("abstention_rate"):
        rows = [[s, f"{rate:.4f}"] for s, rate in sorted(report["abstention_rate"].items())]
        sections += ["", "Abstention rate", _render_table(["strategy", "rate"], rows)]
    if report.get("similarity"):
        for entry in report["similarity"]:
            rows = [
                [t["chunk_id"], f"{t['score']:.6f}", str(t["rank"]), str(t["retrieved"]).lower()]
                for t in entry["targets"]
            ]
            sections += ["", f"Similarity ({entry['strategy']}) query: {entry['query']}",
                         _render_table(["target", "score", "rank", "retrieved"], rows)]
            if entry["best_non_target_id"] is not None:
                sections += [(f"best non-target: {entry['best_non_target_id']} "
                              f"({entry['best_non_target_score']:.6f})")]
    if report.get("rsd_by_group"):
        rows = [[label, f"{value:.2f}"] for label, value in sorted(report["rsd_by_group"].items())]
        sections += ["", "RSD by group", _render_table(["group", "rsd"], rows)]
    return "\n".join(sections) + "\n"


def cmd_instructions(cfg: RunConfig, questions_file: str) -> int:
    records = qa.load_questions(_require_file(Path(questions_file)))
    qa.save_instruction_dataset(records, cfg.out / "instructions.jsonl")
    print(f"instructions: wrote {len(records)} record(s)")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="working directory for pipeline artifacts")
    common.add_argument("--config", help="JSON config file mirroring the flags; flags win")
    common.add_argument("--strategy", help="one of markdown|template|tplm|llm|all")
    common.add_argument("--gen-endpoint", dest="gen_endpoint")
    common.add_argument("--embed-endpoint", dest="embed_endpoint")
    common.add_argument("--dimension", type=int)
    common.add_argument("--top-k", dest="top_k", type=int)
    common.add_argument("--max-chunk-chars", dest="max_chunk_chars", type=int)
    common.add_argument("--stub", action="store_true", help="use deterministic offline backends")
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="tabrag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate and normalize documents")
    p.add_argument("paths", nargs="+", help="document JSON files")

    sub.add_parser("convert", parents=[common], help="build per-strategy corpora")
    sub.add_parser("chunk", parents=[common], help="chunk corpora into passages")
    sub.add_parser("index", parents=[common], help="embed chunks and build vector indices")

    p = sub.add_parser("ask", parents=[common], help="answer questions over the indices")
    p.add_argument("--question", help="a single question")
    p.add_argument("--questions", help="questions file (JSON Lines)")

    p = sub.add_parser("eval", parents=[common], help="evaluator prompts, reply parsing, aggregates")
    p.add_argument("--build-prompts", action="store_true", dest="build_prompts")
    p.add_argument("--parse-replies", dest="parse_replies", help="evaluator replies (JSON Lines)")
    p.add_argument("--evaluator-id", dest="evaluator_id")
    p.add_argument("--scores", help="score sheet CSV")
    p.add_argument("--label-map", dest="label_map", help="label map JSON")
    p.add_argument("--questions", help="questions file (JSON Lines)")

    p = sub.add_parser("analyze", parents=[common], help="frequency, length, taxonomy analytics")
    p.add_argument("--terms", help="term lexicon file")
    p.add_argument("--verbs", help="verb lexicon file")
    p.add_argument("--questions", help="questions file (JSON Lines)")

    p = sub.add_parser("report", parents=[common], help="combined JSON + text summary")
    p.add_argument("--scores", help="score sheet CSV")
    p.add_argument("--label-map", dest="label_map", help="label map JSON")
    p.add_argument("--means", help="published-means fixture JSON for RSD by group")
    p.add_argument("--query", help="query for similarity diagnostics")
    p.add_argument("--target", action="append", help="target chunk id (repeatable)")

    p = sub.add_parser("instructions", parents=[common], help="fine-tuning instruction dataset")
    p.add_argument("--questions", required=True, help="questions file (JSON Lines)")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(cfg.out / ".tabrag.lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout:
            print(f"another run holds the lock in {cfg.out}", file=sys.stderr)
            return EXIT_LOCKED
        try:
            if args.command == "ingest":
                return cmd_ingest(cfg, args.paths)
            if args.command == "convert":
                return cmd_convert(cfg)
            if args.command == "chunk":
                return cmd_chunk(cfg)
            if args.command == "index":
                return cmd_index(cfg)
            if args.command == "ask":
                return cmd_ask(cfg, args.question, args.questions)
            if args.command == "eval":
                return cmd_eval(cfg, args)
            if args.command == "analyze":
                return cmd_analyze(cfg, args)
            if args.command == "report":
                return cmd_report(cfg, args)
            if args.command == "instructions":
                return cmd_instructions(cfg, args.questions)
            raise SchemaViolation(f"unknown command {args.command!r}")
        finally:
            lock.release()
    except TabragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for classes, code in _EXIT_BY_CLASS:
            if isinstance(exc, classes):
                return code
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
