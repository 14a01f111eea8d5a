"""Table-to-text corpora, retrieve-then-generate QA, and evaluation analytics.

The package turns hybrid documents (prose plus tables) into four parallel
corpora, one per table serialization strategy, then runs a retrieval-augmented
QA loop over each and aggregates judge scores to compare the strategies.
"""

from .backends import (
    Demonstration,
    RemoteEmbedder,
    RemoteGenerator,
    StubEmbedder,
    StubGenerator,
)
from .chunking import Chunk, ChunkingConfig, chunk_corpus, load_chunks, persist_chunks, split_sentences
from .documents import (
    Block,
    HybridDocument,
    NormalizedTable,
    RawCell,
    RawTable,
    TableStats,
    compute_stats,
    load_document,
    normalize_document,
    normalize_table,
    parse_document,
)
from .errors import TabragError
from .evaluation import (
    EvalRecord,
    ScoreSheet,
    avg_generated_length,
    build_evaluator_prompt,
    check_reliability,
    classify_question,
    mean_scores,
    parse_scores,
    pooled_mean_scores,
    rsd,
    score_distribution,
    term_verb_frequency,
    win_rate,
)
from .qa import (
    AnswerTrace,
    QARecord,
    answer,
    batch_answer,
    build_instruction_record,
    build_rag_prompt,
    load_questions,
)
from .retrieval import (
    RetrievalConfig,
    RetrievalHit,
    SimilarityReport,
    VectorIndex,
    build_index,
    load_index,
    save_index,
    search,
    similarity_report,
)
from .tabletext import (
    Corpus,
    CorpusPassage,
    GeneratedPassage,
    Glossary,
    TableSchema,
    assemble_corpus,
    build_t2t_prompt,
    classify_table,
    detect_main_column,
    extract_entity_phrase,
    generate_via_backend,
    infer_schema,
    linearize_table,
    load_corpus,
    render_markdown,
    render_template,
    save_corpus,
    strategy_profile,
)

__version__ = "0.1.0"
