"""Four table serialization strategies and per-strategy corpus assembly.

Each strategy turns a normalized table into prose and a corpus is built by
replacing every table block of a document with that prose, in place, so the
four corpora differ only at table positions:

* ``markdown``: pipe-delimited rendering with a caption line
* ``template``: rule-based sentences driven by the table schema
* ``tplm``: a linearized table sent to a fine-tuned generation backend
* ``llm``: a one-shot prompt sent to a large-model generation backend
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .backends import Demonstration
from .documents import TEXT, NormalizedTable
from .errors import (
    BackendRefusal,
    BackendUnavailable,
    CorpusBuildError,
    CorruptRecord,
    MissingDemonstration,
)

MARKDOWN = "markdown"
TEMPLATE = "template"
TPLM = "tplm"
LLM = "llm"
STRATEGIES = (MARKDOWN, TEMPLATE, TPLM, LLM)

RELATIONAL = "relational"
KEY_VALUE = "key_value"

PROSE = "prose"
FROM_TABLE = "table"

# Cell values treated as absent by the template renderer.
_EMPTYISH = {"", "-"}


@dataclass(frozen=True)
class Glossary:
    """Header keywords that steer template rendering.

    ``main_column_keywords`` drives main-column detection: the leftmost column
    whose header matches one of them becomes the main column.
    ``main_column_name_headers`` triggers the rewrite that drops the
    "{header} named" wording, so "The Color of the Name named PWR indicator"
    becomes "The Color of the PWR indicator".  All lookups are
    case-insensitive on trimmed header text.
    """

    main_column_name_headers: frozenset[str] = frozenset({"Name"})
    main_column_keywords: frozenset[str] = frozenset({"Name", "Type"})

    def is_name_header(self, header: str) -> bool:
        return header.strip().lower() in {h.strip().lower() for h in self.main_column_name_headers}

    def is_main_keyword(self, header: str) -> bool:
        return header.strip().lower() in {h.strip().lower() for h in self.main_column_keywords}


@dataclass(frozen=True)
class TableSchema:
    """How the template renderer should read a table.

    Relational tables have a main column naming the described entity and
    attribute columns in left-to-right order.  Key-value tables have exactly
    two columns and an entity phrase taken from the caption.
    """

    kind: str
    main_column: int = 0
    attribute_columns: tuple[int, ...] = ()
    entity_phrase: str = ""


@dataclass(frozen=True)
class GeneratedPassage:
    """Prose generated for one table block."""

    doc_id: str
    block_id: str
    strategy: str
    text: str
    char_len: int


@dataclass(frozen=True)
class CorpusPassage:
    """One corpus slot: either original prose or a table rendering."""

    doc_id: str
    block_id: str
    origin: str  # PROSE or FROM_TABLE
    text: str


@dataclass(frozen=True)
class Corpus:
    strategy: str
    passages: tuple[CorpusPassage, ...]


@dataclass(frozen=True)
class StrategyProfile:
    strategy: str
    resource: str
    speed: str
    diversity: str


_PROFILES = {
    MARKDOWN: StrategyProfile(MARKDOWN, "CPU", "Fast", "Low"),
    TEMPLATE: StrategyProfile(TEMPLATE, "CPU", "Fast", "Moderate"),
    TPLM: StrategyProfile(TPLM, "GPU", "Moderate", "High"),
    LLM: StrategyProfile(LLM, "GPU or API", "Low", "Very High"),
}


def strategy_profile(strategy: str) -> StrategyProfile:
    """Static resource/speed/diversity tradeoff descriptors per strategy."""
    if strategy not in _PROFILES:
        raise ValueError(f"unknown strategy {strategy!r}")
    return _PROFILES[strategy]


# --- schema inference -------------------------------------------------------

def classify_table(table: NormalizedTable, glossary: Glossary | None = None) -> str:
    """Tables with exactly two columns are key-value; everything else relational."""
    return KEY_VALUE if table.n_cols == 2 else RELATIONAL


def detect_main_column(table: NormalizedTable, glossary: Glossary | None = None) -> TableSchema:
    """Pick the relational main column.

    Fallback chain: leftmost header matching a glossary main-column keyword,
    else the leftmost column whose data cells are all distinct and not all
    "-"/empty, else column 0.
    """
    glossary = glossary or Glossary()
    n_cols = table.n_cols
    main = None
    for idx, header in enumerate(table.header):
        if glossary.is_main_keyword(header):
            main = idx
            break
    if main is None:
        for idx in range(n_cols):
            column = [row[idx] for row in table.data_rows]
            if not column:
                continue
            if len(set(column)) == len(column) and not all(c.strip() in _EMPTYISH for c in column):
                main = idx
                break
    if main is None:
        main = 0
    attrs = tuple(i for i in range(n_cols) if i != main)
    return TableSchema(kind=RELATIONAL, main_column=main, attribute_columns=attrs)


def extract_entity_phrase(caption: str) -> str:
    """Entity phrase for key-value sentences, taken from the caption tail.

    Returns the text after the last " about " or " of " (whichever occurs
    later), keeping any determiner; falls back to the whole caption, and to
    "it" when the caption is empty.
    """
    cap = caption.strip()
    if not cap:
        return "it"
    best = -1
    cut = 0
    for marker in (" about ", " of "):
        pos = cap.rfind(marker)
        if pos > best:
            best = pos
            cut = pos + len(marker)
    if best >= 0:
        tail = cap[cut:].strip()
        if tail:
            return tail
    return cap


def infer_schema(table: NormalizedTable, glossary: Glossary | None = None) -> TableSchema:
    """Classify the table and fill in the matching schema fields."""
    if classify_table(table, glossary) == KEY_VALUE:
        return TableSchema(kind=KEY_VALUE, entity_phrase=extract_entity_phrase(table.caption))
    return detect_main_column(table, glossary)


# --- renderers --------------------------------------------------------------

def _finish(sentence: str) -> str:
    # values already ending in "." must not receive a second period
    sentence = sentence.rstrip()
    return sentence if sentence.endswith(".") else sentence + "."


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|")


def render_markdown(table: NormalizedTable, doc_id: str = "", block_id: str = "") -> GeneratedPassage:
    """Pipe-delimited rendering: caption line, header, alignment row, data rows.

    Cell texts pass through verbatim except that pipes are escaped as ``\\|``.
    """
    lines = [f"Table Caption: {table.caption}"]
    if table.grid:
        lines.append("| " + " | ".join(_md_cell(c) for c in table.header) + " |")
        lines.append("| " + " | ".join(":---" for _ in table.header) + " |")
        for row in table.data_rows:
            lines.append("| " + " | ".join(_md_cell(c) for c in row) + " |")
    text = "\n".join(lines)
    return GeneratedPassage(doc_id, block_id, MARKDOWN, text, len(text))


def render_template(
    table: NormalizedTable,
    schema: TableSchema | None = None,
    glossary: Glossary | None = None,
    describe_about: bool = True,
    doc_id: str = "",
    block_id: str = "",
) -> GeneratedPassage:
    """Rule-based sentences, one paragraph per table.

    The opening sentence is "The following sentences describe about
    {caption}."; pass ``describe_about=False`` for the plain "describe
    {caption}." form.  Relational rows read "The {attr} of the {main header}
    named {main value} is {value}." with follow-ups "Its {attr} is {value}.";
    when the main header is in the glossary name set the first sentence drops
    the "{main header} named" wording.  Key-value rows read "The {key} of
    {entity phrase} is {value}." with the same follow-up form.  Cells that
    trim to "" or "-" are skipped; the first present attribute of a row takes
    the full first-sentence form.
    """
    glossary = glossary or Glossary()
    if schema is None:
        schema = infer_schema(table, glossary)
    verb = "describe about" if describe_about else "describe"
    sentences = [_finish(f"The following sentences {verb} {table.caption}".rstrip())]

    if schema.kind == KEY_VALUE:
        entity = schema.entity_phrase or extract_entity_phrase(table.caption)
        first = True
        for row in table.data_rows:
            key, value = row[0], row[1]
            if value.strip() in _EMPTYISH:
                continue
            if first:
                sentences.append(_finish(f"The {key} of {entity} is {value}"))
                first = False
            else:
                sentences.append(_finish(f"Its {key} is {value}"))
    else:
        main_header = table.header[schema.main_column] if table.grid else ""
        drop_named = glossary.is_name_header(main_header)
        for row in table.data_rows:
            main_value = row[schema.main_column]
            first_in_row = True
            for col in schema.attribute_columns:
                value = row[col]
                if value.strip() in _EMPTYISH:
                    continue
                label = table.header[col]
                if first_in_row:
                    if drop_named:
                        opener = f"The {label} of the {main_value} is {value}"
                    else:
                        opener = f"The {label} of the {main_header} named {main_value} is {value}"
                    sentences.append(_finish(opener))
                    first_in_row = False
                else:
                    sentences.append(_finish(f"Its {label} is {value}"))

    text = " ".join(sentences)
    return GeneratedPassage(doc_id, block_id, TEMPLATE, text, len(text))


# --- backend-driven strategies ---------------------------------------------

_T2T_TASK = (
    "Now you have a task to complete. Task description: You will be given a "
    "table (with the 2d array format with the Caption). You need to generate "
    "a natural language description of the contents of the table. You can "
    "only generate content from the table content, do not generate other "
    "related or unrelated content. Here is an examples."
)

DEFAULT_T2T_DEMONSTRATION = Demonstration(
    table_literal=(
        "Caption: Parameters for the ip link add name and ip link del dev.\n"
        "[['Parameter', 'Description', 'Value'], "
        "['name NAME', 'Specifies the name of a bridge.', "
        "'The value is a string of 1 to 15 case-sensitive characters without spaces.'], "
        "['dev DEV', 'Specifies the name of a bridge.', "
        "'The value is a string of 1 to 15 case-sensitive characters without spaces.'], "
        "['type bridge', 'Indicates that the device type is bridge.', '-']]."
    ),
    description=(
        "The table provides details on the parameters for the ip link add "
        "name and ip link del dev commands. There are different parameters "
        'for configuring a bridge. The "name NAME" parameter is for '
        "specifying the name of a bridge and accepts a string with 1 to 15 "
        'case-sensitive characters, excluding spaces. The "dev DEV" parameter '
        "also specifies the name of a bridge and requires a string of 1 to 15 "
        'case-sensitive characters without spaces. The "type bridge" '
        "parameter indicates that the device being configured is of the type "
        "'bridge.' It does not require a specific value."
    ),
)


def table_array_literal(table: NormalizedTable) -> str:
    """The grid as a Python-style nested list literal, header row first."""
    return repr([list(row) for row in table.grid])


def build_t2t_prompt(table: NormalizedTable, demo: Demonstration | None = DEFAULT_T2T_DEMONSTRATION) -> str:
    """One-shot prompt for the llm strategy: task text, demonstration, table."""
    if demo is None:
        raise MissingDemonstration("the llm table-to-text prompt requires a demonstration")
    caption_line = _finish(f"Caption: {table.caption}".rstrip())
    return (
        f"{_T2T_TASK}\n\n"
        f"Table: {demo.table_literal}\n\n"
        f"Description: {demo.description}\n\n"
        f"Table: {caption_line}\n{table_array_literal(table)}.\n\n"
        "Description:"
    )


def linearize_table(table: NormalizedTable) -> str:
    """Flat conditioning text for the tplm strategy: caption, then all cells."""
    parts = [f"Caption: {table.caption}"]
    for row in table.grid:
        parts.extend(row)
    return " | ".join(parts)


def generate_via_backend(
    table: NormalizedTable,
    strategy: str,
    backend,
    demo: Demonstration | None = DEFAULT_T2T_DEMONSTRATION,
    doc_id: str = "",
    block_id: str = "",
) -> GeneratedPassage:
    """Produce the tplm or llm passage for one table via a generation backend.

    Backend failures are re-raised with the doc/block identifiers prepended so
    callers can schedule a retry of exactly the failed blocks.
    """
    if strategy == LLM:
        prompt = build_t2t_prompt(table, demo)
    elif strategy == TPLM:
        prompt = linearize_table(table)
    else:
        raise ValueError(f"strategy {strategy!r} does not use a generation backend")
    where = f"{doc_id}/{block_id}" if doc_id or block_id else "table"
    try:
        text = backend.generate(prompt)
    except BackendUnavailable as exc:
        raise BackendUnavailable(f"{where}: {exc}") from exc
    except BackendRefusal as exc:
        raise BackendRefusal(f"{where}: {exc}") from exc
    if not text:
        raise BackendRefusal(f"{where}: backend returned an empty generation")
    return GeneratedPassage(doc_id, block_id, strategy, text, len(text))


# --- corpus assembly --------------------------------------------------------

def render_table(
    table: NormalizedTable,
    strategy: str,
    backend=None,
    glossary: Glossary | None = None,
    demo: Demonstration | None = DEFAULT_T2T_DEMONSTRATION,
    doc_id: str = "",
    block_id: str = "",
) -> GeneratedPassage:
    """Dispatch one table through the selected strategy."""
    if strategy == MARKDOWN:
        return render_markdown(table, doc_id, block_id)
    if strategy == TEMPLATE:
        return render_template(table, None, glossary, doc_id=doc_id, block_id=block_id)
    if strategy in (TPLM, LLM):
        if backend is None:
            raise ValueError(f"strategy {strategy!r} requires a generation backend")
        return generate_via_backend(table, strategy, backend, demo, doc_id, block_id)
    raise ValueError(f"unknown strategy {strategy!r}")


def assemble_corpus(
    docs,
    strategy: str,
    backend=None,
    glossary: Glossary | None = None,
    demo: Demonstration | None = DEFAULT_T2T_DEMONSTRATION,
    precomputed: dict[tuple[str, str], str] | None = None,
) -> Corpus:
    """Replace every table block with its strategy rendering, in place.

    Prose blocks pass through untouched and passage order equals document
    block order.  ``precomputed`` maps (doc_id, block_id) to already generated
    text; matching table blocks are filled from it without touching the
    backend, which is how a resumed run avoids regenerating finished work.
    If any backend call fails the assembly continues, then raises
    :class:`CorpusBuildError` carrying the completed passages and the failed
    (doc_id, block_id, reason) triples.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    cache = dict(precomputed or {})
    passages: list[CorpusPassage] = []
    failed: list[tuple[str, str, str]] = []
    for doc in docs:
        for block in doc.blocks:
            if block.kind == TEXT:
                passages.append(CorpusPassage(doc.doc_id, block.block_id, PROSE, block.text))
                continue
            table = block.table
            if not isinstance(table, NormalizedTable):
                raise ValueError(
                    f"block {block.block_id!r} of {doc.doc_id!r} is not normalized"
                )
            key = (doc.doc_id, block.block_id)
            if key in cache:
                passages.append(CorpusPassage(doc.doc_id, block.block_id, FROM_TABLE, cache[key]))
                continue
            try:
                passage = render_table(
                    table, strategy, backend, glossary, demo,
                    doc_id=doc.doc_id, block_id=block.block_id,
                )
            except (BackendUnavailable, BackendRefusal) as exc:
                failed.append((doc.doc_id, block.block_id, str(exc)))
                continue
            passages.append(CorpusPassage(doc.doc_id, block.block_id, FROM_TABLE, passage.text))
    if failed:
        raise CorpusBuildError(
            f"{len(failed)} table block(s) failed to generate",
            completed=passages,
            failed=failed,
        )
    return Corpus(strategy=strategy, passages=tuple(passages))


# --- corpus file format (JSON Lines, one passage per line) ------------------

def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in corpus.passages:
            record = {
                "strategy": corpus.strategy,
                "doc_id": p.doc_id,
                "block_id": p.block_id,
                "origin": p.origin,
                "text": p.text,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_corpus(path) -> Corpus:
    passages: list[CorpusPassage] = []
    strategy: str | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptRecord(f"{path}:{lineno}: not valid JSON ({exc})") from exc
            for key in ("strategy", "doc_id", "block_id", "origin", "text"):
                if key not in record or not isinstance(record[key], str):
                    raise CorruptRecord(f"{path}:{lineno}: missing or non-string {key!r}")
            if record["origin"] not in (PROSE, FROM_TABLE):
                raise CorruptRecord(f"{path}:{lineno}: bad origin {record['origin']!r}")
            if record["strategy"] not in STRATEGIES:
                raise CorruptRecord(f"{path}:{lineno}: bad strategy {record['strategy']!r}")
            if strategy is None:
                strategy = record["strategy"]
            elif record["strategy"] != strategy:
                raise CorruptRecord(
                    f"{path}:{lineno}: mixed strategies {strategy!r} and {record['strategy']!r}"
                )
            passages.append(
                CorpusPassage(record["doc_id"], record["block_id"], record["origin"], record["text"])
            )
    if strategy is None:
        raise CorruptRecord(f"{path}: empty corpus file")
    return Corpus(strategy=strategy, passages=tuple(passages))
