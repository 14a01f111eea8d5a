"""Hybrid document model: ordered text and table blocks, plus table normalization.

Documents arrive as JSON with raw tables whose cells may span several rows or
columns.  Normalization expands every span into a rectangular grid of plain
strings so that downstream serializers never have to reason about merged cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import OverlappingSpans, SchemaViolation

TEXT = "text"
TABLE = "table"


@dataclass(frozen=True)
class RawCell:
    """One authored cell; spans count the grid positions it covers."""

    text: str
    row_span: int = 1
    col_span: int = 1


@dataclass(frozen=True)
class RawTable:
    """A captioned table as authored, row-major, possibly with merged cells."""

    caption: str
    rows: tuple[tuple[RawCell, ...], ...]


@dataclass(frozen=True)
class NormalizedTable:
    """A rectangular grid of trimmed cell texts; row 0 is the header.

    ``warnings`` records repairs applied during normalization (currently only
    right-padding of ragged rows).
    """

    caption: str
    grid: tuple[tuple[str, ...], ...]
    warnings: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return len(self.grid)

    @property
    def n_cols(self) -> int:
        return len(self.grid[0]) if self.grid else 0

    @property
    def header(self) -> tuple[str, ...]:
        return self.grid[0] if self.grid else ()

    @property
    def data_rows(self) -> tuple[tuple[str, ...], ...]:
        return self.grid[1:]


@dataclass(frozen=True)
class Block:
    """One unit of document order: either prose or a table."""

    block_id: str
    kind: str  # TEXT or TABLE
    text: str = ""
    table: RawTable | NormalizedTable | None = None


@dataclass(frozen=True)
class HybridDocument:
    doc_id: str
    title: str
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class TableStats:
    """Word/cell counts over a normalized document collection.

    Ratios are ``None`` when their denominator is zero (no words, no tables,
    no cells); an empty collection yields zero counts, never an exception.
    """

    total_words: int
    words_in_tables: int
    table_count: int
    cell_count: int
    table_word_share: float | None
    avg_words_per_table: float | None
    avg_cells_per_table: float | None
    avg_words_per_cell: float | None


def normalize_table(table: RawTable) -> NormalizedTable:
    """Expand spans into a rectangular grid of trimmed cell texts.

    Placement follows the usual HTML table rules: cells of a raw row are laid
    out left to right, each anchored at the first column of that row not yet
    claimed by an earlier span; the cell text is then written to every position
    of its ``row_span`` x ``col_span`` rectangle.  If a rectangle would cover a
    position another cell already claimed, the table is rejected with
    :class:`OverlappingSpans`.  Rows that end up shorter than the widest row
    are right-padded with empty strings and a warning is recorded; positions a
    span pushed past the last raw row extend the grid downward.

    Cell text is trimmed of leading/trailing whitespace; interior whitespace is
    preserved byte for byte.  Normalizing an already rectangular, span-free
    table returns an identical grid.
    """
    claimed: dict[tuple[int, int], str] = {}
    n_rows = len(table.rows)
    n_cols = 0
    for r, row in enumerate(table.rows):
        cursor = 0
        for cell in row:
            if cell.row_span < 1 or cell.col_span < 1:
                raise SchemaViolation(
                    f"cell spans must be >= 1, got row_span={cell.row_span} "
                    f"col_span={cell.col_span} in raw row {r}"
                )
            while (r, cursor) in claimed:
                cursor += 1
            text = cell.text.strip()
            for dr in range(cell.row_span):
                for dc in range(cell.col_span):
                    pos = (r + dr, cursor + dc)
                    if pos in claimed:
                        raise OverlappingSpans(
                            f"cell at raw row {r} spans over already claimed "
                            f"position {pos}"
                        )
                    claimed[pos] = text
            n_rows = max(n_rows, r + cell.row_span)
            n_cols = max(n_cols, cursor + cell.col_span)
            cursor += cell.col_span

    warnings: list[str] = []
    grid: list[tuple[str, ...]] = []
    for r in range(n_rows):
        row_cells: list[str] = []
        padded = False
        for c in range(n_cols):
            if (r, c) in claimed:
                row_cells.append(claimed[(r, c)])
            else:
                row_cells.append("")
                padded = True
        if padded:
            warnings.append(f"row {r} padded to {n_cols} columns")
        grid.append(tuple(row_cells))
    return NormalizedTable(
        caption=table.caption, grid=tuple(grid), warnings=tuple(warnings)
    )


def normalize_document(doc: HybridDocument) -> HybridDocument:
    """Return a copy of ``doc`` with every table block normalized."""
    blocks = []
    for block in doc.blocks:
        if block.kind == TABLE and isinstance(block.table, RawTable):
            blocks.append(
                Block(
                    block_id=block.block_id,
                    kind=TABLE,
                    table=normalize_table(block.table),
                )
            )
        else:
            blocks.append(block)
    return HybridDocument(doc_id=doc.doc_id, title=doc.title, blocks=tuple(blocks))


def _words(text: str) -> int:
    return len(text.split())


def compute_stats(docs: Iterable[HybridDocument]) -> TableStats:
    """Count words and cells over normalized documents.

    A table block contributes its caption words plus all grid cell words.
    The result does not depend on document or block order.
    """
    total_words = 0
    words_in_tables = 0
    table_count = 0
    cell_count = 0
    cell_words = 0
    for doc in docs:
        for block in doc.blocks:
            if block.kind == TEXT:
                total_words += _words(block.text)
                continue
            table = block.table
            if not isinstance(table, NormalizedTable):
                raise ValueError(
                    f"block {block.block_id!r} holds an unnormalized table; "
                    "run normalize_document first"
                )
            in_cells = sum(_words(cell) for row in table.grid for cell in row)
            in_table = _words(table.caption) + in_cells
            total_words += in_table
            words_in_tables += in_table
            table_count += 1
            cell_count += table.n_rows * table.n_cols
            cell_words += in_cells
    return TableStats(
        total_words=total_words,
        words_in_tables=words_in_tables,
        table_count=table_count,
        cell_count=cell_count,
        table_word_share=(words_in_tables / total_words) if total_words else None,
        avg_words_per_table=(words_in_tables / table_count) if table_count else None,
        avg_cells_per_table=(cell_count / table_count) if table_count else None,
        avg_words_per_cell=(cell_words / cell_count) if cell_count else None,
    )


# --- ingestion JSON --------------------------------------------------------

def _require(obj: dict, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise SchemaViolation(f"{where}: missing required key {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaViolation(
            f"{where}: key {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_cell(obj: Any, where: str) -> RawCell:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: cell must be an object")
    text = _require(obj, "text", str, where)
    spans = {}
    for key in ("row_span", "col_span"):
        value = obj.get(key, 1)
        # bool is an int subclass; reject it explicitly
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise SchemaViolation(f"{where}: {key} must be a positive integer")
        spans[key] = value
    return RawCell(text=text, row_span=spans["row_span"], col_span=spans["col_span"])


def parse_document(obj: Any, source: str = "document") -> HybridDocument:
    """Build a :class:`HybridDocument` from decoded ingestion JSON.

    Raises :class:`SchemaViolation` with a path-like location on any missing
    key, wrong type, unknown block kind, or empty table.
    """
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{source}: document must be a JSON object")
    doc_id = _require(obj, "doc_id", str, source)
    if not doc_id:
        raise SchemaViolation(f"{source}: doc_id must be non-empty")
    title = _require(obj, "title", str, source)
    raw_blocks = _require(obj, "blocks", list, source)
    blocks: list[Block] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(raw_blocks):
        where = f"{source}: blocks[{i}]"
        if not isinstance(raw, dict):
            raise SchemaViolation(f"{where}: block must be an object")
        block_id = _require(raw, "block_id", str, where)
        if not block_id:
            raise SchemaViolation(f"{where}: block_id must be non-empty")
        if block_id in seen_ids:
            raise SchemaViolation(f"{where}: duplicate block_id {block_id!r}")
        seen_ids.add(block_id)
        kind = _require(raw, "kind", str, where)
        if kind == TEXT:
            text = _require(raw, "text", str, where)
            blocks.append(Block(block_id=block_id, kind=TEXT, text=text))
        elif kind == TABLE:
            caption = _require(raw, "caption", str, where)
            rows = _require(raw, "rows", list, where)
            if not rows:
                raise SchemaViolation(f"{where}: table has no rows")
            parsed_rows = []
            for r, row in enumerate(rows):
                if not isinstance(row, list) or not row:
                    raise SchemaViolation(f"{where}: rows[{r}] must be a non-empty array")
                parsed_rows.append(
                    tuple(_parse_cell(c, f"{where}: rows[{r}][{j}]") for j, c in enumerate(row))
                )
            blocks.append(
                Block(
                    block_id=block_id,
                    kind=TABLE,
                    table=RawTable(caption=caption, rows=tuple(parsed_rows)),
                )
            )
        else:
            raise SchemaViolation(f"{where}: unknown kind {kind!r}")
    return HybridDocument(doc_id=doc_id, title=title, blocks=tuple(blocks))


def load_document(path) -> HybridDocument:
    """Read one ingestion JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path}: not valid JSON ({exc})") from exc
    return parse_document(obj, source=str(path))


# --- normalized document store (JSON Lines, one document per line) ---------

def document_to_dict(doc: HybridDocument) -> dict:
    """Serialize a normalized document; raw tables are rejected."""
    blocks = []
    for block in doc.blocks:
        if block.kind == TEXT:
            blocks.append({"block_id": block.block_id, "kind": TEXT, "text": block.text})
        else:
            table = block.table
            if not isinstance(table, NormalizedTable):
                raise ValueError(f"block {block.block_id!r} is not normalized")
            blocks.append(
                {
                    "block_id": block.block_id,
                    "kind": TABLE,
                    "caption": table.caption,
                    "grid": [list(row) for row in table.grid],
                    "warnings": list(table.warnings),
                }
            )
    return {"doc_id": doc.doc_id, "title": doc.title, "blocks": blocks}


def document_from_dict(obj: dict, source: str = "record") -> HybridDocument:
    doc_id = _require(obj, "doc_id", str, source)
    title = _require(obj, "title", str, source)
    blocks = []
    for i, raw in enumerate(_require(obj, "blocks", list, source)):
        where = f"{source}: blocks[{i}]"
        if not isinstance(raw, dict):
            raise SchemaViolation(f"{where}: block must be an object")
        kind = _require(raw, "kind", str, where)
        block_id = _require(raw, "block_id", str, where)
        if kind == TEXT:
            blocks.append(Block(block_id=block_id, kind=TEXT, text=_require(raw, "text", str, where)))
        elif kind == TABLE:
            grid = _require(raw, "grid", list, where)
            table = NormalizedTable(
                caption=_require(raw, "caption", str, where),
                grid=tuple(tuple(str(c) for c in row) for row in grid),
                warnings=tuple(raw.get("warnings", [])),
            )
            blocks.append(Block(block_id=block_id, kind=TABLE, table=table))
        else:
            raise SchemaViolation(f"{where}: unknown kind {kind!r}")
    return HybridDocument(doc_id=doc_id, title=title, blocks=tuple(blocks))
