"""Judge-prompt construction, score parsing, aggregation, and corpus analytics.

Four candidate answers are shown to an evaluator anonymized as A, B, C and D;
the mapping back to strategies stays sealed in a label map until aggregation.
Scores are integers 0..5.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass

from .errors import (
    CorruptRecord,
    IncompleteSheet,
    LengthMismatch,
    MalformedReply,
    MissingLabel,
    OutOfRange,
    TooFewStrategies,
    WrongEvaluatorCount,
)
from .tabletext import Corpus, GeneratedPassage

LABELS = ("A", "B", "C", "D")
SCORE_MIN = 0
SCORE_MAX = 5

RELIABLE = "reliable"
NEEDS_REASSESSMENT = "needs_reassessment"

_SCORE_RE = re.compile(
    r"A\s*:\s*(\d+)\s*,\s*B\s*:\s*(\d+)\s*,\s*C\s*:\s*(\d+)\s*,\s*D\s*:\s*(\d+)"
)
_LABEL_PAIR_RE = re.compile(r"\b([A-D])\s*:\s*(\d+)")

_EVALUATOR_SCAFFOLD = """[System]
You will be provided with a question, the correct answer to the question, and four candidate answers. Your responsibility is to evaluate the consistency between the candidate answers and the correct answer. The focus should be on understanding the correlation or similarity of the content, rather than grammar or style. Please make sure you understand these guidelines before proceeding.

Consult this guide whenever needed:
0, penalty:
The candidate answers have issues such as repetitive sentences, which can significantly impair the helpfulness of the response.
1, Very low correlation:
Indicates that the candidate answer is almost entirely unrelated or opposite to the correct answer.
2, Low correlation:
Indicates that the candidate answer significantly deviates from the correct answer.
3, Moderate correlation:
Suggests that the candidate answer shares some similarities with the correct answer but may lack several key points or include extra unrelated content.
4, High correlation:
Indicates that the candidate answer is largely consistent with the correct answer, missing only minor points or details.
5, Very high correlation:
Signifies that the candidate answer is almost identical to or captures the complete essence of the correct answer.

You will need to categorize the four candidate answers A, B, C, and D based on their relevance.

For example, A:1, B:2, C:3, D:5 means: A's correlation with the correct answer falls into 1. Very low correlation. B's correlation with the correct answer is higher than A's, at 2. Low correlation. C's correlation with the correct answer is 3. Moderate correlation. D's correlation with the correct answer is 5. Very high correlation.

{demonstration}

[User]
Evaluation Form (only score, do not output any other explanation):
<Question>: {question}
<Correct answer> (Standard Answer): {golden}
A answer: {a}
B answer: {b}
C answer: {c}
D answer: {d}
Score:"""

DEFAULT_EVALUATOR_DEMONSTRATION = """<Question>: How long can the Information field be in a PPP data packet?
<Correct answer> (Standard Answer): The maximum length for the Information field, including the Padding field, is the maximum receive unit (MRU). The MRU defaults to 1500 bytes and can be negotiated.
A answer: The length of the information field is limited to 1500 bytes.
B answer: The information field can be up to 1500 bytes in length. The maximum size of the information field is specified by RFC 1661 and is set at 1500 bytes. This allows for the transmission of large packets, but also ensures that the protocol remains efficient and reliable.
C answer: The length of the information field is variable and can range from 0 to 1536 bytes.
D answer: The length of the information field is not specified, but it must be at least 1 byte. The information field is variable length and contains the protocol specific information that the peer requires to establish the link. The length of the information field is not specified, but it must be at least one byte. The format of the information field is defined by the protocol being used. For example, IPX uses the information field to specify the IPX network number and the IPX node address.
Score: A:5, B:5, C:4, D:2"""


@dataclass(frozen=True)
class EvalRecord:
    """One question with its four anonymized candidates.

    ``label_map`` associates each label with the strategy that produced the
    candidate; it never appears in the prompt.
    """

    question: str
    golden_answer: str
    candidates: dict[str, str]  # label -> answer text
    label_map: dict[str, str]  # label -> strategy

    def __post_init__(self):
        if tuple(sorted(self.candidates)) != LABELS:
            raise ValueError(f"candidates must use labels {LABELS}")
        if tuple(sorted(self.label_map)) != LABELS:
            raise ValueError(f"label_map must use labels {LABELS}")


@dataclass(frozen=True)
class ScoreSheet:
    """All scores one evaluator assigned: question_id -> strategy -> score."""

    evaluator_id: str
    scores: dict[str, dict[str, int]]


def build_evaluator_prompt(record: EvalRecord, demo: str = DEFAULT_EVALUATOR_DEMONSTRATION) -> str:
    """Fill the judge scaffold with the demonstration and the four candidates."""
    return _EVALUATOR_SCAFFOLD.format(
        demonstration=demo,
        question=record.question,
        golden=record.golden_answer,
        a=record.candidates["A"],
        b=record.candidates["B"],
        c=record.candidates["C"],
        d=record.candidates["D"],
    )


def render_scores(scores: dict[str, int]) -> str:
    """The canonical reply form the parser accepts: "A:x, B:x, C:x, D:x"."""
    return ", ".join(f"{label}:{scores[label]}" for label in LABELS)


def parse_scores(reply: str) -> dict[str, int]:
    """Extract the first well-formed "A:x, B:x, C:x, D:x" pattern.

    Whitespace around separators is tolerated.  Replies with label:digit
    pairs that never form the full pattern raise :class:`MissingLabel`;
    replies with no pairs at all raise :class:`MalformedReply`; values
    outside 0..5 raise :class:`OutOfRange`.
    """
    match = _SCORE_RE.search(reply)
    if match is None:
        if _LABEL_PAIR_RE.search(reply):
            raise MissingLabel(f"reply scores only some candidates: {reply!r}")
        raise MalformedReply(f"no score pattern found in reply: {reply!r}")
    values = [int(g) for g in match.groups()]
    for label, value in zip(LABELS, values):
        if not SCORE_MIN <= value <= SCORE_MAX:
            raise OutOfRange(f"score {label}:{value} outside {SCORE_MIN}..{SCORE_MAX}")
    return dict(zip(LABELS, values))


# --- aggregation ------------------------------------------------------------

def _sheet_strategies(sheet: ScoreSheet) -> list[str]:
    if not sheet.scores:
        raise IncompleteSheet(f"sheet {sheet.evaluator_id!r} has no questions")
    strategies: set[str] = set()
    for per_question in sheet.scores.values():
        strategies.update(per_question)
    for question_id, per_question in sheet.scores.items():
        missing = strategies - set(per_question)
        if missing:
            raise IncompleteSheet(
                f"sheet {sheet.evaluator_id!r} misses {sorted(missing)} for {question_id!r}"
            )
    return sorted(strategies)


def mean_scores(sheet: ScoreSheet) -> dict[str, float]:
    """Arithmetic mean per strategy over all questions of one sheet."""
    strategies = _sheet_strategies(sheet)
    n = len(sheet.scores)
    return {
        s: sum(per_question[s] for per_question in sheet.scores.values()) / n
        for s in strategies
    }


def pooled_mean_scores(sheets: list[ScoreSheet]) -> dict[str, float]:
    """Mean per strategy over all (question, evaluator) pairs."""
    if not sheets:
        raise IncompleteSheet("no sheets to pool")
    strategies = _sheet_strategies(sheets[0])
    for sheet in sheets[1:]:
        if _sheet_strategies(sheet) != strategies:
            raise IncompleteSheet("sheets cover different strategies")
    totals = {s: 0 for s in strategies}
    count = 0
    for sheet in sheets:
        for per_question in sheet.scores.values():
            for s in strategies:
                totals[s] += per_question[s]
        count += len(sheet.scores)
    return {s: totals[s] / count for s in strategies}


def rsd(means: dict[str, float]) -> float:
    """Relative score difference: 100 x (max - min) / 5, two decimals."""
    if len(means) < 2:
        raise TooFewStrategies("rsd needs at least two per-strategy means")
    values = list(means.values())
    return round(100.0 * (max(values) - min(values)) / 5.0, 2)


def win_rate(a: list[int], b: list[int]) -> tuple[float, float]:
    """Percentage of question-aligned strict wins for each side; ties count for neither."""
    if len(a) != len(b):
        raise LengthMismatch(f"score lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise LengthMismatch("score lists are empty")
    n = len(a)
    a_wins = sum(1 for x, y in zip(a, b) if x > y)
    b_wins = sum(1 for x, y in zip(a, b) if y > x)
    return round(100.0 * a_wins / n, 2), round(100.0 * b_wins / n, 2)


def score_distribution(sheet: ScoreSheet) -> dict[str, dict[int, int]]:
    """Counts of each observed score value per strategy; sums to question count."""
    strategies = _sheet_strategies(sheet)
    out: dict[str, dict[int, int]] = {s: {} for s in strategies}
    for per_question in sheet.scores.values():
        for s in strategies:
            value = per_question[s]
            out[s][value] = out[s].get(value, 0) + 1
    return {s: dict(sorted(hist.items())) for s, hist in out.items()}


def check_reliability(evaluations: list[dict[str, int]]) -> str:
    """Apply the two-rule agreement check to three evaluations of one question.

    Reliable iff (a) the weak-order ranking of the candidates, ties included,
    is identical across the three evaluators and (b) no candidate's three
    scores spread by more than one point.  The verdict does not depend on
    evaluator order.
    """
    if len(evaluations) != 3:
        raise WrongEvaluatorCount(f"expected 3 evaluations, got {len(evaluations)}")
    candidates = sorted(evaluations[0])
    for ev in evaluations[1:]:
        if sorted(ev) != candidates:
            raise IncompleteSheet("evaluations cover different candidates")
    for x in candidates:
        for y in candidates:
            if x >= y:
                continue
            signs = {
                (ev[x] > ev[y]) - (ev[x] < ev[y])
                for ev in evaluations
            }
            if len(signs) > 1:
                return NEEDS_REASSESSMENT
    for c in candidates:
        values = [ev[c] for ev in evaluations]
        if max(values) - min(values) > 1:
            return NEEDS_REASSESSMENT
    return RELIABLE


# --- corpus analytics -------------------------------------------------------

def count_lexicon(texts, lexicon: list[str]) -> int:
    """Case-insensitive occurrence count, summed per lexicon entry.

    Matches respect token boundaries: "IP" never matches inside "PIPE".
    Entries are counted independently, so overlapping entries ("VTEP" and
    "VTEP IP") each contribute their own occurrences.
    """
    entries = [t.strip() for t in lexicon if t.strip()]
    if not entries:
        raise ValueError("lexicon must be non-empty")
    total = 0
    for entry in entries:
        pattern = re.compile(r"(?<!\w)" + re.escape(entry) + r"(?!\w)", re.IGNORECASE)
        total += sum(len(pattern.findall(text)) for text in texts)
    return total


def term_verb_frequency(corpus: Corpus, terms: list[str], verbs: list[str]) -> tuple[int, int]:
    """Absolute lexicon frequencies over every passage of the corpus."""
    texts = [p.text for p in corpus.passages]
    return count_lexicon(texts, terms), count_lexicon(texts, verbs)


def avg_generated_length(passages: list[GeneratedPassage]) -> dict[str, float]:
    """Mean char_len per strategy."""
    totals: dict[str, list[int]] = {}
    for p in passages:
        totals.setdefault(p.strategy, []).append(p.char_len)
    return {s: sum(lengths) / len(lengths) for s, lengths in sorted(totals.items())}


FIRST_WORD_CLASSES = ("What", "How", "Why", "Which", "Can", "Is")
TAG_CLASSES = ("Parameter", "Configuration", "Command")
OTHER = "Other"

DEFAULT_TAG_LEXICON = {
    "Parameter": ["parameter", "parameters", "value", "range"],
    "Configuration": ["configure", "configuration", "configuring", "enable", "enabled"],
    "Command": ["command", "commands", "run"],
}


def classify_question(
    question: str,
    tag_lexicon: dict[str, list[str]] | None = None,
) -> tuple[str, str]:
    """Class by first interrogative word, tag by first lexicon keyword hit."""
    if not question:
        raise ValueError("question must be non-empty")
    tag_lexicon = tag_lexicon if tag_lexicon is not None else DEFAULT_TAG_LEXICON
    tokens = re.findall(r"\w+", question)
    first = tokens[0].lower() if tokens else ""
    first_class = OTHER
    for candidate in FIRST_WORD_CLASSES:
        if first == candidate.lower():
            first_class = candidate
            break
    lowered = question.lower()
    tag = OTHER
    best_pos = None
    for tag_name, keywords in tag_lexicon.items():
        for keyword in keywords:
            pattern = re.compile(r"(?<!\w)" + re.escape(keyword.lower()) + r"(?!\w)")
            match = pattern.search(lowered)
            if match and (best_pos is None or match.start() < best_pos):
                best_pos = match.start()
                tag = tag_name
    return first_class, tag


# --- heuristic lexicon extraction (clearly marked; lexicons are inputs) -----

_CLOSED_VERBS = [
    "configure", "enable", "disable", "set", "run", "display", "check",
    "create", "delete", "modify", "add", "remove", "specify", "support",
]


def suggest_lexicons(texts) -> tuple[list[str], list[str]]:
    """Heuristic starter lexicons: capitalized tokens as terms, a closed verb list.

    This is a convenience for bootstrapping only; real analyses should supply
    curated lexicon files.
    """
    terms: set[str] = set()
    for text in texts:
        for token in re.findall(r"\b[A-Z][A-Za-z0-9_-]{2,}\b", text):
            terms.add(token)
    return sorted(terms), list(_CLOSED_VERBS)


# --- wire formats -----------------------------------------------------------

def load_lexicon(path) -> list[str]:
    """Newline-delimited lexicon file; blank lines are skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = [line.strip() for line in fh]
    entries = [e for e in entries if e]
    if not entries:
        raise CorruptRecord(f"{path}: lexicon file is empty")
    return entries


def save_score_sheets(sheets: list[ScoreSheet], label_maps: dict[str, dict[str, str]], path) -> None:
    """Score sheet CSV: header question_id, evaluator_id, A, B, C, D.

    ``label_maps`` (question_id -> label -> strategy) converts the per-strategy
    scores back to label columns.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["question_id", "evaluator_id", "A", "B", "C", "D"])
        for sheet in sheets:
            for question_id in sorted(sheet.scores):
                per_strategy = sheet.scores[question_id]
                label_map = label_maps[question_id]
                row = [question_id, sheet.evaluator_id]
                for label in LABELS:
                    row.append(str(per_strategy[label_map[label]]))
                writer.writerow(row)


def load_score_sheets(path, label_maps: dict[str, dict[str, str]]) -> list[ScoreSheet]:
    """Read a score sheet CSV and unseal labels back into strategies."""
    per_evaluator: dict[str, dict[str, dict[str, int]]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["question_id", "evaluator_id", "A", "B", "C", "D"]:
            raise CorruptRecord(f"{path}:1: bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise CorruptRecord(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            question_id, evaluator_id = row[0], row[1]
            if question_id not in label_maps:
                raise CorruptRecord(f"{path}:{lineno}: unknown question_id {question_id!r}")
            label_map = label_maps[question_id]
            try:
                values = [int(v) for v in row[2:6]]
            except ValueError as exc:
                raise CorruptRecord(f"{path}:{lineno}: non-integer score") from exc
            for value in values:
                if not SCORE_MIN <= value <= SCORE_MAX:
                    raise CorruptRecord(f"{path}:{lineno}: score {value} outside 0..5")
            if evaluator_id not in per_evaluator:
                per_evaluator[evaluator_id] = {}
                order.append(evaluator_id)
            per_evaluator[evaluator_id][question_id] = {
                label_map[label]: value for label, value in zip(LABELS, values)
            }
    return [ScoreSheet(evaluator_id=e, scores=per_evaluator[e]) for e in order]


def load_label_maps(path) -> dict[str, dict[str, str]]:
    """Label map JSON: {"question_id": {"A": "markdown", ...}}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptRecord(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise CorruptRecord(f"{path}: label map must be an object")
    for question_id, label_map in obj.items():
        if not isinstance(label_map, dict) or tuple(sorted(label_map)) != LABELS:
            raise CorruptRecord(f"{path}: entry {question_id!r} must map labels {LABELS}")
    return obj


def save_label_maps(label_maps: dict[str, dict[str, str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(label_maps, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
