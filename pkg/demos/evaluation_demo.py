"""Score four anonymized answers per question and aggregate the results.

Run from the repository root:

    python3 demos/evaluation_demo.py
"""
import random

from tabrag.evaluation import (
    DEFAULT_TAG_LEXICON,
    EvalRecord,
    LABELS,
    ScoreSheet,
    build_evaluator_prompt,
    check_reliability,
    classify_question,
    count_lexicon,
    mean_scores,
    parse_scores,
    pooled_mean_scores,
    rsd,
    score_distribution,
    win_rate,
)

STRATEGIES = ("markdown", "template", "tplm", "llm")

QUESTIONS = [
    "What is the Part Number of the power module?",
    "How do I configure the parameter range for the uplink?",
    "Which command enables the broadband module?",
]


def main():
    # --- one judge prompt, candidates shuffled behind sealed labels ----------
    rng = random.Random(7)
    shuffled = list(STRATEGIES)
    rng.shuffle(shuffled)
    label_map = dict(zip(LABELS, shuffled))
    record = EvalRecord(
        question=QUESTIONS[0],
        golden_answer="The Part Number is 50030265.",
        candidates={
            "A": "The Part Number is 50030265.",
            "B": "50030265.",
            "C": "The part number of the module is listed in the table.",
            "D": "I don't know the answer.",
        },
        label_map=label_map,
    )
    prompt = build_evaluator_prompt(record)
    print("judge prompt (tail):")
    print("...")
    print(prompt[-400:])
    print(f"\nsealed label map for this question: {label_map}")

    # --- parse the three judges' replies ------------------------------------
    replies = {
        "e1": "Score: A:5, B:5, C:2, D:0",
        "e2": "A:5, B:4, C:2, D:0",
        "e3": "Sure. The scores are A:5, B:5, C:3, D:0.",
    }
    parsed = {}
    for evaluator, reply in replies.items():
        parsed[evaluator] = parse_scores(reply)
        print(f"{evaluator}: {reply!r} -> {parsed[evaluator]}")

    verdict = check_reliability(list(parsed.values()))
    print(f"reliability verdict for this question: {verdict}")

    # --- aggregate synthetic sheets over all questions -----------------------
    rng = random.Random(11)
    base = {"markdown": 4, "template": 4, "tplm": 3, "llm": 5}
    sheets = []
    for evaluator in ("e1", "e2", "e3"):
        scores = {}
        for i, _ in enumerate(QUESTIONS):
            scores[f"q{i:04d}"] = {
                s: max(0, min(5, base[s] + rng.choice([-1, 0, 0, 1])))
                for s in STRATEGIES
            }
        sheets.append(ScoreSheet(evaluator_id=evaluator, scores=scores))

    print("\nper-evaluator means:")
    for sheet in sheets:
        means = mean_scores(sheet)
        row = "  ".join(f"{s}={means[s]:.2f}" for s in STRATEGIES)
        print(f"  {sheet.evaluator_id}: {row}")

    pooled = pooled_mean_scores(sheets)
    print("\npooled means: " + "  ".join(f"{s}={pooled[s]:.2f}" for s in STRATEGIES))
    print(f"relative score difference: {rsd(pooled):.2f}")

    a = [sheet.scores[q]["llm"] for sheet in sheets for q in sorted(sheet.scores)]
    b = [sheet.scores[q]["markdown"] for sheet in sheets for q in sorted(sheet.scores)]
    llm_wins, markdown_wins = win_rate(a, b)
    print(f"win rate llm vs markdown: {llm_wins:.2f}% / {markdown_wins:.2f}%")

    print("\nscore distribution (evaluator e1):")
    for strategy, hist in score_distribution(sheets[0]).items():
        print(f"  {strategy}: {hist}")

    # --- corpus and question analytics ---------------------------------------
    texts = [
        "Run the display device command to check the module state.",
        "The VTEP address must be reachable before the tunnel comes up.",
        "Configure the VTEP on both endpoints.",
    ]
    print(f"\nVTEP/command mentions: "
          f"{count_lexicon(texts, ['VTEP', 'command'])} across {len(texts)} passages")

    print("\nquestion taxonomy:")
    for q in QUESTIONS:
        first_word, tag = classify_question(q, DEFAULT_TAG_LEXICON)
        print(f"  ({first_word:<6} {tag:<14}) {q}")


if __name__ == "__main__":
    main()
