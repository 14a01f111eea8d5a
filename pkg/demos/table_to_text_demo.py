"""Walk one table through all four text renderings.

Run from the repository root:

    python3 demos/table_to_text_demo.py
"""
from tabrag.backends import StubGenerator
from tabrag.documents import RawCell, RawTable, normalize_table
from tabrag.tabletext import (
    STRATEGIES,
    build_t2t_prompt,
    classify_table,
    DEFAULT_T2T_DEMONSTRATION,
    detect_main_column,
    generate_via_backend,
    render_markdown,
    render_template,
    strategy_profile,
)


def banner(title):
    print()
    print("=" * 72)
    print(title)
    print("=" * 72)


def main():
    # A relational table with a merged cell, the awkward case worth demoing.
    raw = RawTable(
        caption="Indicators on the head-end unit",
        rows=(
            (RawCell("Name"), RawCell("Color"), RawCell("State"), RawCell("Meaning")),
            (RawCell("PWR"), RawCell("Green", row_span=2), RawCell("Steady on"),
             RawCell("Power supply is normal.")),
            (RawCell("RUN"), RawCell("Blinking"),
             RawCell("The system is running.")),
            (RawCell("ALM"), RawCell("Red"), RawCell("Steady on"),
             RawCell("A fault has been detected.")),
        ),
    )

    banner("Normalization")
    table = normalize_table(raw)
    print(f"caption: {table.caption}")
    print(f"grid: {table.n_rows} rows x {table.n_cols} cols "
          f"(header + {len(table.data_rows)} data rows)")
    for row in table.grid:
        print("  " + " | ".join(row))
    schema = detect_main_column(table)
    print(f"shape: {classify_table(table)}, main column index: {schema.main_column}, "
          f"attribute columns: {schema.attribute_columns}")

    banner("Markdown rendering")
    print(render_markdown(table).text)

    banner("Template rendering")
    print(render_template(table).text)

    banner("Generation prompt (one-shot)")
    prompt = build_t2t_prompt(table, DEFAULT_T2T_DEMONSTRATION)
    print(prompt[:400] + "\n[... prompt continues ...]")

    banner("Generated renderings via the offline stub")
    stub = StubGenerator()
    for strategy in ("tplm", "llm"):
        passage = generate_via_backend(table, strategy, stub)
        print(f"[{strategy}] {passage.text[:120]}...")

    banner("Strategy trade-offs")
    for strategy in STRATEGIES:
        p = strategy_profile(strategy)
        print(f"{strategy:<10} resource={p.resource:<10} speed={p.speed:<10} "
              f"diversity={p.diversity}")


if __name__ == "__main__":
    main()
