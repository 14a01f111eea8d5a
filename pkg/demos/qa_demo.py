"""End-to-end question answering over a hybrid text+table document set.

The generator here is the offline stub, preloaded with canned replies for
the prompts we expect, so the demo runs without any model server.

Run from the repository root:

    python3 demos/qa_demo.py
"""
from tabrag.backends import StubEmbedder, StubGenerator
from tabrag.chunking import chunk_corpus
from tabrag.documents import (
    Block,
    HybridDocument,
    RawCell,
    RawTable,
    TABLE,
    TEXT,
    normalize_document,
)
from tabrag.qa import answer, build_rag_prompt, is_abstention
from tabrag.retrieval import RetrievalConfig, build_index, search
from tabrag.tabletext import assemble_corpus


def make_documents():
    power = HybridDocument(
        doc_id="power", title="Power Module Guide",
        blocks=(
            Block(block_id="b0", kind=TEXT,
                  text="The power module ships preinstalled in slot zero."),
            Block(block_id="b1", kind=TABLE, table=RawTable(
                caption="Basic information about the power module",
                rows=(
                    (RawCell("Item"), RawCell("Details")),
                    (RawCell("Part Number"), RawCell("50030265")),
                    (RawCell("Rated Voltage"), RawCell("DC 12V")),
                ),
            )),
        ),
    )
    fans = HybridDocument(
        doc_id="fans", title="Fan Maintenance",
        blocks=(
            Block(block_id="b0", kind=TEXT,
                  text="Fan trays are hot swappable. Replace a failed tray "
                       "within five minutes to avoid thermal shutdown."),
        ),
    )
    return [normalize_document(power), normalize_document(fans)]


def main():
    docs = make_documents()
    titles = {d.doc_id: d.title for d in docs}

    corpus = assemble_corpus(docs, "markdown")
    chunks = chunk_corpus(corpus)
    lookup = {c.chunk_id: c for c in chunks}

    embedder = StubEmbedder(dimension=256, seed=0)
    index = build_index(chunks, embedder)
    cfg = RetrievalConfig(top_k=2)

    question = "What is the Part Number of the power module?"
    hits = search(index, question, cfg, embedder)
    prompt = build_rag_prompt(question, [lookup[h.chunk_id] for h in hits], titles)

    print("retrieved pages:")
    for h in hits:
        print(f"  rank {h.rank}  {h.chunk_id}  score {h.score:+.4f}")
    print("\nprompt sent to the reader:")
    print(prompt)

    # Stub replies keyed by exact prompt: one grounded answer, one refusal.
    off_topic = "What is the average rainfall in the Amazon basin?"
    off_hits = search(index, off_topic, cfg, embedder)
    off_prompt = build_rag_prompt(off_topic, [lookup[h.chunk_id] for h in off_hits], titles)
    generator = StubGenerator(fixtures={
        prompt: "The Part Number of the power module is 50030265.",
        off_prompt: "I don't know the answer.",
    })

    print("\n--- grounded question ---")
    trace = answer(question, index, lookup, cfg, generator, embedder, titles=titles)
    print(f"answer: {trace.answer}")
    print(f"abstained: {trace.abstained}")

    print("\n--- off-topic question ---")
    trace = answer(off_topic, index, lookup, cfg, generator, embedder, titles=titles)
    print(f"answer: {trace.answer}")
    print(f"abstained: {trace.abstained}")
    assert is_abstention(trace.answer)


if __name__ == "__main__":
    main()
