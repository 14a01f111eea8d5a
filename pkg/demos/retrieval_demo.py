"""Chunk a small corpus, index it, and poke at exact top-k search.

Run from the repository root:

    python3 demos/retrieval_demo.py
"""
from tabrag.backends import StubEmbedder
from tabrag.chunking import ChunkingConfig, chunk_corpus
from tabrag.retrieval import RetrievalConfig, build_index, search, similarity_report
from tabrag.tabletext import Corpus, CorpusPassage, PROSE


PASSAGES = [
    ("ospf", "OSPF areas reduce the size of the link state database. "
             "Area zero is the backbone and every other area must touch it."),
    ("ospf", "Use the ospf enable command in the interface view. "
             "The router id must be unique inside the domain."),
    ("bgp", "BGP peers exchange routes over TCP port 179. "
            "Use the peer as-number command to configure a neighbor."),
    ("vxlan", "A vxlan tunnel carries layer two frames over layer three. "
              "The tunnel endpoint learns remote MAC addresses dynamically."),
    ("vxlan", "Head-end replication floods broadcast traffic to every "
              "remote tunnel endpoint in the same bridge domain."),
]


def show(hits):
    for h in hits:
        print(f"  rank {h.rank}  score {h.score:+.4f}  {h.chunk_id}")


def main():
    corpus = Corpus(
        strategy="markdown",
        passages=tuple(
            CorpusPassage(doc_id=d, block_id=f"b{i}", origin=PROSE, text=t)
            for i, (d, t) in enumerate(PASSAGES)
        ),
    )

    # Tight cap so each document splits into a few chunks.
    chunks = chunk_corpus(corpus, ChunkingConfig(max_chunk_chars=80))
    print(f"{len(chunks)} chunks from {len(PASSAGES)} passages:")
    for c in chunks:
        print(f"  {c.chunk_id}  ({c.sentence_count} sentence(s), {c.char_len} chars)")

    embedder = StubEmbedder(dimension=256, seed=0)
    index = build_index(chunks, embedder)
    print(f"\nindex: {len(index)} vectors, dimension {index.dimension}")

    cfg = RetrievalConfig(top_k=3)
    for query in (
        "How do I configure a BGP neighbor?",
        "vxlan tunnel endpoint",
        "What is the backbone area?",
    ):
        print(f"\nquery: {query}")
        show(search(index, query, cfg, embedder))

    # A chunk queried with its own text comes back first with score 1.0.
    probe = chunks[0]
    print(f"\nself-query with {probe.chunk_id}:")
    show(search(index, probe.text, cfg, embedder))

    # Target tracking: where does a specific chunk land for a query?
    target = next(c.chunk_id for c in chunks if c.doc_id == "vxlan")
    report = similarity_report(index, "flooding broadcast frames",
                               [target], cfg, embedder)
    t = report.targets[0]
    print(f"\ntarget {t.chunk_id}: rank {t.rank}, score {t.score:+.4f}, "
          f"retrieved={t.retrieved}")
    print(f"best non-target: {report.best_non_target_id} "
          f"({report.best_non_target_score:+.4f})")


if __name__ == "__main__":
    main()
