"""Character style embeddings, authorship verification over drama corpora,
and embedding-augmented quotation attribution in novels."""

__version__ = "0.1.0"
