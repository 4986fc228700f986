"""Offline contextual-embedding exporter.

Runs a frozen pretrained transformer over a BIO corpus and writes one
vector per corpus token into the ``threatkg`` precomputed-embedding
container (subword outputs are pooled to token level).  The extraction
pipeline itself never loads the transformer; the two tools share only
the file format.
"""

from .bio import BioFormatError, read_bio_tokens
from .container import corpus_fingerprint, write_embedding_container, write_embedding_text
from .export import AlignmentError, ExportManifest, export_embeddings

__all__ = [
    "AlignmentError",
    "BioFormatError",
    "ExportManifest",
    "corpus_fingerprint",
    "export_embeddings",
    "read_bio_tokens",
    "write_embedding_container",
    "write_embedding_text",
]
