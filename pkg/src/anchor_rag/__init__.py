"""Entropy-anchored retrieval-augmented question answering."""

from .anchor import Anchor, AnchorCandidate, SelectionPolicy, entropy, identify_anchors
from .estimator import AnchorRAG, AnchorSelector
from .index import Chunk, Document, FlatIndex, RetrievalResult, build_index, cosine, retrieve
from .predict import MaskedQuery, NgramModel, TopKDistribution, fill_mask, ngram_train

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "AnchorCandidate",
    "AnchorRAG",
    "AnchorSelector",
    "Chunk",
    "Document",
    "FlatIndex",
    "MaskedQuery",
    "NgramModel",
    "RetrievalResult",
    "SelectionPolicy",
    "TopKDistribution",
    "build_index",
    "cosine",
    "entropy",
    "fill_mask",
    "identify_anchors",
    "ngram_train",
    "retrieve",
]
