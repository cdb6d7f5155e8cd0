"""Quote attribution by candidate-mention ranking."""

from .context import (ALTQUOTE_TOKEN, QUOTE_TOKEN, CandidateMention, ContextSegment, build_context,
                      enumerate_candidates, is_unanswerable)
from .pipeline import (ABSTAIN, AccuracyTable, NovelVectors, QuoteResult, attribute,
                       build_character_embeddings, evaluate_attribution, novel_vectors, quote_vectors,
                       train_scorer)
from .scorer import (AUGMENTED, CONTEXT, ScorerConfig, ScorerModel, encode_context, load_scorer,
                     mention_repr, save_scorer, score)

__all__ = [
    "ABSTAIN", "ALTQUOTE_TOKEN", "AUGMENTED", "AccuracyTable", "CONTEXT", "CandidateMention",
    "ContextSegment", "NovelVectors", "QUOTE_TOKEN", "QuoteResult", "ScorerConfig", "ScorerModel",
    "attribute", "build_character_embeddings", "build_context", "encode_context",
    "enumerate_candidates", "evaluate_attribution", "is_unanswerable", "load_scorer",
    "mention_repr", "novel_vectors", "quote_vectors", "save_scorer", "score", "train_scorer",
]
