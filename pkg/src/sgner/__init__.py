"""Span-based recognition of regular, overlapped and discontinuous named entities.

Sentences are encoded with a BiLSTM and an attention-guided GCN over the
dependency tree; enumerated spans are classified into entity-fragment
types; fragment pairs are classified into succession / overlapping /
other; and entities are decoded as maximal cliques of the same-type
succession graph.
"""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig, load_config, validate_config
from .corpus import (AnnotatedSentence, CorpusError, DependencyEdge, Entity,
                     Fragment, SynthSpec, load_corpus, load_embeddings,
                     synthesize_corpus, write_corpus)
from .decoder import (EntityPrediction, decode, find_complete_subgraphs,
                      load_predictions, maximal_cliques, write_predictions)
from .estimator import SpanGraphNER
from .metrics import EvalReport, Scores, evaluate
from .model import Model, build_model
from .trainer import TrainResult, gradient_check, train

__all__ = [
    "AnnotatedSentence", "ConfigError", "CorpusError", "DependencyEdge",
    "Entity", "EntityPrediction", "EvalReport", "Fragment", "Model",
    "RunConfig", "Scores", "SpanGraphNER", "SynthSpec", "TrainResult",
    "build_model", "decode", "evaluate", "find_complete_subgraphs",
    "gradient_check", "load_config", "load_corpus", "load_embeddings",
    "load_predictions", "maximal_cliques", "synthesize_corpus", "train",
    "validate_config", "write_corpus", "write_predictions",
]
