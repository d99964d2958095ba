"""Scikit-learn style front door around the training pipeline.

`SpanGraphNER` stores its constructor arguments verbatim (so `get_params`,
`set_params`, and `clone` behave), builds a `RunConfig` at fit time, and
exposes the fitted model through trailing-underscore attributes. X is a
sequence of `AnnotatedSentence`; gold entities ride on the sentences, so
`y` stays optional and, when given, must be per-sentence entity lists that
replace the ones on X.
"""

from sklearn.base import BaseEstimator

from .config import RunConfig
from .corpus import AnnotatedSentence
from .decoder import decode
from .metrics import evaluate
from .trainer import train


def _with_entities(x, y):
    if y is None:
        return list(x)
    if len(x) != len(y):
        raise ValueError(f"X and y lengths differ: {len(x)} vs {len(y)}")
    return [AnnotatedSentence(tokens=s.tokens, dep_edges=s.dep_edges,
                              entities=tuple(ents), vectors=s.vectors)
            for s, ents in zip(x, y)]


class SpanGraphNER(BaseEstimator):
    """Joint span/relation recognizer for flat, overlapped, and discontinuous entities."""

    def __init__(self, d_emb=50, d_h=400, d_f=20, n_head=4, gcn_blocks=2,
                 dense_sublayers=2, bilstm=True, max_span_width=8, mlp_layers=1,
                 mlp_hidden=150, lr_encoder=1e-3, lr_heads=1e-3, patience=15,
                 max_epochs=200, batch_size=8, alpha=1.0, beta=1.0,
                 neg_downsample=0.0, seed=42, embedding_path=None,
                 entity_type_set=None, no_gcn=False, no_overlap_relation=False):
        self.d_emb = d_emb
        self.d_h = d_h
        self.d_f = d_f
        self.n_head = n_head
        self.gcn_blocks = gcn_blocks
        self.dense_sublayers = dense_sublayers
        self.bilstm = bilstm
        self.max_span_width = max_span_width
        self.mlp_layers = mlp_layers
        self.mlp_hidden = mlp_hidden
        self.lr_encoder = lr_encoder
        self.lr_heads = lr_heads
        self.patience = patience
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.alpha = alpha
        self.beta = beta
        self.neg_downsample = neg_downsample
        self.seed = seed
        self.embedding_path = embedding_path
        self.entity_type_set = entity_type_set
        self.no_gcn = no_gcn
        self.no_overlap_relation = no_overlap_relation

    def _config(self):
        return RunConfig(**self.get_params())

    def fit(self, X, y=None, dev=None):
        """Train on X, early-stopping against `dev` (defaults to X itself)."""
        sentences = _with_entities(X, y)
        result = train(sentences, list(dev) if dev is not None else sentences,
                       self._config())
        self.model_ = result.model
        self.log_rows_ = result.log_rows
        self.best_f1_ = result.best_f1
        self.best_epoch_ = result.best_epoch
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this SpanGraphNER instance is not fitted yet")

    def predict(self, X):
        """Decoded entities per sentence, as lists of EntityPrediction."""
        self._require_fitted()
        return [decode(self.model_, s) for s in X]

    def transform(self, X):
        """Contextual token representations, one (n_tokens, width) array each."""
        self._require_fitted()
        return [self.model_.encode(s).data for s in X]

    def score(self, X, y=None):
        """Exact-match entity F1 against the gold annotations."""
        self._require_fitted()
        golds = [list(s.entities) for s in _with_entities(X, y)]
        return evaluate(self.predict(X), golds).overall.f1

    def evaluate_report(self, X, y=None):
        """Full grouped report (regular / overlapped / discontinuous splits)."""
        self._require_fitted()
        golds = [list(s.entities) for s in _with_entities(X, y)]
        return evaluate(self.predict(X), golds)
