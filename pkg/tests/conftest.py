import numpy as np
import pytest

from sgner.config import RunConfig
from sgner.corpus import AnnotatedSentence, DependencyEdge, Entity, Fragment
from sgner.model import build_model


def tiny_config(**overrides):
    base = dict(d_emb=6, d_h=8, d_f=4, n_head=2, gcn_blocks=2, dense_sublayers=2,
                bilstm=True, max_span_width=4, mlp_layers=1, mlp_hidden=7, seed=11)
    base.update(overrides)
    return RunConfig(**base)


def tiny_sentence():
    return AnnotatedSentence(
        tokens=("the", "valve", "was", "thickened", "again"),
        dep_edges=(DependencyEdge(1, 0), DependencyEdge(3, 1),
                   DependencyEdge(3, 2), DependencyEdge(3, 4)),
        entities=(Entity("Disorder", (Fragment(1, 1), Fragment(3, 3))),),
    )


def tiny_model(**overrides):
    cfg = tiny_config(**overrides)
    vocab = sorted(set(tiny_sentence().tokens) | {"spare", "words"})
    return build_model(cfg, entity_types=("Disorder", "Finding"), vocab_words=vocab)


@pytest.fixture
def sentence():
    return tiny_sentence()


@pytest.fixture
def model():
    return tiny_model()
