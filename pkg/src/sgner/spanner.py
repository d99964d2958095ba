"""Candidate spans, span features, and the two classification heads.

A span's feature vector is the encoder row of its first token, the row of
its last token, and a trainable embedding of its width — so its dimension
is 2*(encoder width) + 20. The span head scores each span over the entity
types plus a none class at index 0; the pair head scores a fragment pair
over the three relation classes, reading both spans and their elementwise
product.
"""

import numpy as np

from . import tensor as T
from .corpus import enumerate_fragments

WIDTH_DIM = 20
NONE_LABEL = "<none>"


def enumerate_spans(n_tokens, max_width):
    return enumerate_fragments(n_tokens, max_width)


def span_width(encoder_width):
    """Feature dimension of one span given the encoder output width."""
    return 2 * encoder_width + WIDTH_DIM


def span_matrix(h_enc, spans, width_table):
    """Stack the feature vectors of all spans into one (S, d_s) tensor."""
    starts = [f.start for f in spans]
    ends = [f.end for f in spans]
    widths = [f.width - 1 for f in spans]  # width w uses table row w-1
    return T.concat_cols([
        T.index_rows(h_enc, starts),
        T.index_rows(h_enc, ends),
        T.index_rows(width_table, widths),
    ])


def mlp_apply(x, layers):
    """Hidden layers with ReLU, final layer linear; layers are (W, b) pairs."""
    for w, b in layers[:-1]:
        x = T.relu(T.add(T.matmul(x, w), b))
    w, b = layers[-1]
    return T.add(T.matmul(x, w), b)


def classify_spans(spans_mat, span_mlp):
    """Per-span distribution over [none] + entity types."""
    return T.softmax_rows(mlp_apply(spans_mat, span_mlp))


def pair_feature_matrix(spans_mat, pair_indices):
    """Rows [s1, s1*s2, s2] for each (i, j) index pair into spans_mat."""
    first = T.index_rows(spans_mat, [i for i, _ in pair_indices])
    second = T.index_rows(spans_mat, [j for _, j in pair_indices])
    return T.concat_cols([first, T.multiply(first, second), second])


def classify_pairs(spans_mat, pair_indices, pair_mlp):
    """Per-pair distribution over the three relation classes."""
    return T.softmax_rows(mlp_apply(pair_feature_matrix(spans_mat, pair_indices), pair_mlp))


def span_index(spans):
    """Fragment -> row position in the span matrix."""
    return {f: k for k, f in enumerate(spans)}
