"""Word representations and the syntax-guided encoder.

Pipeline: token embeddings (optionally concatenated with precomputed
contextual vectors from the corpus file), an optional BiLSTM, then a
multi-head GCN stack over the dependency adjacency. The first GCN block
uses the hard dependency matrix; later blocks replace it with soft
adjacencies computed by per-head self-attention. Head outputs are merged
by one linear map, reduced, and concatenated onto the encoder output so
the original representation always survives verbatim.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T

UNK = "<unk>"


class EmbeddingTable:
    """Trainable word-vector table with a reserved unknown-word row 0."""

    def __init__(self, words, matrix):
        self.vocab = {UNK: 0}
        for w in words:
            self.vocab.setdefault(w, len(self.vocab))
        if matrix.data.shape[0] != len(self.vocab):
            raise ValueError(
                f"embedding matrix has {matrix.data.shape[0]} rows for {len(self.vocab)} words")
        self.matrix = matrix

    @property
    def dim(self):
        return self.matrix.data.shape[1]

    def indices(self, tokens):
        unk = self.vocab[UNK]
        return np.array([self.vocab.get(t, unk) for t in tokens], dtype=np.intp)


def build_vocab(sentences):
    """Sorted unique surface forms; order independent of corpus order."""
    return sorted({t for s in sentences for t in s.tokens})


def embed(sentence, table):
    """Rows of token vectors, widened by precomputed vectors when present."""
    rows = T.index_rows(table.matrix, table.indices(sentence.tokens))
    if sentence.vectors is not None:
        rows = T.concat_cols([rows, T.Tensor(sentence.vectors)])
    return rows


# ---------------------------------------------------------------------------
# BiLSTM


@dataclass
class LstmDirection:
    wx: T.Parameter  # (d_in, 4*hidden)
    wh: T.Parameter  # (hidden, 4*hidden)
    bias: T.Parameter  # (4*hidden,)


@dataclass
class BiLstmParams:
    forward: LstmDirection
    backward: LstmDirection
    hidden: int  # per direction; concatenated output is 2*hidden


def lstm_scan(h_in, direction, hidden, reverse=False):
    """Single-direction LSTM over the rows of h_in; returns one row per step.

    Gate block order in the fused projections is input, forget, cell, output.
    """
    n = h_in.data.shape[0]
    state = T.Tensor(np.zeros((1, hidden)))
    cell = T.Tensor(np.zeros((1, hidden)))
    steps = range(n - 1, -1, -1) if reverse else range(n)
    outputs = [None] * n
    for t in steps:
        x = T.index_rows(h_in, [t])
        gates = T.add(T.add(T.matmul(x, direction.wx), T.matmul(state, direction.wh)),
                      direction.bias)
        i = T.sigmoid(T.slice_cols(gates, 0, hidden))
        f = T.sigmoid(T.slice_cols(gates, hidden, 2 * hidden))
        g = T.tanh(T.slice_cols(gates, 2 * hidden, 3 * hidden))
        o = T.sigmoid(T.slice_cols(gates, 3 * hidden, 4 * hidden))
        cell = T.add(T.multiply(f, cell), T.multiply(i, g))
        state = T.multiply(o, T.tanh(cell))
        outputs[t] = state
    return T.concat_rows(outputs)


def bilstm(h_in, params):
    """Concatenate a left-to-right and a right-to-left scan per position."""
    fwd = lstm_scan(h_in, params.forward, params.hidden)
    bwd = lstm_scan(h_in, params.backward, params.hidden, reverse=True)
    return T.concat_cols([fwd, bwd])


# ---------------------------------------------------------------------------
# dependency-guided GCN


def build_adjacency(sentence):
    """Symmetric binary adjacency with self-loops; no degree normalization."""
    n = len(sentence.tokens)
    a = np.eye(n)
    for e in sentence.dep_edges:
        a[e.head, e.dependent] = 1.0
        a[e.dependent, e.head] = 1.0
    return a


def gcn_layer(h_in, adjacency, weight, bias):
    """One graph convolution: ReLU(A @ H @ W.T + b); W is (d_out, d_in)."""
    return T.relu(T.add(T.matmul(T.matmul(adjacency, h_in), T.transpose(weight)), bias))


def attention_adjacency(h_head, wq, wk):
    """Soft adjacency: row-softmax of scaled query-key scores (one head)."""
    d_head = h_head.data.shape[1]
    scores = T.matmul(T.matmul(h_head, wq), T.transpose(T.matmul(h_head, wk)))
    return T.softmax_rows(T.scale(scores, 1.0 / math.sqrt(d_head)))


@dataclass
class AggcnParams:
    # gcn_w[block][head][sublayer]: (d_h, sublayer_input_width)
    gcn_w: list
    gcn_b: list
    # att_q[block-2][head]: (d_head, d_head); empty when only one block
    att_q: list
    att_k: list
    merge: T.Parameter  # (n_head*d_h, d_h)
    reduce: T.Parameter  # (d_h, d_f)
    n_head: int
    d_head: int


def _dense_block(state, adjacency, weights, biases):
    # each sublayer sees the block input plus every earlier sublayer output
    outputs = []
    for w, b in zip(weights, biases):
        stacked = T.concat_cols([state] + outputs) if outputs else state
        outputs.append(gcn_layer(stacked, adjacency, w, b))
    return outputs[-1]


def aggcn(h_in, adjacency, params):
    """Multi-head GCN stack; returns [H, reduced-merge] of width d_h + d_f."""
    n_blocks = len(params.gcn_w)
    hard = T.Tensor(adjacency)
    head_states = [h_in] * params.n_head
    for block in range(n_blocks):
        for t in range(params.n_head):
            if block == 0:
                adj = hard
            else:
                lo = t * params.d_head
                h_slice = T.slice_cols(head_states[t], lo, lo + params.d_head)
                adj = attention_adjacency(h_slice, params.att_q[block - 1][t],
                                          params.att_k[block - 1][t])
            head_states[t] = _dense_block(head_states[t], adj,
                                          params.gcn_w[block][t], params.gcn_b[block][t])
    merged = T.matmul(T.concat_cols(head_states), params.merge)
    return T.concat_cols([h_in, T.matmul(merged, params.reduce)])
