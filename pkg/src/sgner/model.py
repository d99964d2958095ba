"""Model assembly: parameters, the end-to-end forward pass, checkpoints.

All trainable weights are created here, in one fixed order, from the
"init" random stream — so a seed fully determines the starting point, and
checkpoints can rebuild the exact model from stored arrays plus metadata.
"""

import math

import numpy as np

from . import encoder as E
from . import spanner as S
from . import tensor as T
from .config import RunConfig, validate_config
from .corpus import RELATION_CLASSES
from .seeding import stream


class Model:
    """A fully built recognizer: embeddings, encoder stack, two heads."""

    def __init__(self, cfg, entity_types, vocab_words, d_ctx):
        self.cfg = cfg
        self.entity_types = tuple(sorted(entity_types))
        self.vocab_words = list(vocab_words)
        self.d_ctx = int(d_ctx)
        self.span_classes = [S.NONE_LABEL] + list(self.entity_types)
        self.relation_classes = list(RELATION_CLASSES)
        # populated by build_model
        self.embedding = None
        self.bilstm_params = None
        self.gcn = None
        self.width_table = None
        self.span_mlp = None
        self.pair_mlp = None
        self._params = []
        self._encoder_params = []
        self._head_params = []

    # -- parameter access ---------------------------------------------------

    def parameters(self):
        return list(self._params)

    def encoder_parameters(self):
        return list(self._encoder_params)

    def head_parameters(self):
        return list(self._head_params)

    @property
    def encoder_width(self):
        width = self.d_h
        if not self.cfg.no_gcn:
            width += self.cfg.d_f
        return width

    @property
    def d_h(self):
        if self.cfg.bilstm:
            return self.cfg.d_h
        return self.embedding.dim + self.d_ctx

    @property
    def d_span(self):
        return S.span_width(self.encoder_width)

    # -- forward ------------------------------------------------------------

    def encode(self, sentence):
        """Encoder rows for one sentence: (N, encoder_width)."""
        if self.d_ctx == 0 and sentence.vectors is not None:
            raise ValueError("sentence carries precomputed vectors but the model expects none")
        if self.d_ctx > 0:
            if sentence.vectors is None:
                raise ValueError("model expects precomputed vectors on every sentence")
            if sentence.vectors.shape[1] != self.d_ctx:
                raise ValueError(
                    f"precomputed vector width {sentence.vectors.shape[1]} != {self.d_ctx}")
        h = E.embed(sentence, self.embedding)
        if self.bilstm_params is not None:
            h = E.bilstm(h, self.bilstm_params)
        if self.gcn is not None:
            h = E.aggcn(h, E.build_adjacency(sentence), self.gcn)
        return h

    def span_forward(self, sentence):
        """Returns (spans, span feature matrix, per-span class distribution)."""
        spans = S.enumerate_spans(len(sentence), self.cfg.max_span_width)
        mat = S.span_matrix(self.encode(sentence), spans, self.width_table)
        return spans, mat, S.classify_spans(mat, self.span_mlp)

    def pair_probs(self, spans_mat, pair_indices):
        return S.classify_pairs(spans_mat, pair_indices, self.pair_mlp)

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        meta = {
            "config": self.cfg.to_dict(),
            "entity_types": list(self.entity_types),
            "vocab": self.vocab_words,
            "d_ctx": self.d_ctx,
        }
        T.write_checkpoint(path, {p.name: p.data for p in self._params}, meta=meta)

    @staticmethod
    def load(path):
        meta, arrays = T.read_checkpoint(path)
        cfg = RunConfig.from_dict(meta["config"])
        return build_model(cfg, meta["entity_types"], meta["vocab"],
                           d_ctx=meta["d_ctx"], arrays=arrays)


def _mlp_sizes(d_in, hidden, layers, d_out):
    return [d_in] + [hidden] * layers + [d_out]


def build_model(cfg, entity_types, vocab_words, d_ctx=0, arrays=None, pretrained=None):
    """Construct a Model, drawing fresh weights or restoring stored ones.

    pretrained: optional (words, matrix) giving initial embedding rows for
    the vocabulary words found in it; remaining rows stay random.
    """
    problems = validate_config(cfg)
    if problems:
        raise ValueError("; ".join(problems))
    if not entity_types:
        raise ValueError("need at least one entity type")

    model = Model(cfg, entity_types, vocab_words, d_ctx)
    rng = stream(cfg.seed, "init")
    seen = set()

    def register(name, data, group):
        if name in seen:
            raise ValueError(f"duplicate parameter name {name!r}")
        seen.add(name)
        p = T.Parameter(name, data)
        model._params.append(p)
        group.append(p)
        return p

    def weight(name, shape, group):
        if arrays is not None:
            data = arrays[name]
        else:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-bound, bound, size=shape)
        return register(name, data, group)

    def bias(name, size, group):
        data = arrays[name] if arrays is not None else np.zeros(size)
        return register(name, data, group)

    def table(name, shape, group):
        if arrays is not None:
            data = arrays[name]
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        return register(name, data, group)

    enc, heads = model._encoder_params, model._head_params

    # embeddings (row 0 is the unknown word)
    d_emb = pretrained[1].shape[1] if pretrained is not None else cfg.d_emb
    emb = table("embed.table", (len(vocab_words) + 1, d_emb), enc)
    if pretrained is not None and arrays is None:
        words, matrix = pretrained
        row_of = {w: i for i, w in enumerate(words)}
        for k, w in enumerate(vocab_words):
            if w in row_of:
                emb.data[k + 1] = matrix[row_of[w]]
    model.embedding = E.EmbeddingTable(vocab_words, emb)

    d0 = d_emb + d_ctx
    if cfg.bilstm:
        hidden = cfg.d_h // 2
        model.bilstm_params = E.BiLstmParams(
            forward=E.LstmDirection(
                wx=weight("bilstm.fwd.wx", (d0, 4 * hidden), enc),
                wh=weight("bilstm.fwd.wh", (hidden, 4 * hidden), enc),
                bias=bias("bilstm.fwd.b", 4 * hidden, enc),
            ),
            backward=E.LstmDirection(
                wx=weight("bilstm.bwd.wx", (d0, 4 * hidden), enc),
                wh=weight("bilstm.bwd.wh", (hidden, 4 * hidden), enc),
                bias=bias("bilstm.bwd.b", 4 * hidden, enc),
            ),
            hidden=hidden,
        )
    d_h = model.d_h

    if not cfg.no_gcn:
        if d_h % cfg.n_head != 0:
            raise ValueError(f"n_head={cfg.n_head} must divide encoder width {d_h}")
        d_head = d_h // cfg.n_head
        gcn_w, gcn_b, att_q, att_k = [], [], [], []
        for block in range(cfg.gcn_blocks):
            if block >= 1:
                att_q.append([weight(f"gcn.b{block}.h{t}.att_q", (d_head, d_head), enc)
                              for t in range(cfg.n_head)])
                att_k.append([weight(f"gcn.b{block}.h{t}.att_k", (d_head, d_head), enc)
                              for t in range(cfg.n_head)])
            block_w, block_b = [], []
            for t in range(cfg.n_head):
                ws, bs = [], []
                for s in range(cfg.dense_sublayers):
                    ws.append(weight(f"gcn.b{block}.h{t}.s{s}.w", (d_h, (s + 1) * d_h), enc))
                    bs.append(bias(f"gcn.b{block}.h{t}.s{s}.b", d_h, enc))
                block_w.append(ws)
                block_b.append(bs)
            gcn_w.append(block_w)
            gcn_b.append(block_b)
        model.gcn = E.AggcnParams(
            gcn_w=gcn_w, gcn_b=gcn_b, att_q=att_q, att_k=att_k,
            merge=weight("gcn.merge", (cfg.n_head * d_h, d_h), enc),
            reduce=weight("gcn.reduce", (d_h, cfg.d_f), enc),
            n_head=cfg.n_head, d_head=d_head,
        )

    model.width_table = table("span.width_table", (cfg.max_span_width, S.WIDTH_DIM), heads)

    def mlp(prefix, sizes):
        layers = []
        for k, (a, b) in enumerate(zip(sizes, sizes[1:])):
            layers.append((weight(f"{prefix}.l{k}.w", (a, b), heads),
                           bias(f"{prefix}.l{k}.b", b, heads)))
        return layers

    d_s = model.d_span
    model.span_mlp = mlp("span", _mlp_sizes(d_s, cfg.mlp_hidden, cfg.mlp_layers,
                                            len(model.span_classes)))
    model.pair_mlp = mlp("pair", _mlp_sizes(3 * d_s, cfg.mlp_hidden, cfg.mlp_layers,
                                            len(RELATION_CLASSES)))
    return model
