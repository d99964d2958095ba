"""Joint training of the span and pair heads with early stopping.

Supervision is assembled once per corpus: every enumerated span gets a
class target, and relation targets are built over gold fragments only
(teacher forcing), so the pair head learns independently of current span
predictions. The loss is alpha * span CE + beta * pair CE, summed within a
sentence and averaged over the batch. After each epoch the dev corpus is
decoded and scored; training stops when entity F1 has not improved for
`patience` epochs, keeping the best checkpoint seen.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import (OVERLAPPING, OTHER, RELATION_CLASSES, derive_pair_labels,
                     derive_span_labels, gold_fragments, load_embeddings)
from .decoder import decode
from .encoder import build_vocab
from .metrics import evaluate
from .model import build_model
from .seeding import stream
from .spanner import enumerate_spans, span_index

log = logging.getLogger(__name__)

GRAD_CLIP_NORM = 5.0


@dataclass
class Supervision:
    span_targets: np.ndarray  # class index per enumerated span
    span_rows: np.ndarray  # span rows contributing to the loss
    pair_rows: list  # (row, row) pairs into the span matrix, canonical order
    pair_targets: np.ndarray  # relation class index per pair


def assemble_supervision(sentence, cfg, span_classes, downsample_rng=None):
    """Training targets for one sentence under the current config."""
    labels, n_excluded = derive_span_labels(sentence, cfg.max_span_width)
    if n_excluded:
        log.warning("%d gold fragment(s) wider than max_span_width=%d are unreachable",
                    n_excluded, cfg.max_span_width)
    spans = enumerate_spans(len(sentence), cfg.max_span_width)
    class_index = {label: k for k, label in enumerate(span_classes)}
    span_targets = np.array(
        [class_index[labels[f]] if labels[f] is not None else 0 for f in spans],
        dtype=np.intp)

    rows = np.arange(len(spans))
    if 0.0 < cfg.neg_downsample < 1.0 and downsample_rng is not None:
        negatives = rows[span_targets == 0]
        keep = downsample_rng.random(negatives.size) < cfg.neg_downsample
        rows = np.sort(np.concatenate([rows[span_targets != 0], negatives[keep]]))

    usable = [f for f in gold_fragments(sentence) if f.width <= cfg.max_span_width]
    row_of = span_index(spans)
    pair_labels = derive_pair_labels(sentence)
    relation_index = {name: k for k, name in enumerate(RELATION_CLASSES)}
    pair_rows, pair_targets = [], []
    for i in range(len(usable)):
        for j in range(i + 1, len(usable)):
            label = pair_labels[(usable[i], usable[j])]
            if cfg.no_overlap_relation and label == OVERLAPPING:
                label = OTHER
            pair_rows.append((row_of[usable[i]], row_of[usable[j]]))
            pair_targets.append(relation_index[label])
    return Supervision(span_targets=span_targets, span_rows=rows,
                       pair_rows=pair_rows, pair_targets=np.array(pair_targets, dtype=np.intp))


def sentence_loss(model, sentence, sup, alpha, beta):
    """alpha * span CE + beta * pair CE for one sentence (SUM reduction)."""
    _, mat, probs = model.span_forward(sentence)
    terms = []
    if alpha > 0.0:
        kept = T.index_rows(probs, sup.span_rows)
        terms.append(T.scale(T.cross_entropy(kept, sup.span_targets[sup.span_rows]), alpha))
    if beta > 0.0 and sup.pair_rows:
        pair_probs = model.pair_probs(mat, sup.pair_rows)
        terms.append(T.scale(T.cross_entropy(pair_probs, sup.pair_targets), beta))
    if not terms:
        return T.Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return total


def compute_loss(model, sentences, supervisions, alpha, beta):
    """Mean per-sentence loss over one batch."""
    total = None
    for sentence, sup in zip(sentences, supervisions):
        term = sentence_loss(model, sentence, sup, alpha, beta)
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / len(sentences))


@dataclass
class TrainResult:
    model: object
    log_rows: list
    best_f1: float
    best_epoch: int


LOG_HEADER = "epoch,train_loss,dev_P,dev_R,dev_F1,best_so_far"


def format_log_csv(rows):
    lines = [LOG_HEADER]
    for r in rows:
        lines.append(f"{r['epoch']},{r['train_loss']:.6f},{r['dev_P']:.6f},"
                     f"{r['dev_R']:.6f},{r['dev_F1']:.6f},{r['best_so_far']:.6f}")
    return "\n".join(lines) + "\n"


def _context_width(sentences):
    widths = {0 if s.vectors is None else s.vectors.shape[1] for s in sentences}
    if len(widths) > 1:
        raise ValueError(f"precomputed vector width inconsistent across corpus: {sorted(widths)}")
    return widths.pop() if widths else 0


def dev_f1(model, sentences):
    preds = [decode(model, s) for s in sentences]
    golds = [list(s.entities) for s in sentences]
    return evaluate(preds, golds).overall


def train(train_sentences, dev_sentences, cfg):
    """Fit a fresh model; returns the best-on-dev model and the epoch log."""
    if not train_sentences:
        raise ValueError("empty training corpus")
    if not dev_sentences:
        raise ValueError("empty dev corpus")

    if cfg.entity_type_set is not None:
        entity_types = tuple(sorted(cfg.entity_type_set))
    else:
        entity_types = tuple(sorted({e.entity_type for s in train_sentences
                                     for e in s.entities}))
        if not entity_types:
            raise ValueError("training corpus has no entities; set entity_type_set")

    d_ctx = _context_width(list(train_sentences) + list(dev_sentences))
    pretrained = load_embeddings(cfg.embedding_path) if cfg.embedding_path else None
    model = build_model(cfg, entity_types, build_vocab(train_sentences),
                        d_ctx=d_ctx, pretrained=pretrained)

    downsample_rng = stream(cfg.seed, "downsample")
    supervisions = [assemble_supervision(s, cfg, model.span_classes, downsample_rng)
                    for s in train_sentences]

    params = model.parameters()
    optimizer = T.Adam([
        {"params": model.encoder_parameters(), "lr": cfg.lr_encoder},
        {"params": model.head_parameters(), "lr": cfg.lr_heads},
    ])
    shuffle_rng = stream(cfg.seed, "shuffle")

    best_f1 = -1.0
    best_epoch = 0
    best_arrays = None
    epochs_flat = 0
    log_rows = []
    n = len(train_sentences)

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = [int(k) for k in order[lo:lo + cfg.batch_size]]
            optimizer.zero_grad()
            with T.Tape() as tape:
                loss = compute_loss(model, [train_sentences[k] for k in batch],
                                    [supervisions[k] for k in batch],
                                    cfg.alpha, cfg.beta)
                tape.backward(loss)
            T.clip_global_norm(params, GRAD_CLIP_NORM)
            optimizer.step()
            epoch_loss += float(loss.data) * len(batch)
        scores = dev_f1(model, dev_sentences)

        improved = scores.f1 > best_f1
        if improved:
            best_f1 = scores.f1
            best_epoch = epoch
            best_arrays = {p.name: p.data.copy() for p in params}
            epochs_flat = 0
        else:
            epochs_flat += 1
        log_rows.append({"epoch": epoch, "train_loss": epoch_loss / n,
                         "dev_P": scores.precision, "dev_R": scores.recall,
                         "dev_F1": scores.f1, "best_so_far": best_f1})
        log.info("epoch %d loss %.4f dev F1 %.4f (best %.4f)",
                 epoch, epoch_loss / n, scores.f1, best_f1)
        if best_f1 >= 1.0:  # nothing left to improve
            break
        if epochs_flat >= cfg.patience:
            break

    if best_arrays is not None:
        for p in params:
            p.data[...] = best_arrays[p.name]
    return TrainResult(model=model, log_rows=log_rows, best_f1=best_f1, best_epoch=best_epoch)


# ---------------------------------------------------------------------------
# gradient check harness


def gradient_check(cfg, epsilon=1e-5):
    """Finite-difference check of the whole model at toy dimensions.

    Structural switches (BiLSTM, block/head/sublayer counts, ablations,
    MLP depth) follow cfg; widths shrink so the check finishes quickly.
    Parameters are re-drawn uniformly at a generic scale: the training
    init keeps early activations small enough that some true gradients
    sit below what central differences can resolve in float64.
    """
    from .corpus import AnnotatedSentence, DependencyEdge, Entity, Fragment

    tiny = cfg.replace(d_emb=6, d_h=2 * max(cfg.n_head, 2), d_f=4, mlp_hidden=7,
                       max_span_width=3, entity_type_set=("Thing",))
    sentence = AnnotatedSentence(
        tokens=("alpha", "beta", "gamma", "delta"),
        dep_edges=(DependencyEdge(0, 1), DependencyEdge(1, 2), DependencyEdge(2, 3)),
        entities=(Entity("Thing", (Fragment(0, 0), Fragment(2, 2))),
                  Entity("Thing", (Fragment(3, 3),))),
    )
    model = build_model(tiny, tiny.entity_type_set, build_vocab([sentence]))
    redraw = stream(tiny.seed, "gradcheck")
    for p in model.parameters():
        p.data[...] = redraw.uniform(-0.8, 0.8, p.data.shape)
    sup = assemble_supervision(sentence, tiny, model.span_classes)
    loss_fn = lambda: sentence_loss(model, sentence, sup, tiny.alpha, tiny.beta)
    return T.grad_check(loss_fn, model.parameters(), epsilon=epsilon)
