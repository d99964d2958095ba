import math

import numpy as np
import pytest

from sgner import tensor as T
from sgner import trainer
from sgner.corpus import (AnnotatedSentence, DependencyEdge, Entity, Fragment,
                          SynthSpec, synthesize_corpus)
from sgner.metrics import Scores
from sgner.seeding import stream
from sgner.trainer import (assemble_supervision, compute_loss, format_log_csv,
                           gradient_check, sentence_loss, train)

from conftest import tiny_config, tiny_model, tiny_sentence


def params_by_name(model):
    return {p.name: p for p in model.parameters()}


def zero_heads(model):
    # zeroed final layers make both heads emit uniform distributions
    by_name = params_by_name(model)
    for name in ("span.l0.w", "span.l0.b", "pair.l0.w", "pair.l0.b"):
        by_name[name].data[...] = 0.0
    return model


# --- supervision assembly ---


def test_span_targets_mark_gold_rows():
    cfg = tiny_config()
    model = tiny_model()
    sup = assemble_supervision(tiny_sentence(), cfg, model.span_classes)
    assert sup.span_targets.shape == (14,)
    # spans enumerate by start: (1,1) is row 4 and (3,3) is row 11
    disorder = model.span_classes.index("Disorder")
    assert sup.span_targets[4] == disorder
    assert sup.span_targets[11] == disorder
    assert sup.span_targets.sum() == 2 * disorder
    assert list(sup.span_rows) == list(range(14))


def test_pair_targets_cover_gold_fragment_pairs():
    cfg = tiny_config()
    model = tiny_model()
    sup = assemble_supervision(tiny_sentence(), cfg, model.span_classes)
    assert len(sup.pair_rows) == 1
    assert list(sup.pair_targets) == [0]  # same entity: succession


def test_fragment_wider_than_cap_is_unreachable_and_warned(caplog):
    cfg = tiny_config(max_span_width=2)
    model = tiny_model(max_span_width=2)
    wide = AnnotatedSentence(
        tokens=("a", "b", "c", "d", "e"),
        dep_edges=(DependencyEdge(0, 1), DependencyEdge(1, 2),
                   DependencyEdge(2, 3), DependencyEdge(3, 4)),
        entities=(Entity("Disorder", (Fragment(0, 3),)),
                  Entity("Finding", (Fragment(4, 4),))),
    )
    with caplog.at_level("WARNING", logger="sgner.trainer"):
        sup = assemble_supervision(wide, cfg, model.span_classes)
    assert "unreachable" in caplog.text
    finding = model.span_classes.index("Finding")
    assert sup.span_targets.sum() == finding  # only the narrow fragment labeled
    assert sup.pair_rows == []  # the wide fragment cannot anchor a pair


def test_overlap_relabeled_to_other_under_ablation():
    nested = AnnotatedSentence(
        tokens=("a", "b", "c", "d"),
        dep_edges=(DependencyEdge(0, 1), DependencyEdge(1, 2), DependencyEdge(2, 3)),
        entities=(Entity("Disorder", (Fragment(0, 1),)),
                  Entity("Disorder", (Fragment(1, 1),))),
    )
    model = tiny_model()
    plain = assemble_supervision(nested, tiny_config(), model.span_classes)
    assert list(plain.pair_targets) == [1]  # overlapping
    ablated = assemble_supervision(nested, tiny_config(no_overlap_relation=True),
                                   model.span_classes)
    assert list(ablated.pair_targets) == [2]
    assert 1 not in ablated.pair_targets


def test_negative_downsampling_keeps_all_positives():
    cfg = tiny_config(neg_downsample=0.3)
    model = tiny_model()
    rng = stream(cfg.seed, "downsample")
    sup = assemble_supervision(tiny_sentence(), cfg, model.span_classes, rng)
    kept = set(sup.span_rows.tolist())
    assert {4, 11} <= kept  # gold rows survive
    assert len(kept) < 14  # some negatives dropped at rate 0.3
    assert all(sup.span_targets[r] == 0 for r in kept - {4, 11})


# --- loss ---


def test_uniform_heads_give_closed_form_loss():
    model = zero_heads(tiny_model())
    s = tiny_sentence()
    sup = assemble_supervision(s, tiny_config(), model.span_classes)
    loss = sentence_loss(model, s, sup, alpha=1.0, beta=1.0)
    # 14 spans and 1 pair, 3 classes each: (14 + 1) * ln 3
    assert float(loss.data) == pytest.approx(15 * math.log(3), rel=1e-12)


def test_loss_weights_scale_each_term():
    model = zero_heads(tiny_model())
    s = tiny_sentence()
    sup = assemble_supervision(s, tiny_config(), model.span_classes)
    loss = sentence_loss(model, s, sup, alpha=0.5, beta=2.0)
    assert float(loss.data) == pytest.approx((0.5 * 14 + 2.0) * math.log(3), rel=1e-12)


def test_batch_loss_is_mean_over_sentences():
    model = zero_heads(tiny_model())
    s = tiny_sentence()
    sup = assemble_supervision(s, tiny_config(), model.span_classes)
    single = compute_loss(model, [s], [sup], 1.0, 1.0)
    batched = compute_loss(model, [s, s, s], [sup, sup, sup], 1.0, 1.0)
    assert float(batched.data) == pytest.approx(float(single.data), rel=1e-12)


def test_beta_zero_leaves_pair_head_untouched():
    model = tiny_model()
    s = tiny_sentence()
    sup = assemble_supervision(s, tiny_config(), model.span_classes)
    for p in model.parameters():
        p.grad[...] = 0.0
    with T.Tape() as tape:
        tape.backward(sentence_loss(model, s, sup, alpha=1.0, beta=0.0))
    for p in model.parameters():
        if p.name.startswith("pair."):
            assert not p.grad.any(), p.name
    by_name = params_by_name(model)
    assert by_name["span.l0.w"].grad.any()
    assert by_name["gcn.merge"].grad.any()


def test_alpha_zero_leaves_span_classifier_untouched():
    model = tiny_model()
    s = tiny_sentence()
    sup = assemble_supervision(s, tiny_config(), model.span_classes)
    for p in model.parameters():
        p.grad[...] = 0.0
    with T.Tape() as tape:
        tape.backward(sentence_loss(model, s, sup, alpha=0.0, beta=1.0))
    by_name = params_by_name(model)
    for name in ("span.l0.w", "span.l0.b"):
        assert not by_name[name].grad.any(), name
    # shared features still learn: the width table feeds the pair head too
    assert by_name["span.width_table"].grad.any()
    assert by_name["pair.l0.w"].grad.any()


# --- training loop ---


def small_corpus(n=5, seed=7):
    return synthesize_corpus(SynthSpec(sentences=n, p_overlap=0.2, p_discont=0.2), seed)


def fast_cfg(**overrides):
    base = dict(d_emb=8, d_h=12, d_f=4, n_head=2, gcn_blocks=1, dense_sublayers=1,
                max_span_width=4, mlp_hidden=12, batch_size=2, max_epochs=4,
                patience=3, seed=3)
    base.update(overrides)
    return tiny_config(**base)


def test_train_rejects_empty_corpora():
    corpus = small_corpus()
    with pytest.raises(ValueError, match="empty training corpus"):
        train([], corpus, fast_cfg())
    with pytest.raises(ValueError, match="empty dev corpus"):
        train(corpus, [], fast_cfg())


def test_train_requires_entities_or_explicit_types():
    bare = [AnnotatedSentence(tokens=("a", "b"), dep_edges=(DependencyEdge(0, 1),),
                              entities=())]
    with pytest.raises(ValueError, match="entity_type_set"):
        train(bare, bare, fast_cfg())
    result = train(bare, bare, fast_cfg(entity_type_set=("Disorder",), max_epochs=1))
    assert result.model.entity_types == ("Disorder",)


def test_train_rejects_mixed_vector_widths():
    plain = AnnotatedSentence(tokens=("a", "b"), dep_edges=(DependencyEdge(0, 1),),
                              entities=(Entity("Disorder", (Fragment(0, 0),)),))
    vectored = AnnotatedSentence(tokens=("a", "b"), dep_edges=(DependencyEdge(0, 1),),
                                 entities=(Entity("Disorder", (Fragment(0, 0),)),),
                                 vectors=np.zeros((2, 3)))
    with pytest.raises(ValueError, match="inconsistent"):
        train([plain, vectored], [plain], fast_cfg())


def test_loss_decreases_when_overfitting():
    corpus = small_corpus()
    result = train(corpus, corpus, fast_cfg(max_epochs=12, patience=12,
                                            lr_encoder=3e-3, lr_heads=3e-3))
    losses = [r["train_loss"] for r in result.log_rows]
    assert losses[-1] < 0.5 * losses[0]


def test_pretrained_embeddings_flow_into_training(tmp_path):
    data = small_corpus(3)
    words = sorted({t for s in data for t in s.tokens})[:3]
    path = tmp_path / "vecs.txt"
    lines = [f"{len(words)} 8"]
    for k, w in enumerate(words):
        lines.append(w + (" " + str(0.25 * (k + 1))) * 8)
    path.write_text("\n".join(lines) + "\n")
    cfg = fast_cfg(max_epochs=1, patience=1, embedding_path=str(path))
    result = train(data, data, cfg)
    assert len(result.log_rows) == 1


def test_training_is_deterministic():
    corpus = small_corpus()
    a = train(corpus, corpus, fast_cfg(max_epochs=3, patience=3))
    b = train(corpus, corpus, fast_cfg(max_epochs=3, patience=3))
    assert a.log_rows == b.log_rows
    for pa, pb in zip(a.model.parameters(), b.model.parameters()):
        assert pa.name == pb.name
        assert pa.data.tobytes() == pb.data.tobytes()


def constant_scores(f1):
    return Scores(tp=0, fp=0, fn=0, precision=f1, recall=f1, f1=f1)


def test_patience_one_with_flat_dev_f1_stops_after_two_epochs(monkeypatch):
    monkeypatch.setattr(trainer, "dev_f1", lambda model, sents: constant_scores(0.5))
    corpus = small_corpus(3)
    result = train(corpus, corpus, fast_cfg(patience=1, max_epochs=50))
    assert len(result.log_rows) == 2
    assert result.best_epoch == 1
    assert result.best_f1 == 0.5


def test_perfect_dev_f1_stops_immediately(monkeypatch):
    monkeypatch.setattr(trainer, "dev_f1", lambda model, sents: constant_scores(1.0))
    corpus = small_corpus(3)
    result = train(corpus, corpus, fast_cfg(patience=5, max_epochs=50))
    assert len(result.log_rows) == 1
    assert result.best_f1 == 1.0


def test_best_checkpoint_is_restored(monkeypatch):
    seen = []
    scores = iter([0.8, 0.2, 0.1])

    def fake(model, sents):
        seen.append({p.name: p.data.copy() for p in model.parameters()})
        return constant_scores(next(scores))

    monkeypatch.setattr(trainer, "dev_f1", fake)
    corpus = small_corpus(3)
    result = train(corpus, corpus, fast_cfg(patience=2, max_epochs=50))
    assert result.best_epoch == 1
    assert len(result.log_rows) == 3
    final = {p.name: p.data for p in result.model.parameters()}
    for name, arr in seen[0].items():
        assert np.array_equal(final[name], arr), name
    assert any(not np.array_equal(seen[2][name], seen[0][name]) for name in final)


def test_log_rows_track_running_best(monkeypatch):
    scores = iter([0.4, 0.6, 0.5])
    monkeypatch.setattr(trainer, "dev_f1",
                        lambda model, sents: constant_scores(next(scores)))
    corpus = small_corpus(3)
    result = train(corpus, corpus, fast_cfg(patience=1, max_epochs=50))
    assert [r["best_so_far"] for r in result.log_rows] == [0.4, 0.6, 0.6]
    assert result.best_epoch == 2


def test_log_csv_format():
    rows = [{"epoch": 1, "train_loss": 2.5, "dev_P": 0.25, "dev_R": 0.5,
             "dev_F1": 1 / 3, "best_so_far": 1 / 3}]
    text = format_log_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "epoch,train_loss,dev_P,dev_R,dev_F1,best_so_far"
    assert lines[1] == "1,2.500000,0.250000,0.500000,0.333333,0.333333"
    assert text.endswith("\n")


# --- whole-model gradient check ---


def test_gradient_check_passes_at_toy_size():
    report = gradient_check(tiny_config(n_head=2, gcn_blocks=2, dense_sublayers=2))
    assert report.max_rel_error < 1e-4
    assert report.n_checked > 0
    assert report.worst_param is not None
