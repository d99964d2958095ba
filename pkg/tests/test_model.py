import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import tiny_config, tiny_model, tiny_sentence
from sgner import tensor as T
from sgner.config import RunConfig
from sgner.corpus import AnnotatedSentence
from sgner.model import Model, build_model


class TestDimensions:
    def test_reference_span_widths(self):
        vocab = ["a", "b"]
        wide = build_model(RunConfig(d_h=400, d_f=20), ("X",), vocab)
        assert wide.d_span == 860
        wider = build_model(RunConfig(d_h=768, d_f=64), ("X",), vocab)
        assert wider.d_span == 1684
        plain = build_model(RunConfig(d_h=400, no_gcn=True), ("X",), vocab)
        assert plain.d_span == 820

    def test_bilstm_off_derives_width_from_inputs(self):
        cfg = tiny_config(bilstm=False, d_emb=6, n_head=2)
        m = build_model(cfg, ("X",), ["a"], d_ctx=4)
        assert m.d_h == 10
        assert m.encoder_width == 10 + cfg.d_f

    def test_head_count_must_divide_width(self):
        with pytest.raises(ValueError, match="n_head"):
            build_model(tiny_config(d_h=10, n_head=4), ("X",), ["a"])


class TestParameters:
    def test_names_are_unique_and_groups_partition(self, model):
        names = [p.name for p in model.parameters()]
        assert len(names) == len(set(names))
        enc = {p.name for p in model.encoder_parameters()}
        heads = {p.name for p in model.head_parameters()}
        assert enc | heads == set(names)
        assert not (enc & heads)
        assert any(n.startswith("gcn.") for n in enc)
        assert any(n.startswith("pair.") for n in heads)
        assert "span.width_table" in heads

    def test_same_seed_builds_identical_weights(self):
        a, b = tiny_model(), tiny_model()
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert pa.name == pb.name
            assert pa.data.tobytes() == pb.data.tobytes()

    def test_no_gcn_drops_gcn_parameters(self):
        m = tiny_model(no_gcn=True)
        assert not any(p.name.startswith("gcn.") for p in m.parameters())
        assert m.gcn is None

    def test_biases_start_at_zero_and_weights_do_not(self, model):
        by_name = {p.name: p for p in model.parameters()}
        assert_allclose(by_name["bilstm.fwd.b"].data, 0.0)
        assert np.abs(by_name["span.l0.w"].data).max() > 0


class TestForward:
    def test_span_forward_shapes(self, model, sentence):
        spans, mat, probs = model.span_forward(sentence)
        assert len(spans) == mat.shape[0] == probs.shape[0]
        assert mat.shape[1] == model.d_span
        assert probs.shape[1] == 1 + len(model.entity_types)
        assert_allclose(probs.data.sum(axis=1), np.ones(len(spans)), atol=1e-9)

    def test_pair_probs_shape(self, model, sentence):
        _, mat, _ = model.span_forward(sentence)
        probs = model.pair_probs(mat, [(0, 1), (2, 5)])
        assert probs.shape == (2, 3)

    def test_span_classes_put_none_first(self, model):
        assert model.span_classes[0] == "<none>"
        assert model.span_classes[1:] == ["Disorder", "Finding"]

    def test_vector_expectations_enforced(self, model, sentence):
        with_vectors = AnnotatedSentence(tokens=sentence.tokens,
                                         vectors=np.zeros((len(sentence), 3)))
        with pytest.raises(ValueError, match="expects none"):
            model.encode(with_vectors)
        m = build_model(tiny_config(), ("X",), ["a"], d_ctx=3)
        with pytest.raises(ValueError, match="expects precomputed"):
            m.encode(sentence)
        wrong = AnnotatedSentence(tokens=sentence.tokens, vectors=np.zeros((len(sentence), 2)))
        with pytest.raises(ValueError, match="width"):
            m.encode(wrong)

    def test_full_model_gradients(self, sentence):
        m = tiny_model(d_emb=3, d_h=4, d_f=2, mlp_hidden=5, max_span_width=3)

        def loss():
            spans, mat, probs = m.span_forward(sentence)
            gold = np.zeros(len(spans), dtype=int)
            span_loss = T.cross_entropy(probs, gold)
            pair_loss = T.cross_entropy(m.pair_probs(mat, [(0, 2), (1, 4)]), [0, 2])
            return T.add(span_loss, pair_loss)

        subset = [p for p in m.parameters()
                  if p.name in ("embed.table", "bilstm.bwd.wx", "gcn.merge",
                                "span.width_table", "span.l0.w", "pair.l1.b")]
        result = T.grad_check(loss, subset)
        assert result.max_rel_error < 1e-4


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path, model, sentence):
        path = tmp_path / "model.sgner"
        model.save(path)
        loaded = Model.load(path)
        assert loaded.cfg == model.cfg
        assert loaded.entity_types == model.entity_types
        assert loaded.vocab_words == model.vocab_words
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert a.name == b.name
            assert a.data.tobytes() == b.data.tobytes()
        assert model.encode(sentence).data.tobytes() == loaded.encode(sentence).data.tobytes()

    def test_pretrained_rows_are_injected(self):
        words = ["valve", "thickened"]
        matrix = np.arange(8.0).reshape(2, 4)
        m = build_model(tiny_config(d_emb=4, d_h=4, n_head=2), ("X",),
                        ["other", "thickened", "valve"], pretrained=(words, matrix))
        table = m.embedding
        assert_allclose(table.matrix.data[table.vocab["valve"]], matrix[0])
        assert_allclose(table.matrix.data[table.vocab["thickened"]], matrix[1])
        assert np.abs(table.matrix.data[table.vocab["other"]]).max() < 0.2
