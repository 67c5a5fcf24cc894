"""Embedding table and BiLSTM encoder behavior."""

import numpy as np
import pytest
from conftest import fixed_readout, zero_bilstm

import antnet.autodiff as ad
from antnet.autodiff import Value
from antnet.corpus import Vocab
from antnet.encoders import (
    BiLstmParams, EmbeddingTable, bilstm_encode, encode_answer, encode_question,
)


class TestEmbeddingTable:
    def test_lookup_rows(self):
        table = EmbeddingTable(np.arange(12.0).reshape(4, 3))
        out = table.lookup([2, 0])
        np.testing.assert_array_equal(out.data, [[6.0, 7.0, 8.0], [0.0, 1.0, 2.0]])

    def test_frozen_takes_no_gradient(self):
        table = EmbeddingTable.random(5, 3, rng=np.random.default_rng(0), frozen=True)
        before = table.value.data.copy()
        out = table.lookup([1, 1, 4])
        assert not out.requires_grad
        w = Value(np.ones((3, 2)), requires_grad=True)
        ad.sum_(ad.matmul(out, w)).backward()
        assert np.array_equal(table.value.grad, np.zeros_like(before))
        assert np.array_equal(table.value.data, before)

    def test_unfrozen_accumulates_repeated_rows(self):
        table = EmbeddingTable.random(5, 3, rng=np.random.default_rng(1), frozen=False)
        out = table.lookup([2, 2])
        ad.sum_(out).backward()
        np.testing.assert_allclose(table.value.grad[2], 2.0)
        np.testing.assert_allclose(table.value.grad[0], 0.0)

    def test_out_of_range_index(self):
        table = EmbeddingTable.random(4, 2)
        with pytest.raises(IndexError, match="out of range"):
            table.lookup([0, 4])

    def test_pretrained_loading(self, tmp_path):
        vocab = Vocab(["cat", "dog"])
        path = tmp_path / "vecs.txt"
        path.write_text("cat 1 2 3\nbird 9 9 9\n")
        table = EmbeddingTable.from_pretrained(path, vocab, emb_dim=3,
                                               rng=np.random.default_rng(2))
        np.testing.assert_array_equal(table.value.data[vocab.index("cat")], [1.0, 2.0, 3.0])
        # "bird" is out of vocabulary: ignored; "dog" keeps its random row
        assert np.abs(table.value.data[vocab.index("dog")]).max() <= 0.1

    def test_pretrained_dimension_mismatch(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("cat 1 2\n")
        with pytest.raises(ValueError, match="expected 3"):
            EmbeddingTable.from_pretrained(path, Vocab(["cat"]), emb_dim=3)


class TestBiLstm:
    def test_output_shape_tracks_length(self):
        rng = np.random.default_rng(3)
        params = BiLstmParams.init(in_dim=5, d=6, rng=rng)
        for n in (1, 4, 33):
            out = bilstm_encode(params, Value(rng.normal(size=(n, 5))))
            assert out.data.shape == (n, 6)

    def test_forget_bias_initialized_to_one(self):
        params = BiLstmParams.init(in_dim=3, d=8, rng=np.random.default_rng(4))
        h = 4
        for d in (params.fwd, params.bwd):
            np.testing.assert_array_equal(d.b.data[h:2 * h], np.ones(h))
            np.testing.assert_array_equal(d.b.data[:h], np.zeros(h))

    def test_zero_parameters_give_zero_states(self):
        """sigmoid(0) gates on a tanh(0) cell leave every state exactly 0."""
        params = zero_bilstm(BiLstmParams.init(in_dim=4, d=6, rng=np.random.default_rng(5)))
        out = bilstm_encode(params, Value(np.random.default_rng(6).normal(size=(5, 4))))
        assert np.array_equal(out.data, np.zeros((5, 6)))

    def test_odd_hidden_size_rejected(self):
        with pytest.raises(ValueError, match="even"):
            BiLstmParams.init(in_dim=3, d=5, rng=np.random.default_rng(0))

    def test_input_width_mismatch(self):
        params = BiLstmParams.init(in_dim=4, d=6, rng=np.random.default_rng(7))
        with pytest.raises(ad.ShapeError):
            bilstm_encode(params, Value(np.zeros((3, 5))))

    def test_palindromic_parameters_reverse_cleanly(self):
        """With backward weights equal to forward weights, encoding the
        reversed sequence reverses the output and swaps direction halves."""
        rng = np.random.default_rng(8)
        params = BiLstmParams.init(in_dim=4, d=6, rng=rng)
        for attr in ("w_x", "w_h", "b"):
            getattr(params.bwd, attr).data[...] = getattr(params.fwd, attr).data
        x = rng.normal(size=(3, 4))
        out = bilstm_encode(params, Value(x)).data
        out_rev = bilstm_encode(params, Value(x[::-1])).data
        h = 3
        swapped = np.concatenate([out[::-1, h:], out[::-1, :h]], axis=1)
        np.testing.assert_allclose(out_rev, swapped, atol=1e-12)


class TestQuestionAndAnswerEncoding:
    def _setup(self, seed=9, emb_dim=4, d=6, vocab=8):
        rng = np.random.default_rng(seed)
        table = EmbeddingTable.random(vocab, emb_dim, rng=rng)
        q_params = BiLstmParams.init(emb_dim + 1, d, rng)
        a_params = BiLstmParams.init(emb_dim, d, rng)
        return table, q_params, a_params, rng

    def test_single_word_question(self):
        table, q_params, _, _ = self._setup()
        out = encode_question(table.lookup([3]), np.zeros(1), q_params)
        assert out.data.shape == (1, 6)

    def test_tf_equals_forced_zero_indicator(self):
        table, q_params, _, _ = self._setup()
        idx = [1, 5, 2]
        a = encode_question(table.lookup(idx), np.zeros(3), q_params)
        b = encode_question(table.lookup(idx), np.array([0.0, 0.0, 0.0]), q_params)
        assert np.array_equal(a.data, b.data)

    def test_indicator_changes_encoding(self):
        table, q_params, _, _ = self._setup()
        idx = [1, 5, 2]
        a = encode_question(table.lookup(idx), np.zeros(3), q_params)
        b = encode_question(table.lookup(idx), np.array([0.0, 1.0, 0.0]), q_params)
        assert not np.array_equal(a.data, b.data)

    def test_indicator_length_mismatch(self):
        table, q_params, _, _ = self._setup()
        with pytest.raises(ad.ShapeError, match="indicator"):
            encode_question(table.lookup([1, 2]), np.zeros(3), q_params)

    def test_answer_encoder_distinct_from_question_encoder(self):
        table, q_params, a_params, _ = self._setup()
        assert q_params.in_dim == table.emb_dim + 1
        assert a_params.in_dim == table.emb_dim
        out = encode_answer(table.lookup([2, 4]), a_params)
        assert out.data.shape == (2, 6)

    def test_gradients_through_both_encoders(self):
        """Both encoders pass the finite-difference check at 1e-5."""
        rng = np.random.default_rng(10)
        table = EmbeddingTable.random(6, 3, rng=rng, frozen=False)
        q_params = BiLstmParams.init(4, 4, rng)
        a_params = BiLstmParams.init(3, 4, rng)
        params = {"emb": table.value}
        params.update(q_params.named("bilstm_q"))
        params.update(a_params.named("bilstm_a"))
        ind = np.array([0.0, 1.0, 0.0, 0.0, 1.0])

        def build():
            hq = encode_question(table.lookup([0, 2, 5, 3, 1]), ind, q_params)
            ha = encode_answer(table.lookup([1, 1, 4, 0, 5]), a_params)
            return ad.concat(hq, ha, axis=0)

        err = ad.finite_diff_check(fixed_readout(build, rng), params, epsilon=1e-4)
        assert err <= 1e-5
