import numpy as np
import pytest

from leadkd import numcore as nc
from leadkd.errors import ConfigurationError, InvalidInputError, InvalidParameterError
from leadkd.model import EncoderStack, RetrievalModel, TokenSequence, encode_all_layers, pad_batch
from leadkd.model import score_cb, score_ce, score_de, layer_score

Q = TokenSequence((5, 6, 7))
P = TokenSequence((8, 9, 10, 11))


class TestEncoderStack:

    def test_one_matrix_per_layer(self):
        stack = EncoderStack(2, hidden_dim=8, vocab_size=20, max_len=10, rng=np.random.default_rng(0))
        outputs = encode_all_layers(stack, TokenSequence((3, 4, 5, 6, 7)))
        assert [o.shape for o in outputs] == [(5, 8), (5, 8)]

    def test_deterministic(self):
        stack = EncoderStack(2, hidden_dim=8, vocab_size=20, max_len=10, rng=np.random.default_rng(0))
        a = stack.encode_all_layers((3, 4, 5))
        b = stack.encode_all_layers((3, 4, 5))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.values, y.values)

    def test_earlier_layers_ignore_later_blocks(self):
        stack = EncoderStack(2, hidden_dim=8, vocab_size=20, max_len=10, rng=np.random.default_rng(0))
        before = stack.encode_all_layers((3, 4, 5))
        # layer-normed rows sum to zero, so a constant shift of w1 would cancel
        w1 = stack.params['block2.ffn.w1']
        w1.values += np.random.default_rng(1).normal(size=w1.shape)
        after = stack.encode_all_layers((3, 4, 5))
        np.testing.assert_array_equal(before[0].values, after[0].values)
        assert not np.allclose(before[1].values, after[1].values)

    def test_padding_does_not_leak(self):
        stack = EncoderStack(1, hidden_dim=8, vocab_size=20, max_len=10, rng=np.random.default_rng(0))
        alone = stack.encode_batch(np.array([[3, 4, 5]]))[0].values[0]
        ids, mask = pad_batch([(3, 4, 5), (6, 7, 8, 9, 10)])
        padded = stack.encode_batch(ids, mask)[0].values[0, :3]
        np.testing.assert_allclose(alone, padded, atol=1e-10)

    def test_too_long_and_out_of_vocabulary(self):
        stack = EncoderStack(1, hidden_dim=8, vocab_size=20, max_len=4)
        with pytest.raises(InvalidInputError):
            stack.encode_all_layers((3, 4, 5, 6, 7))
        with pytest.raises(InvalidInputError):
            stack.encode_all_layers((3, 25))

    def test_empty_sequence(self):
        with pytest.raises(InvalidInputError):
            TokenSequence(())


class TestScores:

    def test_de(self):
        assert score_de([1.0, 0.0], [0.0, 1.0]).item() == 0.0
        assert score_de([1.0, 2.0], [3.0, 4.0]).item() == 11.0
        assert score_de([0.6, 0.8], [0.6, 0.8]).item() == pytest.approx(1.0)
        with pytest.raises(InvalidInputError):
            score_de([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_cb(self):
        assert score_cb([[1.0, 0.0], [0.0, 1.0]], [[2.0, 0.0], [0.0, 3.0]]).item() == 5.0
        assert score_cb([[1.0, 2.0]], [[3.0, 4.0]]).item() == score_de([1.0, 2.0], [3.0, 4.0]).item()
        with pytest.raises(InvalidInputError):
            score_cb(np.zeros((0, 2)), [[1.0, 0.0]])

    def test_cb_ignores_duplicate_passage_tokens(self, rng):
        q, p = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        assert score_cb(q, np.vstack([p, p[2:3]])).item() == pytest.approx(score_cb(q, p).item(), abs=1e-12)

    def test_cb_masks(self):
        q = [[1.0, 0.0], [0.0, 1.0]]
        p = [[2.0, 0.0], [0.0, 3.0], [9.0, 9.0]]
        masked = score_cb(q, p, q_mask=np.array([True, False]), p_mask=np.array([True, True, False]))
        assert masked.item() == 2.0

    def test_ce(self):
        assert score_ce([0.3, -2.0], [0.0, 0.0]).item() == 0.0
        assert score_ce([0.4, 9.0], [1.0, 0.0]).item() == pytest.approx(0.4)
        with pytest.raises(InvalidInputError):
            score_ce([0.4, 9.0, 1.0], [1.0, 0.0])


class TestRetrievalModel:

    @pytest.mark.parametrize('variant', ['DE', 'CB', 'CE'])
    def test_top_layer_is_the_response(self, make_model, variant):
        model = make_model(variant, 2)
        top = model.pool_scores([Q], [[P]], layers=[2])[2].values[0, 0]
        assert model.score(Q, P) == top
        assert layer_score(model, 2, Q, P) == top

    def test_layers_differ(self, make_model):
        model = make_model('DE', 2)
        assert model.layer_score(1, Q, P) != model.layer_score(2, Q, P)

    def test_ce_scores_every_layer_in_one_pass(self, make_model):
        model = make_model('CE', 2)
        scores = model.pool_scores([Q], [[P]])
        assert sorted(scores) == [1, 2]
        assert scores[1].values[0, 0] != scores[2].values[0, 0]

    def test_ce_order_matters(self, make_model):
        model = make_model('CE', 2)
        assert model.score(Q, P) != model.score(TokenSequence(P.ids[:3]), TokenSequence(Q.ids + (12,)))

    def test_layer_out_of_range(self, make_model):
        model = make_model('DE', 2)
        with pytest.raises(InvalidInputError):
            model.layer_score(3, Q, P)
        with pytest.raises(InvalidInputError):
            model.layer_score(0, Q, P)

    def test_sequence_limits(self, make_model):
        model = make_model('DE', 1)
        with pytest.raises(InvalidInputError):
            model.score(TokenSequence(tuple(range(3, 10))), P)
        with pytest.raises(InvalidInputError):
            model.score(Q, TokenSequence(tuple(range(3, 12))))

    def test_unknown_variant(self):
        with pytest.raises(InvalidParameterError):
            RetrievalModel('XX', 2)

    def test_ce_projection_keeps_width(self, make_model):
        with pytest.raises(InvalidParameterError):
            make_model('CE', 2, projection_dim=4)
        assert make_model('CE', 2, projection_dim=8).effective_layers == 3

    def test_projection_is_an_extra_layer(self, make_model):
        model = make_model('DE', 2, projection_dim=4)
        assert model.effective_layers == 3
        assert model.output_dim == 4
        assert model.embed_passages([P]).shape == (1, 4)
        assert model.score(Q, P) == model.layer_score(3, Q, P)

    def test_pool_scores_shapes(self, make_model, rng, make_examples):
        model = make_model('CB', 2)
        examples = make_examples(rng, count=2, negatives=2)
        queries, pools = [ex.query for ex in examples], [ex.pool for ex in examples]
        own = model.pool_scores(queries, pools)
        shared = model.pool_scores(queries, pools, in_batch=True)
        assert own[1].shape == (2, 3)
        assert shared[1].shape == (2, 6)
        np.testing.assert_allclose(shared[2].values[:, :3], own[2].values, atol=1e-10)

    def test_pool_scores_match_pairwise_scores(self, make_model, rng, make_examples):
        model = make_model('CB', 2)
        ex = make_examples(rng, count=1, negatives=3)[0]
        pooled = model.pool_scores([ex.query], [ex.pool], layers=[2])[2].values[0]
        single = [model.score(ex.query, p) for p in ex.pool]
        np.testing.assert_allclose(pooled, single, atol=1e-10)

    def test_unequal_pools(self, make_model):
        model = make_model('DE', 1)
        with pytest.raises(InvalidInputError):
            model.pool_scores([Q, Q], [[P], [P, P]])

    def test_de_score_is_embedding_inner_product(self, make_model):
        model = make_model('DE', 2)
        expected = model.embed_queries([Q]) @ model.embed_passages([P]).T
        assert model.score(Q, P) == pytest.approx(float(expected[0, 0]), abs=1e-10)

    def test_cb_cls_only_scoring(self, make_model):
        model = make_model('CB', 2, cb_cls_only=True)
        expected = model.embed_queries([Q]) @ model.embed_passages([P]).T
        assert model.score(Q, P) == pytest.approx(float(expected[0, 0]), abs=1e-10)
        assert make_model('CB', 2).score(Q, P) != model.score(Q, P)

    def test_ce_has_no_embeddings(self, make_model):
        with pytest.raises(InvalidInputError):
            make_model('CE', 1).embed_queries([Q])

    def test_cb_gradient(self, make_model):
        model = make_model('CB', 2)
        params = model.parameters()
        scores = model.pool_scores([Q], [[P, TokenSequence((3, 4))]])[2]
        nc.tsum(nc.log_softmax(scores)).backward()
        assert any(np.any(p.grad != 0) for p in params if p.grad is not None)


class TestCheckpoints:

    @pytest.mark.parametrize('variant', ['DE', 'CB', 'CE'])
    def test_reload_scores_identically(self, make_model, tmp_path, variant):
        model = make_model(variant, 2)
        path = str(tmp_path / 'model.npz')
        model.save(path)
        loaded = RetrievalModel.load(path)
        assert loaded.header() == model.header()
        assert loaded.score(Q, P) == model.score(Q, P)

    def test_clone_is_independent(self, make_model):
        model = make_model('DE', 2)
        twin = model.clone()
        twin.parameters()[0].values += 1.0
        assert not np.array_equal(twin.parameters()[0].values, model.parameters()[0].values)

    def test_not_a_checkpoint(self, tmp_path):
        path = str(tmp_path / 'other.npz')
        np.savez(path, x=np.zeros(2))
        with pytest.raises(ConfigurationError):
            RetrievalModel.load(path)

    def test_mismatched_state(self, make_model):
        state = make_model('DE', 2).state_dict()
        with pytest.raises(ConfigurationError):
            make_model('DE', 1).load_state_dict(state)
