import numpy as np
import pytest

from leadkd.distill import TrainExample
from leadkd.model import RetrievalModel, TokenSequence
from leadkd.pipeline import ExperimentConfig
from leadkd.synthdata import CorpusSpec, generate

TINY_VOCAB = 43


def tiny_model(variant, layers, seed=0, projection_dim=None, cb_cls_only=False):
    return RetrievalModel(variant, layers, hidden_dim=8, vocab_size=TINY_VOCAB, max_query_len=6, max_passage_len=8,
                          projection_dim=projection_dim, cb_cls_only=cb_cls_only, ffn_dim=16, seed=seed)


def random_sequence(rng, length):
    return TokenSequence(tuple(rng.integers(3, TINY_VOCAB, size=length).tolist()))


def random_examples(rng, count=2, negatives=3):
    return [TrainExample(random_sequence(rng, 4), [random_sequence(rng, 6)],
                         [random_sequence(rng, int(rng.integers(3, 7))) for _ in range(negatives)])
            for _ in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def make_model():
    return tiny_model


@pytest.fixture
def make_examples():
    return random_examples


@pytest.fixture
def tiny_spec():
    # 4 topics of 10 token ids each
    return CorpusSpec(num_topics=4, passages_per_topic=10, queries_per_topic=5, vocab_size=TINY_VOCAB, query_len=4,
                      passage_len=6, noise_rate=0.0, seed=0, eval_every=5)


@pytest.fixture
def tiny_corpus(tiny_spec):
    return generate(tiny_spec)


@pytest.fixture
def tiny_config(tmp_path):
    return ExperimentConfig(work_dir=str(tmp_path / 'work'), num_topics=4, passages_per_topic=10,
                            queries_per_topic=5, vocab_size=TINY_VOCAB, query_len=4, passage_len=6, noise_rate=0.0,
                            hidden_dim=8, ffn_dim=16, max_query_len=6, max_passage_len=8, teacher_variant='CB',
                            teacher_layers=2, student_variant='DE', student_layers=1, K=1, lr=1e-3,
                            distill_steps=3, warmup_steps=3, batch_size=2, negative_size=2, mine_top_n=4,
                            eval_ks=[10], rerank_depth=10, seeds=[0], workers=1, chain=[('DE', 2), ('CB', 2)],
                            progress=False)
