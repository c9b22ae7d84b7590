import numpy as np
import pytest

from leadkd.errors import InvalidInputError, InvalidParameterError
from leadkd.retrieval import Qrels, RunRecord, evaluate_run, map_at_k, mrr_at_k, ndcg_at_k, recall_at_k

NDCG_1_4 = (1 + 1 / np.log2(5)) / (1 + 1 / np.log2(3))


def make_run(rankings):
    return {qid: [RunRecord(qid, pid, rank, -float(rank)) for rank, pid in enumerate(pids, start=1)]
            for qid, pids in rankings.items()}


@pytest.fixture
def qrels():
    return Qrels({('q1', 'a'): 1, ('q2', 'c'): 1, ('q3', 'a'): 1, ('q3', 'd'): 1, ('q4', 'x'): 1,
                  ('q5', 'g'): 1, ('q5', 'h'): 1, ('q6', 'b'): 0})


@pytest.fixture
def run():
    # q4 retrieved nothing
    return make_run({
        'q1': ['a', 'b', 'c'],
        'q2': ['a', 'b', 'c'],
        'q3': ['a', 'b', 'c', 'd'],
        'q5': ['f', 'g'],
        'q6': ['b'],
    })


def test_single_query_examples():
    qrels = Qrels({('q', 'p'): 1})
    assert mrr_at_k(make_run({'q': ['p', 'x']}), qrels) == 1.0
    assert ndcg_at_k(make_run({'q': ['p', 'x']}), qrels) == 1.0
    assert mrr_at_k(make_run({'q': ['x', 'y', 'p']}), qrels) == pytest.approx(1 / 3)
    assert mrr_at_k(make_run({'q': ['x', 'y', 'p']}), qrels, k=2) == 0.0


def test_two_relevant_passages():
    qrels = Qrels({('q', 'a'): 1, ('q', 'd'): 1})
    run = make_run({'q': ['a', 'b', 'c', 'd']})
    assert map_at_k(run, qrels) == pytest.approx(0.75)
    assert ndcg_at_k(run, qrels) == pytest.approx(NDCG_1_4)
    assert recall_at_k(run, qrels, k=2) == 0.5


def test_mrr(run, qrels):
    assert mrr_at_k(run, qrels, 10) == pytest.approx((1 + 1 / 3 + 1 + 0 + 0.5) / 5)


def test_recall(run, qrels):
    assert recall_at_k(run, qrels, 10) == pytest.approx((1 + 1 + 1 + 0 + 0.5) / 5)
    assert recall_at_k(run, qrels, 1) == pytest.approx((1 + 0 + 0.5 + 0 + 0) / 5)


def test_map(run, qrels):
    assert map_at_k(run, qrels, 10) == pytest.approx((1 + 1 / 3 + 0.75 + 0 + 0.25) / 5)
    assert map_at_k(run, qrels, 3) == pytest.approx((1 + 1 / 3 + 0.5 + 0 + 0.25) / 5)


def test_ndcg(run, qrels):
    q5 = (1 / np.log2(3)) / (1 + 1 / np.log2(3))
    assert ndcg_at_k(run, qrels, 10) == pytest.approx((1 + 0.5 + NDCG_1_4 + 0 + q5) / 5)


def test_graded_ndcg():
    qrels = Qrels({('q', 'a'): 2, ('q', 'b'): 1})
    ideal = 3 + 1 / np.log2(3)
    assert ndcg_at_k(make_run({'q': ['b', 'a']}), qrels) == pytest.approx((1 + 3 / np.log2(3)) / ideal)


def test_metrics_stay_in_unit_interval(rng):
    for _ in range(50):
        pids = ['p%i' % i for i in range(20)]
        qrels = Qrels({('q', p): int(rng.integers(0, 3)) for p in pids})
        qrels.add('q', 'p0', 1)
        run = make_run({'q': list(rng.permutation(pids))})
        for metric in (mrr_at_k, recall_at_k, map_at_k, ndcg_at_k):
            assert 0.0 <= metric(run, qrels, 10) <= 1.0 + 1e-12


def test_invalid_cutoff(run, qrels):
    for metric in (mrr_at_k, recall_at_k, map_at_k, ndcg_at_k):
        with pytest.raises(InvalidParameterError):
            metric(run, qrels, 0)


def test_nothing_to_evaluate(run):
    with pytest.raises(InvalidInputError):
        mrr_at_k(run, Qrels({('q6', 'b'): 0}))


def test_evaluate_run(run, qrels):
    out = evaluate_run(run, qrels, ks=[10, 100])
    assert list(out) == ['MRR@10', 'nDCG@10', 'MAP@10', 'R@10', 'MAP@100', 'R@100']
    assert out['MRR@10'] == mrr_at_k(run, qrels, 10)
