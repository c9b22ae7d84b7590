# Copyright 2026 The leadkd developers

"""
Ranked retrieval metrics over a run and its qrels.

Only queries with at least one relevant passage are evaluated; unjudged passages count as grade 0.
"""

from collections import OrderedDict

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError
from .trec import ranked_ids


def _check_k(k):
    if int(k) < 1:
        raise InvalidParameterError('cutoff k must be at least 1, got %r' % k)
    return int(k)


def _evaluated(run, qrels):
    qids = [qid for qid in qrels.query_ids if qrels.relevant(qid)]
    if not qids:
        raise InvalidInputError('no query with a relevant passage to evaluate')
    return [(qid, ranked_ids(run.get(qid, []))) for qid in qids]


def reciprocal_rank(ranking, relevant, k):
    for rank, pid in enumerate(ranking[:k], start=1):
        if pid in relevant:
            return 1.0 / rank
    return 0.0


def average_precision(ranking, relevant, k):
    hits = 0
    total = 0.0
    for rank, pid in enumerate(ranking[:k], start=1):
        if pid in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def dcg(grades):
    grades = np.asarray(grades, dtype=np.float64)
    discounts = np.log2(np.arange(2, len(grades) + 2))
    return float(np.sum((np.power(2.0, grades) - 1.0) / discounts))


def mrr_at_k(run, qrels, k=10):
    """Mean reciprocal rank of the first relevant passage within the top k (0 when none)."""
    k = _check_k(k)
    return float(np.mean([reciprocal_rank(r, set(qrels.relevant(q)), k) for q, r in _evaluated(run, qrels)]))


def recall_at_k(run, qrels, k=1000):
    """Mean fraction of a query's relevant passages found in the top k."""
    k = _check_k(k)
    values = []
    for qid, ranking in _evaluated(run, qrels):
        relevant = set(qrels.relevant(qid))
        values.append(len(relevant.intersection(ranking[:k])) / len(relevant))
    return float(np.mean(values))


def map_at_k(run, qrels, k=1000):
    """Mean average precision truncated at k, normalised by the number of relevant passages."""
    k = _check_k(k)
    return float(np.mean([average_precision(r, set(qrels.relevant(q)), k) for q, r in _evaluated(run, qrels)]))


def ndcg_at_k(run, qrels, k=10):
    """nDCG with gain ``2^grade - 1`` and ``log2(rank + 1)`` discount, normalised by the ideal ordering."""
    k = _check_k(k)
    values = []
    for qid, ranking in _evaluated(run, qrels):
        ideal = sorted(qrels.judged(qid).values(), reverse=True)[:k]
        values.append(dcg([qrels.grade(qid, pid) for pid in ranking[:k]]) / dcg(ideal))
    return float(np.mean(values))


def evaluate_run(run, qrels, ks=(1000,), mrr_depth=10, ndcg_depth=10):
    """
    Standard metric set of one run.

    Returns
    -------
    OrderedDict[str, float]
        ``MRR@10``, ``nDCG@10``, then ``MAP@k`` and ``R@k`` for every k.
    """
    out = OrderedDict()
    out['MRR@%i' % mrr_depth] = mrr_at_k(run, qrels, mrr_depth)
    out['nDCG@%i' % ndcg_depth] = ndcg_at_k(run, qrels, ndcg_depth)
    for k in ks:
        out['MAP@%i' % k] = map_at_k(run, qrels, k)
        out['R@%i' % k] = recall_at_k(run, qrels, k)
    return out
