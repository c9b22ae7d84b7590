# Copyright 2026 The leadkd developers

"""
Exact inner-product retrieval, reranking and hard-negative mining.

Every ranking in this module orders by descending score and breaks ties by ascending passage id, so runs and the
metrics computed from them are deterministic.
"""

import logging
import warnings
from collections import OrderedDict

import numpy as np
from tqdm import tqdm

from ..errors import FormatError, InvalidInputError, InvalidParameterError, LeadWarning, UnknownIdError
from ..functions import stable_argsort
from .metrics import evaluate_run
from .trec import RunRecord

logger = logging.getLogger(__name__)


class FlatIndex:
    """
    Brute-force inner-product index over passage embeddings.

    Attributes
    ----------
    ids : list[str]
    embeddings : np.ndarray, shape (len(ids), dim)
    """

    def __init__(self, ids, embeddings):
        ids = [str(i) for i in ids]
        embeddings = np.array(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[0] != len(ids):
            raise InvalidInputError('index needs one embedding row per id, got %i ids and shape %s'
                                    % (len(ids), embeddings.shape))
        if len(set(ids)) != len(ids):
            raise InvalidInputError('index ids must be unique')
        self.ids = ids
        self.embeddings = embeddings
        self._id_array = np.asarray(ids)
        self.embeddings.setflags(write=False)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def search(self, query_emb, k):
        """Top-k ``(id, score)`` pairs; the full ranking when k exceeds the index size."""
        if int(k) < 1:
            raise InvalidParameterError('k must be at least 1, got %r' % k)
        query_emb = np.asarray(query_emb, dtype=np.float64)
        if query_emb.shape != (self.dim,):
            raise InvalidInputError('query embedding of shape %s does not match index dimension %i'
                                    % (query_emb.shape, self.dim))
        if not len(self):
            return []
        scores = self.embeddings @ query_emb
        order = stable_argsort(scores, self._id_array)[:int(k)]
        return [(self.ids[i], float(scores[i])) for i in order]

    def save(self, path):
        """
        Write a text snapshot: a ``count dim`` header, then ``id<TAB>values`` per row in index order.
        """
        with open(path, 'w') as fh:
            fh.write('%i %i\n' % self.embeddings.shape)
            for pid, row in zip(self.ids, self.embeddings):
                fh.write('%s\t%s\n' % (pid, ' '.join(repr(float(x)) for x in row)))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            try:
                count, dim = int(header[0]), int(header[1])
            except (IndexError, ValueError):
                raise FormatError(path, 1, 'expected a "count dim" header')
            ids, rows = [], []
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                pid, _, values = line.rstrip('\n').partition('\t')
                try:
                    row = [float(x) for x in values.split()]
                except ValueError as e:
                    raise FormatError(path, lineno, str(e))
                if len(row) != dim:
                    raise FormatError(path, lineno, 'expected %i values, got %i' % (dim, len(row)))
                ids.append(pid)
                rows.append(row)
        if len(ids) != count:
            raise FormatError(path, 1, 'header announces %i rows, found %i' % (count, len(ids)))
        return cls(ids, np.asarray(rows, dtype=np.float64).reshape(count, dim))


def search_top_k(index, query_emb, k):
    """Exact top-k of ``index`` by inner product with ``query_emb``."""
    return index.search(query_emb, k)


def build_index(model, corpus, batch_size=256):
    """FlatIndex of the final CLS embeddings of every passage in ``corpus`` (id -> TokenSequence)."""
    ids = list(corpus)
    return FlatIndex(ids, model.embed_passages([corpus[pid] for pid in ids], batch_size=batch_size))


def retrieve(model, corpus, queries, k, index=None, progress=False):
    """
    Dense retrieval run of a DE model.

    Returns
    -------
    dict[str, list[RunRecord]]
    """
    if model.variant != 'DE':
        raise InvalidInputError('first-stage retrieval needs a dual encoder, got %s' % model.variant)
    index = build_index(model, corpus) if index is None else index
    qids = list(queries)
    embeddings = model.embed_queries([queries[q] for q in qids])
    run = OrderedDict()
    for qid, emb in tqdm(zip(qids, embeddings), total=len(qids), disable=not progress, desc='retrieve'):
        run[qid] = [RunRecord(qid, pid, rank, score)
                    for rank, (pid, score) in enumerate(index.search(emb, k), start=1)]
    return run


def mine_hard_negatives(model, corpus, queries, qrels, top_n, index=None, progress=False):
    """
    Top-ranked non-relevant passages of every query.

    Parameters
    ----------
    model : RetrievalModel
        A dual encoder.
    corpus : dict[str, TokenSequence]
    queries : dict[str, TokenSequence]
    qrels : Qrels
    top_n : int
        Negatives per query; relevant passages are skipped without counting against it.

    Returns
    -------
    dict[str, list[str]]
        Passage ids in rank order.

    Warns
    -----
    LeadWarning
        When fewer than ``top_n`` non-relevant passages exist for a query.
    """
    if int(top_n) < 1:
        raise InvalidParameterError('top_n must be at least 1, got %r' % top_n)
    if model.variant != 'DE':
        raise InvalidInputError('hard negatives are mined with a dual encoder, got %s' % model.variant)
    index = build_index(model, corpus) if index is None else index
    qids = list(queries)
    embeddings = model.embed_queries([queries[q] for q in qids])
    mined = OrderedDict()
    short = []
    for qid, emb in tqdm(zip(qids, embeddings), total=len(qids), disable=not progress, desc='mining'):
        relevant = set(qrels.relevant(qid))
        hits = index.search(emb, int(top_n) + len(relevant))
        mined[qid] = [pid for pid, _ in hits if pid not in relevant][:int(top_n)]
        if len(mined[qid]) < top_n:
            short.append(qid)
    if short:
        warnings.warn('%i queries have fewer than %i mined negatives (first: %s)' % (len(short), top_n, short[0]),
                      LeadWarning)
    logger.info('mine: %i negatives for %i queries.', sum(len(v) for v in mined.values()), len(mined))
    return mined


def write_negatives(mined, path):
    """One ``qid<TAB>pid pid ...`` line per query."""
    with open(path, 'w') as fh:
        for qid, pids in mined.items():
            fh.write('%s\t%s\n' % (qid, ' '.join(pids)))


def read_negatives(path):
    mined = OrderedDict()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip('\n')
            if not line.strip():
                continue
            qid, tab, pids = line.partition('\t')
            if not tab or not qid:
                raise FormatError(path, lineno, 'expected "qid<TAB>passage ids"')
            mined[qid] = pids.split()
    return mined


def rerank(model, query, candidate_ids, corpus, query_id='q', batch_size=64):
    """
    Rescore candidates with the model's final score and re-sort them.

    Raises
    ------
    UnknownIdError
        If a candidate id is not in ``corpus``.
    """
    candidate_ids = [str(c) for c in candidate_ids]
    for pid in candidate_ids:
        if pid not in corpus:
            raise UnknownIdError(pid)
    if not candidate_ids:
        return []
    scores = model.score_candidates(query, [corpus[pid] for pid in candidate_ids], batch_size=batch_size)
    order = stable_argsort(scores, np.asarray(candidate_ids))
    return [RunRecord(query_id, candidate_ids[i], rank, float(scores[i])) for rank, i in enumerate(order, start=1)]


def evaluate_model(model, corpus, queries, qrels, ks=(10,), retriever=None, rerank_depth=50, progress=False):
    """
    Retrieve or rerank the held-out queries and compute the metric set.

    A DE model retrieves from the whole corpus at depth ``max(ks)``. CB and CE models rerank the top
    ``rerank_depth`` of a first-stage DE ``retriever``; recall beyond that depth is inherited from it.

    Returns
    -------
    OrderedDict[str, float]
    dict[str, list[RunRecord]]
        The evaluated run.
    """
    depth = max(max(ks), 10)
    qrels = qrels.restrict(queries)
    if model.variant == 'DE':
        run = retrieve(model, corpus, queries, depth, progress=progress)
    else:
        if retriever is None:
            raise InvalidParameterError('a %s model needs a first-stage DE retriever to rerank' % model.variant)
        first = retrieve(retriever, corpus, queries, max(depth, rerank_depth), progress=progress)
        run = OrderedDict()
        for qid, records in tqdm(first.items(), disable=not progress, desc='rerank'):
            head = rerank(model, queries[qid], [r.passage_id for r in records[:rerank_depth]], corpus,
                          query_id=qid)
            # first-stage order continues below the lowest reranked score
            floor = head[-1].score if head else 0.0
            tail = [RunRecord(qid, r.passage_id, len(head) + j + 1, floor - 1.0 - j)
                    for j, r in enumerate(records[rerank_depth:])]
            run[qid] = head + tail
    return evaluate_run(run, qrels, ks=ks), run
