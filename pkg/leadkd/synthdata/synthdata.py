# Copyright 2026 The leadkd developers

"""
Synthetic retrieval corpora with known relevance.

Every topic owns a disjoint range of the content vocabulary. A topic's queries and passages draw each token from that
range, except for a ``noise_rate`` share drawn from the whole content vocabulary, and a query is relevant (grade 1)
to exactly the passages of its topic.
"""

import logging
import os
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..distill import TrainExample
from ..errors import FormatError, InvalidInputError, InvalidParameterError, LeadWarning
from ..model import FIRST_CONTENT_ID, TokenSequence
from ..retrieval import Qrels, read_qrels, write_qrels
from ..util import make_rng

logger = logging.getLogger(__name__)

SOURCES = ('random', 'mined')


@dataclass(frozen=True)
class CorpusSpec:
    """
    Shape of a synthetic corpus.

    Attributes
    ----------
    num_topics, passages_per_topic : int
    queries_per_topic : float
        Average queries per topic. The corpus holds ``round(num_topics * queries_per_topic)`` queries, dealt to the
        topics in contiguous blocks.
    vocab_size : int
        Including the reserved ids below ``FIRST_CONTENT_ID``.
    query_len, passage_len : int
    noise_rate : float
        Share of tokens drawn outside the topic range, in [0, 1).
    seed : int
    eval_every : int
        Every ``eval_every``-th generated query is held out for evaluation.
    """

    num_topics: int = 20
    passages_per_topic: int = 100
    queries_per_topic: float = 12.5
    vocab_size: int = 512
    query_len: int = 8
    passage_len: int = 24
    noise_rate: float = 0.1
    seed: int = 0
    eval_every: int = 5

    def __post_init__(self):
        for name in ('num_topics', 'passages_per_topic', 'vocab_size', 'query_len', 'passage_len', 'eval_every'):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError('%s must be positive, got %r' % (name, getattr(self, name)))
        if self.num_queries < 1:
            raise InvalidParameterError('queries_per_topic must give at least one query, got %r'
                                        % self.queries_per_topic)
        if not 0 <= self.noise_rate < 1:
            raise InvalidParameterError('noise_rate must lie in [0, 1), got %r' % self.noise_rate)

    @property
    def num_queries(self):
        return int(round(self.num_topics * self.queries_per_topic))

    def topic_ranges(self):
        """``[low, high)`` token range of every topic."""
        width = (self.vocab_size - FIRST_CONTENT_ID) // self.num_topics
        if width < 1:
            raise InvalidParameterError('a vocabulary of %i cannot hold %i disjoint topic ranges'
                                        % (self.vocab_size, self.num_topics))
        return [(FIRST_CONTENT_ID + t * width, FIRST_CONTENT_ID + (t + 1) * width) for t in range(self.num_topics)]


@dataclass
class SynthCorpus:
    """
    Passages, queries and relevance of a synthetic corpus.

    Attributes
    ----------
    passages : OrderedDict[str, TokenSequence]
    queries : OrderedDict[str, TokenSequence]
    qrels : Qrels
    train_query_ids, eval_query_ids : list[str]
    topics : dict[str, int]
        Topic of every passage and query id (empty for corpora read from disk).
    spec : CorpusSpec or None
    """

    passages: OrderedDict
    queries: OrderedDict
    qrels: Qrels
    train_query_ids: list
    eval_query_ids: list
    topics: dict = field(default_factory=dict)
    spec: CorpusSpec = None

    @property
    def train_queries(self):
        return OrderedDict((q, self.queries[q]) for q in self.train_query_ids)

    @property
    def eval_queries(self):
        return OrderedDict((q, self.queries[q]) for q in self.eval_query_ids)

    def summary(self):
        return '%i passages, %i train / %i eval queries, %i qrels' % (
            len(self.passages), len(self.train_query_ids), len(self.eval_query_ids), len(self.qrels))


def _sample_tokens(rng, length, low, high, spec):
    topical = rng.integers(low, high, size=length)
    noise = rng.integers(FIRST_CONTENT_ID, spec.vocab_size, size=length)
    return TokenSequence(tuple(np.where(rng.random(length) < spec.noise_rate, noise, topical).tolist()))


def generate(spec=None):
    """
    Build a deterministic corpus from ``spec``.

    Passage ids are ``p00000, p00001, ...`` and query ids ``q0000, ...``, numbered topic by topic.

    Raises
    ------
    InvalidParameterError
        If the vocabulary cannot hold disjoint topic ranges.
    """
    spec = CorpusSpec() if spec is None else spec
    ranges = spec.topic_ranges()
    rng = make_rng(spec.seed, stream=0)
    passages, queries, topics = OrderedDict(), OrderedDict(), {}
    qrels = Qrels()
    by_topic = [[] for _ in ranges]
    for t, (low, high) in enumerate(ranges):
        for _ in range(spec.passages_per_topic):
            pid = 'p%05d' % len(passages)
            passages[pid] = _sample_tokens(rng, spec.passage_len, low, high, spec)
            topics[pid] = t
            by_topic[t].append(pid)
    train, held_out = [], []
    for i in range(spec.num_queries):
        t = i * spec.num_topics // spec.num_queries
        low, high = ranges[t]
        qid = 'q%04d' % len(queries)
        queries[qid] = _sample_tokens(rng, spec.query_len, low, high, spec)
        topics[qid] = t
        (held_out if len(queries) % spec.eval_every == 0 else train).append(qid)
        for pid in by_topic[t]:
            qrels.add(qid, pid, 1)
    corpus = SynthCorpus(passages, queries, qrels, train, held_out, topics, spec)
    logger.info('synthdata: generated %s.', corpus.summary())
    return corpus


# batching

def _query_stream(query_ids, rng, epochs):
    epoch = 0
    while epochs is None or epoch < epochs:
        for i in rng.permutation(len(query_ids)):
            yield query_ids[i]
        epoch += 1


class _ExampleSampler:

    def __init__(self, corpus, negative_size, source, mined, rng):
        self.corpus = corpus
        self.negative_size = negative_size
        self.source = source
        self.mined = mined
        self.rng = rng
        self._relevant = {}

    def relevant(self, qid):
        if qid not in self._relevant:
            self._relevant[qid] = set(self.corpus.qrels.relevant(qid))
        return self._relevant[qid]

    def candidates(self, qid, exclude):
        if self.source == 'mined':
            if qid not in self.mined:
                raise InvalidInputError('no mined negatives for query %s' % qid)
            pool = self.mined[qid]
        else:
            pool = self.corpus.passages
        return [pid for pid in pool if pid not in exclude]

    def example(self, qid, batch):
        """Example of ``qid`` compatible with ``batch`` (None when impossible); ``batch=None`` skips the check."""
        relevant = self.relevant(qid)
        if not relevant:
            raise InvalidInputError('query %s has no relevant passage' % qid)
        exclude = set(relevant)
        positives = sorted(relevant)
        if batch is not None:
            others = set().union(*(self.relevant(ex.query_id) for ex in batch))
            in_batch = {pid for ex in batch for pid in ex.passage_ids}
            if relevant & in_batch:
                return None
            positives = [pid for pid in positives if pid not in others]
            if not positives:
                return None
            exclude |= others
        positive = positives[self.rng.integers(len(positives))]
        candidates = self.candidates(qid, exclude)
        if not candidates:
            if batch:
                return None
            raise InvalidInputError('no negative candidates for query %s' % qid)
        replace = len(candidates) < self.negative_size
        if replace:
            warnings.warn('query %s has %i negative candidates for %i slots; sampling with replacement'
                          % (qid, len(candidates), self.negative_size), LeadWarning)
        chosen = self.rng.choice(len(candidates), size=self.negative_size, replace=replace)
        negatives = [candidates[i] for i in chosen]
        passages = self.corpus.passages
        return TrainExample(self.corpus.queries[qid], [passages[positive]], [passages[p] for p in negatives],
                            query_id=qid, passage_ids=tuple([positive] + negatives))


def make_batches(corpus, negative_size, batch_size, source='random', mined=None, in_batch=False, seed=0,
                 query_ids=None, epochs=None):
    """
    Stream of training batches.

    Each example holds one positive and ``negative_size`` negatives drawn without replacement from ``source``,
    never from the query's relevant passages. Query order is reshuffled every epoch.

    Parameters
    ----------
    corpus : SynthCorpus
    negative_size, batch_size : int
    source : str
        ``random`` (any non-relevant passage) or ``mined`` (the query's list in ``mined``).
    mined : dict[str, list[str]] or None
    in_batch : bool
        Compose batches so that no passage of one example is relevant to another example's query, keeping
        passages shared across the batch valid negatives.
    seed : int
    query_ids : list[str] or None
        Queries to draw from; the training split by default.
    epochs : int or None
        Stop after this many passes (endless when None); the last batch may be short.

    Yields
    ------
    list[TrainExample]

    Warns
    -----
    LeadWarning
        When a query has fewer candidates than ``negative_size``; negatives are then drawn with replacement.
    """
    if int(negative_size) < 1 or int(batch_size) < 1:
        raise InvalidParameterError('negative_size and batch_size must be positive, got %r and %r'
                                    % (negative_size, batch_size))
    if source not in SOURCES:
        raise InvalidParameterError('unknown negative source %r; expected one of %s' % (source, SOURCES))
    if source == 'mined' and mined is None:
        raise InvalidParameterError('the mined source needs mined negative lists')
    query_ids = list(corpus.train_query_ids if query_ids is None else query_ids)
    if not query_ids:
        raise InvalidInputError('no queries to batch')
    rng = make_rng(seed, stream=2)
    sampler = _ExampleSampler(corpus, int(negative_size), source, mined, rng)
    stream = _query_stream(query_ids, rng, epochs)

    if not in_batch:
        batch = []
        for qid in stream:
            batch.append(sampler.example(qid, None))
            if len(batch) == batch_size:
                yield batch
                batch = []
        if batch:
            yield batch
        return

    pending = []
    exhausted = False
    while True:
        batch, rest = [], []
        for qid in pending:
            ex = sampler.example(qid, batch) if len(batch) < batch_size else None
            if ex is None:
                rest.append(qid)
            else:
                batch.append(ex)
        pending = rest
        misses = 0
        while len(batch) < batch_size and not exhausted and misses < len(query_ids):
            try:
                qid = next(stream)
            except StopIteration:
                exhausted = True
                break
            ex = sampler.example(qid, batch)
            if ex is None:
                pending.append(qid)
                misses += 1
            else:
                batch.append(ex)
        if not batch:
            return
        yield batch


# serialisation

def write_sequences(sequences, path):
    with open(path, 'w') as fh:
        for sid, seq in sequences.items():
            fh.write('%s\t%s\n' % (sid, ' '.join(str(i) for i in seq)))


def read_sequences(path):
    """
    Read ``id<TAB>space-separated token ids`` lines.

    Raises
    ------
    FormatError
        On a line without a tab, without tokens or with a non-integer token.
    """
    out = OrderedDict()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip('\n')
            if not line.strip():
                continue
            sid, tab, tokens = line.partition('\t')
            if not tab or not tokens.split():
                raise FormatError(path, lineno, 'expected "id<TAB>token ids"')
            try:
                out[sid] = TokenSequence(tuple(int(t) for t in tokens.split()))
            except (ValueError, InvalidInputError) as e:
                raise FormatError(path, lineno, str(e))
    return out


CORPUS_FILES = {
    'passages': 'passages.tsv',
    'train': 'train_queries.tsv',
    'eval': 'eval_queries.tsv',
    'qrels': 'qrels.txt',
}


def write_corpus(corpus, directory):
    """Write passages, both query splits and the qrels into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_sequences(corpus.passages, os.path.join(directory, CORPUS_FILES['passages']))
    write_sequences(corpus.train_queries, os.path.join(directory, CORPUS_FILES['train']))
    write_sequences(corpus.eval_queries, os.path.join(directory, CORPUS_FILES['eval']))
    write_qrels(corpus.qrels, os.path.join(directory, CORPUS_FILES['qrels']))


def read_corpus(directory):
    passages = read_sequences(os.path.join(directory, CORPUS_FILES['passages']))
    train = read_sequences(os.path.join(directory, CORPUS_FILES['train']))
    held_out = read_sequences(os.path.join(directory, CORPUS_FILES['eval']))
    qrels = read_qrels(os.path.join(directory, CORPUS_FILES['qrels']))
    queries = OrderedDict(sorted(list(train.items()) + list(held_out.items())))
    return SynthCorpus(passages, queries, qrels, list(train), list(held_out))
