# Copyright 2026 The leadkd developers

"""TREC qrels and run files."""

from collections import OrderedDict
from dataclasses import dataclass

from ..errors import FormatError, InvalidInputError


@dataclass(frozen=True)
class RunRecord:
    """One ranked passage of one query."""

    query_id: str
    passage_id: str
    rank: int
    score: float


class Qrels:
    """
    Relevance judgements ``(query_id, passage_id) -> grade``.

    Unjudged pairs have grade 0.
    """

    def __init__(self, judgements=None):
        self._grades = OrderedDict()
        for (qid, pid), grade in (judgements or {}).items():
            self.add(qid, pid, grade)

    def add(self, query_id, passage_id, grade):
        grade = int(grade)
        if grade < 0:
            raise InvalidInputError('relevance grades must be non-negative, got %i for (%s, %s)'
                                    % (grade, query_id, passage_id))
        self._grades.setdefault(str(query_id), OrderedDict())[str(passage_id)] = grade

    def grade(self, query_id, passage_id):
        return self._grades.get(query_id, {}).get(passage_id, 0)

    def judged(self, query_id):
        """``passage_id -> grade`` of every judged passage of a query."""
        return dict(self._grades.get(query_id, {}))

    def relevant(self, query_id):
        """Passage ids with a positive grade."""
        return [pid for pid, g in self._grades.get(query_id, {}).items() if g > 0]

    @property
    def query_ids(self):
        return list(self._grades)

    def restrict(self, query_ids):
        """Judgements of the given queries only."""
        out = Qrels()
        for qid in query_ids:
            for pid, g in self._grades.get(qid, {}).items():
                out.add(qid, pid, g)
        return out

    def items(self):
        for qid, grades in self._grades.items():
            for pid, g in grades.items():
                yield (qid, pid), g

    def __len__(self):
        return sum(len(g) for g in self._grades.values())

    def __eq__(self, other):
        return isinstance(other, Qrels) and dict(self.items()) == dict(other.items())

    def __contains__(self, key):
        qid, pid = key
        return pid in self._grades.get(qid, {})


def read_qrels(path):
    """
    Read ``qid 0 pid grade`` lines.

    Raises
    ------
    FormatError
        On a line without exactly four fields or with a non-integer or negative grade.
    """
    qrels = Qrels()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise FormatError(path, lineno, 'expected "qid 0 pid grade", got %i fields' % len(fields))
            try:
                grade = int(fields[3])
            except ValueError:
                raise FormatError(path, lineno, 'grade %r is not an integer' % fields[3])
            if grade < 0:
                raise FormatError(path, lineno, 'negative grade %i' % grade)
            qrels.add(fields[0], fields[2], grade)
    return qrels


def write_qrels(qrels, path):
    with open(path, 'w') as fh:
        for (qid, pid), grade in qrels.items():
            fh.write('%s 0 %s %i\n' % (qid, pid, grade))


def write_run(run, path, tag='leadkd'):
    """
    Write ``qid Q0 pid rank score tag`` lines.

    Parameters
    ----------
    run : dict[str, list[RunRecord]]
        Records of each query in rank order.
    """
    with open(path, 'w') as fh:
        for qid, records in run.items():
            for r in records:
                fh.write('%s Q0 %s %i %r %s\n' % (qid, r.passage_id, r.rank, float(r.score), tag))


def read_run(path):
    """
    Read a run file and validate its ranking.

    Within each query the ranks must be exactly 1..k in the order given by descending score, ties by ascending
    passage id.

    Returns
    -------
    dict[str, list[RunRecord]]

    Raises
    ------
    FormatError
        On a malformed line or ranks that disagree with the scores.
    """
    run = OrderedDict()
    lines = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise FormatError(path, lineno, 'expected "qid Q0 pid rank score tag", got %i fields' % len(fields))
            try:
                record = RunRecord(fields[0], fields[2], int(fields[3]), float(fields[4]))
            except ValueError as e:
                raise FormatError(path, lineno, str(e))
            if record.rank < 1:
                raise FormatError(path, lineno, 'rank must be positive, got %i' % record.rank)
            run.setdefault(record.query_id, []).append(record)
            lines[(record.query_id, record.rank, record.passage_id)] = lineno

    for qid, records in run.items():
        derived = sorted(records, key=lambda r: (-r.score, r.passage_id))
        for expected, r in enumerate(derived, start=1):
            if r.rank != expected:
                raise FormatError(path, lines[(qid, r.rank, r.passage_id)],
                                  'rank %i of %s/%s disagrees with its score (expected %i)'
                                  % (r.rank, qid, r.passage_id, expected))
        run[qid] = derived
    return run


def ranked_ids(entries):
    """Passage ids of a ranked list of RunRecords, (id, score) pairs or plain ids."""
    out = []
    for e in entries:
        if isinstance(e, RunRecord):
            out.append(e.passage_id)
        elif isinstance(e, tuple):
            out.append(e[0])
        else:
            out.append(e)
    return out
