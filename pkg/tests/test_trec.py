import pytest

from leadkd.errors import FormatError, InvalidInputError
from leadkd.retrieval import Qrels, RunRecord, ranked_ids, read_qrels, read_run, write_qrels, write_run


def test_qrels_line(tmp_path):
    path = tmp_path / 'qrels.txt'
    path.write_text('q1 0 p9 1\n\nq1 0 p2 0\nq2 0 p9 2\n')
    qrels = read_qrels(str(path))
    assert qrels.grade('q1', 'p9') == 1
    assert qrels.grade('q1', 'p3') == 0
    assert qrels.relevant('q1') == ['p9']
    assert qrels.judged('q1') == {'p9': 1, 'p2': 0}
    assert ('q2', 'p9') in qrels
    assert len(qrels) == 3


@pytest.mark.parametrize('line', ['q1 0 p9', 'q1 0 p9 x', 'q1 0 p9 -1', 'q1 0 p9 1 extra'])
def test_bad_qrels_line(tmp_path, line):
    path = tmp_path / 'qrels.txt'
    path.write_text('q0 0 p1 1\n' + line + '\n')
    with pytest.raises(FormatError) as info:
        read_qrels(str(path))
    assert info.value.lineno == 2


def test_qrels_file(tmp_path):
    qrels = Qrels({('q1', 'p1'): 1, ('q1', 'p2'): 0, ('q2', 'p3'): 3})
    write_qrels(qrels, str(tmp_path / 'qrels.txt'))
    assert read_qrels(str(tmp_path / 'qrels.txt')) == qrels


def test_negative_grade():
    with pytest.raises(InvalidInputError):
        Qrels().add('q', 'p', -1)


def test_restrict():
    qrels = Qrels({('q1', 'p1'): 1, ('q2', 'p2'): 1})
    assert qrels.restrict(['q2']).query_ids == ['q2']
    assert qrels.restrict(['q3']).query_ids == []


def test_run_file(tmp_path):
    run = {'q1': [RunRecord('q1', 'p2', 1, 3.5), RunRecord('q1', 'p1', 2, 1.0), RunRecord('q1', 'p3', 3, 1.0)]}
    path = str(tmp_path / 'run.txt')
    write_run(run, path, tag='2DE')
    assert open(path).readline() == 'q1 Q0 p2 1 3.5 2DE\n'
    assert read_run(path) == run


def test_run_order_must_match_scores(tmp_path):
    path = tmp_path / 'run.txt'
    path.write_text('q1 Q0 p1 1 1.0 t\nq1 Q0 p2 2 2.0 t\n')
    with pytest.raises(FormatError):
        read_run(str(path))


def test_run_ties_go_to_the_smaller_id(tmp_path):
    path = tmp_path / 'run.txt'
    path.write_text('q1 Q0 p2 1 1.0 t\nq1 Q0 p1 2 1.0 t\n')
    with pytest.raises(FormatError):
        read_run(str(path))


@pytest.mark.parametrize('line', ['q1 Q0 p1 1 1.0', 'q1 Q0 p1 one 1.0 t', 'q1 Q0 p1 0 1.0 t'])
def test_bad_run_line(tmp_path, line):
    path = tmp_path / 'run.txt'
    path.write_text(line + '\n')
    with pytest.raises(FormatError):
        read_run(str(path))


def test_ranked_ids():
    assert ranked_ids([RunRecord('q', 'a', 1, 1.0), ('b', 0.5), 'c']) == ['a', 'b', 'c']
