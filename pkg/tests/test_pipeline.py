import os
from datetime import datetime, timedelta

import numpy as np
import pytest

from leadkd.errors import ConfigurationError
from leadkd.pipeline import (Experiment, ExperimentConfig, ReportRow, check_orderings, model_seed, read_report,
                             run_seeds, summarise)
from leadkd.pipeline.cli import main
from leadkd.pipeline.experiment import COMPARISON_METHODS, REPRODUCTION_GRID, batch_seed

TINY_FLAGS = ['--num-topics', '4', '--passages-per-topic', '10', '--queries-per-topic', '5', '--vocab-size', '43',
              '--query-len', '4', '--passage-len', '6', '--noise-rate', '0', '--hidden-dim', '8', '--ffn-dim', '16',
              '--max-query-len', '6', '--max-passage-len', '8', '--teacher-layers', '2', '--student-layers', '1',
              '--K', '1', '--distill-steps', '2', '--warmup-steps', '2', '--batch-size', '2', '--negative-size', '2',
              '--mine-top-n', '4', '--eval-ks', '10', '--rerank-depth', '10', '--workers', '1',
              '--chain', 'DE:2,CB:2', '--eval-every', '5', '--seeds', '0', '--progress', 'false', '-q']


def student_rows(values, method, model='student'):
    return [ReportRow(method, '4CB -> 2DE', model, 'MRR@10', v, seed) for seed, v in enumerate(values)]


def test_seeds_are_distinct():
    seeds = [model_seed(s, role, i) for s in (0, 1) for role, i in
             [('retriever', 0), ('teacher', 0), ('student', 0), ('chain', 1), ('chain', 2), ('chain', 3)]]
    assert len(set(seeds)) == len(seeds)
    assert len({batch_seed(0, stage) for stage in ('retriever', 'teacher', 'student', 'distill')}) == 4


class TestCheckOrderings:

    def test_all_claims_hold(self):
        rows = (student_rows([0.5, 0.6], 'LEAD') + student_rows([0.4, 0.5], 'RD') + student_rows([0.3, 0.3], 'FD')
                + student_rows([0.2, 0.3], 'student_only') + student_rows([0.6, 0.6], 'LEAD w/o reweighting')
                + student_rows([0.5, 0.5], 'LEAD w/o joint') + student_rows([0.5, 0.5], 'LEAD Last')
                + student_rows([0.4, 0.4], 'LEAD Skip') + student_rows([0.7, 0.7], 'LEAD', 'teacher-before')
                + student_rows([0.8, 0.8], 'LEAD', 'teacher-after') + student_rows([0.3, 0.3], 'chain S1')
                + student_rows([0.4, 0.4], 'chain S2'))
        claims = check_orderings(rows)
        assert len(claims) == 7
        assert all(held is True for _, held in claims)

    def test_violations(self):
        rows = (student_rows([0.3], 'LEAD') + student_rows([0.4], 'RD') + student_rows([0.1], 'student_only')
                + student_rows([0.5], 'chain S1') + student_rows([0.4], 'chain S2'))
        claims = dict(check_orderings(rows))
        assert claims['LEAD >= RD >= student_only'] is False
        assert claims['chain student non-decreasing per step'] is False
        assert claims['FD <= RD'] is None

    def test_nothing_run(self):
        assert all(held is None for _, held in check_orderings([]))


@pytest.mark.slow
class TestExperiment:

    def test_warmup_checkpoints(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        assert {r.model for r in warm.rows} == {'retriever', 'teacher', 'student'}
        for name in ('retriever.npz', 'teacher.npz', 'student.npz', 'mined.tsv'):
            assert os.path.exists(os.path.join(tiny_config.work_dir, 'seed0', name))
        loaded = experiment.load_warmup(0)
        assert loaded.mined == warm.mined
        assert experiment.evaluate(loaded.teacher, loaded.retriever) == experiment.evaluate(warm.teacher,
                                                                                             warm.retriever)
        qrels = experiment.corpus.qrels
        for qid, pids in loaded.mined.items():
            assert len(pids) == tiny_config.mine_top_n
            assert not set(pids) & set(qrels.relevant(qid))

    def test_missing_warmup(self, tiny_config):
        with pytest.raises(ConfigurationError):
            Experiment(tiny_config).load_warmup(0)

    def test_mismatched_warmup(self, tiny_config):
        Experiment(tiny_config).run_warmup(0)
        with pytest.raises(ConfigurationError):
            Experiment(tiny_config.replace(teacher_variant='DE')).load_warmup(0)

    def test_distill(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        before = warm.student.state_dict()
        result = experiment.run_distill(0, warm=warm, method='LEAD')
        assert {r.model for r in result.rows} == {'teacher-before', 'student', 'teacher-after'}
        assert {r.setting for r in result.rows} == {'2CB -> 1DE'}
        assert len(result.trace) == tiny_config.distill_steps
        assert os.path.exists(os.path.join(tiny_config.work_dir, 'seed0', 'trace-lead.tsv'))
        assert all(np.array_equal(a, b) for a, b in zip(before.values(), warm.student.state_dict().values()))
        again = experiment.run_distill(0, warm=warm, method='LEAD')
        assert again.rows == result.rows

    def test_frozen_teacher_gives_no_after_rows(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        rows = experiment.run_distill(0, warm=warm, method='LEAD', joint_training=False).rows
        assert {r.model for r in rows} == {'teacher-before', 'student'}

    def test_zero_weights_reproduce_student_only(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        plain = experiment.run_distill(0, warm=warm, method='student_only')
        zero = experiment.run_distill(0, warm=warm, method='LEAD', layer_loss_weight=0.0, response_loss_weight=0.0)
        for a, b in zip(plain.student.state_dict().values(), zero.student.state_dict().values()):
            np.testing.assert_array_equal(a, b)
        assert [(r.metric, r.value) for r in plain.rows] == [(r.metric, r.value) for r in zero.rows
                                                              if r.model == 'student']

    def test_too_many_layer_pairs(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        with pytest.raises(ConfigurationError):
            experiment.run_distill(0, warm=warm, K=3)

    def test_chain_and_sweep(self, tiny_config):
        experiment = Experiment(tiny_config)
        warm = experiment.run_warmup(0)
        chain = experiment.run_chain(0, warm=warm)
        assert [r.method for r in chain.rows if r.model == 'student' and r.metric == 'MRR@10'] == ['chain S1',
                                                                                                  'chain S2']
        assert os.path.exists(os.path.join(tiny_config.work_dir, 'seed0', 'chain1-2DE.npz'))
        sweep = experiment.sweep_k(0, warm=warm)
        assert {r.method for r in sweep} == {'LEAD K=1'}

    def test_parallel_seeds_match_sequential(self, tiny_config, tmp_path):
        config = tiny_config.replace(seeds=[0, 1])
        parallel = run_seeds(config, 'warmup', workers=2)
        sequential = run_seeds(config.replace(work_dir=str(tmp_path / 'sequential')), 'warmup', workers=1)
        assert parallel == sequential
        assert [r.seed for r in parallel] == sorted(r.seed for r in parallel)

    def test_reproduce(self, tiny_config):
        rows = run_seeds(tiny_config, 'reproduce')
        methods = {r.method for r in rows}
        assert {label for label, _, _ in REPRODUCTION_GRID} <= methods
        assert {'warmup', 'chain S1', 'chain S2'} <= methods
        assert all(held is not None for _, held in check_orderings(rows))

    def test_compare(self, tiny_config):
        rows = run_seeds(tiny_config, 'compare')
        assert {r.method for r in rows} == {'warmup'} | set(COMPARISON_METHODS)
        claims = dict(check_orderings(rows))
        assert claims['LEAD >= RD >= student_only'] is not None
        assert claims['FD <= RD'] is not None
        assert claims['chain student non-decreasing per step'] is None


class TestCommandLine:

    def test_config(self, tmp_path, capsys):
        assert main(['config', '--work-dir', str(tmp_path), '--K', '1', '-q']) == 0
        assert 'K = 1' in capsys.readouterr().out

    def test_invalid_option(self, tmp_path, capsys):
        assert main(['config', '--work-dir', str(tmp_path), '--K', 'two', '-q']) == 1
        assert 'leadkd: error:' in capsys.readouterr().err

    def test_generate_corpus(self, tmp_path, capsys):
        assert main(['generate-corpus', '--work-dir', str(tmp_path)] + TINY_FLAGS) == 0
        for name in ('passages.tsv', 'train_queries.tsv', 'eval_queries.tsv', 'qrels.txt'):
            assert os.path.exists(os.path.join(str(tmp_path), 'corpus', name))
        assert '40 passages, 16 train / 4 eval queries' in capsys.readouterr().out

    def test_report_without_results(self, tmp_path):
        assert main(['report', '--work-dir', str(tmp_path), '-q']) == 1

    @pytest.mark.slow
    def test_warmup_evaluate_and_report(self, tmp_path, capsys):
        work = ['--work-dir', str(tmp_path)] + TINY_FLAGS
        assert main(['warmup'] + work) == 0
        assert len(read_report(os.path.join(str(tmp_path), 'results', 'warmup.tsv'))) > 0
        checkpoint = os.path.join(str(tmp_path), 'seed0', 'teacher.npz')
        run = os.path.join(str(tmp_path), 'teacher.run')
        capsys.readouterr()
        assert main(['evaluate', '--checkpoint', checkpoint, '--run', run] + work) == 0
        assert capsys.readouterr().out.startswith('MRR@10\t')
        assert os.path.exists(run)
        assert main(['report'] + work) == 0
        assert os.path.exists(os.path.join(str(tmp_path), 'report', 'report.md'))
        assert os.path.exists(os.path.join(str(tmp_path), 'report', 'summary.tsv'))

    @pytest.mark.slow
    def test_compare_prints_the_orderings(self, tmp_path, capsys):
        assert main(['compare', '--work-dir', str(tmp_path)] + TINY_FLAGS) == 0
        out = capsys.readouterr().out
        assert 'LEAD >= RD >= student_only' in out
        assert len(read_report(os.path.join(str(tmp_path), 'results', 'compare.tsv'))) > 0


@pytest.mark.slow
class TestDefaultCorpus:
    """Runs on the default synthetic corpus; minutes of CPU time."""

    def test_dual_encoder_learns_the_corpus(self, tmp_path):
        config = ExperimentConfig(work_dir=str(tmp_path), progress=False)
        assert config.noise_rate == 0.1
        experiment = Experiment(config)
        model = experiment.build_model('DE', config.student_layers, model_seed(0, 'student'))
        experiment.train_hard(model, 0, 'retriever', 'random')
        assert experiment.evaluate(model, None)['MRR@10'] > 0.5

    def test_method_comparison(self, tmp_path):
        config = ExperimentConfig(work_dir=str(tmp_path), progress=False)
        assert config.seeds == [0, 1, 2]
        assert (config.teacher_variant, config.teacher_layers) == ('CB', 4)
        assert (config.student_variant, config.student_layers) == ('DE', 2)
        tic = datetime.now()
        rows = run_seeds(config, 'compare')
        elapsed = datetime.now() - tic
        methods = {method for (_, method, model, _), stats in summarise(rows).items() if model == 'student'}
        assert methods == set(COMPARISON_METHODS)
        claims = dict(check_orderings(rows))
        assert claims['LEAD >= RD >= student_only'] is True
        assert claims['FD <= RD'] is True
        assert elapsed < timedelta(minutes=15)
