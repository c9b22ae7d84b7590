import numpy as np
import pytest

from leadkd import numcore as nc
from leadkd.distill import AdamW, DistillConfig, LossTrace, Trainer, train_step
from leadkd.errors import DivergenceError, FormatError, InvalidInputError, InvalidParameterError


def same_state(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.state_dict().values(), b.state_dict().values()))


class TestAdamW:

    def test_schedule(self):
        opt = AdamW([nc.parameter(np.zeros(2))], lr=1.0, total_steps=10, warmup_proportion=0.2)
        assert opt.warmup_steps == 2
        assert [opt.learning_rate(s) for s in (0, 1, 2)] == [0.5, 1.0, 1.0]
        assert opt.learning_rate(9) == pytest.approx(0.125)
        assert opt.learning_rate(10) == 0.0

    def test_no_warmup(self):
        opt = AdamW([nc.parameter(np.zeros(2))], lr=1e-3, total_steps=4, warmup_proportion=0.0)
        assert opt.warmup_steps == 0
        assert opt.learning_rate(0) == pytest.approx(1e-3)

    def test_invalid_settings(self):
        with pytest.raises(InvalidParameterError):
            AdamW([], lr=-1.0)
        with pytest.raises(InvalidParameterError):
            AdamW([], total_steps=0)
        with pytest.raises(InvalidParameterError):
            AdamW([], warmup_proportion=1.5)

    def test_zero_learning_rate_changes_nothing(self):
        p = nc.parameter([1.0, -2.0])
        opt = AdamW([p], lr=0.0, total_steps=3)
        p.grad = np.array([0.5, 0.5])
        opt.step()
        np.testing.assert_array_equal(p.values, [1.0, -2.0])

    def test_first_step_moves_against_the_gradient(self):
        p = nc.parameter([1.0, -2.0])
        opt = AdamW([p], lr=0.1, total_steps=10, warmup_proportion=0.0, weight_decay=0.0)
        p.grad = np.array([3.0, -0.5])
        opt.step()
        np.testing.assert_allclose(p.values, [0.9, -1.9], atol=1e-6)


class TestTrainStep:

    def test_loss_decreases_on_a_fixed_batch(self, make_model, make_examples, rng):
        student = make_model('DE', 2)
        batch = make_examples(rng, count=2)
        opt = AdamW(student.parameters(), lr=1e-4, total_steps=10, warmup_proportion=0.0, weight_decay=0.0)
        first = train_step(None, student, batch, DistillConfig(), opt, method='student_only')
        second = train_step(None, student, batch, DistillConfig(), opt, method='student_only')
        assert second.total < first.total

    def test_frozen_teacher_is_not_updated(self, make_model, make_examples, rng):
        teacher, student = make_model('CB', 2), make_model('DE', 1)
        before = teacher.clone()
        config = DistillConfig(K=1, joint_training=False)
        t_opt = AdamW(teacher.parameters(), lr=1e-2, total_steps=5, warmup_proportion=0.0)
        s_opt = AdamW(student.parameters(), lr=1e-2, total_steps=5, warmup_proportion=0.0)
        for _ in range(2):
            train_step(teacher, student, make_examples(rng), config, s_opt, t_opt, rng=rng)
        assert same_state(teacher, before)

    def test_joint_training_updates_the_teacher(self, make_model, make_examples, rng):
        teacher, student = make_model('CB', 2), make_model('DE', 1)
        before = teacher.clone()
        t_opt = AdamW(teacher.parameters(), lr=1e-2, total_steps=5, warmup_proportion=0.0)
        s_opt = AdamW(student.parameters(), lr=1e-2, total_steps=5, warmup_proportion=0.0)
        train_step(teacher, student, make_examples(rng), DistillConfig(K=1), s_opt, t_opt, rng=rng)
        assert not same_state(teacher, before)

    def test_divergence_leaves_parameters_untouched(self, make_model, make_examples, rng):
        student = make_model('DE', 1)
        student.parameters()[0].values[...] = np.nan
        before = student.clone()
        opt = AdamW(student.parameters(), lr=1e-2, total_steps=5, warmup_proportion=0.0)
        with np.errstate(invalid='ignore'), pytest.raises(DivergenceError):
            train_step(None, student, make_examples(rng), DistillConfig(), opt, method='student_only', step=0)
        for a, b in zip(student.state_dict().values(), before.state_dict().values()):
            np.testing.assert_array_equal(a, b)

    def test_empty_batch(self, make_model):
        student = make_model('DE', 1)
        with pytest.raises(InvalidInputError):
            train_step(None, student, [], DistillConfig(), AdamW(student.parameters()), method='student_only')


class TestTrainer:

    def test_run_records_every_step(self, make_model, make_examples, rng):
        teacher, student = make_model('CB', 2), make_model('DE', 1)
        trainer = Trainer(teacher, student, DistillConfig(K=1), method='LEAD', steps=3, progress=False)
        trace = trainer.run([make_examples(rng) for _ in range(3)])
        assert len(trace) == 3
        assert [r.step for r in trace.rows] == [0, 1, 2]
        assert all(len(r.teacher_layers) == 1 and len(r.weights) == 1 for r in trace.rows)
        assert np.all(np.isfinite(trace.totals))

    def test_trace_file(self, make_model, make_examples, rng, tmp_path):
        teacher, student = make_model('CB', 2), make_model('DE', 2)
        trace = Trainer(teacher, student, DistillConfig(K=2), steps=2, progress=False).run(
            [make_examples(rng) for _ in range(2)])
        path = str(tmp_path / 'trace.tsv')
        trace.write(path)
        assert LossTrace.read(path).rows == trace.rows

    def test_trace_without_selection(self, make_model, make_examples, rng, tmp_path):
        trace = Trainer(None, make_model('DE', 1), method='student_only', steps=1, progress=False).run(
            [make_examples(rng)])
        path = str(tmp_path / 'trace.tsv')
        trace.write(path)
        row = LossTrace.read(path).rows[0]
        assert row.teacher_layers == () and row.weights == ()
        assert row.total == row.l_stu

    def test_trace_header(self, tmp_path):
        path = tmp_path / 'trace.tsv'
        path.write_text('step\ttotal\n')
        with pytest.raises(FormatError):
            LossTrace.read(str(path))

    def test_stream_ends_early(self, make_model, make_examples, rng):
        trainer = Trainer(None, make_model('DE', 1), method='student_only', steps=3, progress=False)
        with pytest.raises(InvalidInputError):
            trainer.run([make_examples(rng), make_examples(rng)])

    def test_method_needs_a_teacher(self, make_model):
        with pytest.raises(InvalidParameterError):
            Trainer(None, make_model('DE', 1), method='LEAD')
        with pytest.raises(InvalidParameterError):
            Trainer(make_model('DE', 2), make_model('DE', 1), method='PKD')

    def test_feature_distillation_trains_an_aligner(self, make_model, make_examples, rng):
        teacher, student = make_model('CE', 2), make_model('DE', 1, projection_dim=4)
        trainer = Trainer(teacher, student, DistillConfig(K=1), method='FD', steps=2, lr=1e-2,
                          warmup_proportion=0.0, progress=False)
        before = trainer.aligner.weight.values.copy()
        trainer.run([make_examples(rng) for _ in range(2)])
        assert trainer.aligner.weight.values.shape == (4, 8)
        assert not np.array_equal(before, trainer.aligner.weight.values)

    def test_zero_weight_lead_follows_student_only(self, make_model, make_examples, rng):
        teacher = make_model('CB', 2)
        lead_student, plain_student = make_model('DE', 2, seed=1), make_model('DE', 2, seed=1)
        batches = [make_examples(rng) for _ in range(4)]
        config = DistillConfig(K=2, layer_loss_weight=0.0, response_loss_weight=0.0)
        lead = Trainer(teacher, lead_student, config, method='LEAD', steps=4, lr=1e-2, progress=False).run(batches)
        plain = Trainer(None, plain_student, config, method='student_only', steps=4, lr=1e-2,
                        progress=False).run(batches)
        assert same_state(lead_student, plain_student)
        np.testing.assert_array_equal([r.l_stu for r in lead.rows], [r.l_stu for r in plain.rows])
