# Copyright 2026 The leadkd developers

"""
Experiment orchestration: warm-up, hard-negative mining, distillation runs, continual distillation chains, the K sweep
and the full reproduction grid, each over one seed or several seeds in parallel processes.
"""

import logging
import multiprocessing as mp
import os
from dataclasses import dataclass, field
from datetime import datetime

from ..distill import DistillConfig, Trainer
from ..errors import ConfigurationError
from ..model import RetrievalModel
from ..retrieval import evaluate_model, mine_hard_negatives, read_negatives, write_negatives
from ..synthdata import generate, make_batches, read_corpus
from ..util import chunks, format_timedelta, setting_label
from .report import rows_from_metrics, summarise

logger = logging.getLogger(__name__)

ROLE_OFFSETS = {'retriever': 0, 'teacher': 1, 'student': 2, 'chain': 10}

BATCH_STAGES = {'retriever': 1, 'teacher': 2, 'student': 3, 'distill': 4, 'chain': 10}

TASKS = ('warmup', 'distill', 'chain', 'sweep-k', 'compare', 'reproduce')

PRIMARY_METRIC = 'MRR@10'

# label, method, distill overrides
REPRODUCTION_GRID = [
    ('student_only', 'student_only', {}),
    ('RD', 'RD', {}),
    ('FD', 'FD', {}),
    ('LEAD', 'LEAD', {}),
    ('LEAD w/o reweighting', 'LEAD', {'layer_reweighting': False}),
    ('LEAD w/o joint', 'LEAD', {'joint_training': False}),
    ('LEAD Last', 'LEAD', {'strategy': 'Last'}),
    ('LEAD Skip', 'LEAD', {'strategy': 'Skip'}),
]

# the method comparison without ablations or chain
COMPARISON_METHODS = ('student_only', 'RD', 'FD', 'LEAD')


def model_seed(seed, role, index=0):
    """Initialisation seed of one model of a run; distinct per role and chain step."""
    return 1000 * int(seed) + ROLE_OFFSETS[role] + int(index)


def batch_seed(seed, stage, index=0):
    return 1000 * int(seed) + BATCH_STAGES[stage] + int(index)


@dataclass
class WarmupResult:
    """Warm-up checkpoints of one seed: the first-stage DE retriever, the teacher, the student and mined lists."""

    retriever: RetrievalModel
    teacher: RetrievalModel
    student: RetrievalModel
    mined: dict
    rows: list = field(default_factory=list)


@dataclass
class DistillResult:
    teacher: RetrievalModel
    student: RetrievalModel
    rows: list
    trace: object = None


class Experiment:
    """
    Runs the stages of a distillation study from one configuration.

    Parameters
    ----------
    config : ExperimentConfig

    Raises
    ------
    ConfigurationError
        If the configuration is invalid or uses the ``paper`` preset.
    """

    def __init__(self, config):
        config.validate()
        if config.preset == 'paper':
            raise ConfigurationError('preset "paper" only records published hyper-parameters and is not executed; '
                                     'use the desk preset')
        self.config = config
        self._corpus = None

    # data and models

    @property
    def corpus(self):
        if self._corpus is None:
            c = self.config
            self._corpus = read_corpus(c.corpus_dir) if c.corpus_dir else generate(c.corpus_spec())
        return self._corpus

    def seed_dir(self, seed):
        path = os.path.join(self.config.work_dir, 'seed%i' % seed)
        os.makedirs(path, exist_ok=True)
        return path

    def build_model(self, variant, layers, seed, projection=True):
        c = self.config
        return RetrievalModel(variant, layers, hidden_dim=c.hidden_dim, vocab_size=c.vocab_size,
                              max_query_len=c.max_query_len, max_passage_len=c.max_passage_len,
                              projection_dim=c.projection if projection else None, cb_cls_only=c.cb_cls_only,
                              ffn_dim=c.ffn_dim, seed=seed)

    def batches(self, seed, stage, source, mined=None, in_batch=False, index=0):
        c = self.config
        return make_batches(self.corpus, c.negative_size, c.batch_size, source=source, mined=mined,
                            in_batch=in_batch, seed=batch_seed(seed, stage, index))

    def train_hard(self, model, seed, stage, source, mined=None, index=0):
        """Hard-loss training of one model on its own."""
        c = self.config
        trainer = Trainer(None, model, DistillConfig(seed=seed), method='student_only', steps=c.warmup_steps,
                          lr=c.lr, warmup_proportion=c.warmup_proportion, weight_decay=c.weight_decay,
                          progress=c.progress)
        return trainer.run(self.batches(seed, stage, source, mined, index=index))

    def evaluate(self, model, retriever):
        """Metric set of ``model`` on the held-out queries."""
        c = self.config
        metrics, _ = evaluate_model(model, self.corpus.passages, self.corpus.eval_queries, self.corpus.qrels,
                                    ks=c.eval_ks, retriever=retriever, rerank_depth=c.rerank_depth,
                                    progress=c.progress)
        return metrics

    # warm-up

    def mine(self, retriever):
        c = self.config
        return mine_hard_negatives(retriever, self.corpus.passages, self.corpus.train_queries, self.corpus.qrels,
                                   c.mine_top_n, progress=c.progress)

    def run_warmup(self, seed, save=True):
        """
        Train a DE retriever on random negatives, mine hard negatives with it, then train teacher and student
        separately on the mined negatives with their hard loss.

        Returns
        -------
        WarmupResult
        """
        c = self.config
        tic = datetime.now()
        retriever = self.build_model('DE', c.teacher_layers, model_seed(seed, 'retriever'), projection=False)
        self.train_hard(retriever, seed, 'retriever', 'random')
        mined = self.mine(retriever)
        teacher = self.build_model(c.teacher_variant, c.teacher_layers, model_seed(seed, 'teacher'))
        self.train_hard(teacher, seed, 'teacher', 'mined', mined)
        student = self.build_model(c.student_variant, c.student_layers, model_seed(seed, 'student'))
        self.train_hard(student, seed, 'student', 'mined', mined)

        result = WarmupResult(retriever, teacher, student, mined)
        for name, model in (('retriever', retriever), ('teacher', teacher), ('student', student)):
            setting = setting_label(model.num_layers, model.variant, c.student_layers, c.student_variant)
            result.rows += rows_from_metrics(self.evaluate(model, retriever), 'warmup', setting, name, seed)
        if save:
            self.save_warmup(seed, result)
        logger.info('Experiment: warm-up of seed %i finished in %s.', seed, format_timedelta(datetime.now() - tic))
        return result

    def save_warmup(self, seed, result):
        path = self.seed_dir(seed)
        result.retriever.save(os.path.join(path, 'retriever.npz'))
        result.teacher.save(os.path.join(path, 'teacher.npz'))
        result.student.save(os.path.join(path, 'student.npz'))
        write_negatives(result.mined, os.path.join(path, 'mined.tsv'))

    def load_warmup(self, seed):
        """
        Warm-up checkpoints of ``seed`` from the work directory.

        Raises
        ------
        ConfigurationError
            If a file is missing or a checkpoint does not match the configured teacher or student.
        """
        c = self.config
        path = os.path.join(c.work_dir, 'seed%i' % seed)
        files = [os.path.join(path, name) for name in ('retriever.npz', 'teacher.npz', 'student.npz', 'mined.tsv')]
        for f in files:
            if not os.path.exists(f):
                raise ConfigurationError('missing warm-up file %s; run the warmup stage first' % f)
        retriever, teacher, student = (RetrievalModel.load(f) for f in files[:3])
        for role, model, variant, layers in (('teacher', teacher, c.teacher_variant, c.teacher_layers),
                                             ('student', student, c.student_variant, c.student_layers)):
            if (model.variant, model.num_layers) != (variant, layers):
                raise ConfigurationError('%s checkpoint is %s, configuration asks for %i%s'
                                         % (role, model.label(), layers, variant))
        return WarmupResult(retriever, teacher, student, read_negatives(files[3]))

    def remine(self, seed):
        """Mine hard negatives again with the saved retriever and overwrite the saved lists."""
        warm = self.load_warmup(seed)
        mined = self.mine(warm.retriever)
        write_negatives(mined, os.path.join(self.seed_dir(seed), 'mined.tsv'))
        return mined

    def _warmup(self, seed, warm):
        if warm is not None:
            return warm
        try:
            return self.load_warmup(seed)
        except ConfigurationError:
            return self.run_warmup(seed)

    # distillation

    def run_distill(self, seed, warm=None, method=None, teacher=None, student=None, label=None, **overrides):
        """
        Distil a copy of the warm teacher into a copy of the warm student.

        Parameters
        ----------
        seed : int
        warm : WarmupResult or None
            Loaded from the work directory (or trained) when None.
        method : str or None
            ``student_only``, ``RD``, ``FD`` or ``LEAD``; the configured method by default.
        teacher, student : RetrievalModel or None
            Replace the warm models; they are copied, never trained in place.
        label : str or None
            Method name of the report rows.
        **overrides
            DistillConfig fields replacing the configured ones (e.g. ``K``, ``strategy``).

        Returns
        -------
        DistillResult

        Raises
        ------
        ConfigurationError
            If the teacher, student and K do not satisfy N >= M >= K.
        """
        c = self.config
        method = method or c.method
        label = label or method
        warm = self._warmup(seed, warm)
        teacher = (teacher or warm.teacher).clone()
        student = (student or warm.student).clone()
        dcfg = c.distill_config(seed=seed, **overrides)
        if not teacher.effective_layers >= student.effective_layers >= dcfg.K:
            raise ConfigurationError('%s -> %s cannot align K=%i layer pairs' % (teacher.label(), student.label(),
                                                                               dcfg.K))
        setting = setting_label(teacher.num_layers, teacher.variant, student.num_layers, student.variant)
        tic = datetime.now()
        rows = []
        if method != 'student_only':
            rows += rows_from_metrics(self.evaluate(teacher, warm.retriever), label, setting, 'teacher-before', seed)
        in_batch = dcfg.in_batch_negatives and 'CE' not in (teacher.variant, student.variant)
        batches = make_batches(self.corpus, c.negative_size, c.batch_size, source=c.negative_source,
                               mined=warm.mined, in_batch=in_batch, seed=batch_seed(seed, 'distill'))
        trainer = Trainer(None if method == 'student_only' else teacher, student, dcfg, method=method,
                          steps=c.distill_steps, lr=c.lr, warmup_proportion=c.warmup_proportion,
                          weight_decay=c.weight_decay, progress=c.progress)
        trace = trainer.run(batches)
        trace.write(os.path.join(self.seed_dir(seed), 'trace-%s.tsv' % _slug(label)))
        rows += rows_from_metrics(self.evaluate(student, warm.retriever), label, setting, 'student', seed)
        if method != 'student_only' and dcfg.joint_training:
            rows += rows_from_metrics(self.evaluate(teacher, warm.retriever), label, setting, 'teacher-after', seed)
        logger.info('Experiment: %s %s (seed %i) finished in %s.', label, setting, seed,
                    format_timedelta(datetime.now() - tic))
        return DistillResult(teacher, student, rows, trace)

    def chain_teacher(self, seed, step, variant, layers, warm):
        """Warm-up teacher of one chain step, reusing the main teacher when it matches."""
        c = self.config
        if (variant, layers) == (c.teacher_variant, c.teacher_layers):
            return warm.teacher
        path = os.path.join(self.seed_dir(seed), 'chain%i-%i%s.npz' % (step, layers, variant))
        if os.path.exists(path):
            return RetrievalModel.load(path)
        teacher = self.build_model(variant, layers, model_seed(seed, 'chain', step))
        self.train_hard(teacher, seed, 'chain', 'mined', warm.mined, index=step)
        teacher.save(path)
        return teacher

    def run_chain(self, seed, warm=None):
        """
        Continual distillation: the configured teachers are distilled one after another into the same student.

        Returns
        -------
        DistillResult
            The final student and the rows of every step (methods ``chain S1``, ``chain S2``, ...).
        """
        warm = self._warmup(seed, warm)
        student = warm.student
        rows = []
        result = None
        for step, (variant, layers) in enumerate(self.config.chain, start=1):
            teacher = self.chain_teacher(seed, step, variant, layers, warm)
            result = self.run_distill(seed, warm=warm, method='LEAD', teacher=teacher, student=student,
                                      label='chain S%i' % step)
            student = result.student
            rows += result.rows
        return DistillResult(result.teacher if result else None, student, rows, result.trace if result else None)

    def sweep_k(self, seed, warm=None):
        """LEAD runs for every K of ``sweep_ks`` (1..M when empty)."""
        warm = self._warmup(seed, warm)
        ks = self.config.sweep_ks or range(1, self.config.student_layers + 1)
        rows = []
        for k in ks:
            rows += self.run_distill(seed, warm=warm, method='LEAD', label='LEAD K=%i' % k, K=k).rows
        return rows

    def compare(self, seed):
        """Warm-up and one run of each of student_only, RD, FD and LEAD for one seed."""
        warm = self.run_warmup(seed)
        rows = list(warm.rows)
        for method in COMPARISON_METHODS:
            rows += self.run_distill(seed, warm=warm, method=method).rows
        return rows

    def reproduce(self, seed):
        """Warm-up, the method and ablation grid and the chain for one seed."""
        warm = self.run_warmup(seed)
        rows = list(warm.rows)
        for label, method, overrides in REPRODUCTION_GRID:
            rows += self.run_distill(seed, warm=warm, method=method, label=label, **overrides).rows
        rows += self.run_chain(seed, warm=warm).rows
        return rows

    def run_task(self, task, seed):
        """Report rows of one task for one seed."""
        if task == 'warmup':
            return self.run_warmup(seed).rows
        if task == 'distill':
            return self.run_distill(seed).rows
        if task == 'chain':
            return self.run_chain(seed).rows
        if task == 'sweep-k':
            return self.sweep_k(seed)
        if task == 'compare':
            return self.compare(seed)
        if task == 'reproduce':
            return self.reproduce(seed)
        raise ConfigurationError('unknown task %r; expected one of %s' % (task, TASKS))


def _slug(label):
    return ''.join(ch if ch.isalnum() else '-' for ch in label).strip('-').lower()


def _process_seed_chunk(config, task, seeds, out, i):
    experiment = Experiment(config)
    for seed in seeds:
        out.append((seed, experiment.run_task(task, seed)))


def run_seeds(config, task, seeds=None, workers=None):
    """
    Run ``task`` for several seeds, in parallel processes when ``workers > 1``.

    Returns
    -------
    list[ReportRow]
        Rows of every seed, seeds ascending.
    """
    seeds = list(config.seeds if seeds is None else seeds)
    workers = min(config.workers if workers is None else workers, len(seeds))
    tic = datetime.now()
    if workers <= 1:
        experiment = Experiment(config)
        results = [(seed, experiment.run_task(task, seed)) for seed in seeds]
    else:
        logger.info('Experiment: running %s for %i seeds on %i processors.', task, len(seeds), workers)
        manager = mp.Manager()
        reservoir = manager.list()
        jobs = []
        for i, chk in enumerate(chunks(seeds, workers)):
            proc = mp.Process(target=_process_seed_chunk, args=(config, task, chk, reservoir, i))
            jobs.append(proc)
            proc.start()
        for process in jobs:
            process.join()
        failed = [p.exitcode for p in jobs if p.exitcode != 0]
        results = list(reservoir)
        if failed or len(results) != len(seeds):
            raise ConfigurationError('%i of %i worker processes failed; rerun with workers=1 for the traceback'
                                     % (len(failed), len(jobs)))
    logger.info('Experiment: %s over seeds %s finished in %s.', task, seeds, format_timedelta(datetime.now() - tic))
    return [row for _, rows in sorted(results, key=lambda r: r[0]) for row in rows]


def check_orderings(rows, metric=PRIMARY_METRIC):
    """
    Directional comparisons of a reproduction report on the student's (or teacher's) mean ``metric``.

    Returns
    -------
    list[tuple[str, bool or None]]
        Each claim with whether it held; None when the report lacks the runs it needs.
    """
    summary = summarise(rows)

    def stat(method, model='student'):
        for (_, m, mo, me), stats in summary.items():
            if (m, mo, me) == (method, model, metric):
                return stats
        return None

    def tol(stats):
        return 0.0 if stats['n'] < 2 else stats['std']

    def holds(*stats):
        return None if any(s is None for s in stats) else True

    lead, rd, fd, so = stat('LEAD'), stat('RD'), stat('FD'), stat('student_only')
    wo_rw, wo_joint = stat('LEAD w/o reweighting'), stat('LEAD w/o joint')
    last, skip = stat('LEAD Last'), stat('LEAD Skip')
    before, after = stat('LEAD', 'teacher-before'), stat('LEAD', 'teacher-after')
    claims = []
    claims.append(('LEAD >= RD >= student_only',
                   holds(lead, rd, so) and lead['mean'] >= rd['mean'] >= so['mean']))
    claims.append(('FD <= RD', holds(fd, rd) and fd['mean'] <= rd['mean']))
    claims.append(('LEAD >= LEAD w/o reweighting (one std)',
                   holds(lead, wo_rw) and lead['mean'] + tol(lead) >= wo_rw['mean']))
    claims.append(('LEAD >= LEAD w/o joint (one std)',
                   holds(lead, wo_joint) and lead['mean'] + tol(lead) >= wo_joint['mean']))
    claims.append(('teacher after LEAD >= before', holds(before, after) and after['mean'] >= before['mean']))
    claims.append(('Random >= max(Last, Skip) (one std)',
                   holds(lead, last, skip) and lead['mean'] + tol(lead) >= max(last['mean'], skip['mean'])))
    steps = []
    step = 1
    while stat('chain S%i' % step) is not None:
        steps.append(stat('chain S%i' % step)['mean'])
        step += 1
    claims.append(('chain student non-decreasing per step',
                   (all(a <= b for a, b in zip(steps, steps[1:])) if steps else None)))
    return claims
