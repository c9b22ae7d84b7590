# Copyright 2026 The leadkd developers

"""Optimisation of teacher and student on batches of training examples."""

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
from tqdm import tqdm

from ..errors import DivergenceError, FormatError, InvalidInputError, InvalidParameterError
from ..model import Linear
from ..util import format_timedelta, make_rng
from .distill import DistillConfig, METHODS, method_loss

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['step', 'l_lyr', 'l_rep', 'l_tch', 'l_stu', 'total', 'A', 'B', 'weights']


class AdamW:
    """
    Adam with decoupled weight decay and a linear warm-up / linear decay learning-rate schedule.

    Parameters
    ----------
    params : list[DiffTensor]
        Trainable tensors; updated in place from their ``grad``.
    lr : float
        Peak learning rate.
    total_steps : int
    warmup_proportion : float
        Fraction of ``total_steps`` spent ramping up from 0.
    betas : tuple[float, float]
    eps : float
    weight_decay : float
    """

    def __init__(self, params, lr=1e-3, total_steps=1, warmup_proportion=0.1, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        if lr < 0 or total_steps < 1 or not 0 <= warmup_proportion <= 1:
            raise InvalidParameterError('invalid optimiser settings: lr=%r, steps=%r, warmup=%r'
                                        % (lr, total_steps, warmup_proportion))
        self.params = list(params)
        self.lr = float(lr)
        self.total_steps = int(total_steps)
        self.warmup_steps = int(math.ceil(warmup_proportion * total_steps))
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]
        self.t = 0

    def learning_rate(self, step):
        """Scheduled learning rate at 0-based ``step``."""
        if step < self.warmup_steps:
            return self.lr * (step + 1) / self.warmup_steps
        decay = max(1, self.total_steps - self.warmup_steps)
        return self.lr * max(0.0, (self.total_steps - step) / decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        lr_t = self.learning_rate(self.t)
        self.t += 1
        if lr_t == 0:
            return
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = np.zeros_like(p.values) if p.grad is None else p.grad
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.values -= lr_t * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.values)


def _finite(breakdown):
    return all(np.isfinite(x) for x in breakdown.as_row())


def train_step(teacher, student, batch, config, student_optimizer, teacher_optimizer=None, method='LEAD',
               aligner=None, rng=None, step=None):
    """
    One gradient step on the batch-mean objective of ``method``.

    The student is always updated; the teacher only when ``config.joint_training`` is on and a teacher optimiser is
    given. Under the Random strategy a fresh layer selection is drawn from ``rng``.

    Returns
    -------
    LossBreakdown

    Raises
    ------
    InvalidInputError
        If the batch is empty.
    DivergenceError
        If any loss term is not finite; no parameter is touched.
    """
    if not batch:
        raise InvalidInputError('train_step needs a non-empty batch')
    optimizers = [student_optimizer]
    if teacher_optimizer is not None and config.joint_training and method != 'student_only':
        optimizers.append(teacher_optimizer)
    for opt in [student_optimizer, teacher_optimizer]:
        if opt is not None:
            opt.zero_grad()
    breakdown = method_loss(method, teacher, student, batch, config, aligner=aligner, rng=rng)
    if not _finite(breakdown):
        raise DivergenceError('non-finite loss at step %s: l_lyr=%r, l_rep=%r, l_tch=%r, l_stu=%r'
                              % (step, *breakdown.as_row()[:4]))
    breakdown.objective.backward()
    for opt in optimizers:
        opt.step()
    breakdown.objective = None
    return breakdown


@dataclass
class TraceRow:
    step: int
    l_lyr: float
    l_rep: float
    l_tch: float
    l_stu: float
    total: float
    teacher_layers: tuple = ()
    student_layers: tuple = ()
    weights: tuple = ()


@dataclass
class LossTrace:
    """Per-step loss records of one training run."""

    rows: list = field(default_factory=list)

    def append(self, step, breakdown):
        sel = breakdown.selection
        self.rows.append(TraceRow(step, *breakdown.as_row(),
                                  teacher_layers=sel.teacher_layers if sel else (),
                                  student_layers=sel.student_layers if sel else (),
                                  weights=tuple(float(w) for w in breakdown.weights)))

    def __len__(self):
        return len(self.rows)

    @property
    def totals(self):
        return np.array([r.total for r in self.rows])

    def write(self, path):
        """Write one tab-separated line per step under a header row."""
        with open(path, 'w', newline='') as fh:
            writer = csv.writer(fh, delimiter='\t', lineterminator='\n')
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                writer.writerow([r.step] + [repr(float(x)) for x in (r.l_lyr, r.l_rep, r.l_tch, r.l_stu, r.total)]
                                + [','.join(str(a) for a in r.teacher_layers),
                                   ','.join(str(b) for b in r.student_layers),
                                   ','.join(repr(w) for w in r.weights)])

    @classmethod
    def read(cls, path):
        def ints(text):
            return tuple(int(x) for x in text.split(',')) if text else ()

        trace = cls()
        with open(path, newline='') as fh:
            reader = csv.reader(fh, delimiter='\t')
            header = next(reader, None)
            if header != TRACE_COLUMNS:
                raise FormatError(path, 1, 'expected trace header %s' % '\t'.join(TRACE_COLUMNS))
            for lineno, fields in enumerate(reader, start=2):
                if len(fields) != len(TRACE_COLUMNS):
                    raise FormatError(path, lineno, 'expected %i fields, got %i' % (len(TRACE_COLUMNS), len(fields)))
                try:
                    trace.rows.append(TraceRow(int(fields[0]), *(float(x) for x in fields[1:6]),
                                               teacher_layers=ints(fields[6]), student_layers=ints(fields[7]),
                                               weights=tuple(float(w) for w in fields[8].split(',') if w)))
                except ValueError as e:
                    raise FormatError(path, lineno, str(e)) from e
        return trace


class Trainer:
    """
    Runs a fixed number of training steps of one method over a batch stream.

    Parameters
    ----------
    teacher : RetrievalModel or None
        Not needed for ``student_only``.
    student : RetrievalModel
    config : DistillConfig
    method : str
        One of ``student_only``, ``RD``, ``FD``, ``LEAD``.
    steps : int
    lr : float
    warmup_proportion : float
    weight_decay : float
    progress : bool
        Show a tqdm progress bar.
    """

    def __init__(self, teacher, student, config=None, method='LEAD', steps=100, lr=1e-3, warmup_proportion=0.1,
                 weight_decay=0.01, progress=True):
        if method not in METHODS:
            raise InvalidParameterError('unknown distillation method %r; expected one of %s' % (method, METHODS))
        if teacher is None and method != 'student_only':
            raise InvalidParameterError('method %s needs a teacher' % method)
        self.teacher = teacher
        self.student = student
        self.config = DistillConfig() if config is None else config
        self.method = method
        self.steps = int(steps)
        self.progress = progress
        self.selection_rng = make_rng(self.config.seed, stream=3)
        self.aligner = None
        if method == 'FD':
            self.aligner = Linear(student.output_dim, teacher.output_dim, make_rng(self.config.seed, stream=4),
                                  name='aligner')
        student_params = student.parameters()
        if self.aligner is not None:
            student_params += [p for _, p in self.aligner.named_parameters()]
        opt_args = dict(lr=lr, total_steps=self.steps, warmup_proportion=warmup_proportion,
                        weight_decay=weight_decay)
        self.student_optimizer = AdamW(student_params, **opt_args)
        self.teacher_optimizer = None
        if teacher is not None and self.config.joint_training and method != 'student_only':
            self.teacher_optimizer = AdamW(teacher.parameters(), **opt_args)
        self.trace = LossTrace()

    def run(self, batches):
        """
        Train for ``steps`` steps, drawing one batch per step from ``batches``.

        Returns
        -------
        LossTrace
        """
        if self.method != 'student_only':
            logger.debug('Trainer: %s %s -> %s, K=%i, strategy=%s', self.method, self.teacher.label(),
                         self.student.label(), self.config.K, self.config.strategy)
        start = datetime.now()
        iterator = iter(batches)
        for step in tqdm(range(self.steps), disable=not self.progress, desc='%s' % self.method):
            try:
                batch = next(iterator)
            except StopIteration:
                raise InvalidInputError('batch stream ended after %i of %i steps' % (step, self.steps))
            breakdown = train_step(self.teacher, self.student, batch, self.config, self.student_optimizer,
                                   self.teacher_optimizer, method=self.method, aligner=self.aligner,
                                   rng=self.selection_rng, step=step)
            self.trace.append(step, breakdown)
        logger.info('Trainer: finished %i %s steps in %s.', self.steps, self.method,
                    format_timedelta(datetime.now() - start))
        return self.trace
