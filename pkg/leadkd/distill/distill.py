# Copyright 2026 The leadkd developers

"""
Layer-wise distillation objectives.

A layer feature is the distribution of one query's similarity scores over its candidate pool at a single layer. The
student is pulled towards the teacher on K aligned layer pairs chosen with their order preserved, each pair weighted
by how well the teacher layer already ranks the gold passage, plus a response term on the top layers and the hard
(ground-truth) losses of both models.
"""

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .. import functions
from .. import numcore as nc
from ..errors import InvalidInputError, InvalidParameterError, DomainError
from ..model import TokenSequence

STRATEGIES = ('Random', 'Last', 'Skip')
METHODS = ('student_only', 'RD', 'FD', 'LEAD')


@dataclass
class TrainExample:
    """
    A query with its candidate pool.

    The pool is the positives followed by the negatives; the label is one-hot on the first positive.
    """

    query: TokenSequence
    positives: list
    negatives: list
    query_id: str = None
    passage_ids: tuple = ()

    def __post_init__(self):
        if len(self.positives) < 1:
            raise InvalidInputError('a training example needs at least one positive passage')
        self.positives = list(self.positives)
        self.negatives = list(self.negatives)

    @property
    def pool(self):
        return self.positives + self.negatives

    @property
    def positive_indices(self):
        return list(range(len(self.positives)))

    @property
    def label(self):
        y = np.zeros(len(self.positives) + len(self.negatives))
        y[0] = 1.0
        return y


@dataclass
class LayerFeature:
    """
    Distribution over a pool at one layer.

    Attributes
    ----------
    layer_index : int
    log_dist : DiffTensor
        Log-probabilities over the pool; a batch of examples stacks along the leading axis.
    """

    layer_index: int
    log_dist: nc.DiffTensor

    @property
    def dist(self):
        return np.exp(self.log_dist.values)

    def detach(self):
        return LayerFeature(self.layer_index, self.log_dist.detach())


@dataclass(frozen=True)
class LayerSelection:
    """
    Order-preserving pairing of teacher layers A with student layers B.

    Attributes
    ----------
    teacher_layers : tuple[int]
        Strictly increasing indices in [1, N].
    student_layers : tuple[int]
        Strictly increasing indices in [1, M], same length.
    """

    teacher_layers: tuple
    student_layers: tuple

    def __post_init__(self):
        a = tuple(int(i) for i in self.teacher_layers)
        b = tuple(int(i) for i in self.student_layers)
        if len(a) != len(b) or not a:
            raise InvalidParameterError('layer selection needs two non-empty lists of equal length, got %s and %s'
                                        % (a, b))
        for side in (a, b):
            if side[0] < 1 or any(x >= y for x, y in zip(side, side[1:])):
                raise InvalidParameterError('layer indices must be >= 1 and strictly increasing, got %s' % (side,))
        object.__setattr__(self, 'teacher_layers', a)
        object.__setattr__(self, 'student_layers', b)

    @property
    def k(self):
        return len(self.teacher_layers)

    def pairs(self):
        return list(zip(self.teacher_layers, self.student_layers))


def parse_strategy(text):
    """
    Read ``Random``, ``Last``, ``Skip`` or ``Skip(k)`` (case-insensitive).

    Returns
    -------
    tuple[str, int or None]
        Canonical strategy name and the Skip stride when one was given.
    """
    match = re.fullmatch(r'\s*(random|last|skip)\s*(?:\(\s*(\d+)\s*\))?\s*', str(text), flags=re.IGNORECASE)
    if match is None:
        raise InvalidParameterError('unknown layer selection strategy %r; expected Random, Last or Skip(k)' % text)
    name = match.group(1).capitalize()
    stride = int(match.group(2)) if match.group(2) else None
    if stride is not None and name != 'Skip':
        raise InvalidParameterError('only Skip takes a stride, got %r' % text)
    return name, stride


@dataclass
class DistillConfig:
    """
    Switches and constants of one distillation run.

    Attributes
    ----------
    K : int
        Number of aligned layer pairs.
    tau : float
        Temperature of every layer feature, the response term and the layer re-weighting.
    strategy : str
        ``Random`` (resampled every step), ``Last`` or ``Skip``.
    skip_stride : int
        Teacher stride k of the Skip strategy.
    joint_training : bool
        Train the teacher too, with the reverse response KL and its hard loss.
    layer_reweighting : bool
        Weight layer pairs by teacher informativeness; uniform 1/K otherwise.
    in_batch_negatives : bool
        Extend pools with the other examples' passages (DE/CB pairs only).
    literal_tau : bool
        Read the temperature as dividing already-normalised distributions, which scales each KL by 1/tau.
    layer_loss_weight, response_loss_weight : float
        Multipliers of the layer and response terms; a zero weight skips the term.
    seed : int
    """

    K: int = 2
    tau: float = 1.0
    strategy: str = 'Random'
    skip_stride: int = 2
    joint_training: bool = True
    layer_reweighting: bool = True
    in_batch_negatives: bool = False
    literal_tau: bool = False
    layer_loss_weight: float = 1.0
    response_loss_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        name, stride = parse_strategy(self.strategy)
        self.strategy = name
        if stride is not None:
            self.skip_stride = stride
        if int(self.K) < 1:
            raise InvalidParameterError('K must be at least 1, got %r' % self.K)
        if not float(self.tau) > 0:
            raise InvalidParameterError('tau must be positive, got %r' % self.tau)
        if int(self.skip_stride) < 1:
            raise InvalidParameterError('Skip stride must be at least 1, got %r' % self.skip_stride)
        if self.layer_loss_weight < 0 or self.response_loss_weight < 0:
            raise InvalidParameterError('loss weights must be non-negative')
        self.K = int(self.K)
        self.tau = float(self.tau)
        self.skip_stride = int(self.skip_stride)


@dataclass
class LossBreakdown:
    """
    Batch-mean loss terms of one step.

    ``total = l_lyr + l_rep + l_tch + l_stu``; the terms already include their configured multipliers. For the FD
    baseline ``l_lyr`` holds the representation-matching term.
    """

    l_lyr: float = 0.0
    l_rep: float = 0.0
    l_tch: float = 0.0
    l_stu: float = 0.0
    total: float = 0.0
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    selection: LayerSelection = None
    objective: nc.DiffTensor = field(default=None, repr=False, compare=False)

    def as_row(self):
        return [self.l_lyr, self.l_rep, self.l_tch, self.l_stu, self.total]


# features

def _features_from_scores(scores, tau, literal_tau=False):
    if literal_tau:
        return nc.log_softmax(scores, axis=-1)
    return nc.log_softmax_with_temperature(scores, tau, axis=-1)


def layer_feature(model, i, example, tau, literal_tau=False):
    """
    Score distribution of one example's pool at layer ``i``.

    Returns
    -------
    LayerFeature
        ``softmax(layer_score(model, i, q, p) / tau)`` over the pool.

    Raises
    ------
    InvalidInputError
        If the pool is empty or ``i`` is out of range.
    """
    pool = example.pool
    if not pool:
        raise InvalidInputError('layer feature over an empty pool')
    scores = model.pool_scores([example.query], [pool], layers=[i])[i]
    return LayerFeature(i, nc.getitem(_features_from_scores(scores, tau, literal_tau), 0))


def batch_features(model, layers, examples, tau, in_batch=False, literal_tau=False, return_cls=False):
    """Layer features of a batch for several layers from one forward pass; also returns the raw scores."""
    out = model.pool_scores([ex.query for ex in examples], [ex.pool for ex in examples], layers=layers,
                            in_batch=in_batch, return_cls=return_cls)
    scores, cls = out if return_cls else (out, None)
    features = {i: LayerFeature(i, _features_from_scores(s, tau, literal_tau)) for i, s in scores.items()}
    return features, scores, cls


# selection

def select_layers(strategy, N, M, K, rng=None, skip_stride=2):
    """
    Choose K teacher layers and K student layers, both strictly increasing.

    Parameters
    ----------
    strategy : str
        ``Random``: independent uniform K-subsets of [1, N] and [1, M]. ``Last``: the last K layers of each model.
        ``Skip`` / ``Skip(k)``: teacher layers 1, 1 + k, ..., 1 + (K - 1) k paired with the last K student layers.
    N, M, K : int
        Teacher layers, student layers and pairs; ``N >= M >= K >= 1``.
    rng : np.random.Generator
        Required by Random.

    Raises
    ------
    InvalidParameterError
        If the sizes are not ordered or the Skip stride runs past layer N.
    """
    name, stride = parse_strategy(strategy)
    stride = skip_stride if stride is None else stride
    if not N >= M >= K >= 1:
        raise InvalidParameterError('layer selection needs N >= M >= K >= 1, got N=%r, M=%r, K=%r' % (N, M, K))
    if name == 'Random':
        if rng is None:
            raise InvalidParameterError('Random layer selection needs a random generator')
        a = np.sort(rng.choice(N, size=K, replace=False)) + 1
        b = np.sort(rng.choice(M, size=K, replace=False)) + 1
        return LayerSelection(tuple(a.tolist()), tuple(b.tolist()))
    student = tuple(range(M - K + 1, M + 1))
    if name == 'Last':
        return LayerSelection(tuple(range(N - K + 1, N + 1)), student)
    if stride < 1 or 1 + (K - 1) * stride > N:
        raise InvalidParameterError('Skip(%i) cannot place %i teacher layers within %i' % (stride, K, N))
    return LayerSelection(tuple(1 + j * stride for j in range(K)), student)


def selection_count(N, K):
    """Number of distinct Random teacher choices, C(N, K)."""
    return int(special.comb(N, K, exact=True))


# weights and losses

def layer_weights(teacher_features, y, tau):
    """
    Per-layer weights ``softmax_i(-KL(y || t_i) / tau)``, treated as constants.

    Parameters
    ----------
    teacher_features : list[LayerFeature] or list[array_like]
        K distributions over the same pool as ``y`` (a batch stacks along the leading axis).
    y : array_like
        Label distribution (one-hot on the gold passage).
    tau : float

    Returns
    -------
    np.ndarray
        Shape (K,) or (batch, K); each row sums to 1.

    Raises
    ------
    DomainError
        If a teacher distribution gives zero probability to a labelled passage.
    """
    if len(teacher_features) < 1:
        raise InvalidInputError('layer weights need at least one teacher feature')
    if not float(tau) > 0:
        raise InvalidParameterError('tau must be positive, got %r' % tau)
    y = np.asarray(y, dtype=np.float64)
    logits = []
    for feature in teacher_features:
        if isinstance(feature, LayerFeature):
            log_t = feature.log_dist.values
        else:
            t = np.asarray(feature, dtype=np.float64)
            if t.shape[-1] != y.shape[-1]:
                raise InvalidInputError('teacher feature and label cover different pools')
            if np.any((t <= 0) & (y > 0)):
                raise DomainError('a teacher layer assigns zero probability to the gold passage')
            with np.errstate(divide='ignore'):
                log_t = np.log(t)
        if log_t.shape[-1] != y.shape[-1]:
            raise InvalidInputError('teacher feature and label cover different pools')
        # -KL(y || t) = sum y log t - sum y log y
        with np.errstate(invalid='ignore'):
            cross = np.sum(np.where(y > 0, y * log_t, 0.0), axis=-1)
        neg_kl = cross - np.sum(special.xlogy(y, y), axis=-1)
        logits.append(neg_kl / float(tau))
    return functions.softmax(np.stack(logits, axis=-1), axis=-1)


def _kl(t_log, s_log, scale=1.0):
    kl = nc.kl_from_log_probs(t_log, s_log)
    return kl * scale if scale != 1.0 else kl


def layer_loss(selection, teacher_features, student_features, weights, tau=1.0, literal_tau=False):
    """
    Weighted sum over aligned pairs of ``KL(t_{a_i} || s_{b_i})``, averaged over a batch.

    Neither side is detached, so gradients reach the teacher features whenever they were built with gradients
    (joint training). The weights are constants.

    Parameters
    ----------
    selection : LayerSelection
    teacher_features, student_features : list[LayerFeature]
        Aligned with the selection.
    weights : array_like
        Shape (K,) or (batch, K).

    Raises
    ------
    InvalidInputError
        If the lists do not match the selection.
    """
    k = selection.k
    if len(teacher_features) != k or len(student_features) != k:
        raise InvalidInputError('expected %i teacher and student features, got %i and %i'
                                % (k, len(teacher_features), len(student_features)))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[-1] != k:
        raise InvalidInputError('expected %i layer weights, got %s' % (k, weights.shape))
    scale = 1.0 / tau if literal_tau else 1.0
    total = None
    for j, (t, s) in enumerate(zip(teacher_features, student_features)):
        if t.log_dist.shape != s.log_dist.shape:
            raise InvalidInputError('teacher and student features cover different pools')
        term = _kl(t.log_dist, s.log_dist, scale) * weights[..., j]
        total = term if total is None else total + term
    return nc.mean(total)


def response_loss(t_top, s_top, joint_training, tau=1.0, literal_tau=False):
    """
    Response term on the top layers: ``KL(t || s) + KL(s || t)`` with joint training, else ``KL(t || s)`` with the
    teacher detached. Batch mean.

    With joint training both KL directions route gradients into the teacher top layer; without it only the student
    receives them.
    """
    if t_top.log_dist.shape != s_top.log_dist.shape:
        raise InvalidInputError('teacher and student response features cover different pools')
    scale = 1.0 / tau if literal_tau else 1.0
    if joint_training:
        both = _kl(t_top.log_dist, s_top.log_dist, scale) + _kl(s_top.log_dist, t_top.log_dist, scale)
        return nc.mean(both)
    return nc.mean(_kl(t_top.log_dist.detach(), s_top.log_dist, scale))


def hard_loss(scores, positives):
    """
    ``-sum_{p in P+} log softmax(scores)[p]`` without temperature; batch mean for 2-D scores.

    Raises
    ------
    InvalidInputError
        If there is no positive.
    """
    positives = list(positives)
    if not positives:
        raise InvalidInputError('hard loss needs at least one positive')
    scores = nc.as_tensor(scores)
    log_p = nc.log_softmax(scores, axis=-1)
    index = np.asarray(positives) if log_p.ndim == 1 else (slice(None), np.asarray(positives))
    picked = nc.getitem(log_p, index)
    per_example = nc.tsum(picked, axis=-1) * -1.0
    return nc.mean(per_example) if per_example.ndim else per_example


def _check_sizes(teacher, student, config):
    n, m = teacher.effective_layers, student.effective_layers
    if not n >= m >= config.K:
        raise InvalidParameterError('distillation needs N >= M >= K, got N=%i, M=%i, K=%i' % (n, m, config.K))


def _as_batch(examples):
    if isinstance(examples, TrainExample):
        return [examples]
    examples = list(examples)
    if not examples:
        raise InvalidInputError('empty batch')
    return examples


def _positives(examples):
    count = {len(ex.positives) for ex in examples}
    if len(count) != 1:
        raise InvalidInputError('every example of a batch needs the same number of positives')
    return list(range(count.pop()))


def _in_batch(teacher, student, config):
    return bool(config.in_batch_negatives) and teacher.variant != 'CE' and student.variant != 'CE'


def _finish(l_lyr, l_rep, l_tch, l_stu, weights, selection):
    terms = [t for t in (l_lyr, l_rep, l_tch, l_stu) if t is not None]
    objective = terms[0]
    for t in terms[1:]:
        objective = objective + t
    value = lambda t: 0.0 if t is None else float(t.values)
    parts = [value(l_lyr), value(l_rep), value(l_tch), value(l_stu)]
    return LossBreakdown(*parts, total=float(objective.values), weights=weights, selection=selection,
                         objective=objective)


def _teacher_pass(teacher, layers, examples, config, in_batch, return_cls=False):
    if config.joint_training:
        return batch_features(teacher, layers, examples, config.tau, in_batch, config.literal_tau, return_cls)
    with nc.no_grad():
        return batch_features(teacher, layers, examples, config.tau, in_batch, config.literal_tau, return_cls)


def total_loss(teacher, student, examples, config, selection=None, weights=None, rng=None):
    """
    Layer, response and hard losses of one example or batch.

    With ``config.joint_training`` the teacher receives gradients from its own hard loss ``l_tch`` and from every
    distillation KL, the response term in both directions included. Only the layer weights are constants.
    Without joint training the teacher pass runs under :func:`leadkd.numcore.no_grad` and ``l_tch`` is 0, so the
    teacher gets no gradient at all.

    Parameters
    ----------
    teacher, student : RetrievalModel
    examples : TrainExample or list[TrainExample]
    config : DistillConfig
    selection : LayerSelection or None
        Fixed selection; drawn with :func:`select_layers` when None.
    weights : array_like or None
        Fixed layer weights; computed from the teacher features when None (re-weighting on) or 1/K.
    rng : np.random.Generator or None
        Source of Random selections.

    Returns
    -------
    LossBreakdown
        With ``objective`` holding the differentiable total.
    """
    examples = _as_batch(examples)
    _check_sizes(teacher, student, config)
    n_top, m_top = teacher.effective_layers, student.effective_layers
    if selection is None:
        selection = select_layers(config.strategy, n_top, m_top, config.K, rng, config.skip_stride)
    elif selection.k != config.K:
        raise InvalidInputError('selection has %i pairs, config asks for %i' % (selection.k, config.K))
    in_batch = _in_batch(teacher, student, config)
    positives = _positives(examples)

    use_layers = config.layer_loss_weight > 0
    t_layers = set([n_top]) | (set(selection.teacher_layers) if use_layers else set())
    s_layers = set([m_top]) | (set(selection.student_layers) if use_layers else set())
    t_feat, t_scores, _ = _teacher_pass(teacher, t_layers, examples, config, in_batch)
    s_feat, s_scores, _ = batch_features(student, s_layers, examples, config.tau, in_batch, config.literal_tau)

    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
    elif config.layer_reweighting and use_layers:
        y = np.zeros(t_scores[n_top].shape)
        y[:, 0] = 1.0
        weights = layer_weights([t_feat[a] for a in selection.teacher_layers], y, config.tau)
    else:
        weights = np.full(config.K, 1.0 / config.K)

    l_lyr = l_rep = l_tch = None
    if use_layers:
        l_lyr = layer_loss(selection, [t_feat[a] for a in selection.teacher_layers],
                           [s_feat[b] for b in selection.student_layers], weights, config.tau, config.literal_tau)
        l_lyr = l_lyr * config.layer_loss_weight
    if config.response_loss_weight > 0:
        l_rep = response_loss(t_feat[n_top], s_feat[m_top], config.joint_training, config.tau, config.literal_tau)
        l_rep = l_rep * config.response_loss_weight
    if config.joint_training:
        l_tch = hard_loss(t_scores[n_top], positives)
    l_stu = hard_loss(s_scores[m_top], positives)
    mean_weights = weights.mean(axis=0) if weights.ndim == 2 else weights
    return _finish(l_lyr, l_rep, l_tch, l_stu, mean_weights, selection)


def response_distillation_loss(teacher, student, examples, config):
    """RD baseline: response term plus hard losses, no layer terms."""
    examples = _as_batch(examples)
    in_batch = _in_batch(teacher, student, config)
    positives = _positives(examples)
    n_top, m_top = teacher.effective_layers, student.effective_layers
    t_feat, t_scores, _ = _teacher_pass(teacher, [n_top], examples, config, in_batch)
    s_feat, s_scores, _ = batch_features(student, [m_top], examples, config.tau, in_batch, config.literal_tau)
    l_rep = None
    if config.response_loss_weight > 0:
        l_rep = response_loss(t_feat[n_top], s_feat[m_top], config.joint_training, config.tau, config.literal_tau)
        l_rep = l_rep * config.response_loss_weight
    l_tch = hard_loss(t_scores[n_top], positives) if config.joint_training else None
    l_stu = hard_loss(s_scores[m_top], positives)
    return _finish(None, l_rep, l_tch, l_stu, np.zeros(0), None)


def _pair_representation(student_cls, size):
    """Student counterpart of a joint CLS vector: ``q_cls * p_cls`` for every pool entry."""
    q = student_cls['query']
    n = q.shape[0]
    q_rep = nc.reshape(q, (n, 1, q.shape[-1]))
    p_rep = nc.reshape(student_cls['passage'], (n, size, q.shape[-1]))
    return nc.reshape(q_rep * p_rep, (n * size, q.shape[-1]))


def feature_distillation_loss(teacher, student, examples, config, aligner):
    """
    FD baseline: mean squared error between the teacher's final representations and a learned linear map of the
    student's, plus hard losses.

    DE/CB teachers match query and passage CLS vectors; CE teachers match the joint CLS of every pair against the
    student's ``q_cls * p_cls``.
    """
    examples = _as_batch(examples)
    positives = _positives(examples)
    size = len(examples[0].pool)
    n_top, m_top = teacher.effective_layers, student.effective_layers
    _, t_scores, t_cls = _teacher_pass(teacher, [n_top], examples, config, False, return_cls=True)
    _, s_scores, s_cls = batch_features(student, [m_top], examples, config.tau, False, config.literal_tau,
                                        return_cls=True)
    if teacher.variant == 'CE':
        target = t_cls['joint']
        mapped = aligner(_pair_representation(s_cls, size))
    else:
        target = nc.concatenate([t_cls['query'], t_cls['passage']], axis=0)
        mapped = aligner(nc.concatenate([s_cls['query'], s_cls['passage']], axis=0))
    l_fd = None
    if config.layer_loss_weight > 0:
        l_fd = nc.mse(mapped, target) * config.layer_loss_weight
    l_tch = hard_loss(t_scores[n_top], positives) if config.joint_training else None
    l_stu = hard_loss(s_scores[m_top], positives)
    return _finish(l_fd, None, l_tch, l_stu, np.zeros(0), None)


def student_only_loss(student, examples):
    """Hard loss of the student alone."""
    examples = _as_batch(examples)
    top = student.effective_layers
    scores = student.pool_scores([ex.query for ex in examples], [ex.pool for ex in examples], layers=[top])[top]
    return _finish(None, None, None, hard_loss(scores, _positives(examples)), np.zeros(0), None)


def method_loss(method, teacher, student, examples, config, aligner=None, selection=None, weights=None, rng=None):
    """Dispatch to the objective of ``method`` (one of ``student_only``, ``RD``, ``FD``, ``LEAD``)."""
    if method == 'LEAD':
        return total_loss(teacher, student, examples, config, selection=selection, weights=weights, rng=rng)
    if method == 'RD':
        return response_distillation_loss(teacher, student, examples, config)
    if method == 'FD':
        if aligner is None:
            raise InvalidParameterError('the FD baseline needs an alignment map')
        return feature_distillation_loss(teacher, student, examples, config, aligner)
    if method == 'student_only':
        return student_only_loss(student, examples)
    raise InvalidParameterError('unknown distillation method %r; expected one of %s' % (method, METHODS))
