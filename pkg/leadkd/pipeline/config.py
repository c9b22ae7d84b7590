# Copyright 2026 The leadkd developers

"""
Experiment configuration.

Every option lives in one table (:func:`get_config_options`), default first. A configuration is resolved from, in
increasing priority: the defaults, a preset, a flat ``key = value`` file, ``LEADKD_<NAME>`` environment variables and
explicit overrides (the CLI flags).
"""

import os
from dataclasses import dataclass, field, fields, asdict

from ..distill import DistillConfig, METHODS, STRATEGIES, parse_strategy
from ..errors import ConfigurationError, FormatError, InvalidParameterError
from ..model import VARIANTS
from ..synthdata import CorpusSpec, SOURCES

ENV_PREFIX = 'LEADKD_'

PRESETS = ('desk', 'paper')


def parse_bool(text):
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('not a boolean: %r' % text)


def parse_int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(' ', '').split(',') if x]


def parse_chain(text):
    """``DE:4,CB:4,CE:4`` -> ``[('DE', 4), ('CB', 4), ('CE', 4)]``."""
    if isinstance(text, (list, tuple)):
        return [(str(v), int(n)) for v, n in text]
    steps = []
    for item in str(text).replace(' ', '').split(','):
        if not item:
            continue
        variant, _, layers = item.partition(':')
        steps.append((variant.upper(), int(layers)))
    return steps


CONVERTERS = {
    'int': int,
    'float': float,
    'bool': parse_bool,
    'str': str,
    'ints': parse_int_list,
    'chain': parse_chain,
}


def get_config_options():
    """
    Table of every experiment option.

    Returns
    -------
    list[dict]
        Entries with ``name``, ``description``, ``type`` (a key of ``CONVERTERS``) and ``values``; the first value
        is the default and, for choice options, the list holds every accepted value.
    """
    return [
        {'name': 'preset', 'description': 'Hyper-parameter preset; paper is recorded but never executed.',
         'type': 'str', 'values': list(PRESETS)},
        {'name': 'work_dir', 'description': 'Directory receiving corpora, checkpoints, traces and reports.',
         'type': 'str', 'values': ['runs']},
        {'name': 'corpus_dir', 'description': 'Read the corpus from this directory instead of generating it.',
         'type': 'str', 'values': ['']},
        # corpus
        {'name': 'num_topics', 'description': 'Synthetic topics.', 'type': 'int', 'values': [20]},
        {'name': 'passages_per_topic', 'description': 'Passages per topic.', 'type': 'int', 'values': [100]},
        {'name': 'queries_per_topic', 'description': 'Average queries per topic.', 'type': 'float',
         'values': [12.5]},
        {'name': 'vocab_size', 'description': 'Vocabulary size including reserved ids.', 'type': 'int',
         'values': [512]},
        {'name': 'query_len', 'description': 'Generated query length.', 'type': 'int', 'values': [8]},
        {'name': 'passage_len', 'description': 'Generated passage length.', 'type': 'int', 'values': [24]},
        {'name': 'noise_rate', 'description': 'Share of off-topic tokens.', 'type': 'float', 'values': [0.1]},
        {'name': 'corpus_seed', 'description': 'Seed of corpus generation.', 'type': 'int', 'values': [0]},
        {'name': 'eval_every', 'description': 'Hold out every n-th generated query.', 'type': 'int', 'values': [5]},
        # models
        {'name': 'hidden_dim', 'description': 'Encoder width.', 'type': 'int', 'values': [32]},
        {'name': 'ffn_dim', 'description': 'Feed-forward width.', 'type': 'int', 'values': [64]},
        {'name': 'max_query_len', 'description': 'Longest accepted query.', 'type': 'int', 'values': [16]},
        {'name': 'max_passage_len', 'description': 'Longest accepted passage.', 'type': 'int', 'values': [32]},
        {'name': 'append_linear', 'description': 'Append a linear projection layer to teacher and student.',
         'type': 'bool', 'values': [False, True]},
        {'name': 'projection_dim', 'description': 'Output width of the appended projection (0: hidden_dim).',
         'type': 'int', 'values': [0]},
        {'name': 'cb_cls_only', 'description': 'Score CB layers by CLS inner product instead of max-sim.',
         'type': 'bool', 'values': [False, True]},
        {'name': 'teacher_variant', 'description': 'Teacher architecture.', 'type': 'str',
         'values': ['CB', 'DE', 'CE']},
        {'name': 'teacher_layers', 'description': 'Teacher depth N.', 'type': 'int', 'values': [4]},
        {'name': 'student_variant', 'description': 'Student architecture.', 'type': 'str',
         'values': ['DE', 'CB', 'CE']},
        {'name': 'student_layers', 'description': 'Student depth M.', 'type': 'int', 'values': [2]},
        # distillation
        {'name': 'method', 'description': 'Distillation method.', 'type': 'str',
         'values': ['LEAD', 'RD', 'FD', 'student_only']},
        {'name': 'K', 'description': 'Aligned layer pairs.', 'type': 'int', 'values': [2]},
        {'name': 'tau', 'description': 'Temperature.', 'type': 'float', 'values': [1.0]},
        {'name': 'strategy', 'description': 'Layer selection strategy.', 'type': 'str', 'values': list(STRATEGIES)},
        {'name': 'skip_stride', 'description': 'Teacher stride of the Skip strategy.', 'type': 'int', 'values': [2]},
        {'name': 'joint_training', 'description': 'Train teacher and student jointly.', 'type': 'bool',
         'values': [True, False]},
        {'name': 'layer_reweighting', 'description': 'Weight layer pairs by teacher informativeness.',
         'type': 'bool', 'values': [True, False]},
        {'name': 'in_batch_negatives', 'description': 'Share passages across the batch (DE/CB pairs).',
         'type': 'bool', 'values': [False, True]},
        {'name': 'literal_tau', 'description': 'Scale KL terms by 1/tau instead of tempering the softmax.',
         'type': 'bool', 'values': [False, True]},
        {'name': 'layer_loss_weight', 'description': 'Multiplier of the layer (or FD) term.', 'type': 'float',
         'values': [1.0]},
        {'name': 'response_loss_weight', 'description': 'Multiplier of the response term.', 'type': 'float',
         'values': [1.0]},
        # optimisation
        {'name': 'lr', 'description': 'Peak learning rate.', 'type': 'float', 'values': [1e-3]},
        {'name': 'distill_steps', 'description': 'Distillation steps.', 'type': 'int', 'values': [500]},
        {'name': 'warmup_steps', 'description': 'Steps of each warm-up training stage.', 'type': 'int',
         'values': [200]},
        {'name': 'batch_size', 'description': 'Examples per step.', 'type': 'int', 'values': [8]},
        {'name': 'negative_size', 'description': 'Negatives per example.', 'type': 'int', 'values': [4]},
        {'name': 'warmup_proportion', 'description': 'Share of steps with a rising learning rate.',
         'type': 'float', 'values': [0.1]},
        {'name': 'weight_decay', 'description': 'Decoupled weight decay.', 'type': 'float', 'values': [0.01]},
        {'name': 'mine_top_n', 'description': 'Hard negatives mined per query.', 'type': 'int', 'values': [20]},
        {'name': 'negative_source', 'description': 'Negatives of the distillation stage.', 'type': 'str',
         'values': ['mined', 'random']},
        # evaluation and orchestration
        {'name': 'eval_ks', 'description': 'Depths of MAP@k and R@k.', 'type': 'ints', 'values': [[10, 100]]},
        {'name': 'rerank_depth', 'description': 'First-stage depth reranked by CB/CE models.', 'type': 'int',
         'values': [50]},
        {'name': 'seeds', 'description': 'Seeds of repeated runs.', 'type': 'ints', 'values': [[0, 1, 2]]},
        {'name': 'workers', 'description': 'Parallel processes over seeds.', 'type': 'int', 'values': [3]},
        {'name': 'chain', 'description': 'Teachers of continual distillation, e.g. DE:4,CB:4,CE:4.',
         'type': 'chain', 'values': [[('DE', 4), ('CB', 4), ('CE', 4)]]},
        {'name': 'sweep_ks', 'description': 'K values of the K sweep (empty: 1..M).', 'type': 'ints',
         'values': [[]]},
        {'name': 'progress', 'description': 'Show progress bars.', 'type': 'bool', 'values': [True, False]},
    ]


OPTIONS = {o['name']: o for o in get_config_options()}

CHOICES = {'preset': PRESETS, 'teacher_variant': VARIANTS, 'student_variant': VARIANTS, 'method': METHODS,
           'negative_source': SOURCES}

PAPER_PRESET = {
    'max_query_len': 32,
    'max_passage_len': 144,
    'hidden_dim': 768,
    'ffn_dim': 3072,
    'vocab_size': 30522,
    'teacher_layers': 12,
    'student_layers': 6,
    'K': 6,
    'tau': 1.0,
    'warmup_proportion': 0.1,
    'lr': 5e-5,
    'batch_size': 80,
    'negative_size': 16,
    'distill_steps': 50000,
    'mine_top_n': 100,
    'rerank_depth': 100,
    'eval_ks': [10, 1000],
    'chain': [('DE', 12), ('CB', 12), ('CE', 12)],
}

PAPER_CE_PRESET = {'batch_size': 16, 'negative_size': 15}


def _default(name):
    value = OPTIONS[name]['values'][0]
    return list(value) if isinstance(value, list) else value


def _list_default(name):
    return field(default_factory=lambda: _default(name))


@dataclass
class ExperimentConfig:
    """Resolved experiment options; see :func:`get_config_options` for their meaning."""

    preset: str = _default('preset')
    work_dir: str = _default('work_dir')
    corpus_dir: str = _default('corpus_dir')
    num_topics: int = _default('num_topics')
    passages_per_topic: int = _default('passages_per_topic')
    queries_per_topic: float = _default('queries_per_topic')
    vocab_size: int = _default('vocab_size')
    query_len: int = _default('query_len')
    passage_len: int = _default('passage_len')
    noise_rate: float = _default('noise_rate')
    corpus_seed: int = _default('corpus_seed')
    eval_every: int = _default('eval_every')
    hidden_dim: int = _default('hidden_dim')
    ffn_dim: int = _default('ffn_dim')
    max_query_len: int = _default('max_query_len')
    max_passage_len: int = _default('max_passage_len')
    append_linear: bool = _default('append_linear')
    projection_dim: int = _default('projection_dim')
    cb_cls_only: bool = _default('cb_cls_only')
    teacher_variant: str = _default('teacher_variant')
    teacher_layers: int = _default('teacher_layers')
    student_variant: str = _default('student_variant')
    student_layers: int = _default('student_layers')
    method: str = _default('method')
    K: int = _default('K')
    tau: float = _default('tau')
    strategy: str = _default('strategy')
    skip_stride: int = _default('skip_stride')
    joint_training: bool = _default('joint_training')
    layer_reweighting: bool = _default('layer_reweighting')
    in_batch_negatives: bool = _default('in_batch_negatives')
    literal_tau: bool = _default('literal_tau')
    layer_loss_weight: float = _default('layer_loss_weight')
    response_loss_weight: float = _default('response_loss_weight')
    lr: float = _default('lr')
    distill_steps: int = _default('distill_steps')
    warmup_steps: int = _default('warmup_steps')
    batch_size: int = _default('batch_size')
    negative_size: int = _default('negative_size')
    warmup_proportion: float = _default('warmup_proportion')
    weight_decay: float = _default('weight_decay')
    mine_top_n: int = _default('mine_top_n')
    negative_source: str = _default('negative_source')
    eval_ks: list = _list_default('eval_ks')
    rerank_depth: int = _default('rerank_depth')
    seeds: list = _list_default('seeds')
    workers: int = _default('workers')
    chain: list = _list_default('chain')
    sweep_ks: list = _list_default('sweep_ks')
    progress: bool = _default('progress')

    def validate(self):
        """
        Check choices and the layer ordering N >= M >= K.

        Raises
        ------
        ConfigurationError
        """
        for name, allowed in CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ConfigurationError('%s must be one of %s, got %r' % (name, allowed, getattr(self, name)))
        try:
            self.strategy, stride = parse_strategy(self.strategy)
        except InvalidParameterError as e:
            raise ConfigurationError(str(e))
        if stride is not None:
            self.skip_stride = stride
        if not self.teacher_layers >= self.student_layers >= self.K >= 1:
            raise ConfigurationError('need teacher_layers >= student_layers >= K >= 1, got %i, %i, %i'
                                     % (self.teacher_layers, self.student_layers, self.K))
        if self.append_linear and self.projection_dim not in (0, self.hidden_dim) and 'CE' in self.variants():
            raise ConfigurationError('a CE projection must keep hidden_dim')
        for name in ('distill_steps', 'warmup_steps', 'batch_size', 'negative_size', 'mine_top_n', 'rerank_depth',
                     'workers', 'hidden_dim'):
            if getattr(self, name) < 1:
                raise ConfigurationError('%s must be positive, got %r' % (name, getattr(self, name)))
        if self.query_len > self.max_query_len or self.passage_len > self.max_passage_len:
            raise ConfigurationError('generated sequences exceed max_query_len or max_passage_len')
        if not self.eval_ks or min(self.eval_ks) < 1:
            raise ConfigurationError('eval_ks must list positive depths')
        if not self.seeds:
            raise ConfigurationError('at least one seed is needed')
        for variant, layers in self.chain:
            if variant not in VARIANTS or not layers >= self.student_layers:
                raise ConfigurationError('chain step %s:%i needs a known variant and at least %i layers'
                                         % (variant, layers, self.student_layers))
        for k in self.sweep_ks:
            if not 1 <= k <= self.student_layers:
                raise ConfigurationError('sweep K=%i outside [1, %i]' % (k, self.student_layers))
        return self

    def variants(self):
        return {self.teacher_variant, self.student_variant} | {v for v, _ in self.chain}

    @property
    def projection(self):
        """Projection width handed to the models (None without an appended layer)."""
        if not self.append_linear:
            return None
        return self.projection_dim or self.hidden_dim

    def corpus_spec(self):
        return CorpusSpec(num_topics=self.num_topics, passages_per_topic=self.passages_per_topic,
                          queries_per_topic=self.queries_per_topic, vocab_size=self.vocab_size,
                          query_len=self.query_len, passage_len=self.passage_len, noise_rate=self.noise_rate,
                          seed=self.corpus_seed, eval_every=self.eval_every)

    def distill_config(self, seed=0, **overrides):
        values = dict(K=self.K, tau=self.tau, strategy=self.strategy, skip_stride=self.skip_stride,
                      joint_training=self.joint_training, layer_reweighting=self.layer_reweighting,
                      in_batch_negatives=self.in_batch_negatives, literal_tau=self.literal_tau,
                      layer_loss_weight=self.layer_loss_weight, response_loss_weight=self.response_loss_weight,
                      seed=seed)
        values.update(overrides)
        return DistillConfig(**values)

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return ExperimentConfig(**values)

    def to_lines(self):
        """``key = value`` lines readable by :func:`read_config_file`."""
        return ['%s = %s' % (f.name, format_value(getattr(self, f.name))) for f in fields(self)]


def format_value(value):
    if isinstance(value, list):
        return ','.join('%s:%i' % v if isinstance(v, tuple) else str(v) for v in value)
    return str(value)


def convert(name, value):
    """
    Convert a raw option value with the option's type.

    Raises
    ------
    ConfigurationError
        For unknown keys and values the type rejects.
    """
    if name not in OPTIONS:
        raise ConfigurationError('unknown configuration key %r' % name)
    kind = OPTIONS[name]['type']
    try:
        return CONVERTERS[kind](value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError('invalid value %r for %s (%s): %s' % (value, name, kind, e))


def read_config_file(path):
    """
    Raw ``key -> value`` strings of a flat config file; ``#`` starts a comment.

    Raises
    ------
    FormatError
        On a line without ``=``.
    ConfigurationError
        On an unknown key.
    """
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition('=')
            if not eq:
                raise FormatError(path, lineno, 'expected "key = value"')
            key = key.strip()
            if key not in OPTIONS:
                raise ConfigurationError('%s:%i: unknown configuration key %r' % (path, lineno, key))
            values[key] = value.strip()
    return values


def env_overrides(environ=None):
    """Options set through ``LEADKD_<NAME>`` variables (names are matched case-insensitively)."""
    environ = os.environ if environ is None else environ
    by_upper = {name.upper(): name for name in OPTIONS}
    out = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = by_upper.get(key[len(ENV_PREFIX):].upper())
        if name is None:
            raise ConfigurationError('unknown configuration variable %s' % key)
        out[name] = value
    return out


def load_config(path=None, overrides=None, environ=None, preset=None):
    """
    Resolve a configuration from defaults, preset, file, environment and overrides.

    Parameters
    ----------
    path : str or None
        Flat config file.
    overrides : dict or None
        Highest-priority values (raw strings or typed), e.g. CLI flags.
    environ : mapping or None
        Environment to read ``LEADKD_*`` variables from; ``os.environ`` by default.
    preset : str or None
        Preset name; otherwise the ``preset`` option of the merged sources.

    Returns
    -------
    ExperimentConfig
    """
    layers = [read_config_file(path) if path else {}, env_overrides(environ),
              {k: v for k, v in (overrides or {}).items() if v is not None}]
    explicit = {}
    for layer in layers:
        for name, value in layer.items():
            explicit[name] = convert(name, value)
    preset = preset or explicit.get('preset', _default('preset'))
    if preset not in PRESETS:
        raise ConfigurationError('unknown preset %r; expected one of %s' % (preset, PRESETS))
    values = {}
    if preset == 'paper':
        values.update(PAPER_PRESET)
        if explicit.get('teacher_variant') == 'CE':
            values.update(PAPER_CE_PRESET)
    values.update(explicit)
    values['preset'] = preset
    return ExperimentConfig(**values).validate()


def write_config(config, path):
    with open(path, 'w') as fh:
        fh.write('\n'.join(config.to_lines()) + '\n')
