# Copyright 2026 The leadkd developers

"""Result rows and the report tables aggregated from them."""

import csv
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, InvalidInputError

REPORT_COLUMNS = ['method', 'setting', 'model', 'metric', 'value', 'seed']
SUMMARY_COLUMNS = ['setting', 'method', 'model', 'metric', 'mean', 'std', 'n']

TSV_NAME = 'report.tsv'
SUMMARY_NAME = 'summary.tsv'
MARKDOWN_NAME = 'report.md'


@dataclass(frozen=True)
class ReportRow:
    """
    One metric value of one run.

    Attributes
    ----------
    method : str
        E.g. ``LEAD``, ``RD``, ``LEAD w/o reweighting``.
    setting : str
        Teacher and student, e.g. ``4CB -> 2DE``.
    model : str
        Evaluated model: ``student``, ``teacher-before`` or ``teacher-after``.
    metric : str
        E.g. ``MRR@10``.
    value : float
        In [0, 1].
    seed : int
    """

    method: str
    setting: str
    model: str
    metric: str
    value: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidInputError('metric value %r of %s/%s outside [0, 1]' % (self.value, self.method, self.metric))


def rows_from_metrics(metrics, method, setting, model, seed):
    return [ReportRow(method, setting, model, name, float(value), int(seed)) for name, value in metrics.items()]


def summarise(rows):
    """
    Aggregate rows over seeds.

    Returns
    -------
    OrderedDict[(setting, method, model, metric), dict]
        ``mean``, ``std`` (sample standard deviation, NaN for one seed) and ``n`` per group, groups in order of
        first appearance.
    """
    groups = OrderedDict()
    for r in rows:
        groups.setdefault((r.setting, r.method, r.model, r.metric), []).append(r.value)
    out = OrderedDict()
    for key, values in groups.items():
        values = np.asarray(values, dtype=np.float64)
        std = float(np.std(values, ddof=1)) if len(values) > 1 else float('nan')
        out[key] = {'mean': float(np.mean(values)), 'std': std, 'n': len(values)}
    return out


def _sorted(rows):
    """Rows grouped by setting, method, model and metric in first-appearance order, seeds ascending."""
    order = OrderedDict()
    for r in rows:
        order.setdefault((r.setting, r.method, r.model, r.metric), len(order))
    return sorted(rows, key=lambda r: (order[(r.setting, r.method, r.model, r.metric)], r.seed))


def write_tsv(rows, path):
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh, delimiter='\t', lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)
        for r in _sorted(rows):
            writer.writerow([r.method, r.setting, r.model, r.metric, repr(float(r.value)), r.seed])


def write_summary_tsv(rows, path):
    """Mean, sample standard deviation and seed count of every group of ``rows``; ``std`` is ``nan`` for one seed."""
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh, delimiter='\t', lineterminator='\n')
        writer.writerow(SUMMARY_COLUMNS)
        for (setting, method, model, metric), stats in summarise(_sorted(rows)).items():
            writer.writerow([setting, method, model, metric, repr(stats['mean']), repr(stats['std']), stats['n']])


def read_report(path):
    """
    Rows of a report TSV.

    Raises
    ------
    FormatError
        On a wrong header or a malformed row.
    """
    rows = []
    with open(path, newline='') as fh:
        reader = csv.reader(fh, delimiter='\t')
        if next(reader, None) != REPORT_COLUMNS:
            raise FormatError(path, 1, 'expected report header %s' % '\t'.join(REPORT_COLUMNS))
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != len(REPORT_COLUMNS):
                raise FormatError(path, lineno, 'expected %i fields, got %i' % (len(REPORT_COLUMNS), len(fields)))
            try:
                rows.append(ReportRow(fields[0], fields[1], fields[2], fields[3], float(fields[4]), int(fields[5])))
            except (ValueError, InvalidInputError) as e:
                raise FormatError(path, lineno, str(e))
    return rows


def _cell(stats):
    if stats['n'] > 1:
        return '%.4f ± %.4f' % (stats['mean'], stats['std'])
    return '%.4f' % stats['mean']


def format_markdown(rows):
    """One table per setting: a line per (method, model), a column per metric, cells ``mean ± std``."""
    lines = ['# leadkd report', '']
    summary = summarise(_sorted(rows))
    if not summary:
        lines += ['| method | model |', '|---|---|']
        return '\n'.join(lines) + '\n'
    settings = OrderedDict()
    for (setting, method, model, metric), stats in summary.items():
        table = settings.setdefault(setting, {'metrics': [], 'lines': OrderedDict()})
        if metric not in table['metrics']:
            table['metrics'].append(metric)
        table['lines'].setdefault((method, model), {})[metric] = stats
    for setting, table in settings.items():
        metrics = table['metrics']
        lines.append('## %s' % setting)
        lines.append('')
        lines.append('| method | model | %s |' % ' | '.join(metrics))
        lines.append('|---|---|' + '---|' * len(metrics))
        for (method, model), cells in table['lines'].items():
            values = [_cell(cells[m]) if m in cells else '' for m in metrics]
            lines.append('| %s | %s | %s |' % (method, model, ' | '.join(values)))
        lines.append('')
    return '\n'.join(lines)


def emit_report(rows, path):
    """
    Write ``report.tsv`` (one row per seed), ``summary.tsv`` (mean, std and n over seeds) and ``report.md`` into
    directory ``path``.

    Returns
    -------
    tuple[str, str, str]
        Paths of the per-seed TSV, the summary TSV and the markdown file.
    """
    os.makedirs(path, exist_ok=True)
    tsv = os.path.join(path, TSV_NAME)
    summary = os.path.join(path, SUMMARY_NAME)
    md = os.path.join(path, MARKDOWN_NAME)
    write_tsv(rows, tsv)
    write_summary_tsv(rows, summary)
    with open(md, 'w', encoding='utf-8') as fh:
        fh.write(format_markdown(rows))
    return tsv, summary, md
