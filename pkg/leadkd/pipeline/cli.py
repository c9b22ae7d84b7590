# Copyright 2026 The leadkd developers

"""
Command line interface, installed as ``leadkd``.

Every option of :func:`leadkd.pipeline.config.get_config_options` is also a flag (``--distill-steps 200``); flags
override ``LEADKD_*`` environment variables, which override the ``--config`` file.
"""

import argparse
import glob
import logging
import os
import sys

from ..errors import LeadError
from ..model import RetrievalModel
from ..synthdata import write_corpus
from ..retrieval import evaluate_model, write_run
from .config import get_config_options, load_config, write_config
from .experiment import Experiment, check_orderings, run_seeds
from .report import emit_report, read_report, write_tsv

logger = logging.getLogger('leadkd')

RESULTS_DIR = 'results'
REPORT_DIR = 'report'


def _add_option_flags(parser):
    group = parser.add_argument_group('experiment options')
    for option in get_config_options():
        default = option['values'][0]
        group.add_argument('--' + option['name'].replace('_', '-'), dest=option['name'], default=None,
                           metavar=option['type'].upper(), help='%s (default: %s)' % (option['description'], default))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat "key = value" configuration file')
    common.add_argument('--seed', type=int, action='append', dest='seed_list',
                        help='run this seed only; repeat for several')
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    _add_option_flags(common)

    parser = argparse.ArgumentParser(prog='leadkd', description='Layer-wise distillation for dense retrieval.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('generate-corpus', parents=[common], help='generate and write the synthetic corpus')
    p.add_argument('--out', help='target directory (default: <work_dir>/corpus)')
    p = sub.add_parser('config', parents=[common], help='print the resolved configuration')
    p.add_argument('--out', help='also write it to this file')
    sub.add_parser('warmup', parents=[common], help='train retriever, teacher and student with their hard loss')
    sub.add_parser('mine', parents=[common], help='mine hard negatives again with the saved retriever')
    sub.add_parser('distill', parents=[common], help='distil the warm teacher into the warm student')
    sub.add_parser('chain', parents=[common], help='distil the chain teachers one after another')
    sub.add_parser('sweep-k', parents=[common], help='LEAD runs over the number of aligned layers')
    p = sub.add_parser('evaluate', parents=[common], help='evaluate a checkpoint on the held-out queries')
    p.add_argument('--checkpoint', required=True, help='model checkpoint (.npz)')
    p.add_argument('--retriever', help='first-stage DE checkpoint for CB/CE models (default: the seed\'s warm-up)')
    p.add_argument('--run', help='write the TREC run to this file')
    sub.add_parser('report', parents=[common],
                   help='aggregate <work_dir>/results into report.tsv, summary.tsv and report.md')
    sub.add_parser('compare', parents=[common], help='warm-up, student_only, RD, FD and LEAD, report and orderings')
    sub.add_parser('reproduce', parents=[common], help='warm-up, method and ablation grid, chain and report')
    return parser


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(message)s', datefmt='%H:%M:%S')
    logging.captureWarnings(True)


def resolve_config(args):
    overrides = {o['name']: getattr(args, o['name']) for o in get_config_options()}
    if args.seed_list:
        overrides['seeds'] = args.seed_list
    return load_config(args.config, overrides=overrides)


def results_path(config, name):
    directory = os.path.join(config.work_dir, RESULTS_DIR)
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, name + '.tsv')


def _save_rows(config, name, rows):
    path = results_path(config, name)
    write_tsv(rows, path)
    logger.info('leadkd: %i rows written to %s.', len(rows), path)
    return path


def cmd_generate_corpus(config, args):
    corpus = Experiment(config).corpus
    out = args.out or os.path.join(config.work_dir, 'corpus')
    write_corpus(corpus, out)
    print('%s -> %s' % (corpus.summary(), out))


def cmd_config(config, args):
    if args.out:
        write_config(config, args.out)
    print('\n'.join(config.to_lines()))


def cmd_mine(config, args):
    experiment = Experiment(config)
    for seed in config.seeds:
        mined = experiment.remine(seed)
        print('seed %i: %i queries, %i negatives' % (seed, len(mined), sum(len(v) for v in mined.values())))


def cmd_task(task, name):
    def run(config, args):
        _save_rows(config, name(config), run_seeds(config, task))
    return run


def cmd_evaluate(config, args):
    experiment = Experiment(config)
    model = RetrievalModel.load(args.checkpoint)
    retriever = None
    if model.variant != 'DE':
        if args.retriever:
            retriever = RetrievalModel.load(args.retriever)
        else:
            retriever = experiment.load_warmup(config.seeds[0]).retriever
    corpus = experiment.corpus
    metrics, run = evaluate_model(model, corpus.passages, corpus.eval_queries, corpus.qrels, ks=config.eval_ks,
                                  retriever=retriever, rerank_depth=config.rerank_depth, progress=config.progress)
    if args.run:
        write_run(run, args.run, tag=model.label())
    for name, value in metrics.items():
        print('%s\t%.6f' % (name, value))


def cmd_report(config, args):
    files = sorted(glob.glob(os.path.join(config.work_dir, RESULTS_DIR, '*.tsv')))
    if not files:
        raise LeadError('no result files under %s' % os.path.join(config.work_dir, RESULTS_DIR))
    rows = [row for f in files for row in read_report(f)]
    tsv, summary, md = emit_report(rows, os.path.join(config.work_dir, REPORT_DIR))
    print('%i rows from %i files -> %s, %s, %s' % (len(rows), len(files), tsv, summary, md))


def cmd_graded(task):
    def run(config, args):
        rows = run_seeds(config, task)
        _save_rows(config, task, rows)
        _print_graded(config, rows)
    return run


def _print_graded(config, rows):
    _, _, md = emit_report(rows, os.path.join(config.work_dir, REPORT_DIR))
    with open(md, encoding='utf-8') as fh:
        print(fh.read())
    for claim, held in check_orderings(rows):
        print('%-45s %s' % (claim, {True: 'held', False: 'did not hold', None: 'not run'}[held]))


COMMANDS = {
    'generate-corpus': cmd_generate_corpus,
    'config': cmd_config,
    'warmup': cmd_task('warmup', lambda c: 'warmup'),
    'mine': cmd_mine,
    'distill': cmd_task('distill', lambda c: 'distill-%s' % c.method),
    'chain': cmd_task('chain', lambda c: 'chain'),
    'sweep-k': cmd_task('sweep-k', lambda c: 'sweep-k'),
    'evaluate': cmd_evaluate,
    'report': cmd_report,
    'compare': cmd_graded('compare'),
    'reproduce': cmd_graded('reproduce'),
}


def main(argv=None):
    """
    Run one subcommand.

    Returns
    -------
    int
        0 on success, 1 on a leadkd error (message on stderr), 2 on any other failure.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args)
    try:
        config = resolve_config(args)
        COMMANDS[args.command](config, args)
    except LeadError as e:
        print('leadkd: error: %s' % e, file=sys.stderr)
        return 1
    except Exception:
        logger.exception('leadkd: %s failed', args.command)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
