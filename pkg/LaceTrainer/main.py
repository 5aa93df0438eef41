import argparse
import json
import logging
import os
import sys
from collections import OrderedDict
from pathlib import Path

from LaceTrainer import lace, storage
from LaceTrainer.constants import __version__
from LaceTrainer.corpus import (demote_labels, dump_corpus, example_to_json, load_corpus, load_embeddings,
                                load_examples)
from LaceTrainer.errors import ConfigError, CorpusError, LaceError
from LaceTrainer.i18n import _
from LaceTrainer.metrics import evaluate, metrics_json, predict_hard, summary_set
from LaceTrainer.settings import as_dict, check_output, check_paths, load_settings
from LaceTrainer.synthetic import generate_synthetic

logger = logging.getLogger(__name__)

DEFAULT_CHECKPOINT = 'model.json'
DEFAULT_REPORT = 'report.json'


def init_log(debug=False):
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')


def error(err):
    logger.error(_('{kind}: {message}').format(kind=type(err).__name__, message=err))
    return err.exit_code


class ArgumentParser(argparse.ArgumentParser):
    # Usage problems exit with the config status, not argparse's 2 (which means bad data here)
    def error(self, message):
        raise ConfigError(message)


def emit(obj, out=None):
    text = json.dumps(obj, indent=2, ensure_ascii=False)
    print(text)
    if out:
        storage.write_json(out, obj)


def run_config(args):
    overrides = dict(
        lambda_=args.lambda_, sup_threshold=args.sup_threshold, learning_rate=args.lr, epochs=args.epochs,
        seed=args.seed, hidden_size=args.hidden, embedding_dim=args.emb_dim, grad_clip=args.grad_clip,
        consistency_enabled=False if args.no_consistency else None, adaptive=False if args.no_adaptive else None,
        label_fraction=args.label_fraction, use_unlabeled=True if args.use_unlabeled else None,
        trainable_embeddings=args.trainable_embeddings, train=args.train, dev=args.dev, test=args.test,
        embeddings=args.embeddings, checkpoint=args.checkpoint, report=args.report, runs_db=args.runs_db)
    return load_settings(args.config, overrides)


def _training_inputs(cfg):
    check_paths(cfg, required=('train',))
    groups = load_corpus(cfg.train)
    if cfg.label_fraction < 1.0:
        groups = demote_labels(groups, cfg.label_fraction, cfg.use_unlabeled, cfg.seed)
    dev = load_corpus(cfg.dev) if cfg.dev else []
    table = load_embeddings(cfg.embeddings) if cfg.embeddings else None
    if table is not None and table.dimension != cfg.embedding_dim:
        logger.warning('Embedding file has %dD vectors; using that instead of embedding_dim=%d', table.dimension,
                       cfg.embedding_dim)
        cfg = cfg._replace(embedding_dim=table.dimension)
    return cfg, groups, dev, table


def cmd_train(args):
    cfg = run_config(args)
    cfg = cfg._replace(checkpoint=cfg.checkpoint or DEFAULT_CHECKPOINT, report=cfg.report or DEFAULT_REPORT)
    cfg, groups, dev, table = _training_inputs(cfg)
    params, report = lace.train(groups, cfg.training(), dev, table, cfg.trainable_embeddings)
    report['config'] = as_dict(cfg)
    storage.save_checkpoint(params, cfg.checkpoint)
    storage.write_json(cfg.report, report)
    if cfg.runs_db:
        storage.RunRegistry(cfg.runs_db).record(report)
    logger.info(_('Best epoch {epoch} with F1 {f1:.4f}; checkpoint written to {path}').format(
        epoch=report['best_epoch'], f1=report['best_dev_f1'], path=cfg.checkpoint))
    return 0


def cmd_ablate(args):
    cfg = run_config(args)
    cfg, groups, dev, table = _training_inputs(cfg._replace(report=cfg.report or DEFAULT_REPORT))
    test = load_corpus(cfg.test) if cfg.test else []
    arms = lace.run_ablation(groups, cfg.training(), dev, test, table, cfg.trainable_embeddings)
    emit(OrderedDict([('config', as_dict(cfg)), ('arms', arms)]), cfg.report)
    return 0


def _load_model(args):
    if not Path(args.checkpoint).is_file():
        raise ConfigError(_('checkpoint not found: {path}').format(path=args.checkpoint))
    return storage.load_checkpoint(args.checkpoint, hidden_size=args.hidden, embedding_dim=args.emb_dim)


def result_keys(paths):
    """File stems when they are unique, otherwise the paths as given."""
    stems = [Path(path).stem for path in paths]
    return stems if len(set(stems)) == len(stems) else [str(path) for path in paths]


def cmd_eval(args):
    for path in args.corpus:
        if not Path(path).is_file():
            raise ConfigError(_('corpus not found: {path}').format(path=path))
    if args.out:
        check_output('out', args.out)
    params = _load_model(args)
    results = OrderedDict()
    for key, path in zip(result_keys(args.corpus), args.corpus):
        groups = load_corpus(path)
        if not groups:
            raise CorpusError(_('corpus {path} is empty').format(path=path))
        results[key] = metrics_json(evaluate(params, groups))
    emit(next(iter(results.values())) if len(args.corpus) == 1 else results, args.out)
    return 0


def cmd_predict(args):
    if args.out:
        check_output('out', args.out)
    params = _load_model(args)
    if not Path(args.corpus).is_file():
        raise ConfigError(_('corpus not found: {path}').format(path=args.corpus))
    examples = load_examples(args.corpus)
    if not examples:
        raise CorpusError(_('corpus {path} is empty').format(path=args.corpus))
    # One paragraph at a time: nothing about its topic or siblings is used
    preds = predict_hard(params, examples)
    rows = []
    for example in examples:
        grid = preds[example.id]
        row = example_to_json(example, gold=grid)
        row['summaries'] = OrderedDict(
            (entity.name, [label.name for label in sorted(summary_set(grid, j))])
            for j, entity in enumerate(example.entities))
        rows.append(row)
    if args.out:
        storage.write_jsonl(args.out, rows)
    else:
        for row in rows:
            print(storage.dumps_line(row))
    return 0


def cmd_gen(args):
    cfg = load_settings(overrides=dict(seed=args.seed))
    if not 0.0 <= args.noise <= 1.0:
        raise ConfigError(_('noise must lie in [0, 1]'))
    check_output('out', args.out, directory=True)
    sizes = OrderedDict([('train', args.topics), ('dev', args.dev_topics), ('test', args.test_topics)])
    groups = generate_synthetic(cfg.seed, sum(sizes.values()), args.paragraphs, args.noise)
    out, start = Path(args.out), 0
    for split, count in sizes.items():
        dump_corpus(groups[start:start + count], out / '{}.jsonl'.format(split))
        start += count
    logger.info(_('Wrote {splits} to {out}').format(splits=', '.join(sizes), out=out))
    return 0


def add_training_flags(parser):
    parser.add_argument('--config', help=_('JSON config file; flags override it'))
    parser.add_argument('--train', help=_('training corpus (JSON Lines)'))
    parser.add_argument('--dev', help=_('dev corpus used to pick the best epoch'))
    parser.add_argument('--test', help=_('test corpus (ablate only)'))
    parser.add_argument('--embeddings', help=_('word vector text file'))
    parser.add_argument('--checkpoint', help=_('where to write the best model'))
    parser.add_argument('--report', help=_('where to write the JSON report'))
    parser.add_argument('--runs-db', help=_('record the run in this run registry'))
    parser.add_argument('--seed', type=int)
    parser.add_argument('--lambda', dest='lambda_', type=float, help=_('weight of the supervised term'))
    parser.add_argument('--sup-threshold', type=float, help=_('supervised loss above which L_con is ignored'))
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--hidden', type=int, help=_('BiLSTM output size (both directions)'))
    parser.add_argument('--emb-dim', type=int)
    parser.add_argument('--grad-clip', type=float)
    parser.add_argument('--label-fraction', type=float, help=_('labeled paragraphs kept per training topic'))
    parser.add_argument('--use-unlabeled', action='store_true', help=_('keep demoted paragraphs as unlabeled'))
    parser.add_argument('--no-consistency', action='store_true', help=_('supervised only (lambda = 1 arm)'))
    parser.add_argument('--no-adaptive', action='store_true', help=_('always apply the joint loss'))
    embeddings = parser.add_mutually_exclusive_group()
    embeddings.add_argument('--train-embeddings', dest='trainable_embeddings', action='store_const', const=True)
    embeddings.add_argument('--freeze-embeddings', dest='trainable_embeddings', action='store_const', const=False)


def add_model_flags(parser):
    parser.add_argument('--checkpoint', required=True)
    parser.add_argument('--hidden', type=int, help=_('reject checkpoints of another hidden size'))
    parser.add_argument('--emb-dim', type=int, help=_('reject checkpoints of another embedding size'))
    parser.add_argument('--out')


def build_parser():
    parser = ArgumentParser(prog='LaceTrainer', description=_('Label consistency training for state tracking.'))
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('--debug', action='store_true')
    commands = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    commands.required = True

    train_parser = commands.add_parser('train', help=_('train and keep the best dev checkpoint'))
    add_training_flags(train_parser)
    train_parser.set_defaults(handler=cmd_train)

    ablate_parser = commands.add_parser('ablate', help=_('train with and without the consistency loss'))
    add_training_flags(ablate_parser)
    ablate_parser.set_defaults(handler=cmd_ablate)

    eval_parser = commands.add_parser('eval', help=_('precision, recall, F1 and consistency score'))
    add_model_flags(eval_parser)
    eval_parser.add_argument('corpus', nargs='+')
    eval_parser.set_defaults(handler=cmd_eval)

    predict_parser = commands.add_parser('predict', help=_('per paragraph grids and summaries'))
    add_model_flags(predict_parser)
    predict_parser.add_argument('corpus')
    predict_parser.set_defaults(handler=cmd_predict)

    gen_parser = commands.add_parser('gen', help=_('write a synthetic train/dev/test corpus'))
    gen_parser.add_argument('--seed', type=int)
    gen_parser.add_argument('--topics', type=int, default=20)
    gen_parser.add_argument('--dev-topics', type=int, default=5)
    gen_parser.add_argument('--test-topics', type=int, default=5)
    gen_parser.add_argument('--paragraphs', type=int, default=3)
    gen_parser.add_argument('--noise', type=float, default=0.0)
    gen_parser.add_argument('--out', default='data')
    gen_parser.set_defaults(handler=cmd_gen)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.debug:
            logging.getLogger().setLevel(logging.DEBUG)
        return args.handler(args)
    except LaceError as e:
        return error(e)


if __name__ == '__main__':
    init_log(bool(os.getenv('LACE_DEBUG', False)))
    sys.exit(main())
