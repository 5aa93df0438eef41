"""Label consistency training.

Every topic group yields one batch per labeled paragraph. In a batch the primary paragraph is scored
against its gold grid, and every other member's per-entity summary is pulled towards the primary's
summary for the entities they share. The consistency term only joins once the supervised loss of the
batch has dropped below a threshold.
"""
import logging
from collections import OrderedDict, namedtuple

import numpy as np

from LaceTrainer.autodiff import Tape, constant
from LaceTrainer.corpus import build_vocab, random_embeddings, shared_entities
from LaceTrainer.errors import ContractError, NumericalError
from LaceTrainer.metrics import evaluate, metrics_json
from LaceTrainer.model import forward_grid, init_params
from LaceTrainer.settings import as_dict

logger = logging.getLogger(__name__)

BatchStats = namedtuple('BatchStats', 'sup con active switched total')


class LaceBatch(namedtuple('LaceBatch', 'topic primary_index members')):
    __slots__ = ()

    @property
    def primary(self):
        return self.members[self.primary_index]

    def others(self):
        return [m for i, m in enumerate(self.members) if i != self.primary_index]


def make_batches(group):
    """One batch per labeled paragraph, each holding every member of the group."""
    if not group.labeled:
        logger.warning('Topic %r has no labeled paragraph, skipping it', group.topic)
        return []
    members = group.members
    return [LaceBatch(group.topic, i, members) for i in range(len(group.labeled))]


def summarize(grid, entity):
    """Average of one entity's per-step distributions (each step sums to 1, so this sums to 1 too)."""
    return np.asarray(grid, dtype=np.float64)[:, entity, :].mean(axis=0)


def summary_tensor(tape, cells, entity):
    return tape.mean(tape.concat([row[entity] for row in cells], axis=0), axis=0)


def consistency_term(tape, cells, example, reference_cells, reference):
    """Mean over shared entities of the MSE between summaries; 0 when nothing is shared."""
    pairs = shared_entities(example, reference)
    if not pairs:
        return constant(0.0)
    total = None
    for i, j in pairs:
        term = tape.mse(summary_tensor(tape, cells, i), summary_tensor(tape, reference_cells, j))
        total = term if total is None else tape.add(total, term)
    return tape.scale(total, 1.0 / len(pairs))


def _constant_cells(grid):
    grid = np.asarray(grid, dtype=np.float64)
    return [[constant(grid[t, j].reshape(1, -1)) for j in range(grid.shape[1])] for t in range(grid.shape[0])]


def consistency_loss(pred, example, reference_pred, reference):
    tape = Tape(record=False)
    return consistency_term(tape, _constant_cells(pred), example, _constant_cells(reference_pred), reference).item()


def supervised_loss(tape, cells, example):
    """Mean negative log likelihood of the gold label over all T x |E| cells."""
    if not example.labeled:
        raise ContractError('paragraph {} has no gold labels'.format(example.id))
    flat = tape.concat([cell for row in cells for cell in row], axis=0)
    return tape.nll(flat, example.gold_grid().reshape(-1))


def consistency_active(sup, cfg):
    """Whether the consistency term joins this batch. Returns (active, adaptive switch fired)."""
    if not cfg.consistency_enabled or cfg.lambda_ == 1.0:
        return False, False
    if cfg.adaptive and sup > cfg.sup_threshold:
        return False, True
    return True, False


def joint_loss(tape, sup, con, cfg):
    return tape.add(tape.scale(sup, cfg.lambda_), tape.scale(con, 1.0 - cfg.lambda_))


def batch_loss(batch, params, cfg, tape=None):
    """Differentiable loss of one batch and its BatchStats.

    Non-primary members are only run through the model when the consistency term is active.
    """
    if tape is None:
        tape = Tape()
    primary = batch.primary
    primary_cells = forward_grid(tape, params, primary)
    sup = supervised_loss(tape, primary_cells, primary)
    active, switched = consistency_active(sup.item(), cfg)
    if not active:
        return sup, BatchStats(sup.item(), 0.0, False, switched, sup.item())

    con = constant(0.0)
    for member in batch.others():
        cells = forward_grid(tape, params, member)
        con = tape.add(con, consistency_term(tape, cells, member, primary_cells, primary))
    total = joint_loss(tape, sup, con, cfg)
    return total, BatchStats(sup.item(), con.item(), True, False, total.item())


def sgd_step(params, learning_rate, clip=None):
    """Plain gradient descent, optionally rescaling the global gradient norm down to clip. Returns the norm."""
    tensors = [t for t in params.trainable() if t.grad is not None]
    norm = float(np.sqrt(sum(np.sum(t.grad * t.grad) for t in tensors)))
    if not np.isfinite(norm):
        raise NumericalError('non-finite gradient norm')
    step = learning_rate
    if clip is not None and norm > clip:
        step *= clip / norm
    for t in tensors:
        t.values -= step * t.grad
    return norm


def initial_params(groups, cfg, table=None, trainable_embeddings=None):
    rng = np.random.default_rng(cfg.seed)
    if table is None:
        table = random_embeddings(build_vocab(groups), cfg.embedding_dim, rng)
        trainable = True if trainable_embeddings is None else trainable_embeddings
    else:
        trainable = False if trainable_embeddings is None else trainable_embeddings
    return init_params(table, cfg.hidden_size, rng, trainable), rng


def train(groups, cfg, dev=(), table=None, trainable_embeddings=None):
    """Train from scratch and return (best parameters, report).

    The best epoch is picked on dev F1; without a dev set the training groups stand in for it.
    """
    groups, dev = list(groups), list(dev)
    batched = [make_batches(group) for group in groups]
    skipped = sum(1 for batches in batched if not batches)
    batched = [batches for batches in batched if batches]
    if not batched:
        raise ContractError('no labeled paragraph to train on')
    selection = dev or groups

    params, rng = initial_params(groups, cfg, table, trainable_embeddings)
    num_batches = sum(len(batches) for batches in batched)
    logger.info('Training on %d topics (%d batches per epoch, %d topics skipped) for %d epochs',
                len(batched), num_batches, skipped, cfg.epochs)

    records, best, best_f1, best_epoch = [], params.copy(), -1.0, 0
    for epoch in range(1, cfg.epochs + 1):
        sup_total = con_total = 0.0
        con_batches = switches = step = 0
        for g in rng.permutation(len(batched)):
            for batch in batched[g]:
                step += 1
                params.zero_grad()
                tape = Tape()
                stats = None
                try:
                    loss, stats = batch_loss(batch, params, cfg, tape)
                    tape.backward(loss)
                    norm = sgd_step(params, cfg.learning_rate, cfg.grad_clip)
                except NumericalError as e:
                    raise NumericalError('training diverged', OrderedDict([
                        ('epoch', epoch), ('batch', step), ('topic', batch.topic), ('primary', batch.primary.id),
                        ('sup', stats.sup if stats else None), ('con', stats.con if stats else None),
                        ('cause', str(e))]))
                logger.debug('epoch %d %s/%s: sup %.5f con %.5f total %.5f grad norm %.4f', epoch, batch.topic,
                             batch.primary.id, stats.sup, stats.con, stats.total, norm)
                sup_total += stats.sup
                switches += stats.switched
                if stats.active:
                    con_total += stats.con
                    con_batches += 1

        evaluation = evaluate(params, selection)
        record = OrderedDict([
            ('epoch', epoch),
            ('mean_sup_loss', sup_total / num_batches),
            ('mean_con_loss', con_total / con_batches if con_batches else 0.0),
            ('adaptive_switch_rate', switches / num_batches),
            ('dev_f1', evaluation.metrics.f1),
            ('dev_consistency', evaluation.consistency),
        ])
        records.append(record)
        logger.info('Epoch %d/%d: sup %.4f con %.4f switch %.2f dev F1 %.4f consistency %.2f', epoch, cfg.epochs,
                    record['mean_sup_loss'], record['mean_con_loss'], record['adaptive_switch_rate'],
                    record['dev_f1'], record['dev_consistency'])
        if evaluation.metrics.f1 > best_f1:
            best, best_f1, best_epoch = params.copy(), evaluation.metrics.f1, epoch
            logger.info('New best model at epoch %d (F1 %.4f)', epoch, best_f1)

    report = OrderedDict([
        ('config', as_dict(cfg)),
        ('selection', 'dev' if dev else 'train'),
        ('batches_per_epoch', num_batches),
        ('skipped_groups', skipped),
        ('best_epoch', best_epoch),
        ('best_dev_f1', best_f1),
        ('epochs', records),
    ])
    return best, report


def run_ablation(groups, cfg, dev=(), test=(), table=None, trainable_embeddings=None):
    """Train with the consistency loss and without it (lambda = 1) at the same seed; score both arms."""
    arms = OrderedDict()
    for name, arm_cfg in (('lace', cfg._replace(consistency_enabled=True)),
                          ('supervised', cfg._replace(consistency_enabled=False))):
        logger.info('Ablation arm %s', name)
        params, report = train(groups, arm_cfg, dev, table, trainable_embeddings)
        arms[name] = OrderedDict([
            ('best_epoch', report['best_epoch']),
            ('train', metrics_json(evaluate(params, groups))),
            ('test', metrics_json(evaluate(params, test)) if test else None),
            ('epochs', report['epochs']),
        ])
    return arms
