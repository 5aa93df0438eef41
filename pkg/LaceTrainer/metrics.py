import logging
from collections import OrderedDict, namedtuple
from itertools import combinations

import numpy as np

from LaceTrainer.constants import ACTIONS, StateChange
from LaceTrainer.corpus import shared_entities
from LaceTrainer.errors import ContractError, DimensionError
from LaceTrainer.model import predict_grid

logger = logging.getLogger(__name__)

MetricsReport = namedtuple('MetricsReport', 'precision recall f1 gold_positives predicted_positives matches')
Evaluation = namedtuple('Evaluation', 'metrics per_label consistency comparisons per_topic predictions')


def from_counts(matches, predicted, gold):
    precision = matches / predicted if predicted else 0.0
    recall = matches / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(precision, recall, f1, int(gold), int(predicted), int(matches))


def combine(reports):
    """Micro aggregate: add the counts, then recompute the ratios."""
    reports = list(reports)
    return from_counts(sum(r.matches for r in reports), sum(r.predicted_positives for r in reports),
                       sum(r.gold_positives for r in reports))


def discretize(grid):
    # argmax returns the first maximum, which is the canonical tie break Move > Create > Destroy > None
    return np.argmax(np.asarray(grid), axis=-1)


def _check_shapes(pred, gold):
    pred, gold = np.asarray(pred), np.asarray(gold)
    if pred.shape != gold.shape:
        raise DimensionError('score_grids', pred.shape, gold.shape)
    return pred, gold


def score_grids(pred, gold):
    pred, gold = _check_shapes(pred, gold)
    none = int(StateChange.NONE)
    predicted = pred != none
    return from_counts(int(np.sum(predicted & (pred == gold))), int(np.sum(predicted)), int(np.sum(gold != none)))


def score_label(pred, gold, label):
    pred, gold = _check_shapes(pred, gold)
    label = int(label)
    return from_counts(int(np.sum((pred == label) & (gold == label))), int(np.sum(pred == label)),
                       int(np.sum(gold == label)))


def summary_set(grid, entity):
    return frozenset(StateChange(int(label)) for label in np.asarray(grid)[:, entity]
                     if label != StateChange.NONE)


def _topic_consistency(group, preds):
    matches = comparisons = 0
    for a, b in combinations(group.members, 2):
        for i, j in shared_entities(a, b):
            comparisons += 1
            matches += summary_set(preds[a.id], i) == summary_set(preds[b.id], j)
    return matches, comparisons


def consistency_counts(groups, preds):
    """(topic, matches, comparisons) for every topic, comparing each pair of paragraphs per shared entity."""
    missing = [ex.id for group in groups for ex in group.members if ex.id not in preds]
    if missing:
        raise ContractError('no prediction for {}'.format(', '.join(missing)))
    return [(group.topic,) + _topic_consistency(group, preds) for group in groups]


def percentage(matches, comparisons):
    return 100.0 * matches / comparisons if comparisons else 0.0


def consistency_score(groups, preds):
    counts = consistency_counts(groups, preds)
    return percentage(sum(m for _, m, _ in counts), sum(c for _, _, c in counts))


def predict_hard(params, examples):
    return OrderedDict((ex.id, discretize(predict_grid(params, ex))) for ex in examples)


def evaluate(params, groups, preds=None):
    """Micro P/R/F1 over labeled paragraphs plus the cross-paragraph consistency score."""
    if preds is None:
        preds = predict_hard(params, (ex for group in groups for ex in group.members))

    per_topic, topic_reports, label_reports = [], [], {label: [] for label in ACTIONS}
    total_matches = total_comparisons = 0
    for group, (topic, matches, comparisons) in zip(groups, consistency_counts(groups, preds)):
        reports = [score_grids(preds[ex.id], ex.gold_grid()) for ex in group.labeled]
        for ex in group.labeled:
            for label in ACTIONS:
                label_reports[label].append(score_label(preds[ex.id], ex.gold_grid(), label))
        report = combine(reports)
        topic_reports.append(report)
        total_matches += matches
        total_comparisons += comparisons
        per_topic.append(OrderedDict([
            ('topic', topic), ('precision', report.precision), ('recall', report.recall), ('f1', report.f1),
            ('consistency_score', percentage(matches, comparisons)), ('comparisons', comparisons)]))

    return Evaluation(combine(topic_reports),
                      OrderedDict((label.name, combine(reports)) for label, reports in label_reports.items()),
                      percentage(total_matches, total_comparisons), total_comparisons, per_topic, preds)


def metrics_json(evaluation):
    m = evaluation.metrics
    return OrderedDict([
        ('precision', m.precision), ('recall', m.recall), ('f1', m.f1),
        ('consistency_score', evaluation.consistency), ('comparisons', evaluation.comparisons),
        ('support', OrderedDict([('gold_positives', m.gold_positives),
                                 ('predicted_positives', m.predicted_positives), ('matches', m.matches)])),
        ('per_label', OrderedDict((name, OrderedDict([('precision', r.precision), ('recall', r.recall),
                                                      ('f1', r.f1)]))
                                  for name, r in evaluation.per_label.items())),
        ('per_topic', evaluation.per_topic),
    ])
