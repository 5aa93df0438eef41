"""Seeded generator of templated procedural paragraphs.

Every topic owns a hidden summary (the set of state changes per entity). Each paragraph of the topic tells
that summary as a sequence of one-event sentences, so paragraphs of one topic agree on their summaries
unless noise perturbs one of them.
"""
import logging
import random

from LaceTrainer.constants import (ACTIONS, StateChange, SYNTHETIC_DETERMINERS, SYNTHETIC_ENTITIES,
                                   SYNTHETIC_PLACES, SYNTHETIC_VERBS)
from LaceTrainer.corpus import Entity, ProcessExample, TopicGroup, validate_example
from LaceTrainer.errors import ContractError

logger = logging.getLogger(__name__)

# Within one entity, events are told in this order
STORY_ORDER = (StateChange.CREATE, StateChange.MOVE, StateChange.DESTROY)


def _topic_summary(rng, max_entities, max_steps):
    names = rng.sample(SYNTHETIC_ENTITIES, rng.randint(min(2, max_entities), max_entities))
    summary = {name: {rng.choice(ACTIONS)} for name in names}
    if len(names) < max_steps and rng.random() < 0.5:
        extra = rng.choice(names)
        missing = [a for a in ACTIONS if a not in summary[extra]]
        summary[extra].add(rng.choice(missing))
    return names, summary


def _perturb(rng, names, summary):
    """Swap one action of one entity for an action that entity does not have. Event count is unchanged."""
    summary = {name: set(actions) for name, actions in summary.items()}
    name = rng.choice(names)
    old = rng.choice(sorted(summary[name]))
    summary[name].remove(old)
    summary[name].add(rng.choice([a for a in ACTIONS if a != old and a not in summary[name]]))
    return summary


def _sentence(rng, name, label):
    det = rng.choice(SYNTHETIC_DETERMINERS).split()
    entity = name.split()
    tokens = det + entity + [rng.choice(SYNTHETIC_VERBS[label])] + rng.choice(SYNTHETIC_PLACES).split()
    return tokens, (len(det), len(det) + len(entity)), len(det) + len(entity)


def _paragraph(rng, example_id, topic, names, summary, max_steps):
    pending = {name: [a for a in STORY_ORDER if a in summary[name]] for name in names}
    events = []
    while any(pending.values()):
        name = rng.choice([n for n in names if pending[n]])
        events.append((name, pending[name].pop(0)))
    if len(events) < max_steps and rng.random() < 0.5:
        events.insert(rng.randint(0, len(events)), (rng.choice(names), StateChange.NONE))

    steps, verbs = [], []
    mentions = {name: [] for name in names}
    gold = [[StateChange.NONE] * len(names) for _ in events]
    for t, (name, label) in enumerate(events):
        tokens, (start, end), verb = _sentence(rng, name, label)
        steps.append(tuple(tokens))
        verbs.append((t, verb))
        mentions[name].append((t, start, end))
        gold[t][names.index(name)] = label

    example = ProcessExample(example_id, topic, tuple(steps),
                             tuple(Entity(name, tuple(mentions[name])) for name in names),
                             tuple(verbs), tuple(tuple(row) for row in gold))
    validate_example(example)
    return example


def generate_synthetic(seed, topics, paragraphs_per_topic, noise, max_entities=3, max_steps=4, prefix='topic'):
    if topics < 1 or paragraphs_per_topic < 1:
        raise ContractError('topics and paragraphs_per_topic must both be at least 1')
    if not 0.0 <= noise <= 1.0:
        raise ContractError('noise must lie in [0, 1], got {}'.format(noise))
    if max_entities < 1 or max_steps < max_entities + 1:
        raise ContractError('need max_entities >= 1 and max_steps > max_entities')

    rng = random.Random(seed)
    groups, perturbed = [], 0
    for k in range(topics):
        topic = '{} {:03d}'.format(prefix, k)
        names, summary = _topic_summary(rng, max_entities, max_steps)
        examples = []
        for p in range(paragraphs_per_topic):
            told = summary
            if rng.random() < noise:
                told = _perturb(rng, names, summary)
                perturbed += 1
            example_id = '{}-{:03d}-{}'.format(prefix, k, p)
            examples.append(_paragraph(rng, example_id, topic, names, told, max_steps))
        groups.append(TopicGroup(topic, tuple(examples), ()))
    logger.info('Generated %d topics x %d paragraphs (seed %d, %d perturbed)', topics, paragraphs_per_topic,
                seed, perturbed)
    return groups
