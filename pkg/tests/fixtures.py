"""Small hand built paragraphs shared by the test modules."""
import numpy as np

from LaceTrainer.constants import StateChange, SYNTHETIC_VERBS
from LaceTrainer.corpus import Entity, ProcessExample, TopicGroup, build_vocab, random_embeddings, validate_example
from LaceTrainer.model import init_params

M, C, D, N = StateChange.MOVE, StateChange.CREATE, StateChange.DESTROY, StateChange.NONE


def paragraph(example_id, topic, events, labeled=True, extra_entities=()):
    """One sentence per (entity name, label) event, e.g. 'the water moves away'.

    Entities are listed in order of first appearance followed by extra_entities, which no sentence mentions.
    """
    names = []
    for name, _ in events:
        if name not in names:
            names.append(name)
    names.extend(extra_entities)

    steps, verbs, gold = [], [], []
    mentions = {name: [] for name in names}
    for t, (name, label) in enumerate(events):
        words = name.split()
        steps.append(tuple(['the'] + words + [SYNTHETIC_VERBS[label][0], 'away']))
        mentions[name].append((t, 1, 1 + len(words)))
        verbs.append((t, 1 + len(words)))
        gold.append(tuple(label if n == name else N for n in names))

    example = ProcessExample(example_id, topic, tuple(steps), tuple(Entity(n, tuple(mentions[n])) for n in names),
                             tuple(verbs), tuple(gold) if labeled else None)
    validate_example(example)
    return example


def group(topic, *members):
    return TopicGroup(topic, tuple(m for m in members if m.labeled), tuple(m for m in members if not m.labeled))


def tiny_group():
    """Two paragraphs of two sentences and two entities each, sharing 'water'."""
    first = paragraph('p1', 'rain', [('water', M), ('cloud', C)])
    second = paragraph('p2', 'rain', [('cloud', N), ('water', D)], labeled=False)
    return group('rain', first, second)


def make_params(examples, embedding_dim=4, hidden_size=4, seed=0, trainable_embeddings=True):
    rng = np.random.default_rng(seed)
    table = random_embeddings(build_vocab(examples), embedding_dim, rng)
    return init_params(table, hidden_size, rng, trainable_embeddings)
