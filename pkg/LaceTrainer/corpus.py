import logging
import random
from collections import OrderedDict, namedtuple
from pathlib import Path

import numpy as np

from LaceTrainer.constants import StateChange
from LaceTrainer.errors import ParseError, ValidationError
from LaceTrainer.storage import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

Entity = namedtuple('Entity', 'name mentions')


class ProcessExample(namedtuple('ProcessExample', 'id topic steps entities verbs gold')):
    """One paragraph.

    steps is a tuple of token tuples, entities a tuple of Entity whose mentions are (step, start, end) with
    end exclusive, verbs a tuple of (step, token) pairs and gold either None or a T x |E| tuple of
    StateChange rows.
    """
    __slots__ = ()

    @property
    def num_steps(self):
        return len(self.steps)

    @property
    def num_entities(self):
        return len(self.entities)

    @property
    def labeled(self):
        return self.gold is not None

    def mention_tokens(self, step, entity):
        return [i for s, start, end in self.entities[entity].mentions if s == step for i in range(start, end)]

    def verb_tokens(self, step):
        return [i for s, i in self.verbs if s == step]

    def gold_grid(self):
        return np.array([[int(label) for label in row] for row in self.gold], dtype=np.int64)

    def without_gold(self):
        return self._replace(gold=None)


class TopicGroup(namedtuple('TopicGroup', 'topic labeled unlabeled')):
    __slots__ = ()

    @property
    def members(self):
        return self.labeled + self.unlabeled


def normalize_name(name):
    return name.strip().lower()


def shared_entities(a, b):
    """Index pairs (i in a, j in b) of entities with the same name, ignoring case and outer whitespace."""
    lookup = {}
    for j, entity in enumerate(b.entities):
        lookup.setdefault(normalize_name(entity.name), j)
    return [(i, lookup[normalize_name(entity.name)]) for i, entity in enumerate(a.entities)
            if normalize_name(entity.name) in lookup]


def _field(obj, name, kind, path, line):
    if name not in obj:
        raise ParseError(path, line, 'missing field {!r}'.format(name))
    if not isinstance(obj[name], kind):
        raise ParseError(path, line, 'field {!r} has the wrong type'.format(name))
    return obj[name]


def _parse_label(value, example_id):
    try:
        return StateChange[value]
    except (KeyError, TypeError):
        raise ValidationError(example_id, 'unknown state change {!r}'.format(value))


def parse_example(obj, path='<memory>', line=0):
    example_id = _field(obj, 'id', str, path, line)
    topic = obj.get('topic', example_id)
    if not isinstance(topic, str):
        raise ParseError(path, line, "field 'topic' has the wrong type")
    steps = _field(obj, 'steps', list, path, line)
    entities = _field(obj, 'entities', list, path, line)
    verbs = obj.get('verbs', [])
    for step in steps:
        if not isinstance(step, list) or not all(isinstance(token, str) for token in step):
            raise ParseError(path, line, 'every step must be an array of token strings')
    for entity in entities:
        if not isinstance(entity, dict) or not isinstance(entity.get('name'), str):
            raise ParseError(path, line, 'every entity needs a string name')
    try:
        steps = tuple(tuple(step) for step in steps)
        entities = tuple(Entity(e['name'], tuple(tuple(int(x) for x in m) for m in e['mentions']))
                         for e in entities)
        verbs = tuple((int(s), int(i)) for s, i in verbs)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(path, line, 'malformed steps, entities or verbs ({})'.format(e))

    gold = obj.get('gold')
    if gold is not None:
        if not isinstance(gold, list) or not all(isinstance(row, list) for row in gold):
            raise ParseError(path, line, "field 'gold' must be an array of arrays")
        gold = tuple(tuple(_parse_label(value, example_id) for value in row) for row in gold)

    example = ProcessExample(example_id, topic, steps, entities, verbs, gold)
    validate_example(example)
    return example


def validate_example(example):
    if example.num_steps < 1:
        raise ValidationError(example.id, 'a paragraph needs at least one step')
    if example.num_entities < 1:
        raise ValidationError(example.id, 'a paragraph needs at least one entity')
    for step, tokens in enumerate(example.steps):
        if not tokens:
            raise ValidationError(example.id, 'step {} has no tokens'.format(step))
    for entity in example.entities:
        for mention in entity.mentions:
            if len(mention) != 3:
                raise ValidationError(example.id, 'mention {} of {!r} is not [step, start, end]'.format(
                    list(mention), entity.name))
            step, start, end = mention
            if not (0 <= step < example.num_steps and 0 <= start < end <= len(example.steps[step])):
                raise ValidationError(example.id, 'mention {} of {!r} lies outside its sentence'.format(
                    list(mention), entity.name))
    for step, index in example.verbs:
        if not (0 <= step < example.num_steps and 0 <= index < len(example.steps[step])):
            raise ValidationError(example.id, 'verb [{}, {}] lies outside its sentence'.format(step, index))
    if example.gold is not None:
        shape = (len(example.gold), {len(row) for row in example.gold})
        if shape != (example.num_steps, {example.num_entities}):
            raise ValidationError(example.id, 'gold grid shape does not match {} steps x {} entities'.format(
                example.num_steps, example.num_entities))


def example_to_json(example, gold=None):
    obj = OrderedDict()
    obj['id'] = example.id
    obj['topic'] = example.topic
    obj['steps'] = [list(step) for step in example.steps]
    obj['entities'] = [OrderedDict((('name', e.name), ('mentions', [list(m) for m in e.mentions])))
                       for e in example.entities]
    obj['verbs'] = [list(v) for v in example.verbs]
    gold = example.gold if gold is None else gold
    if gold is not None:
        obj['gold'] = [[StateChange(int(label)).name for label in row] for row in gold]
    return obj


def load_examples(path):
    """All paragraphs of a corpus file, in file order."""
    path = Path(path)
    examples, seen = [], set()
    for line, obj in read_jsonl(path):
        example = parse_example(obj, path, line)
        if example.id in seen:
            raise ValidationError(example.id, 'duplicate id')
        seen.add(example.id)
        examples.append(example)
    return examples


def group_examples(examples):
    groups = OrderedDict()
    for example in examples:
        labeled, unlabeled = groups.setdefault(example.topic, ([], []))
        (labeled if example.labeled else unlabeled).append(example)
    return [TopicGroup(topic, tuple(labeled), tuple(unlabeled)) for topic, (labeled, unlabeled) in groups.items()]


def load_corpus(path):
    groups = group_examples(load_examples(path))
    logger.info('Loaded %s: %d topics, %d labeled and %d unlabeled paragraphs', path, len(groups),
                sum(len(g.labeled) for g in groups), sum(len(g.unlabeled) for g in groups))
    return groups


def flatten(items):
    for item in items:
        if isinstance(item, TopicGroup):
            yield from item.members
        else:
            yield item


def dump_corpus(items, path):
    """Write groups or paragraphs as canonical JSON Lines."""
    write_jsonl(path, (example_to_json(example) for example in flatten(items)))


def demote_labels(groups, fraction, use_unlabeled, seed):
    """Keep max(1, round(fraction * m)) labeled paragraphs per topic.

    The rest lose their gold labels and stay as unlabeled members when use_unlabeled is set, otherwise
    they are dropped.
    """
    rng = random.Random(seed)
    result = []
    for group in groups:
        m = len(group.labeled)
        if m == 0:
            result.append(group)
            continue
        keep = max(1, min(m, int(round(fraction * m))))
        kept = set(rng.sample(range(m), keep))
        labeled = tuple(ex for i, ex in enumerate(group.labeled) if i in kept)
        demoted = tuple(ex.without_gold() for i, ex in enumerate(group.labeled) if i not in kept)
        unlabeled = group.unlabeled + (demoted if use_unlabeled else ())
        result.append(TopicGroup(group.topic, labeled, unlabeled))
    logger.info('Label fraction %.2f: %d labeled paragraphs kept, demoted ones %s', fraction,
                sum(len(g.labeled) for g in result), 'kept as unlabeled' if use_unlabeled else 'dropped')
    return result


class EmbeddingTable(object):
    """Token vectors with a shared fallback for unknown tokens. Row 0 of matrix() is the fallback."""

    def __init__(self, dimension, vectors, unk_vector=None):
        self.dimension = dimension
        self.vectors = OrderedDict(vectors)
        self.unk_vector = np.zeros(dimension) if unk_vector is None else np.asarray(unk_vector, dtype=np.float64)
        for token, vector in self.vectors.items():
            if len(vector) != dimension:
                raise ValidationError(token, 'embedding has {} values, expected {}'.format(len(vector), dimension))

    @property
    def tokens(self):
        return list(self.vectors)

    def lookup(self, token):
        return self.vectors.get(token.lower(), self.unk_vector)

    def matrix(self):
        return np.vstack([self.unk_vector] + [np.asarray(v, dtype=np.float64) for v in self.vectors.values()])


def load_embeddings(path):
    path = Path(path)
    vectors, dimension = OrderedDict(), None
    with path.open(encoding='utf-8') as f:
        for line, text in enumerate(f, start=1):
            parts = text.rstrip('\n').split(' ')
            if len(parts) < 2:
                continue
            try:
                vector = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(path, line, 'non-numeric embedding value')
            if dimension is None:
                dimension = len(vector)
            elif len(vector) != dimension:
                raise ParseError(path, line, 'expected {} values, found {}'.format(dimension, len(vector)))
            vectors.setdefault(parts[0].lower(), vector)
    if dimension is None:
        raise ParseError(path, 0, 'no embeddings found')
    logger.info('Loaded %d %dD embeddings from %s', len(vectors), dimension, path)
    return EmbeddingTable(dimension, vectors)


def build_vocab(items):
    return sorted({token.lower() for example in flatten(items) for step in example.steps for token in step})


def random_embeddings(tokens, dimension, rng):
    r = 1.0 / np.sqrt(dimension)
    vectors = OrderedDict((token, rng.uniform(-r, r, dimension)) for token in tokens)
    return EmbeddingTable(dimension, vectors, unk_vector=rng.uniform(-r, r, dimension))
