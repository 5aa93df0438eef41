import json
import logging
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import ujson
from tinydb import TinyDB

from LaceTrainer.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, RUNS_DB_FILE
from LaceTrainer.errors import CheckpointError, ConfigError, ParseError
from LaceTrainer.model import ModelParams, param_shapes

logger = logging.getLogger(__name__)


def read_jsonl(path):
    """Yield (line number, object) for every non-blank line of a UTF-8 JSON Lines file."""
    path = Path(path)
    with path.open(encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = ujson.loads(line)
            except ValueError as e:
                raise ParseError(path, number, 'invalid JSON ({})'.format(e))
            if not isinstance(obj, dict):
                raise ParseError(path, number, 'expected a JSON object')
            yield number, obj


def dumps_line(obj):
    return ujson.dumps(obj, ensure_ascii=False, escape_forward_slashes=False)


@contextmanager
def _output(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', encoding='utf-8') as f:
            yield f
    except OSError as e:
        raise ConfigError('cannot write {}: {}'.format(path, e))


def write_jsonl(path, rows):
    with _output(path) as f:
        for row in rows:
            f.write(dumps_line(row))
            f.write('\n')


def write_json(path, obj):
    # Stdlib json writes floats with repr, so reports and checkpoints read back exactly
    with _output(path) as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write('\n')


def read_json(path):
    with Path(path).open(encoding='utf-8') as f:
        return json.load(f)


def save_checkpoint(params, path):
    obj = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'hidden_size': params.hidden_size,
        'embedding_dim': params.embedding_dim,
        'trainable_embeddings': params.trainable_embeddings,
        'vocab': list(params.vocab),
        'params': {name: {'shape': list(t.shape), 'values': t.values.reshape(-1).tolist()}
                   for name, t in params.tensors.items()},
    }
    write_json(path, obj)
    logger.info('Saved checkpoint to %s', path)


def load_checkpoint(path, hidden_size=None, embedding_dim=None):
    try:
        obj = read_json(path)
    except (OSError, ValueError) as e:
        raise CheckpointError('cannot read checkpoint {}: {}'.format(path, e))
    if obj.get('format') != CHECKPOINT_FORMAT or obj.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError('{} is not a version {} checkpoint'.format(path, CHECKPOINT_VERSION))

    if hidden_size is not None and hidden_size != obj['hidden_size']:
        raise CheckpointError('checkpoint hidden size {} does not match requested {}'.format(
            obj['hidden_size'], hidden_size))
    if embedding_dim is not None and embedding_dim != obj['embedding_dim']:
        raise CheckpointError('checkpoint embedding dimension {} does not match requested {}'.format(
            obj['embedding_dim'], embedding_dim))

    vocab = obj['vocab']
    expected = param_shapes(len(vocab) + 1, obj['embedding_dim'], obj['hidden_size'])
    stored = obj['params']
    if set(stored) != set(expected):
        raise CheckpointError('checkpoint parameters {} do not match expected {}'.format(
            sorted(stored), sorted(expected)))
    arrays = {}
    for name, shape in expected.items():
        entry = stored[name]
        if tuple(entry['shape']) != shape or len(entry['values']) != int(np.prod(shape)):
            raise CheckpointError('parameter {}: stored shape {} does not match expected {}'.format(
                name, tuple(entry['shape']), shape))
        arrays[name] = np.array(entry['values'], dtype=np.float64).reshape(shape)

    return ModelParams(vocab, obj['embedding_dim'], obj['hidden_size'], arrays,
                       trainable_embeddings=obj['trainable_embeddings'])


class RunRegistry(object):
    """Small document store of finished training runs."""

    def __init__(self, path=RUNS_DB_FILE):
        self.path = Path(path)

    def _open(self):
        try:
            return TinyDB(str(self.path))
        except OSError as e:
            raise ConfigError('cannot open run registry {}: {}'.format(self.path, e))

    def record(self, report):
        summary = {
            'config': report['config'],
            'best_epoch': report['best_epoch'],
            'best_dev_f1': report['best_dev_f1'],
            'skipped_groups': report['skipped_groups'],
        }
        with self._open() as db:
            doc_id = db.table('runs').insert(summary)
        logger.debug('Recorded run %s in %s', doc_id, self.path)
        return doc_id

    def runs(self):
        with self._open() as db:
            return db.table('runs').all()
