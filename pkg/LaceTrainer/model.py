"""Per (step, entity) state change classifier.

A step is read by a bidirectional LSTM whose input is the word vector plus an entity flag and a verb flag.
Bilinear attention against the entity and verb summaries pools the states into one vector, and a single
affine layer gives the distribution over Move, Create, Destroy and None for that cell.
"""
import logging
from collections import OrderedDict, namedtuple

import numpy as np

from LaceTrainer.autodiff import Tape, Tensor, constant
from LaceTrainer.constants import NUM_CHANGES
from LaceTrainer.errors import ConfigError, ContractError

logger = logging.getLogger(__name__)

StepEntityEncoding = namedtuple('StepEntityEncoding', 'c attention')

# Entity flag and verb flag appended to every word vector
NUM_INDICATORS = 2


def param_shapes(vocab_rows, embedding_dim, hidden_size):
    if hidden_size < 2 or hidden_size % 2:
        raise ConfigError('hidden size must be even and at least 2, got {}'.format(hidden_size))
    if embedding_dim < 1:
        raise ConfigError('embedding dimension must be positive, got {}'.format(embedding_dim))
    h = hidden_size // 2
    d = embedding_dim + NUM_INDICATORS
    shapes = OrderedDict([('embedding', (vocab_rows, embedding_dim))])
    for direction in ('fwd', 'bwd'):
        shapes[direction + '_W'] = (d, 4 * h)
        shapes[direction + '_U'] = (h, 4 * h)
        shapes[direction + '_b'] = (1, 4 * h)
    shapes['attn_B'] = (hidden_size, 2 * hidden_size)
    shapes['attn_b'] = (1, 1)
    shapes['dec_W'] = (hidden_size, NUM_CHANGES)
    shapes['dec_b'] = (1, NUM_CHANGES)
    return shapes


def _fan_in(name, shapes):
    # Biases share the range of the weight they are added to
    if name.endswith('_b'):
        return shapes[name[:-2] + ('_W' if name != 'attn_b' else '_B')][0]
    return shapes[name][0]


class ModelParams(object):
    """All trainable tensors plus the vocabulary that maps tokens to embedding rows (row 0 is unknown)."""

    def __init__(self, vocab, embedding_dim, hidden_size, arrays, trainable_embeddings=True):
        self.vocab = tuple(vocab)
        self.index = {token: i + 1 for i, token in enumerate(self.vocab)}
        self.embedding_dim = embedding_dim
        self.hidden_size = hidden_size
        self.trainable_embeddings = trainable_embeddings
        self.tensors = OrderedDict()
        for name, shape in param_shapes(len(self.vocab) + 1, embedding_dim, hidden_size).items():
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != shape:
                raise ContractError('parameter {} has shape {}, expected {}'.format(name, values.shape, shape))
            requires_grad = trainable_embeddings or name != 'embedding'
            self.tensors[name] = Tensor(values, requires_grad=requires_grad, name=name)

    def __getitem__(self, name):
        return self.tensors[name]

    def trainable(self):
        return [t for t in self.tensors.values() if t.requires_grad]

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self):
        return ModelParams(self.vocab, self.embedding_dim, self.hidden_size,
                           {name: t.values.copy() for name, t in self.tensors.items()},
                           trainable_embeddings=self.trainable_embeddings)

    def token_ids(self, tokens):
        return [self.index.get(token.lower(), 0) for token in tokens]


def init_params(table, hidden_size, rng, trainable_embeddings=True):
    """Parameters around an EmbeddingTable; every other tensor is uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    shapes = param_shapes(len(table.tokens) + 1, table.dimension, hidden_size)
    arrays = {'embedding': table.matrix()}
    for name, shape in shapes.items():
        if name == 'embedding':
            continue
        r = 1.0 / np.sqrt(_fan_in(name, shapes))
        arrays[name] = rng.uniform(-r, r, shape)
    return ModelParams(table.tokens, table.dimension, hidden_size, arrays, trainable_embeddings)


def _projections(tape, params, direction, words, flags):
    """Per token input projections for a batch of entities. flags is (tokens, entities, indicators)."""
    W = params[direction + '_W']
    d = params.embedding_dim
    shared = tape.matmul(words, tape.slice(W, 0, d, axis=0))
    flag_W = tape.slice(W, d, d + NUM_INDICATORS, axis=0)
    rows = flags.shape[1]
    return [tape.add(tape.gather(shared, [i] * rows), tape.matmul(constant(flags[i]), flag_W))
            for i in range(flags.shape[0])]


def _lstm(tape, params, direction, inputs, order):
    """Run one LSTM direction over per token (batch, 4h) projections, visiting tokens in the given order."""
    U, b = params[direction + '_U'], params[direction + '_b']
    h = U.shape[0]
    rows = inputs[0].shape[0]
    bias = tape.gather(b, [0] * rows)
    state = constant(np.zeros((rows, h)))
    cell = constant(np.zeros((rows, h)))
    outputs = {}
    for i in order:
        z = tape.add(tape.add(inputs[i], tape.matmul(state, U)), bias)
        input_gate = tape.sigmoid(tape.slice(z, 0, h))
        forget_gate = tape.sigmoid(tape.slice(z, h, 2 * h))
        candidate = tape.tanh(tape.slice(z, 2 * h, 3 * h))
        output_gate = tape.sigmoid(tape.slice(z, 3 * h, 4 * h))
        cell = tape.add(tape.mul(forget_gate, cell), tape.mul(input_gate, candidate))
        state = tape.mul(output_gate, tape.tanh(cell))
        outputs[i] = state
    return [outputs[i] for i in sorted(outputs)]


def _pooled(tape, states, rows, width):
    if not rows:
        return constant(np.zeros((1, width)))
    return tape.mean(tape.gather(states, rows), axis=0)


def encode_step(params, example, step, tape=None, entities=None):
    """Encodings of several entities at one step (all of them by default).

    The entities only differ in their indicator flags, so the BiLSTM runs once with one row per entity.
    """
    if not 0 <= step < example.num_steps:
        raise ContractError('step {} outside a {} step paragraph'.format(step, example.num_steps))
    entities = list(range(example.num_entities)) if entities is None else list(entities)
    if not entities or not all(0 <= j < example.num_entities for j in entities):
        raise ContractError('entities {} outside a {} entity paragraph'.format(entities, example.num_entities))
    if tape is None:
        tape = Tape(record=False)
    tokens = example.steps[step]
    n, k = len(tokens), len(entities)
    verbs = example.verb_tokens(step)
    mentions = [example.mention_tokens(step, j) for j in entities]

    flags = np.zeros((n, k, NUM_INDICATORS))
    for row, tokens_of_entity in enumerate(mentions):
        if tokens_of_entity:
            flags[tokens_of_entity, row, 0] = 1.0
    if verbs:
        flags[verbs, :, 1] = 1.0
    words = tape.gather(params['embedding'], params.token_ids(tokens))

    forward = _lstm(tape, params, 'fwd', _projections(tape, params, 'fwd', words, flags), range(n))
    backward = _lstm(tape, params, 'bwd', _projections(tape, params, 'bwd', words, flags), reversed(range(n)))
    # Row i * k + row holds token i as read for entities[row]
    stacked = tape.concat([tape.concat([f, b], axis=1) for f, b in zip(forward, backward)], axis=0)

    hidden = params.hidden_size
    encodings = []
    for row in range(k):
        states = tape.gather(stacked, [i * k + row for i in range(n)])
        h_ev = tape.concat([_pooled(tape, states, mentions[row], hidden), _pooled(tape, states, verbs, hidden)],
                           axis=1)
        scores = tape.add(tape.matmul(states, tape.matmul(params['attn_B'], tape.transpose(h_ev))),
                          params['attn_b'])
        attention = tape.softmax(tape.transpose(scores))
        encodings.append(StepEntityEncoding(tape.matmul(attention, states), attention))
    return encodings


def encode(params, example, step, entity, tape=None):
    if not (0 <= step < example.num_steps and 0 <= entity < example.num_entities):
        raise ContractError('cell ({}, {}) outside a {} x {} paragraph'.format(
            step, entity, example.num_steps, example.num_entities))
    return encode_step(params, example, step, tape, entities=[entity])[0]


def decode(params, enc, tape=None):
    if tape is None:
        tape = Tape(record=False)
    return tape.softmax(tape.add(tape.matmul(enc.c, params['dec_W']), params['dec_b']))


def forward_grid(tape, params, example):
    """T x |E| nested list of 1 x 4 distribution tensors, recorded on tape."""
    return [[decode(params, enc, tape) for enc in encode_step(params, example, t, tape)]
            for t in range(example.num_steps)]


def grid_values(cells):
    return np.array([[cell.values.reshape(-1) for cell in row] for row in cells])


def predict_grid(params, example):
    """T x |E| x 4 array of predicted distributions."""
    return grid_values(forward_grid(Tape(record=False), params, example))
