"""Tape based reverse mode automatic differentiation over float64 numpy arrays.

Only the operations the state change model and its losses use are here. There is no general
broadcasting: binary ops accept equal shapes, or one side holding a single value.
"""
import logging
from collections import namedtuple

import numpy as np

from LaceTrainer.errors import ContractError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

Node = namedtuple('Node', 'op out inputs backward')


class Tensor(object):
    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        if self.size != 1:
            raise ContractError('item() on a tensor of shape {}'.format(self.shape))
        return float(self.values.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return 'Tensor(name={}, shape={}, requires_grad={})'.format(self.name, self.shape, self.requires_grad)


def constant(values):
    if isinstance(values, Tensor):
        return values
    return Tensor(values)


def _result_shape(op, a, b):
    if a.shape == b.shape:
        return a.shape
    if a.size == 1 and b.size != 1:
        return b.shape
    if b.size == 1 and a.size != 1:
        return a.shape
    if a.size == 1 and b.size == 1:
        return a.shape if a.values.ndim >= b.values.ndim else b.shape
    raise DimensionError(op, a.shape, b.shape)


def _operand(t, shape):
    # Single values are collapsed so numpy never broadcasts (1, 1) against (n,) into (1, n)
    if t.shape != shape and t.size == 1:
        return t.values.reshape(())
    return t.values


def _unbroadcast(g, t):
    if g.shape == t.shape:
        return g
    return np.full(t.shape, g.sum())


class Tape(object):
    """Append-only record of the operations performed since the last reset.

    Only operations whose output depends on a tensor with requires_grad are recorded. A tape built with
    record=False records nothing and its outputs never require a gradient.
    """

    def __init__(self, record=True):
        self.record = record
        self.nodes = []

    def reset(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def _record(self, op, values, inputs, backward):
        if not np.all(np.isfinite(values)):
            raise NumericalError('{} produced a non-finite value'.format(op))
        out = Tensor(values, requires_grad=self.record and any(t.requires_grad for t in inputs))
        if out.requires_grad:
            self.nodes.append(Node(op, out, inputs, backward))
        return out

    # Elementwise

    def elementwise(self, op, *args):
        if op == 'add':
            return self.add(*args)
        if op == 'mul':
            return self.mul(*args)
        if op == 'tanh':
            return self.tanh(*args)
        if op == 'sigmoid':
            return self.sigmoid(*args)
        raise ContractError('unknown elementwise op {!r}'.format(op))

    def add(self, a, b):
        a, b = constant(a), constant(b)
        shape = _result_shape('add', a, b)
        values = _operand(a, shape) + _operand(b, shape)

        def backward(g):
            return _unbroadcast(g, a), _unbroadcast(g, b)

        return self._record('add', values, (a, b), backward)

    def mul(self, a, b):
        a, b = constant(a), constant(b)
        shape = _result_shape('mul', a, b)
        av, bv = _operand(a, shape), _operand(b, shape)

        def backward(g):
            return _unbroadcast(g * bv, a), _unbroadcast(g * av, b)

        return self._record('mul', av * bv, (a, b), backward)

    def scale(self, a, factor):
        return self.mul(a, constant(float(factor)))

    def tanh(self, a):
        y = np.tanh(a.values)

        def backward(g):
            return g * (1.0 - y * y),

        return self._record('tanh', y, (a,), backward)

    def sigmoid(self, a):
        # Same function as 1 / (1 + exp(-x)) without overflow for large |x|
        y = 0.5 * (1.0 + np.tanh(0.5 * a.values))

        def backward(g):
            return g * y * (1.0 - y),

        return self._record('sigmoid', y, (a,), backward)

    # Structural

    def matmul(self, a, b):
        if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError('matmul', a.shape, b.shape)
        av, bv = a.values, b.values

        def backward(g):
            return g @ bv.T, av.T @ g

        return self._record('matmul', av @ bv, (a, b), backward)

    def transpose(self, a):
        if a.values.ndim != 2:
            raise DimensionError('transpose', a.shape)

        def backward(g):
            return g.T,

        return self._record('transpose', a.values.T, (a,), backward)

    def concat(self, tensors, axis=-1):
        tensors = [constant(t) for t in tensors]
        if not tensors:
            raise DimensionError('concat', ())
        try:
            values = np.concatenate([t.values for t in tensors], axis=axis)
        except ValueError:
            raise DimensionError('concat', *[t.shape for t in tensors])
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def backward(g):
            return tuple(np.split(g, bounds, axis=axis))

        return self._record('concat', values, tuple(tensors), backward)

    def slice(self, a, start, stop, axis=-1):
        index = [slice(None)] * a.values.ndim
        index[axis] = slice(start, stop)
        index = tuple(index)
        values = a.values[index]
        if values.size == 0:
            raise DimensionError('slice', a.shape)

        def backward(g):
            ga = np.zeros_like(a.values)
            ga[index] = g
            return ga,

        return self._record('slice', values, (a,), backward)

    def gather(self, a, indices):
        """Rows of a matrix, in the given order (repeats allowed)."""
        indices = np.asarray(indices, dtype=np.int64)
        if a.values.ndim != 2 or indices.ndim != 1 or indices.size == 0:
            raise DimensionError('gather', a.shape, indices.shape)

        def backward(g):
            ga = np.zeros_like(a.values)
            np.add.at(ga, indices, g)
            return ga,

        return self._record('gather', a.values[indices], (a,), backward)

    # Reductions and normalisers

    def softmax(self, x):
        if x.size == 0:
            raise DimensionError('softmax', x.shape)
        shifted = x.values - np.max(x.values, axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / np.sum(e, axis=-1, keepdims=True)

        def backward(g):
            return y * (g - np.sum(g * y, axis=-1, keepdims=True)),

        return self._record('softmax', y, (x,), backward)

    def sum(self, a):
        def backward(g):
            return np.full(a.shape, float(g)),

        return self._record('sum', np.sum(a.values), (a,), backward)

    def mean(self, a, axis=None):
        if a.size == 0:
            raise DimensionError('mean', a.shape)
        if axis is None:
            n = a.size

            def backward(g):
                return np.full(a.shape, float(g) / n),

            return self._record('mean', np.mean(a.values), (a,), backward)

        n = a.shape[axis]

        def backward(g):
            return np.broadcast_to(g / n, a.shape).copy(),

        return self._record('mean', np.mean(a.values, axis=axis, keepdims=True), (a,), backward)

    # Losses

    def mse(self, a, b):
        a, b = constant(a), constant(b)
        if a.shape != b.shape or a.size == 0:
            raise DimensionError('mse', a.shape, b.shape)
        diff = a.values - b.values
        n = diff.size

        def backward(g):
            ga = (2.0 * float(g) / n) * diff
            return ga, -ga

        return self._record('mse', np.mean(diff * diff), (a, b), backward)

    def nll(self, probs, targets):
        """Mean negative log likelihood of integer targets under row distributions."""
        targets = np.asarray(targets, dtype=np.int64)
        if probs.values.ndim != 2 or targets.shape != (probs.shape[0],) or targets.size == 0:
            raise DimensionError('nll', probs.shape, targets.shape)
        rows = np.arange(targets.size)
        picked = probs.values[rows, targets]

        def backward(g):
            gp = np.zeros_like(probs.values)
            gp[rows, targets] = -float(g) / (targets.size * picked)
            return gp,

        return self._record('nll', -np.mean(np.log(picked)), (probs,), backward)

    # Reverse pass

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into every leaf that requires a gradient.

        Leaf gradients add up across calls until the leaves are reset with zero_grad().
        """
        if loss.size != 1:
            raise ContractError('backward needs a scalar loss, got shape {}'.format(loss.shape))
        if not loss.requires_grad:
            return
        produced = {id(node.out) for node in self.nodes}
        seed = np.ones_like(loss.values)
        if id(loss) not in produced:
            _accumulate(loss, seed)
            return

        grads = {id(loss): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            node.out.grad = g
            for t, gt in zip(node.inputs, node.backward(g)):
                if gt is None or not t.requires_grad:
                    continue
                if id(t) in produced:
                    grads[id(t)] = grads[id(t)] + gt if id(t) in grads else gt
                else:
                    _accumulate(t, gt)


def _accumulate(leaf, g):
    leaf.grad = np.array(g, dtype=np.float64) if leaf.grad is None else leaf.grad + g


def relative_error(analytic, numeric, floor=1e-5):
    # Below floor the comparison is effectively absolute; finite differences cannot resolve smaller gradients
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(fn, tensor, eps=1e-5):
    """Central differences of fn(tape) with respect to every entry of tensor."""
    grad = np.zeros_like(tensor.values)
    flat = tensor.values.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn(Tape(record=False)).item()
        flat[i] = original - eps
        minus = fn(Tape(record=False)).item()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def check_gradients(fn, tensors, eps=1e-5):
    """Compare backward gradients of fn against central differences.

    fn takes a fresh Tape and returns a scalar loss. tensors is a mapping name -> leaf Tensor. Returns a
    mapping name -> largest relative error over that tensor's entries.
    """
    for t in tensors.values():
        t.zero_grad()
    tape = Tape()
    tape.backward(fn(tape))
    errors = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.values)
        numeric = numeric_gradient(fn, t, eps)
        errors[name] = float(np.max(relative_error(analytic, numeric)))
        logger.debug('gradient check %s: max relative error %.3g', name, errors[name])
    return errors
