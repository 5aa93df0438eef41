import unittest

import numpy as np
import numpy.testing as npt

from LaceTrainer.autodiff import Tape, Tensor, check_gradients, constant
from LaceTrainer.errors import ContractError, DimensionError, NumericalError


class TestForward(unittest.TestCase):
    def setUp(self):
        self.tape = Tape()

    def test_matmul(self):
        out = self.tape.matmul(constant(np.eye(2)), constant([[1, 2], [3, 4]]))
        npt.assert_array_equal(out.values, [[1, 2], [3, 4]])
        out = self.tape.matmul(constant([[1, 2]]), constant([[3], [4]]))
        npt.assert_array_equal(out.values, [[11]])

    def test_matmul_shapes(self):
        with self.assertRaises(DimensionError):
            self.tape.matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))
        with self.assertRaises(DimensionError):
            self.tape.matmul(constant(np.ones(3)), constant(np.ones((3, 1))))

    def test_elementwise(self):
        self.assertEqual(self.tape.elementwise('sigmoid', constant(0.0)).item(), 0.5)
        self.assertEqual(self.tape.elementwise('tanh', constant(0.0)).item(), 0.0)
        npt.assert_array_equal(self.tape.elementwise('add', constant([[1, 2], [3, 4]]), constant(1.0)).values,
                               [[2, 3], [4, 5]])
        npt.assert_array_equal(self.tape.elementwise('mul', constant([1, 2]), constant([3, 4])).values, [3, 8])
        with self.assertRaises(ContractError):
            self.tape.elementwise('relu', constant(1.0))

    def test_no_general_broadcasting(self):
        with self.assertRaises(DimensionError):
            self.tape.add(constant(np.ones((2, 2))), constant(np.ones((1, 2))))

    def test_sigmoid_saturates(self):
        out = self.tape.sigmoid(constant([-1000.0, 1000.0]))
        npt.assert_allclose(out.values, [0.0, 1.0])

    def test_softmax(self):
        npt.assert_array_equal(self.tape.softmax(constant([0, 0, 0, 0])).values, [0.25] * 4)
        out = self.tape.softmax(constant([1000.0, 0.0])).values
        self.assertTrue(np.all(np.isfinite(out)))
        npt.assert_allclose(out, [1.0, 0.0])

    def test_softmax_is_a_distribution(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            out = self.tape.softmax(constant(rng.normal(scale=5.0, size=(3, 7)))).values
            self.assertTrue(np.all(out > 0))
            npt.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)
        with self.assertRaises(DimensionError):
            self.tape.softmax(constant(np.zeros(0)))

    def test_reductions_and_losses(self):
        a = constant([[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(self.tape.sum(a).item(), 10.0)
        self.assertEqual(self.tape.mean(a).item(), 2.5)
        npt.assert_array_equal(self.tape.mean(a, axis=0).values, [[2.0, 3.0]])
        self.assertEqual(self.tape.mse(constant([0.5, 0, 0.5, 0]), constant([0.25, 0.25, 0.5, 0])).item(), 0.03125)
        probs = constant([[0.25, 0.25, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]])
        self.assertAlmostEqual(self.tape.nll(probs, [0, 3]).item(), np.log(4.0), places=12)
        with self.assertRaises(DimensionError):
            self.tape.nll(probs, [0])

    def test_structural(self):
        a = constant(np.arange(6.0).reshape(2, 3))
        npt.assert_array_equal(self.tape.transpose(a).values, np.arange(6.0).reshape(2, 3).T)
        npt.assert_array_equal(self.tape.slice(a, 1, 3).values, [[1, 2], [4, 5]])
        npt.assert_array_equal(self.tape.slice(a, 1, 2, axis=0).values, [[3, 4, 5]])
        npt.assert_array_equal(self.tape.gather(a, [1, 1, 0]).values, [[3, 4, 5], [3, 4, 5], [0, 1, 2]])
        npt.assert_array_equal(self.tape.concat([a, a], axis=0).shape, (4, 3))
        with self.assertRaises(DimensionError):
            self.tape.concat([a, constant(np.ones((3, 3)))], axis=1)
        with self.assertRaises(DimensionError):
            self.tape.slice(a, 3, 3)

    def test_non_finite_values(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with self.assertRaises(NumericalError):
            self.tape.mul(w, constant(np.inf))
        with self.assertRaises(NumericalError):
            self.tape.nll(constant([[1.0, 0.0]]), [1])

    def test_recording(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        self.tape.add(constant(1.0), constant(2.0))
        self.assertEqual(len(self.tape), 0)
        self.tape.tanh(w)
        self.assertEqual(len(self.tape), 1)
        self.tape.reset()
        self.assertEqual(len(self.tape), 0)

        silent = Tape(record=False)
        self.assertFalse(silent.tanh(w).requires_grad)
        self.assertEqual(len(silent), 0)


class TestBackward(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1234)

    def leaf(self, *shape):
        return Tensor(self.rng.normal(size=shape), requires_grad=True)

    def test_sum(self):
        w = self.leaf(3, 2)
        tape = Tape()
        tape.backward(tape.sum(w))
        npt.assert_array_equal(w.grad, np.ones((3, 2)))

    def test_dead_branch(self):
        w = self.leaf(2, 2)
        tape = Tape()
        tape.backward(tape.sum(tape.scale(w, 0.0)))
        npt.assert_array_equal(w.grad, np.zeros((2, 2)))

    def test_accumulation_is_additive(self):
        w = self.leaf(2, 3)
        v = self.leaf(3, 1)

        def loss(tape):
            return tape.sum(tape.tanh(tape.matmul(w, v)))

        tape = Tape()
        tape.backward(loss(tape))
        once_w, once_v = w.grad.copy(), v.grad.copy()
        tape = Tape()
        tape.backward(loss(tape))
        npt.assert_allclose(w.grad, 2 * once_w, rtol=1e-15)
        npt.assert_allclose(v.grad, 2 * once_v, rtol=1e-15)

        w.zero_grad()
        self.assertIsNone(w.grad)

    def test_shared_input(self):
        w = self.leaf(2, 2)
        tape = Tape()
        tape.backward(tape.sum(tape.mul(w, w)))
        npt.assert_allclose(w.grad, 2 * w.values)

    def test_leaf_loss(self):
        w = Tensor([[3.0]], requires_grad=True)
        Tape().backward(w)
        npt.assert_array_equal(w.grad, [[1.0]])

    def test_non_scalar_loss(self):
        w = self.leaf(2, 2)
        tape = Tape()
        with self.assertRaises(ContractError):
            tape.backward(tape.tanh(w))

    def assertGradientsMatch(self, fn, tensors, tolerance=1e-6):
        for name, error in check_gradients(fn, tensors).items():
            self.assertLess(error, tolerance, name)

    def test_matmul_gradient(self):
        a, b = self.leaf(3, 4), self.leaf(4, 2)
        weights = constant(self.rng.normal(size=(3, 2)))
        self.assertGradientsMatch(lambda tape: tape.sum(tape.mul(tape.matmul(a, b), weights)), dict(a=a, b=b))

    def test_add_scalar_gradient(self):
        a, s = self.leaf(2, 2), self.leaf(1, 1)
        weights = constant(self.rng.normal(size=(2, 2)))
        self.assertGradientsMatch(lambda tape: tape.sum(tape.mul(tape.add(a, s), weights)), dict(a=a, s=s))

    def test_softmax_gradient(self):
        x = self.leaf(5)
        direction = constant(self.rng.normal(size=5))
        self.assertGradientsMatch(lambda tape: tape.sum(tape.mul(tape.softmax(x), direction)), dict(x=x))

    def test_nonlinear_gradients(self):
        x = self.leaf(2, 3)
        direction = constant(self.rng.normal(size=(2, 3)))
        for op in ('tanh', 'sigmoid'):
            self.assertGradientsMatch(lambda tape: tape.sum(tape.mul(tape.elementwise(op, x), direction)), dict(x=x))

    def test_structural_gradients(self):
        a, b = self.leaf(3, 4), self.leaf(3, 2)
        weights = constant(self.rng.normal(size=(4, 4)))

        def fn(tape):
            joined = tape.concat([tape.slice(a, 1, 3), b], axis=1)
            picked = tape.gather(joined, [2, 0, 2, 1])
            return tape.sum(tape.mul(tape.transpose(picked), weights))

        self.assertGradientsMatch(fn, dict(a=a, b=b))

    def test_loss_gradients(self):
        p, q = self.leaf(1, 4), self.leaf(1, 4)
        logits = self.leaf(3, 4)

        def fn(tape):
            rows = tape.mean(tape.softmax(logits), axis=0)
            return tape.add(tape.mse(p, q), tape.add(tape.nll(tape.softmax(logits), [0, 3, 1]), tape.mean(rows)))

        self.assertGradientsMatch(fn, dict(p=p, q=q, logits=logits))


if __name__ == '__main__':
    unittest.main()
