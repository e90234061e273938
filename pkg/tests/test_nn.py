import numpy as np
import pytest

from uapolicy.nn import Adam, Mlp, cross_entropy_grad, softmax
from uapolicy.seeding import named_rng


def numeric_grads(loss_fn, params, h=1e-6):
    """Central finite differences over every parameter entry."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn()
            flat[j] = orig - h
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-3)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


class TestMlpForward:
    def test_zero_weights_give_zero(self):
        net = Mlp([3, 4, 2])
        assert np.array_equal(net.forward(np.ones((5, 3))), np.zeros((5, 2)))

    def test_single_linear_layer_is_dot_product(self):
        net = Mlp([2, 1])
        net.load_arrays([np.array([[2.0], [3.0]])], [np.array([1.0])])
        assert net.forward(np.array([1.0, 1.0]))[0, 0] == 6.0

    def test_batch_equals_per_row(self, rng):
        net = Mlp([4, 8, 3], rng=rng)
        X = rng.normal(size=(6, 4))
        batch = net.forward(X)
        rows = np.vstack([net.forward(x) for x in X])
        assert np.allclose(batch, rows, atol=1e-12)

    def test_round_trip_serialization_bitwise(self, rng):
        net = Mlp([3, 5, 2], rng=rng)
        clone = Mlp.from_lists(net.to_lists())
        for a, b in zip(net.param_arrays(), clone.param_arrays()):
            assert np.array_equal(a, b)


class TestGradients:
    def test_mse_gradients_match_finite_differences(self):
        for trial in range(5):
            rng = named_rng(trial, "nn.fd")
            dims = [3, int(rng.integers(2, 6)), int(rng.integers(2, 6)), 2]
            net = Mlp(dims, rng=rng)
            X = rng.normal(size=(4, 3))
            Y = rng.normal(size=(4, 2))

            out, acts = net.forward_cached(X)
            grad_out = 2.0 * (out - Y) / X.shape[0]
            gw, gb = net.backward(acts, grad_out)

            def loss():
                # mean over the batch, summed over output coordinates
                return float(np.sum((net.forward(X) - Y) ** 2) / X.shape[0])

            numeric = numeric_grads(loss, net.param_arrays())
            assert max_rel_error(gw + gb, numeric) < 1e-4

    def test_cross_entropy_gradients_match_finite_differences(self):
        rng = named_rng(7, "nn.ce")
        net = Mlp([4, 6, 3], rng=rng)
        X = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)

        out, acts = net.forward_cached(X)
        _, grad = cross_entropy_grad(out, labels)
        gw, gb = net.backward(acts, grad)

        def loss():
            logits = net.forward(X)
            probs = softmax(logits)
            return -float(np.mean(np.log(probs[np.arange(5), labels])))

        numeric = numeric_grads(loss, net.param_arrays())
        assert max_rel_error(gw + gb, numeric) < 1e-4


class TestAdam:
    def test_zero_gradient_changes_nothing(self):
        net = Mlp([2, 2], rng=named_rng(0, "adam"))
        before = [p.copy() for p in net.param_arrays()]
        opt = Adam(lr=0.1)
        opt.step(net.param_arrays(), [np.zeros_like(p) for p in net.param_arrays()])
        for b, a in zip(before, net.param_arrays()):
            assert np.array_equal(b, a)

    def test_descends_a_quadratic(self):
        p = [np.array([10.0])]
        opt = Adam(lr=0.5)
        for _ in range(200):
            opt.step(p, [2 * p[0]])
        assert abs(p[0][0]) < 1e-2


class TestSoftmax:
    def test_rows_sum_to_one(self, rng):
        z = rng.normal(size=(4, 5)) * 50
        assert np.allclose(softmax(z).sum(axis=1), 1.0)

    def test_shift_invariant(self, rng):
        z = rng.normal(size=(2, 3))
        assert np.allclose(softmax(z), softmax(z + 100.0))
