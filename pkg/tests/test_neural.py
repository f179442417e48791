import numpy as np
import pytest
from scipy.integrate import quad

from hydrosac import neural
from hydrosac.neural import (
    LINEAR,
    LOG_STD_MAX,
    LOG_STD_MIN,
    RELU,
    Mlp,
    PolicyNet,
    RmspropState,
    flat_grads,
    layer_from_weight,
    mlp_init,
    rmsprop_step,
    squashed_log_prob,
)

FD_STEP = 1e-6


def max_rel_err(analytic, numeric, floor=1e-10):
    a = np.asarray(analytic, dtype=float)
    b = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.abs(a), np.abs(b))
    mask = denom > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a - b)[mask] / denom[mask]))


def fd_gradients(params, loss_fn, h=FD_STEP):
    """Central finite differences of loss_fn() over every entry of params."""
    grads = []
    for arr in params:
        g = np.empty_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            fp = loss_fn()
            arr[idx] = orig - h
            fm = loss_fn()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


class FixedNoise:
    """Stands in for a Generator; always returns the same normal draw."""

    def __init__(self, noise):
        self.noise = np.atleast_1d(np.asarray(noise, dtype=float))

    def standard_normal(self, size):
        assert size == self.noise.shape[0]
        return self.noise.copy()


class TestMlpInit:
    def test_shapes(self):
        net = mlp_init([5, 100, 100, 100, 1], [RELU] * 3 + [LINEAR], np.random.default_rng(0))
        assert [l.weight.shape for l in net.layers] == [(100, 5), (100, 100), (100, 100), (1, 100)]
        assert net.widths == [5, 100, 100, 100, 1]

    def test_final_bound_zero(self):
        net = mlp_init([4, 8, 1], [RELU, LINEAR], np.random.default_rng(0), final_layer_bound=0.0)
        assert np.all(net.layers[-1].weight == 0.0)
        assert np.all(net.layers[-1].bias == 0.0)

    def test_final_bound_respected(self):
        net = mlp_init([4, 8, 1], [RELU, LINEAR], np.random.default_rng(0), final_layer_bound=3e-3)
        assert np.max(np.abs(net.layers[-1].weight)) <= 3e-3
        assert np.max(np.abs(net.layers[0].weight)) <= 1.0 / np.sqrt(4)

    def test_same_seed_bit_identical(self):
        n1 = mlp_init([3, 7, 1], [RELU, LINEAR], np.random.default_rng(11))
        n2 = mlp_init([3, 7, 1], [RELU, LINEAR], np.random.default_rng(11))
        for a, b in zip(n1.parameters(), n2.parameters()):
            assert np.array_equal(a, b)

    def test_rejects_bad_widths(self):
        with pytest.raises(ValueError):
            mlp_init([5], [RELU], np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_init([5, 0, 1], [RELU, LINEAR], np.random.default_rng(0))


class TestForward:
    def test_zero_network(self):
        net = mlp_init([3, 4, 1], [RELU, LINEAR], np.random.default_rng(0), final_layer_bound=0.0)
        for layer in net.layers:
            layer.wt[...] = 0.0
            layer.bias[...] = 0.0
        assert net.forward(np.ones(3)) == np.zeros(1)

    def test_single_linear_layer(self):
        net = Mlp([layer_from_weight(np.array([[2.0]]), np.array([1.0]), LINEAR)])
        assert net.forward(np.array([3.0]))[0] == 7.0

    def test_relu_propagation(self):
        net = Mlp([layer_from_weight(np.eye(2), np.zeros(2), RELU)])
        out = net.forward(np.array([-1.0, 2.0]))
        assert np.array_equal(out, [0.0, 2.0])

    def test_relu_idempotent_on_nonnegative(self):
        net = Mlp([layer_from_weight(np.eye(3), np.zeros(3), RELU)])
        x = np.array([0.0, 1.5, 7.0])
        once = net.forward(x)
        twice = net.forward(once)
        assert np.array_equal(once, twice)

    def test_batch_matches_single(self):
        net = mlp_init([4, 6, 2], [RELU, LINEAR], np.random.default_rng(1), final_layer_bound=0.4)
        xs = np.random.default_rng(2).random((5, 4))
        batch = net.forward(xs)
        for i in range(5):
            assert np.allclose(net.forward(xs[i]), batch[i], rtol=1e-15, atol=0)

    def test_dimension_mismatch(self):
        net = mlp_init([4, 6, 2], [RELU, LINEAR], np.random.default_rng(1))
        with pytest.raises(ValueError):
            net.forward(np.ones(3))


class TestBackward:
    def test_zero_output_grad(self):
        net = mlp_init([3, 5, 1], [RELU, LINEAR], np.random.default_rng(0), final_layer_bound=0.3)
        net.forward(np.ones(3))
        grads, gin = net.backward(np.zeros(1))
        assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)
        assert np.all(gin == 0)

    def test_single_linear_layer_grads(self):
        net = Mlp([layer_from_weight(np.array([[2.0]]), np.array([1.0]), LINEAR)])
        x = np.array([3.0])
        net.forward(x)
        grads, gin = net.backward(np.array([1.0]))
        assert grads[0][0][0, 0] == 3.0  # d/dW = x
        assert grads[0][1][0] == 1.0  # d/db = 1
        assert gin[0] == 2.0  # d/dx = W

    def test_requires_cached_forward(self):
        net = mlp_init([3, 5, 1], [RELU, LINEAR], np.random.default_rng(0))
        with pytest.raises(RuntimeError):
            net.backward(np.ones(1))

    def test_matches_finite_differences(self):
        # finite-difference oracle on a random 5 -> 3 -> 1 network
        rng = np.random.default_rng(14)
        net = mlp_init([5, 3, 1], [RELU, LINEAR], rng, final_layer_bound=0.5)
        x = rng.random(5)

        net.forward(x)
        grads, _ = net.backward(np.array([1.0]))
        fd = fd_gradients(net.parameters(), lambda: float(net.forward(x)[0]))
        assert max_rel_err(np.concatenate([g.ravel() for g in flat_grads(grads)]),
                           np.concatenate([g.ravel() for g in fd])) < 1e-4

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        net = mlp_init([4, 6, 1], [RELU, LINEAR], rng, final_layer_bound=0.5)
        x = rng.random(4)
        net.forward(x)
        _, gin = net.backward(np.array([1.0]))
        fd = np.empty(4)
        for i in range(4):
            xp = x.copy(); xp[i] += FD_STEP
            xm = x.copy(); xm[i] -= FD_STEP
            fd[i] = (net.forward(xp)[0] - net.forward(xm)[0]) / (2 * FD_STEP)
        assert max_rel_err(gin, fd) < 1e-4


class TestRmsprop:
    def test_zero_grad_is_identity(self):
        p = np.array([1.0, -2.0])
        state = RmspropState([p])
        rmsprop_step([p], [np.zeros(2)], state, lr=0.1)
        assert np.array_equal(p, [1.0, -2.0])

    def test_fresh_state_step_magnitude(self):
        # acc = 0.01 g^2, step = lr*g/(0.1*|g| + eps) ~ 10*lr*sign(g) for g >> eps
        g = 3.0
        p = np.array([0.0])
        state = RmspropState([p], rho=0.99, eps=1e-8)
        rmsprop_step([p], [np.array([g])], state, lr=1e-3)
        expected = -1e-3 * g / (np.sqrt(0.01 * g * g) + 1e-8)
        assert p[0] == pytest.approx(expected, rel=1e-12)
        assert p[0] == pytest.approx(-1e-2, rel=1e-6)

    def test_deterministic(self):
        def run():
            p = np.array([[1.0, 2.0], [3.0, 4.0]])
            state = RmspropState([p])
            for k in range(5):
                rmsprop_step([p], [np.full((2, 2), 0.3 * (k + 1))], state, lr=0.01)
            return p
        assert np.array_equal(run(), run())

    def test_lr_zero_is_identity_with_state_update(self):
        p = np.array([1.0])
        state = RmspropState([p])
        rmsprop_step([p], [np.array([5.0])], state, lr=0.0)
        assert p[0] == 1.0
        assert state.acc[0][0] > 0.0

    def test_accumulator_nonnegative(self):
        p = np.random.default_rng(0).random((3, 3))
        state = RmspropState([p])
        for _ in range(20):
            rmsprop_step([p], [np.random.default_rng(1).standard_normal((3, 3))], state, lr=1e-3)
        assert np.all(state.acc[0] >= 0.0)


class TestPolicyForward:
    def test_zero_heads(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        mean, log_std = pol.forward(np.ones(5))
        assert mean == 0.0
        assert log_std == 0.0

    def test_log_std_clamped_high(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        pol.log_std_head.layers[0].bias[...] = 5.0
        _, log_std = pol.forward(np.ones(5))
        assert log_std == LOG_STD_MAX

    def test_log_std_clamped_low(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        pol.log_std_head.layers[0].bias[...] = -30.0
        _, log_std = pol.forward(np.ones(5))
        assert log_std == LOG_STD_MIN


class TestPolicySample:
    def test_near_zero_std_gives_squashed_mean(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        pol.log_std_head.layers[0].bias[...] = -30.0  # clamps to -20, std ~ 2e-9
        action, _, _ = pol.sample(np.ones(5), np.random.default_rng(1))
        assert action == pytest.approx(0.5, abs=1e-8)

    def test_same_seed_identical(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(3), head_bound=0.1)
        obs = np.random.default_rng(4).random(5)
        s1 = pol.sample(obs, np.random.default_rng(7))
        s2 = pol.sample(obs, np.random.default_rng(7))
        assert s1 == s2

    def test_action_strictly_inside_unit_interval(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(5), head_bound=0.1)
        pol.mean_head.layers[0].bias[...] = 500.0  # drive the sigmoid to saturation
        rng = np.random.default_rng(0)
        action, log_prob, _ = pol.sample(np.ones(5), rng)
        assert 0.0 < action < 1.0
        assert np.isfinite(log_prob)

    def test_log_prob_finite_over_random_draws(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(6), head_bound=2.0)
        rng = np.random.default_rng(1)
        for _ in range(500):
            a, lp, _ = pol.sample(rng.random(5), rng)
            assert 0.0 < a < 1.0
            assert np.isfinite(lp)

    def test_sample_log_prob_matches_density_function(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(8), head_bound=0.5)
        obs = np.random.default_rng(9).random(5)
        rng = np.random.default_rng(10)
        action, log_prob, _ = pol.sample(obs, rng)
        mean, log_std = pol.forward(obs)
        assert log_prob == pytest.approx(
            float(squashed_log_prob(mean, log_std, action)), abs=1e-9
        )

    def test_density_normalizes(self):
        # quadrature oracle for the squashed density (floor perturbs < 1e-3)
        for mean, log_std in [(0.0, 0.0), (1.0, -1.0), (-2.0, 0.5)]:
            total, _ = quad(
                lambda a: float(np.exp(squashed_log_prob(mean, log_std, a))),
                0.0, 1.0, limit=200,
            )
            assert total == pytest.approx(1.0, abs=1e-3)


class TestPolicyMeanAction:
    def test_zero_policy(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        assert pol.mean_action(np.ones(5)) == 0.5

    def test_large_mean_saturates_toward_one(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(0), head_bound=0.0)
        pol.mean_head.layers[0].bias[...] = 50.0
        assert pol.mean_action(np.ones(5)) == pytest.approx(1.0, abs=1e-9)

    def test_matches_minimal_std_samples(self):
        pol = PolicyNet.init(5, 8, np.random.default_rng(2), head_bound=0.3)
        pol.log_std_head.layers[0].bias[...] = -30.0  # clamp to min std
        obs = np.random.default_rng(3).random(5)
        rng = np.random.default_rng(4)
        deterministic = pol.mean_action(obs)
        for _ in range(20):
            action, _, _ = pol.sample(obs, rng)
            assert action == pytest.approx(deterministic, abs=1e-4)


class TestPolicyGradients:
    def test_sample_path_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        pol = PolicyNet.init(5, 6, rng, head_bound=0.5)
        obs = rng.random(5)
        noise = FixedNoise(rng.standard_normal(1))
        c_action, c_log_prob = 0.8, -0.4

        def loss():
            a, lp, _ = pol.sample(obs, noise)
            return c_action * a + c_log_prob * lp

        pol.sample(obs, noise)
        tg, mg, lg, _ = pol.backward_sample(np.array([c_action]), np.array([c_log_prob]))
        analytic = flat_grads(tg) + flat_grads(mg) + flat_grads(lg)
        fd = fd_gradients(pol.parameters(), loss)
        assert max_rel_err(
            np.concatenate([g.ravel() for g in analytic]),
            np.concatenate([g.ravel() for g in fd]),
        ) < 1e-4

    def test_clamped_log_std_blocks_gradient(self):
        pol = PolicyNet.init(5, 6, np.random.default_rng(22), head_bound=0.1)
        pol.log_std_head.layers[0].bias[...] = 10.0  # clamped to +2 everywhere
        obs = np.random.default_rng(23).random(5)
        pol.sample(obs, FixedNoise([0.3]))
        _, _, ls_grads, _ = pol.backward_sample(np.array([0.0]), np.array([1.0]))
        assert np.all(ls_grads[0][0] == 0.0)
        assert np.all(ls_grads[0][1] == 0.0)
