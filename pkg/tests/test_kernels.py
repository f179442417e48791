"""Equivalence of the numba and numpy kernel backends.

The arithmetic kernels run the same operations in the same order, so they
must agree bit for bit. The squash kernels go through exp/log, where the
two backends' libm implementations may differ in the last ulp.
"""

import numpy as np
import pytest

from hydrosac import _kernels as K

pytestmark = pytest.mark.skipif(
    not K.HAS_NUMBA, reason="numba backend not available"
)


@pytest.fixture(autouse=True)
def restore_backend():
    before = K.backend()
    yield
    K.set_backend(before)


def both(fn_name, *args):
    results = []
    for backend in ("numpy", "numba"):
        K.set_backend(backend)
        args_copy = [np.copy(a) if isinstance(a, np.ndarray) else a for a in args]
        results.append((getattr(K, fn_name)(*args_copy), args_copy))
    return results


RNG = np.random.default_rng(100)
Z = RNG.standard_normal((64, 32))
G = RNG.standard_normal((64, 32))


def test_relu_bit_identical():
    (r1, _), (r2, _) = both("relu", Z)
    assert np.array_equal(r1, r2)


def test_relu_backward_bit_identical():
    (r1, _), (r2, _) = both("relu_backward", G, Z)
    assert np.array_equal(r1, r2)


def test_rmsprop_bit_identical():
    param = RNG.standard_normal((16, 8))
    grad = RNG.standard_normal((16, 8))
    acc = np.abs(RNG.standard_normal((16, 8)))
    (_, args1), (_, args2) = both("rmsprop2d", param, grad, acc, 5e-4, 0.99, 1e-8)
    assert np.array_equal(args1[0], args2[0])  # updated params
    assert np.array_equal(args1[2], args2[2])  # accumulators


def test_rmsprop_1d_wrapper_matches_2d():
    p1 = RNG.standard_normal(40)
    g = RNG.standard_normal(40)
    a1 = np.abs(RNG.standard_normal(40))
    p2, a2 = p1.copy().reshape(1, -1), a1.copy().reshape(1, -1)
    K.rmsprop1d(p1, g, a1, 1e-3, 0.99, 1e-8)
    K.rmsprop2d(p2, g.reshape(1, -1), a2, 1e-3, 0.99, 1e-8)
    assert np.array_equal(p1, p2[0])
    assert np.array_equal(a1, a2[0])


def test_polyak_bit_identical():
    target = RNG.standard_normal((16, 8))
    main = RNG.standard_normal((16, 8))
    (_, args1), (_, args2) = both("polyak2d", target, main, 0.0006)
    assert np.array_equal(args1[0], args2[0])


def test_q_target_bit_identical():
    reward = RNG.uniform(0, 600, 128)
    done = (RNG.random(128) < 0.02).astype(float)
    v_next = RNG.standard_normal(128) * 100
    (r1, _), (r2, _) = both("q_target", reward, done, v_next, 0.99)
    assert np.array_equal(r1, r2)


def test_squash_sample_matches_within_ulps():
    mean = RNG.standard_normal(256) * 3
    log_std = RNG.uniform(-20, 2, 256)
    noise = RNG.standard_normal(256)
    (r1, _), (r2, _) = both("squash_sample", mean, log_std, noise, 3e-6)
    for a, b in zip(r1, r2):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_squash_backward_matches_within_ulps():
    n = 256
    action = RNG.uniform(1e-6, 1 - 1e-6, n)
    std = np.exp(RNG.uniform(-20, 2, n))
    noise = RNG.standard_normal(n)
    g_action = RNG.standard_normal(n)
    g_log_prob = RNG.standard_normal(n)
    (r1, _), (r2, _) = both(
        "squash_backward", g_action, g_log_prob, action, std, noise, 3e-6
    )
    for a, b in zip(r1, r2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_env_flag_selects_numpy(monkeypatch):
    import importlib
    import subprocess
    import sys

    code = (
        "import hydrosac._kernels as K; print(K.backend())"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "HYDROSAC_NUMBA": "0"},
        capture_output=True,
        text=True,
    )
    assert out.stdout.strip() == "numpy"


def test_short_training_agrees_across_backends():
    """End-to-end: a short training run matches across backends to tight
    tolerance (exact up to libm ulp differences in the policy path)."""
    from hydrosac.scenario import ArtificialConfig, generate_artificial_pools
    from hydrosac.sac import SacConfig
    from hydrosac.trainer import TrainConfig, train

    pools = generate_artificial_pools(ArtificialConfig(samples_per_week=5), seed=3)
    cfg = TrainConfig(
        total_weeks=156, exploration_weeks=52, batch_size=16, seed=7,
        agent=SacConfig(hidden_width=8),
    )
    rewards = {}
    for backend in ("numpy", "numba"):
        K.set_backend(backend)
        _, records = train(cfg, pools)
        rewards[backend] = np.array([r.total_reward for r in records])
    np.testing.assert_allclose(rewards["numpy"], rewards["numba"], rtol=1e-9)
