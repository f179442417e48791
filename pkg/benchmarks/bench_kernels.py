"""Compare the numba and numpy kernel backends.

Times the individual kernels and a full agent update (the training hot
path) under each backend. Run from the repository root:

    python benchmarks/bench_kernels.py [--updates N]
"""

import argparse
import time

import numpy as np

from hydrosac import _kernels as K
from hydrosac.sac import AgentBundle, ReplayBuffer, SacConfig, Transition, update


def timeit(fn, n):
    fn()  # warm up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - t0) / n


def bench_kernels(n=5000):
    rng = np.random.default_rng(0)
    z = rng.standard_normal((100, 100))
    g = rng.standard_normal((100, 100))
    p = rng.standard_normal((100, 100))
    acc = np.abs(rng.standard_normal((100, 100)))
    t = rng.standard_normal((100, 100))
    m = rng.standard_normal((100, 100))
    r1 = rng.uniform(0, 600, 100)
    d1 = (rng.random(100) < 0.02).astype(float)
    v1 = rng.standard_normal(100)
    mean = rng.standard_normal(100)
    ls = rng.uniform(-2, 1, 100)
    noise = rng.standard_normal(100)
    act = 1 / (1 + np.exp(-rng.standard_normal(100)))
    std = np.exp(ls)

    cases = [
        ("relu 100x100", lambda: K.relu(z)),
        ("relu_backward", lambda: K.relu_backward(g, z)),
        ("rmsprop 100x100", lambda: K.rmsprop2d(p, g, acc, 5e-4, 0.99, 1e-8)),
        ("polyak 100x100", lambda: K.polyak2d(t, m, 6e-4)),
        ("q_target 100", lambda: K.q_target(r1, d1, v1, 0.99)),
        ("squash_sample 100", lambda: K.squash_sample(mean, ls, noise, 3e-6)),
        ("squash_backward 100", lambda: K.squash_backward(v1, r1, act, std, noise, 3e-6)),
    ]
    results = {}
    for backend in K.available_backends():
        K.set_backend(backend)
        results[backend] = {name: timeit(fn, n) for name, fn in cases}
    return results


def bench_update(n_updates=500, batch_size=100):
    rng = np.random.default_rng(0)
    buf = ReplayBuffer()
    for i in range(2000):
        buf.push(
            Transition(
                rng.random(5),
                float(rng.uniform(0.01, 0.99)),
                float(rng.uniform(0, 30)),
                rng.random(5),
                i % 52 == 51,
            )
        )
    results = {}
    for backend in K.available_backends():
        K.set_backend(backend)
        agent = AgentBundle.init(SacConfig(), np.random.default_rng(1))
        for _ in range(20):  # warm up
            update(agent, buf.sample_arrays(batch_size, rng), rng)
        t0 = time.perf_counter()
        for _ in range(n_updates):
            update(agent, buf.sample_arrays(batch_size, rng), rng)
        results[backend] = n_updates / (time.perf_counter() - t0)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--updates", type=int, default=500)
    parser.add_argument("--kernel-reps", type=int, default=5000)
    args = parser.parse_args()

    print(f"backends: {', '.join(K.available_backends())} (default: {K.backend()})")
    print()

    kernel_results = bench_kernels(args.kernel_reps)
    backends = list(kernel_results)
    header = f"{'kernel':22s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name in kernel_results[backends[0]]:
        row = f"{name:22s}"
        times = [kernel_results[b][name] for b in backends]
        for t in times:
            row += f"{t * 1e6:10.2f}us"
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)

    print()
    update_results = bench_update(args.updates)
    for backend, rate in update_results.items():
        print(f"full SAC update ({backend:5s}): {rate:7.1f} updates/s "
              f"({1000 / rate:.2f} ms each, batch 100)")
    if len(update_results) == 2:
        rates = list(update_results.values())
        print(f"update speedup numba vs numpy: {rates[1] / rates[0]:.2f}x"
              if list(update_results)[0] == "numpy"
              else f"update speedup numba vs numpy: {rates[0] / rates[1]:.2f}x")


if __name__ == "__main__":
    main()
