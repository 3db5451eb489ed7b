"""Compare the compiled and numpy simulation kernels on the same inputs.

    python benchmarks/bench_kernels.py [--trials N] [--steps N] [--repeat N]
"""
import argparse
import time

import numpy as np

from jumpctl import _backend
from jumpctl import _kernels_py
from jumpctl.channels import transition_cdf
from jumpctl.control_care import solve_control_care
from jumpctl.filter_care import solve_filter_care
from jumpctl.pendulum import pendulum_channel, pendulum_model


def inputs(trials, steps, seed=0):
    m, ch = pendulum_model(), pendulum_channel()
    F = solve_control_care(m, ch).F
    M = solve_filter_care(m, ch).M
    rng = np.random.default_rng(seed)
    T1 = steps + 1
    S = ch.n_modes
    cdf = transition_cdf(ch.tpm)
    init = rng.integers(0, S, trials)
    th = _kernels_py.chain_paths(cdf, rng.random((trials, T1)), init)
    et = _kernels_py.chain_paths(cdf, rng.random((trials, T1)), init)
    c = np.ascontiguousarray
    loop_args = (
        c(m.A), c(m.B), c(m.G), c(m.C), c(m.D), c(m.L), c(m.H), c(F), c(M),
        c(th[:, :-1]), c(et[:, 1:]),
        (rng.random((trials, T1)) < 0.9).astype(np.int8),
        (rng.random((trials, T1)) < 0.9).astype(np.int8),
        rng.standard_normal((trials, T1, m.n_w)) * 0.01,
        np.array([0.0, 0.0, 0.3, 0.0]), np.zeros(4))
    chain_args = (cdf, rng.random((trials, T1)), init)
    return chain_args, loop_args


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    chain_args, loop_args = inputs(a.trials, a.steps)
    try:
        from jumpctl import _kernels as compiled
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the fallback only")
    print(f"active backend: {_backend.name}; trials={a.trials} steps={a.steps}")
    for label, name in (("chain_paths", "chain_paths"), ("closed_loop", "closed_loop")):
        args = chain_args if name == "chain_paths" else loop_args
        t_py = best_of(getattr(_kernels_py, name), args, a.repeat)
        line = f"{label:12s} python {t_py * 1e3:9.2f} ms"
        if compiled is not None:
            t_c = best_of(getattr(compiled, name), args, a.repeat)
            out_c = getattr(compiled, name)(*args)
            out_p = getattr(_kernels_py, name)(*args)
            if name == "closed_loop":
                diff = max(float(np.max(np.abs(x - y))) for x, y in zip(out_c, out_p))
            else:
                diff = float(np.max(np.abs(out_c - out_p)))
            line += f"  cython {t_c * 1e3:9.2f} ms  speedup {t_py / t_c:6.1f}x  max diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
