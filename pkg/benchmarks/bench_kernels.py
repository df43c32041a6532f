"""Time the numba kernels against the numpy fallback on identical inputs.

Usage: python benchmarks/bench_kernels.py [--repeat 3]

Prints one line per kernel: best wall time for each backend, the speed-up and
the largest absolute difference between the two outputs.
"""
import argparse
import time

import numpy as np

from tapfe.finite import energy_model, sample_instance
from tapfe.kernels import get_impl
from tapfe.mixture import MixtureSpec
from tapfe.pde import solve_parisi
from tapfe.profiles import StepProfile
from tapfe.quadrature import hermite_rule
from tapfe.sde import simulate


def best_time(fn, repeat):
    out = fn()  # warm-up (includes jit compilation for numba)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    if hasattr(a, "v_sq_mean"):
        return float(np.max(np.abs(a.v_sq_mean - b.v_sq_mean)))
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def cases():
    rng = np.random.default_rng(0)
    x0, dx, n = -6.0, 2e-3, 6001
    xs = x0 + dx * np.arange(n)
    phi = np.log(2 * np.cosh(xs))
    dphi = np.tanh(xs)
    nodes, weights = hermite_rule(61)
    yield "cole_hopf_eval", lambda k: k.cole_hopf_eval(phi, dphi, x0, dx, xs, 0.3, 2.0, nodes, weights)
    yield "soft_direct_max", lambda k: k.soft_direct_max(xs[::10], 1.5, 512, 48)
    yield "soft_fixed_point", lambda k: k.soft_fixed_point(xs, 0.2, 1e-14, 200)

    spec = MixtureSpec.sk(1.5, 0.3)
    alpha = StepProfile.cdf([0.0, 0.2, 0.41], [0.3, 0.7, 1.0])
    pde = solve_parisi(spec, alpha)
    yield "sde_paths (simulate)", lambda k: simulate(spec, alpha, pde, n_paths=20_000, n_steps=500,
                                                     backend=k.__name__.rsplit("_", 1)[-1])

    inst = sample_instance(MixtureSpec.sk(1.0, 0.1), 18, 0)
    model = energy_model(inst)
    yield "enum_energies N=18", lambda k: k.enum_energies(*model, inst.N)
    e = get_impl("numpy").enum_energies(*model, inst.N)
    lz = float(np.logaddexp.reduce(e))
    yield "gibbs_moments N=18", lambda k: k.gibbs_moments(e, lz, inst.N)
    dm = np.array([2, 4, 6], dtype=np.int64)
    code = int(rng.integers(1 << 18))
    yield "cluster_stats N=18", lambda k: k.cluster_stats(e, lz, inst.N, code, dm)

    inst3 = sample_instance(MixtureSpec({2: 0.8, 3: 0.5}, 0.1), 16, 0)
    model3 = energy_model(inst3)
    yield "enum_logsumexp p=3 N=16", lambda k: k.enum_logsumexp(*model3, inst3.N)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    nb, npy = get_impl("numba"), get_impl("numpy")
    print(f"{'kernel':<26}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, fn in cases():
        t_nb, o_nb = best_time(lambda: fn(nb), args.repeat)
        t_np, o_np = best_time(lambda: fn(npy), args.repeat)
        print(f"{name:<26}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>9.1f}{max_diff(o_nb, o_np):>12.2e}")


if __name__ == "__main__":
    main()
