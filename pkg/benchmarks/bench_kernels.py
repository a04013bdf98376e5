"""Compare the compiled and numpy trilinear kernels, and time one solver step.

    python benchmarks/bench_kernels.py [--n 16] [--repeat 20]
"""
import argparse
import time

import numpy as np

from qgefem import kernels, mms
from qgefem.argyris import build_space
from qgefem.forms import assemble_linear_forms
from qgefem.mesh import generate_rectangle_mesh
from qgefem.timestepping import ImplicitEuler, SolverConfig


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=16, help="cells per side of the unit square")
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    space = build_space(generate_rectangle_mesh(1.0, 1.0, args.n, args.n))
    forms = assemble_linear_forms(space)
    pat = forms.reduced
    qsym = forms.qsym
    psi = np.random.default_rng(0).standard_normal(space.n_free)
    print(f"h=1/{args.n}: {space.n_free} free dofs, {pat.nnz} nonzeros, "
          f"backend={kernels.BACKEND}")

    results = {}
    for name, fn in (("compiled", kernels.assemble_quadratic),
                     ("numpy", kernels.python_assemble_quadratic)):
        if name == "compiled" and kernels.BACKEND != "cython":
            print("compiled kernel not built; skipping")
            continue
        data, res = np.zeros(pat.nnz), np.zeros(pat.n)

        def call():
            data[:] = 0.0
            res[:] = 0.0
            fn(qsym, pat.cell_map, pat.pos, psi, data, res)

        results[name] = best_of(call, args.repeat)
        print(f"{name:>9} kernel: {1e3 * results[name]:8.2f} ms")
    if len(results) == 2:
        print(f"  speed-up: {results['numpy'] / results['compiled']:.1f}x")

    sol = mms.test1()
    F = mms.manufactured_forcing(sol, 1.0, 1.0)
    stepper = ImplicitEuler(space, forms, SolverConfig(k=1 / 8192, T=1.0))
    x = np.zeros(space.n_free)
    t0 = time.perf_counter()
    steps = 50
    for n in range(1, steps + 1):
        x, _, _ = stepper.step(x, n / 8192, F)
    print(f"implicit Euler step (Test 1, k=1/8192): {1e3 * (time.perf_counter() - t0) / steps:.1f} ms")


if __name__ == "__main__":
    main()
