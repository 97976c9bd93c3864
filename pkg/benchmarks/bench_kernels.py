"""Time the numba kernels against the pure-numpy fallback.

Two hot paths are measured on the same interval mesh:

* ``step``: one local time-step (coarse apply plus ``p`` fine sub-steps)
* ``poly``: one application of the stabilized operator, as used by the
  eigenvalue solvers

The first numba call compiles (or loads the cache) and is excluded. The
stepper takes the path as an argument; the operator follows ``LTS_WAVE_NUMBA``.

    python benchmarks/bench_kernels.py --hc 0.001 --p 50 --repeat 200
"""

import argparse
import os
import time

import numpy as np

from lts_wave import StabilizedOperator, assemble, build_interval_mesh, make_stab_params
from lts_wave import _kernels
from lts_wave.lts import LTSStepper


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def bench(h_c, p, nu, fine_lo, repeat):
    sys = assemble(build_interval_mesh(h_c, fine_lo, 1.0, p))
    par = make_stab_params(p, nu)
    dt = 0.9 * h_c
    rng = np.random.default_rng(0)
    u_prev, u_cur = rng.standard_normal((2, sys.n_dofs))
    out = np.empty(sys.n_dofs)
    results = {}
    for use_numba in (True, False):
        stepper = LTSStepper(sys, par, dt, use_numba=use_numba)
        results[("step", use_numba)] = best_of(lambda: stepper.step(u_prev, u_cur, out), repeat)
    op = StabilizedOperator(sys, par, dt)
    saved = os.environ.get("LTS_WAVE_NUMBA")
    try:
        for use_numba in (True, False):
            os.environ["LTS_WAVE_NUMBA"] = "1" if use_numba else "0"
            assert _kernels.numba_enabled() == use_numba
            results[("poly", use_numba)] = best_of(lambda: op.poly(u_cur), repeat)
    finally:
        if saved is None:
            os.environ.pop("LTS_WAVE_NUMBA", None)
        else:
            os.environ["LTS_WAVE_NUMBA"] = saved
    return sys, results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hc", type=float, default=1e-3, help="coarse mesh size")
    ap.add_argument("--p", type=int, default=50, help="refinement ratio")
    ap.add_argument("--nu", type=float, default=0.01, help="damping parameter")
    ap.add_argument("--fine-lo", type=float, default=0.9, help="left end of the fine region")
    ap.add_argument("--repeat", type=int, default=100, help="timed repetitions")
    args = ap.parse_args(argv)
    sys, res = bench(args.hc, args.p, args.nu, args.fine_lo, args.repeat)
    print(f"dofs = {sys.n_dofs}, fine = {sys.fine_idx.size}, p = {args.p}, nu = {args.nu}")
    print(f"{'kernel':<6} {'numba min':>12} {'numpy min':>12} {'speed-up':>9}")
    for name in ("step", "poly"):
        tn, tp = res[(name, True)][0], res[(name, False)][0]
        print(f"{name:<6} {tn * 1e3:10.3f}ms {tp * 1e3:10.3f}ms {tp / tn:8.1f}x")


if __name__ == "__main__":
    main()
