"""Compare the compiled sweep kernels against the numpy fallback.

Two measurements:

* raw red-black sweeps on synthetic padded arrays, checking that both
  backends produce bit-identical iterates before timing them;
* one representative end-to-end solve per backend in a subprocess (the
  backend is chosen at import time via THINLAB_KERNEL, so a fresh
  interpreter is the only clean way to force it).

Run from the repository root:

    python3 benchmarks/bench_sweeps.py [--size 256] [--sweeps 80]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap
import time

import numpy as np

from thinlab._kernels import fallback

try:
    from thinlab._kernels import _sweeps
except ImportError:
    _sweeps = None


def synthetic_problem_2d(n: int, seed: int = 7):
    """Padded arrays mimicking one penalized bottom-obstacle solve."""
    rng = np.random.default_rng(seed)
    shape_p = (n + 2, n + 2)
    wy = np.zeros(shape_p)
    wz = np.zeros(shape_p)
    wy[1:-1, 1:-1] = rng.uniform(0.5, 1.5, (n, n))
    wz[1:-1, 1:-1] = rng.uniform(0.5, 1.5, (n, n))
    diag = np.zeros(shape_p)
    c = (slice(1, -1), slice(1, -1))
    diag[c] += wy[:-2, 1:-1] + wy[c] + wz[1:-1, :-2] + wz[c]
    free = np.zeros(shape_p, dtype=np.uint8)
    free[c] = 1
    diag[free == 0] = 1.0
    rhs2 = np.zeros(shape_p)
    qpen = np.zeros(shape_p)
    qpen[1:-1, 1] = rng.uniform(0.0, 2.0, n)
    psi = np.full(shape_p, 0.5)
    lower = np.full(shape_p, -np.inf)
    upper = np.full(shape_p, np.inf)
    u0 = np.zeros(shape_p)
    u0[c] = rng.uniform(0.0, 1.0, (n, n))
    args = (wy, wz, diag, rhs2, qpen, psi, lower, upper, free)
    return u0, args


def run_sweeps(impl, u0, args, sweeps: int, omega: float = 1.9):
    u = u0.copy()
    t0 = time.perf_counter()
    for k in range(sweeps):
        impl.psor_sweep_2d(u, *args, omega, k % 2)
    return u, time.perf_counter() - t0


def bench_raw(size: int, sweeps: int) -> None:
    u0, args = synthetic_problem_2d(size)
    u_py, t_py = run_sweeps(fallback, u0, args, sweeps)
    print(f"raw 2-D sweeps, {size}x{size} interior, {sweeps} sweeps")
    print(f"  python   {t_py / sweeps * 1e3:8.3f} ms/sweep")
    if _sweeps is None:
        print("  compiled extension not built; skipping")
        return
    u_c, t_c = run_sweeps(_sweeps, u0, args, sweeps)
    identical = np.array_equal(u_py, u_c)
    print(f"  compiled {t_c / sweeps * 1e3:8.3f} ms/sweep "
          f"({t_py / t_c:.1f}x faster)")
    print(f"  iterates bit-identical: {identical}")
    if not identical:
        raise SystemExit("backends disagree; do not trust the timings")


SOLVE_SNIPPET = textwrap.dedent("""
    import json, time
    import numpy as np
    from thinlab import (BoundaryCondition, GridSpec, ObstacleProblem,
                         solve_eps_problem)

    grid = GridSpec(dimension=2, extent=(1.0,), height=0.5,
                    shape=(321, 161), weight_exponent=0.5,
                    energy_exponent=2.0)
    prob = ObstacleProblem(
        grid=grid, obstacles="all", psi=0.5,
        sigma=BoundaryCondition(
            ("top",), lambda *c: 0.25 + 0.25 * np.cos(2 * np.pi * c[0])))
    t0 = time.perf_counter()
    rep = solve_eps_problem(prob)
    print(json.dumps({
        "backend": rep.backend,
        "energy": rep.energy,
        "iterations": rep.iterations,
        "wall_s": time.perf_counter() - t0,
    }))
""")


def bench_solve() -> None:
    print("end-to-end solve, 321x161 weighted box, full bottom obstacle")
    results = {}
    for backend in ("python", "compiled"):
        env = dict(os.environ, THINLAB_KERNEL=backend)
        run = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET],
                             env=env, capture_output=True, text=True)
        if run.returncode != 0:
            print(f"  {backend:8s} failed:\n{run.stderr.strip()}")
            continue
        rec = json.loads(run.stdout.strip().splitlines()[-1])
        results[backend] = rec
        print(f"  {backend:8s} {rec['wall_s']:7.2f} s, "
              f"{rec['iterations']:6d} sweeps, energy {rec['energy']:.10f}")
    if len(results) == 2:
        same = results["python"]["energy"] == results["compiled"]["energy"]
        ratio = results["python"]["wall_s"] / results["compiled"]["wall_s"]
        print(f"  energies identical: {same}; compiled {ratio:.1f}x faster")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=256,
                        help="interior nodes per side for the raw sweeps")
    parser.add_argument("--sweeps", type=int, default=80,
                        help="number of raw sweeps to time")
    parser.add_argument("--skip-solve", action="store_true",
                        help="only run the raw kernel comparison")
    args = parser.parse_args(argv)
    bench_raw(args.size, args.sweeps)
    if not args.skip_solve:
        bench_solve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
