"""Time the compiled and pure-numpy propagation paths on the same problem.

    python3 benchmarks/bench_propagator.py [--points 4096] [--steps 2000] [--order 4] [--no-refine]

The numpy path is the one selected process-wide by BOXDYN_NO_NUMBA=1; here it is
requested per run through PropagatorConfig.backend so both paths share one process.
"""
import argparse
import time

import numpy as np

from boxdyn import BasisIndex, Grid, PropagatorConfig, WallTrajectory, basis_tilde, propagate_series
from boxdyn._accel import HAVE_NUMBA


def timed(backend, psi, traj, t_end, cfg_kwargs):
    cfg = PropagatorConfig(backend=backend, **cfg_kwargs)
    propagate_series(psi, traj, [cfg.dt], cfg)  # compile / warm caches
    start = time.perf_counter()
    out, stats = propagate_series(psi, traj, [t_end], cfg)
    return time.perf_counter() - start, out[0], stats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=4096)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--order", type=int, default=4)
    parser.add_argument("--dt", type=float, default=1e-4)
    parser.add_argument("--no-refine", action="store_true", help="skip the per-step refinement solve")
    args = parser.parse_args()

    traj = WallTrajectory.linear(100.0, 1e-4)
    grid = Grid.transformed(traj, args.points)
    psi = basis_tilde(BasisIndex(0), traj, 0.0, grid)
    kwargs = dict(dt=args.dt, n_points=args.points, space_order=args.order, refine=not args.no_refine)
    t_end = args.steps * args.dt

    results = {}
    for backend in (["numba"] if HAVE_NUMBA else []) + ["numpy"]:
        elapsed, field, stats = timed(backend, psi, traj, t_end, kwargs)
        results[backend] = field
        print(f"{backend:6s} {stats.steps:7d} steps  {stats.factorizations:5d} factorizations  "
              f"{elapsed:8.3f} s  {1e6 * elapsed / stats.steps:8.1f} us/step")
    if len(results) == 2:
        gap = np.max(np.abs(results["numba"].samples - results["numpy"].samples))
        print(f"max |numba - numpy| = {gap:.3e}")


if __name__ == "__main__":
    main()
