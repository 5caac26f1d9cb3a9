"""Compiled core vs numpy fallback on the particle-grid kernels and a full coupled step.

Each backend runs in its own interpreter (the backend is fixed at import),
the fallback one with VLASOVWAVE_BACKEND=python.

    python3 benchmarks/bench_core.py [--n 64] [--particles 256] [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit


def measure(n: int, particles: int, repeat: int) -> dict:
    import numpy as np

    from vlasovwave import backend
    from vlasovwave.dynamics import CoupledStepper, SystemState
    from vlasovwave.field import init_ground_field, stencil
    from vlasovwave.grid import Grid
    from vlasovwave.kernel import RegularizationKernel
    from vlasovwave.laws import RingLaw

    k = RegularizationKernel()
    t = k.tables
    g = Grid(n, 4.8)
    e = RingLaw().quadrature(particles)
    q = np.ascontiguousarray(e.q)
    w = np.ascontiguousarray(e.weight)
    f = np.ascontiguousarray(np.random.default_rng(0).normal(size=g.shape))
    out = g.zeros()
    st = stencil(6)
    ops = {
        "deposit": lambda: backend.deposit(q, w, out, g.lo, g.h, k.radius, t["val"]),
        "gather_grad": lambda: backend.gather_grad(q, f, g.lo, g.h, k.radius, t["grad"]),
        "gather_hess": lambda: backend.gather_hess(q, f, g.lo, g.h, k.radius, t["grad"], t["hess_b"]),
        "laplacian": lambda: backend.laplacian(f, out, g.h, st),
    }
    state = SystemState(e.copy(), init_ground_field(k, g, e.q, e.weight))
    stepper = CoupledStepper(k, state, 0.4 * g.h)
    ops["coupled_step"] = stepper.step
    small = Grid(33, 3.0)
    cout = small.zeros()
    ops["coulomb_direct"] = lambda: backend.coulomb_direct(q[:8], w[:8], cout, small.lo, small.h, k.radius,
                                                           t["pot"], t["pot_k"])
    res = {}
    for name, fn in ops.items():
        fn()
        res[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    return dict(backend=backend.NAME, timings=res)


def run_child(env_backend: str | None, args) -> dict:
    env = dict(os.environ)
    env.pop("VLASOVWAVE_BACKEND", None)
    if env_backend:
        env["VLASOVWAVE_BACKEND"] = env_backend
    cmd = [sys.executable, __file__, "--child", "--n", str(args.n), "--particles", str(args.particles),
           "--repeat", str(args.repeat)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64, help="grid points per axis")
    ap.add_argument("--particles", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.n, args.particles, args.repeat)))
        return
    fast = run_child(None, args)
    slow = run_child("python", args)
    if fast["backend"] != "cython":
        print("compiled core not available; both columns use the fallback")
    print(f"grid {args.n}^3, {args.particles} particles, best of {args.repeat}")
    print(f"{'operation':<16}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name in fast["timings"]:
        a, b = fast["timings"][name], slow["timings"][name]
        print(f"{name:<16}{a * 1e3:>10.2f}ms{b * 1e3:>10.2f}ms{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
