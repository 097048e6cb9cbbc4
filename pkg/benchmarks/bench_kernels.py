"""Compare the numba and pure-numpy kernel backends.

Run:

    python3 benchmarks/bench_kernels.py [--agents N] [--repeat R]

The backend is frozen at import time from CELLTRACE_BACKEND, so this
script re-executes itself once per backend and prints a side-by-side
table of per-call time for each kernel plus a whole-scenario timing.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _bench_backend(agents: int, repeat: int) -> dict:
    from celltrace import _kernels
    from celltrace.simnet import AgentSpec, World, WorldConfig

    rng = np.random.Generator(np.random.PCG64(99))
    pos = rng.uniform(0.0, 1000.0, size=(agents, 2))
    obstacles = rng.uniform(0.0, 1000.0, size=(12, 4))

    out = {"backend": _kernels.BACKEND}

    # warm up so numba compilation is not billed to the measurement
    _kernels.link_matrix(pos, obstacles, 10.0)
    t0 = time.perf_counter()
    for _ in range(repeat):
        _kernels.link_matrix(pos, obstacles, 10.0)
    out["link_matrix_ms"] = (time.perf_counter() - t0) / repeat * 1e3

    rho1 = rng.uniform(0.0, 14.0, size=4096)
    th1 = rng.uniform(-np.pi, np.pi, size=4096)
    rho2 = rng.uniform(0.0, 14.0, size=4096)
    th2 = rng.uniform(-np.pi, np.pi, size=4096)
    _kernels.polar_distance_batch(rho1, th1, rho2, th2)
    t0 = time.perf_counter()
    for _ in range(repeat):
        _kernels.polar_distance_batch(rho1, th1, rho2, th2)
    out["polar_distance_batch_ms"] = (time.perf_counter() - t0) / repeat * 1e3

    config = WorldConfig(
        seed=5,
        duration_slots=20,
        region=(0.0, 0.0, 500.0, 500.0),
        envelope="transparent",
        rsa_bits=512,
        agents=tuple(
            AgentSpec(f"a{i:03d}", (float(x), float(y)))
            for i, (x, y) in enumerate(rng.uniform(0.0, 500.0, size=(agents, 2)))
        ),
    )
    t0 = time.perf_counter()
    world = World(config)
    world.run()
    out["scenario_seconds"] = time.perf_counter() - t0
    out["scenario_reports"] = world.emitted_reports
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--agents", type=int, default=150)
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--backend", choices=("numpy", "numba"), default=None,
                        help="internal: bench one backend and emit JSON")
    args = parser.parse_args()

    if args.backend:
        os.environ["CELLTRACE_BACKEND"] = args.backend
        print(json.dumps(_bench_backend(args.agents, args.repeat)))
        return 0

    rows = []
    for backend in ("numpy", "numba"):
        env = dict(os.environ, CELLTRACE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--backend", backend,
             "--agents", str(args.agents), "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True,
        )
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    print(f"{'kernel':28s}  " + "  ".join(f"{r['backend']:>10s}" for r in rows))
    for key in ("link_matrix_ms", "polar_distance_batch_ms", "scenario_seconds"):
        vals = "  ".join(f"{r[key]:10.3f}" for r in rows)
        print(f"{key:28s}  {vals}")
    print(f"(agents={args.agents}, repeat={args.repeat}, "
          f"scenario reports={rows[0]['scenario_reports']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
