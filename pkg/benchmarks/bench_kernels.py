"""Compiled kernels against the pure-Python fallback.

Each workload runs in a fresh interpreter so that ARCTIC_PURE_PYTHON picks
the backend at import time.  Usage: python benchmarks/bench_kernels.py
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOADS = {
    "flip": """
import time
from arctic import kernels
from arctic.dynamics import run_flip_dynamics
from arctic.lattice import build_domain, extremal_heights, boundary_height, hexagon_spec
d = build_domain(hexagon_spec(1, 1, 1), {n})
lo, hi = extremal_heights(d, boundary_height(d))
t = time.perf_counter()
run_flip_dynamics(hi, {steps}, 0)
print(kernels.BACKEND, time.perf_counter() - t)
""",
    "sweeps": """
import time
from arctic import kernels
from arctic.dynamics import run_sweeps
from arctic.lattice import build_domain, extremal_heights, boundary_height, hexagon_spec
d = build_domain(hexagon_spec(1, 1, 1), {n})
lo, hi = extremal_heights(d, boundary_height(d))
t = time.perf_counter()
run_sweeps(hi, {sweeps}, 0)
print(kernels.BACKEND, time.perf_counter() - t)
""",
    "solver": """
import time
from arctic import kernels
from arctic.lattice import hexagon_spec
from arctic.limitshape import solve_limit_shape
t = time.perf_counter()
solve_limit_shape(hexagon_spec(1, 1, 1), 1 / {m}, tol=1e-8)
print(kernels.BACKEND, time.perf_counter() - t)
""",
}


def run(name, pure, **params):
    env = dict(os.environ)
    env["ARCTIC_PURE_PYTHON"] = "1" if pure else "0"
    out = subprocess.run([sys.executable, "-c", WORKLOADS[name].format(**params)], env=env,
                         capture_output=True, text=True, check=True)
    backend, secs = out.stdout.split()
    return backend, float(secs)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--steps", type=int, default=200000)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--json", action="store_true")
    args = p.parse_args(argv)
    params = {"flip": {"n": args.n, "steps": args.steps},
              "sweeps": {"n": args.n, "sweeps": args.sweeps},
              "solver": {"m": args.m}}
    rows = []
    for name, kw in params.items():
        b1, fast = run(name, False, **kw)
        b2, slow = run(name, True, **kw)
        rows.append({"workload": name, "params": kw, "compiled_backend": b1, "compiled_s": fast,
                     "python_s": slow, "speedup": slow / fast if fast > 0 else None})
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        print(f"{'workload':<8} {'compiled (s)':>13} {'python (s)':>11} {'speedup':>8}")
        for r in rows:
            print(f"{r['workload']:<8} {r['compiled_s']:>13.4f} {r['python_s']:>11.3f} {r['speedup']:>8.1f}"
                  + ("" if r["compiled_backend"] == "cython" else "  (extension not built)"))


if __name__ == "__main__":
    main()
