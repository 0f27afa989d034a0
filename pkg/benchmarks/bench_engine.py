"""Time one deterministic BD run under the numba and the numpy backend.

Each backend runs in its own interpreter because the choice is made at import
time from BDVAX_DISABLE_NUMBA.

    python benchmarks/bench_engine.py --communities 500 --days 60 --repeat 3
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from bdvax import _kernels
from bdvax.engine import run
from bdvax.indices import contact_matrix
from bdvax.synthworld import default_synth_config, generate_world

n, m, days, repeat, mode = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4]), sys.argv[5]
world = generate_world(default_synth_config(n_communities=n, n_pois=m, horizon_days=days, seed=0))
t = time.perf_counter()
first = run(world, "bd", None, mode)
warm = time.perf_counter() - t
best = float("inf")
for _ in range(repeat):
    t = time.perf_counter()
    res = run(world, "bd", None, mode)
    best = min(best, time.perf_counter() - t)
t = time.perf_counter()
contact_matrix(world)
cm = time.perf_counter() - t
print(json.dumps({"backend": _kernels.BACKEND, "first": warm, "best": best, "contact": cm,
                  "deaths": res.total_deaths, "entries": int(world.mobility.weight.size)}))
"""


def run_backend(disable: bool, args) -> dict:
    env = dict(os.environ)
    if disable:
        env["BDVAX_DISABLE_NUMBA"] = "1"
    else:
        env.pop("BDVAX_DISABLE_NUMBA", None)
    cmd = [sys.executable, "-c", CHILD, str(args.communities), str(args.pois), str(args.days),
           str(args.repeat), args.mode]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--communities", type=int, default=500)
    ap.add_argument("--pois", type=int, default=150)
    ap.add_argument("--days", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--mode", default="deterministic", choices=("deterministic", "stochastic"))
    args = ap.parse_args(argv)

    rows = [run_backend(False, args), run_backend(True, args)]
    print(f"{args.communities} communities, {args.pois} POIs, {args.days} days, "
          f"{rows[0]['entries']} mobility entries, {args.mode}")
    print(f"{'backend':8} {'first run':>10} {'best run':>10} {'contacts':>10} {'total deaths':>14}")
    for r in rows:
        print(f"{r['backend']:8} {r['first']:10.3f} {r['best']:10.3f} {r['contact']:10.3f} "
              f"{r['deaths']:14.6f}")
    if rows[0]["backend"] == "numba":
        print(f"speed-up of numba over numpy: {rows[1]['best'] / rows[0]['best']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
