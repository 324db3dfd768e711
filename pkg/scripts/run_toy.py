"""Solve the two-spectrum toy system with SOMA and Newton and write both paths.

    python scripts/run_toy.py --out results/toy
"""

import argparse
import time
from pathlib import Path

import numpy as np

from msct.toy import TOY_SOLUTION, run_toy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/toy")
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--x0", type=float, nargs=2, default=(0.0, 0.0))
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    run = run_toy(tuple(args.x0), beta=args.beta, kappa=args.kappa)
    elapsed = time.perf_counter() - t0

    run.soma_trace.write_csv(out / "soma_path.csv")
    np.savetxt(out / "newton_path.csv", np.array(run.newton_path), delimiter=",", header="q1,q2", comments="")
    print(f"targets            {run.targets[0]:.8f} {run.targets[1]:.8f}")
    print(f"SOMA   x = {run.soma_x}  outer = {run.soma_trace.outer_iterations}"
          f"  err = {np.abs(run.soma_x - TOY_SOLUTION).max():.2e}")
    print(f"Newton x = {run.newton_x}  steps = {len(run.newton_path) - 1}"
          f"  err = {np.abs(run.newton_x - TOY_SOLUTION).max():.2e}")
    print(f"both solves: {elapsed * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
