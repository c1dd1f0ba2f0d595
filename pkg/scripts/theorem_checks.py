"""Run both theory verifications and print their reports as JSON."""
import argparse
import json
import sys
import time

import numpy as np

from pcae.datasets import gen_flat_strip
from pcae.theory_verify import StiefelProblem, solve_stiefel, verify_theorem2


def random_instance(rng, p):
    A = rng.normal(size=(p, p))
    Sigma = A @ A.T
    # strictly ascending, below 2, separated enough to keep the optimum unique
    raw = np.sort(rng.uniform(0.05, 1.95, size=p))
    gammas = raw + np.arange(p) * 1e-3
    return Sigma, np.minimum(gammas, 1.999)


def check_theorem1(instances, seed):
    rng = np.random.default_rng(seed)
    gaps, aligns = [], []
    t0 = time.perf_counter()
    for i in range(instances):
        p = int(rng.integers(3, 9))
        Sigma, gammas = random_instance(rng, p)
        problem = StiefelProblem(Sigma=Sigma, gammas=gammas)
        report = solve_stiefel(problem, seed=seed + i)
        gaps.append(report.gap)
        aligns.append(float(report.alignment.min()))
    return {
        "theorem": 1,
        "instances": instances,
        "max_abs_gap": max(gaps),
        "min_alignment": min(aligns),
        "wall_seconds": time.perf_counter() - t0,
    }


def check_theorem2(seed):
    ds = gen_flat_strip(n=2000, length=4.0, width=1.0, seed=seed)
    t0 = time.perf_counter()
    report = verify_theorem2(ds, gammas=(0.5, 1.0), epochs=2000, lr=3e-3,
                             seed=seed, stop_at=0.015)
    return {
        "theorem": 2,
        "mean_rel_err": report.mean_rel_err,
        "p95_rel_err": report.p95_rel_err,
        "epochs_run": report.epochs_run,
        "wall_seconds": time.perf_counter() - t0,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-theorem2", action="store_true")
    args = ap.parse_args()

    print(json.dumps(check_theorem1(args.instances, args.seed), indent=2))
    if not args.skip_theorem2:
        print(json.dumps(check_theorem2(args.seed), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
