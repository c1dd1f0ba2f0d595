"""Landmark geodesic accuracy vs landmark count on the swiss roll.

Compares landmark-routed distances against exact all-pairs graph shortest
paths over random point pairs. Writes a CSV suitable for plotting the
accuracy/cost tradeoff.
"""
import argparse
import csv
import sys
import time

import numpy as np

from pcae.datasets import gen_swiss_roll
from pcae.geodesic import approx_dist, build_index, build_knn_graph, shortest_paths_from


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--pairs", type=int, default=1000)
    ap.add_argument("--landmarks", default="25,50,100,200,500")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="geodesic_accuracy.csv")
    args = ap.parse_args()

    ds = gen_swiss_roll(n=args.n, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    pairs = [tuple(rng.choice(args.n, size=2, replace=False)) for _ in range(args.pairs)]

    # exact reference: Dijkstra from each queried source on the same graph
    graph = build_knn_graph(ds.samples, k=args.k)
    sources = sorted({i for i, _ in pairs})
    exact_rows = {s: shortest_paths_from(graph, s) for s in sources}
    exact = np.array([exact_rows[i][j] for i, j in pairs])

    rows = []
    for count in (int(c) for c in args.landmarks.split(",")):
        t0 = time.perf_counter()
        index = build_index(ds.samples, k=args.k, landmark_count=count, seed=args.seed)
        build_s = time.perf_counter() - t0
        approx = np.array([approx_dist(index, i, j) for i, j in pairs])
        keep = exact > 0  # self-distance pairs would divide by zero
        rel = np.abs(approx[keep] - exact[keep]) / exact[keep]
        rows.append([count, rel.mean(), np.quantile(rel, 0.95), build_s])
        print(f"landmarks={count:4d}  mean_rel={rel.mean():.4f}  "
              f"p95={np.quantile(rel, 0.95):.4f}  build={build_s:.2f}s")

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["landmark_count", "mean_rel_err", "p95_rel_err", "build_seconds"])
        w.writerows(rows)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
