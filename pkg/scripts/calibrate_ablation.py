"""Calibration run for the ablation matrix; prints medians and pairwise wins."""

import json
import sys
import time

import numpy as np

from activest.ablation import desk_dataset, median_by_variant, run_matrix

n_scenes = int(sys.argv[1]) if len(sys.argv) > 1 else 40
n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 10
out_path = sys.argv[3] if len(sys.argv) > 3 else "calibration.json"

t0 = time.perf_counter()
clouds = desk_dataset(n_scenes)
print(f"dataset: {n_scenes} scenes, {sum(c.n for c in clouds)} points "
      f"({time.perf_counter() - t0:.1f}s)", flush=True)

seeds = list(range(1, n_seeds + 1))
results = run_matrix(
    clouds, seeds,
    progress=lambda r: print(
        f"  {r.variant:18s} seed {r.seed:2d}: {100 * r.final_miou:5.2f} "
        f"[{' '.join(f'{100 * m:4.1f}' for m in r.miou_per_iteration)}] "
        f"t={time.perf_counter() - t0:7.1f}s", flush=True))

medians = median_by_variant(results)
print("medians:", {k: round(100 * v, 2) for k, v in medians.items()})
full = {r.seed: r.final_miou for r in results if r.variant == "full"}
ref = {r.seed: r.final_miou for r in results if r.variant == "voting"}
wins = sum(full[s] > ref[s] for s in full)
print(f"full beats voting(random, no pseudo) in {wins}/{len(full)} seeds")
print(f"total {time.perf_counter() - t0:.1f}s")

with open(out_path, "w") as fh:
    json.dump({"medians": medians,
               "results": [{"variant": r.variant, "seed": r.seed,
                            "final": r.final_miou,
                            "trajectory": list(r.miou_per_iteration)}
                           for r in results]}, fh, indent=1)
