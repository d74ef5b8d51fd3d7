"""Rollout wall time versus problem size, both sweep directions.

Writes scaling_jobs.csv (machines fixed at 10) and scaling_machines.csv
(jobs fixed at 40) plus the linear-fit quality per sweep.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from jobshop.bench import scaling_sweep, write_scaling_csv
from jobshop.policy import PolicyConfig, PolicyNetwork

ROOT = Path(__file__).resolve().parent.parent


def fit_r_squared(xs: list[float], ys: list[float]) -> float:
    coeffs = np.polyfit(xs, ys, 1)
    pred = np.polyval(coeffs, xs)
    resid = np.asarray(ys) - pred
    total = np.asarray(ys) - np.mean(ys)
    return float(1.0 - (resid @ resid) / (total @ total))


def main() -> int:
    checkpoint = ROOT / "runs" / "desk" / "best.npz"
    if checkpoint.exists():
        policy = PolicyNetwork.load(checkpoint)
    else:
        policy = PolicyNetwork(PolicyConfig(
            iterations=2, embed_dim=32, mlp_hidden=32, head_hidden=32,
            head_layers=2, score_dim=16), seed=0)
        print("no trained checkpoint found; timing a fresh policy "
              "(timing does not depend on training)")

    jobs_rows = scaling_sweep(policy, [(j, 10) for j in
                                       (10, 20, 30, 40, 50, 60)],
                              repetitions=5, steps=500, seed=1)
    write_scaling_csv(ROOT / "scaling_jobs.csv", jobs_rows)
    r2 = fit_r_squared([r["num_jobs"] for r in jobs_rows],
                       [r["mean_wall_ms"] for r in jobs_rows])
    print(f"jobs sweep (machines=10): R^2 of linear fit = {r2:.4f}")

    mach_rows = scaling_sweep(policy, [(40, m) for m in
                                       (5, 10, 15, 20, 25, 30)],
                              repetitions=5, steps=500, seed=2)
    write_scaling_csv(ROOT / "scaling_machines.csv", mach_rows)
    r2 = fit_r_squared([r["num_machines"] for r in mach_rows],
                       [r["mean_wall_ms"] for r in mach_rows])
    print(f"machines sweep (jobs=40): R^2 of linear fit = {r2:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
