"""Regenerate data/best_known.csv with the branch-and-bound oracle.

Only instances small enough for an exact proof are included (at most 36
operations). Values in the shipped table come from running this script;
rerun it after adding instances under data/instances/.
"""

from __future__ import annotations

import csv
import sys
import time
from pathlib import Path

from jobshop.bench import load_instance
from jobshop.exact import solve_exact

MAX_OPERATIONS = 36

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    instances_dir = ROOT / "data" / "instances"
    out_path = ROOT / "data" / "best_known.csv"
    rows = []
    for path in sorted(instances_dir.glob("*.txt")):
        inst = load_instance(path)
        n_ops = inst.num_jobs * inst.num_machines
        if n_ops > MAX_OPERATIONS:
            print(f"skip {path.stem}: {n_ops} operations exceed the exact "
                  f"solver's practical range")
            continue
        t0 = time.perf_counter()
        result = solve_exact(inst)
        dt = time.perf_counter() - t0
        if not result.proved:
            print(f"skip {path.stem}: proof interrupted")
            continue
        print(f"{path.stem}: optimum {result.makespan} "
              f"({result.nodes_explored} nodes, {dt:.2f}s)")
        rows.append((path.stem, result.makespan))
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "makespan"])
        writer.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
