"""Benchmark harness: rollouts, gap computation, result emission, scaling.

Result records carry the incumbent makespan, the gap fraction against a
best-known table when one is supplied (negative gaps are reported as-is),
and single-instance wall time. The JSON result of a solve additionally holds
the incumbent's machine orders and its per-operation start-time window.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import (
    SearchResult,
    run_best_improvement,
    run_first_improvement,
    run_greedy,
    run_random_walk,
    run_tabu_n5,
)
from .dispatch import initial_solution_fdd_mwkr
from .evaluate import evaluate_schedule
from .graph import build_graph, serialize_solution
from .instances import (
    Instance,
    generate_taillard,
    parse_standard,
    parse_taillard,
    serialize_standard,
    serialize_taillard,
)
from .policy import PolicyNetwork
from .training import rollout_batch

METHODS = ("policy", "gd", "bi", "fi", "tabu")

CSV_COLUMNS = ["instance", "method", "steps", "seed", "initial_makespan",
               "incumbent_makespan", "gap", "wall_ms"]


@dataclass
class BenchResult:
    instance: str
    method: str
    steps: int
    seed: int
    initial_makespan: int
    incumbent_makespan: int
    gap: float | None
    wall_ms: float

    def to_row(self) -> list:
        return [self.instance, self.method, self.steps, self.seed,
                self.initial_makespan, self.incumbent_makespan,
                "" if self.gap is None else repr(self.gap),
                repr(self.wall_ms)]


def compute_gap(incumbent: int, best_known: int) -> float:
    """Fraction above the table value; negative when the table is beaten."""
    return (incumbent - best_known) / best_known


def load_instance(path: Path, fmt: str = "standard") -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "standard":
        return parse_standard(text)
    if fmt == "taillard":
        return parse_taillard(text)
    raise ValueError(f"unknown format {fmt!r}")


def load_best_known(path: Path | None) -> dict[str, int]:
    if path is None:
        return {}
    table: dict[str, int] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "name":
                continue
            table[row[0].strip()] = int(row[1])
    return table


def solve_with_policy(inst: Instance, policy: PolicyNetwork, steps: int,
                      seed: int, greedy: bool = False) -> SearchResult:
    (env,) = rollout_batch(policy, [inst], steps, seed, greedy=greedy)
    return SearchResult(best_solution=env.incumbent_solution,
                        best_makespan=env.incumbent_makespan,
                        initial_makespan=env.initial_makespan,
                        steps_taken=env.steps_taken, trace=[], visited=[])


def run_method(method: str, inst: Instance, steps: int, seed: int,
               policy: PolicyNetwork | None = None) -> SearchResult:
    if method == "policy":
        if policy is None:
            raise ValueError("the policy method needs a checkpoint")
        return solve_with_policy(inst, policy, steps, seed)
    start = initial_solution_fdd_mwkr(inst)
    rng = np.random.default_rng([seed, 0])
    if method == "gd":
        return run_greedy(inst, start, steps, rng)
    if method == "bi":
        return run_best_improvement(inst, start, steps, rng)
    if method == "fi":
        return run_first_improvement(inst, start, steps, rng)
    if method == "tabu":
        return run_tabu_n5(inst, start, steps, rng)
    if method == "random":
        return run_random_walk(inst, start, steps, rng)
    raise ValueError(f"unknown method {method!r}")


def solve_payload(name: str, inst: Instance, result: SearchResult,
                  method: str, steps: int, seed: int, wall_ms: float,
                  best_known: int | None) -> dict:
    gap = None if best_known is None else compute_gap(result.best_makespan,
                                                      best_known)
    sched = evaluate_schedule(build_graph(inst, result.best_solution))
    est = {}
    lst = {}
    for j in range(inst.num_jobs):
        for i in range(inst.num_machines):
            node = j * inst.num_machines + i
            key = f"{j}.{i}"
            est[key] = int(sched.est[node])
            lst[key] = int(sched.lst[node])
    return {
        "instance": name,
        "method": method,
        "steps": steps,
        "seed": seed,
        "initial_makespan": result.initial_makespan,
        "incumbent_makespan": result.best_makespan,
        "gap": gap,
        "wall_ms": wall_ms,
        "solution": serialize_solution(result.best_solution).splitlines(),
        "schedule": {"est": est, "lst": lst,
                     "makespan": result.best_makespan},
    }


def solve_command(name: str, inst: Instance, policy: PolicyNetwork,
                  steps: int, seed: int, best_known: int | None = None,
                  greedy: bool = False) -> dict:
    t0 = time.perf_counter()
    result = solve_with_policy(inst, policy, steps, seed, greedy=greedy)
    wall_ms = (time.perf_counter() - t0) * 1e3
    return solve_payload(name, inst, result, "policy", steps, seed, wall_ms,
                         best_known)


def solve_ensemble(name: str, inst: Instance, policies: list[PolicyNetwork],
                   steps: int, seed: int,
                   best_known: int | None = None) -> dict:
    """Independent rollouts per member; the smallest incumbent wins."""
    if not policies:
        raise ValueError("ensemble needs at least one checkpoint")
    t0 = time.perf_counter()
    results = [solve_with_policy(inst, p, steps, seed) for p in policies]
    wall_ms = (time.perf_counter() - t0) * 1e3
    best = min(results, key=lambda r: r.best_makespan)
    payload = solve_payload(name, inst, best, "policy-ensemble", steps, seed,
                            wall_ms, best_known)
    payload["members"] = [r.best_makespan for r in results]
    return payload


def bench_directory(directory: Path, method: str, steps: int, seed: int,
                    best_known: dict[str, int], fmt: str = "standard",
                    policy: PolicyNetwork | None = None
                    ) -> tuple[list[BenchResult], dict]:
    rows: list[BenchResult] = []
    paths = sorted(Path(directory).glob("*.txt"))
    for path in paths:
        inst = load_instance(path, fmt)
        name = path.stem
        t0 = time.perf_counter()
        result = run_method(method, inst, steps, seed, policy=policy)
        wall_ms = (time.perf_counter() - t0) * 1e3
        table = best_known.get(name)
        gap = None if table is None else compute_gap(result.best_makespan,
                                                     table)
        rows.append(BenchResult(instance=name, method=method, steps=steps,
                                seed=seed,
                                initial_makespan=result.initial_makespan,
                                incumbent_makespan=result.best_makespan,
                                gap=gap, wall_ms=wall_ms))
    gaps = [r.gap for r in rows if r.gap is not None]
    summary = {
        "instances": len(rows),
        "mean_gap": float(np.mean(gaps)) if gaps else None,
        "mean_wall_ms": float(np.mean([r.wall_ms for r in rows]))
        if rows else None,
    }
    return rows, summary


def write_results_csv(path: Path, rows: list[BenchResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.to_row())


SCALING_COLUMNS = ["num_jobs", "num_machines", "repetitions", "mean_wall_ms"]


def scaling_sweep(policy: PolicyNetwork, sizes: list[tuple[int, int]],
                  repetitions: int, steps: int, seed: int) -> list[dict]:
    """Mean single-instance rollout wall time per size, for the linearity check."""
    rows = []
    for jobs, machines in sizes:
        times = []
        for rep in range(repetitions):
            inst_seed = int(np.random.default_rng(
                [seed, jobs, machines, rep]).integers(2**63))
            inst = generate_taillard(jobs, machines, inst_seed)
            t0 = time.perf_counter()
            solve_with_policy(inst, policy, steps, seed=seed + rep)
            times.append((time.perf_counter() - t0) * 1e3)
        rows.append({"num_jobs": jobs, "num_machines": machines,
                     "repetitions": repetitions,
                     "mean_wall_ms": float(np.mean(times))})
    return rows


def write_scaling_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCALING_COLUMNS)
        for row in rows:
            writer.writerow([row[c] for c in SCALING_COLUMNS])


def generate_files(jobs: int, machines: int, count: int, seed: int,
                   out_dir: Path, fmt: str = "standard") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        inst = generate_taillard(jobs, machines, seed + k)
        name = f"gen_{jobs}x{machines}_s{seed + k}.txt"
        text = serialize_standard(inst) if fmt == "standard" \
            else serialize_taillard(inst)
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
