"""Exact minimum makespan for small instances.

``solve_exact`` runs depth-first branch and bound over active schedules:
at each node the operation with the earliest possible completion fixes a
machine, and every ready operation on that machine that could start before
that completion is branched on. Pruning uses the larger of the job-based and
machine-based remaining-work bounds. Practical up to roughly six jobs by six
machines; ``brute_force_best`` enumerates every acyclic orientation and is
the cross-check for tiny cases.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .dispatch import initial_solution_fdd_mwkr
from .evaluate import cpm_oracle
from .graph import CycleError, Solution, build_graph, is_acyclic
from .instances import Instance, OpId


@dataclass
class ExactResult:
    makespan: int
    solution: Solution
    nodes_explored: int
    proved: bool


def solve_exact(inst: Instance, upper_bound: int | None = None,
                node_limit: int | None = None) -> ExactResult:
    """Optimal makespan (proved unless the node limit interrupts the search).

    ``upper_bound`` may carry a known achievable makespan to tighten pruning;
    the search still returns a schedule achieving the best value it finds.
    """
    jobs, machines = inst.num_jobs, inst.num_machines
    proc = [[p for _, p in ops] for ops in inst.route]
    mach = [[m for m, _ in ops] for ops in inst.route]
    job_rem = [sum(proc[j]) for j in range(jobs)]
    mach_rem = [0] * machines
    for j in range(jobs):
        for i in range(machines):
            mach_rem[mach[j][i]] += proc[j][i]

    start = initial_solution_fdd_mwkr(inst)
    start_makespan = cpm_oracle(build_graph(inst, start)).makespan
    best = start_makespan if upper_bound is None else min(start_makespan,
                                                          upper_bound)
    best_orders = [list(order) for order in start.machine_orders]

    next_pos = [0] * jobs
    job_ready = [0] * jobs
    mach_ready = [0] * machines
    orders: list[list[OpId]] = [[] for _ in range(machines)]
    nodes = 0
    interrupted = False

    def bound() -> int:
        lb = 0
        for j in range(jobs):
            if next_pos[j] < machines:
                v = job_ready[j] + job_rem[j]
                if v > lb:
                    lb = v
        for m in range(machines):
            if mach_rem[m]:
                v = mach_ready[m] + mach_rem[m]
                if v > lb:
                    lb = v
        return lb

    def dfs() -> None:
        nonlocal nodes, best, best_orders, interrupted
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            interrupted = True
            return
        ready = [j for j in range(jobs) if next_pos[j] < machines]
        if not ready:
            makespan = max(job_ready)
            if makespan < best:
                best = makespan
                best_orders = [list(order) for order in orders]
            return
        if bound() >= best:
            return
        # the operation finishing earliest pins the branching machine
        best_ect = None
        target_machine = -1
        for j in ready:
            i = next_pos[j]
            m = mach[j][i]
            ect = max(job_ready[j], mach_ready[m]) + proc[j][i]
            if best_ect is None or ect < best_ect or \
                    (ect == best_ect and m < target_machine):
                best_ect = ect
                target_machine = m
        candidates = []
        for j in ready:
            i = next_pos[j]
            if mach[j][i] != target_machine:
                continue
            est = max(job_ready[j], mach_ready[target_machine])
            if est < best_ect:
                candidates.append((est, j))
        candidates.sort()
        for est, j in candidates:
            i = next_pos[j]
            p = proc[j][i]
            finish = est + p
            save = (job_ready[j], mach_ready[target_machine])
            next_pos[j] += 1
            job_ready[j] = finish
            mach_ready[target_machine] = finish
            job_rem[j] -= p
            mach_rem[target_machine] -= p
            orders[target_machine].append(OpId(j, i))
            dfs()
            orders[target_machine].pop()
            job_rem[j] += p
            mach_rem[target_machine] += p
            next_pos[j] = i
            job_ready[j], mach_ready[target_machine] = save
            if interrupted:
                return

    dfs()
    solution = Solution(tuple(tuple(order) for order in best_orders))
    return ExactResult(makespan=best, solution=solution, nodes_explored=nodes,
                       proved=not interrupted)


def brute_force_best(inst: Instance) -> int:
    """Minimum makespan over every acyclic orientation; tiny instances only."""
    per_machine_ops: list[list[OpId]] = [[] for _ in range(inst.num_machines)]
    for j in range(inst.num_jobs):
        for i, (m, _) in enumerate(inst.route[j]):
            per_machine_ops[m].append(OpId(j, i))
    best = None
    for orders in itertools.product(
            *[itertools.permutations(ops) for ops in per_machine_ops]):
        sol = Solution(tuple(orders))
        g = build_graph(inst, sol)
        if not is_acyclic(g):
            continue
        makespan = cpm_oracle(g).makespan
        if best is None or makespan < best:
            best = makespan
    if best is None:
        raise CycleError("no acyclic orientation found")
    return best
