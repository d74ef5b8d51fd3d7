"""List-scheduling dispatchers used to build starting solutions.

Dispatch appends operations to machine orders one at a time, always choosing
among the earliest unscheduled operation of each unfinished job, so the
resulting machine permutations are topologically consistent with the routes
and the induced graph is acyclic by construction.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .graph import Solution
from .instances import Instance, OpId


def _list_schedule(inst: Instance,
                   choose: Callable[[list[OpId]], int]) -> Solution:
    next_pos = [0] * inst.num_jobs
    orders: list[list[OpId]] = [[] for _ in range(inst.num_machines)]
    remaining = inst.num_jobs * inst.num_machines
    while remaining:
        ready = [OpId(j, next_pos[j]) for j in range(inst.num_jobs)
                 if next_pos[j] < inst.num_machines]
        op = ready[choose(ready)]
        machine = inst.machine_of(op)
        orders[machine].append(op)
        next_pos[op.job] += 1
        remaining -= 1
    return Solution(tuple(tuple(o) for o in orders))


def flow_due_date(inst: Instance, op: OpId) -> int:
    """Cumulative route work of the job through the candidate operation."""
    return sum(p for _, p in inst.route[op.job][: op.pos + 1])


def most_work_remaining(inst: Instance, op: OpId) -> int:
    """Route work still to do, the candidate operation included."""
    return sum(p for _, p in inst.route[op.job][op.pos:])


def initial_solution_fdd_mwkr(inst: Instance) -> Solution:
    """Dispatch by the minimum flow-due-date / most-work-remaining ratio.

    Ratios are compared by integer cross-multiplication so ties are exact;
    ties break toward the lowest job index.
    """
    def choose(ready: list[OpId]) -> int:
        best = 0
        b_fdd = flow_due_date(inst, ready[0])
        b_mwkr = most_work_remaining(inst, ready[0])
        for k in range(1, len(ready)):
            fdd = flow_due_date(inst, ready[k])
            mwkr = most_work_remaining(inst, ready[k])
            # fdd/mwkr < b_fdd/b_mwkr without leaving the integers
            if fdd * b_mwkr < b_fdd * mwkr:
                best, b_fdd, b_mwkr = k, fdd, mwkr
        return best

    return _list_schedule(inst, choose)


def random_dispatch_solution(inst: Instance, rng: np.random.Generator) -> Solution:
    """Uniform random dispatch; acyclic by construction, used for sampling states."""
    return _list_schedule(inst, lambda ready: int(rng.integers(len(ready))))
