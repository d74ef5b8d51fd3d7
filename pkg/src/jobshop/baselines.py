"""Hand-crafted improvement rules sharing the move generator and evaluator.

All four searches walk the same candidate structure: at each step the current
solution's critical blocks define the open swaps, every swapped neighbour is
evaluated in one batch, and the rule picks where to go. Greedy always takes
the best neighbour; best-improvement and first-improvement only accept strict
improvements and otherwise restart from a ring buffer of recently examined
solutions; the tabu variant is greedy over non-forbidden swaps with an
incumbent-beating aspiration override.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluate import batch_evaluate
from .graph import Move, Solution, apply_move, build_graph
from .instances import Instance
from .neighborhood import StateAnalysis, analyze_solution

RESTART_MEMORY = 100
TABU_TENURE_RANGE = (5, 15)


@dataclass
class TraceRow:
    step: int
    current_makespan: int
    incumbent: int
    restarted: bool
    open_moves: int = 0  # candidate count of the state the step moved from


@dataclass
class SearchResult:
    best_solution: Solution
    best_makespan: int
    initial_makespan: int
    steps_taken: int
    trace: list[TraceRow]
    visited: list[Solution]


TRACE_COLUMNS = ["step", "current_makespan", "incumbent", "restarted"]


def write_trace_csv(path: Path, trace: list[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow([row.step, row.current_makespan, row.incumbent,
                             int(row.restarted)])


def _neighbour_makespans(inst: Instance, sol: Solution,
                         analysis: StateAnalysis) -> tuple[list[Solution],
                                                           list[int]]:
    neighbours = [apply_move(sol, mv) for mv in analysis.moves.moves]
    graphs = [build_graph(inst, nb) for nb in neighbours]
    scheds = batch_evaluate(graphs)
    return neighbours, [s.makespan for s in scheds]


def run_greedy(inst: Instance, start: Solution, steps: int,
               rng: np.random.Generator) -> SearchResult:
    """Always move to the smallest-makespan neighbour; stop when absorbing."""
    current = start
    analysis = analyze_solution(inst, current, rng)
    initial = analysis.schedule.makespan
    incumbent_sol, incumbent = current, initial
    trace: list[TraceRow] = []
    visited = [current]
    taken = 0
    for step in range(1, steps + 1):
        if analysis.moves.absorbing:
            break
        n_open = len(analysis.moves)
        current = _greedy_pick(inst, current, analysis)[0]
        analysis = analyze_solution(inst, current, rng)
        taken = step
        makespan = analysis.schedule.makespan
        if makespan < incumbent:
            incumbent_sol, incumbent = current, makespan
        trace.append(TraceRow(step, makespan, incumbent, False, n_open))
        visited.append(current)
    return SearchResult(incumbent_sol, incumbent, initial, taken, trace,
                        visited)


def _greedy_pick(inst, sol, analysis):
    neighbours, makespans = _neighbour_makespans(inst, sol, analysis)
    k = int(np.argmin(makespans))  # first minimum in enumeration order
    return neighbours[k], makespans[k]


def _run_improvement(inst: Instance, start: Solution, steps: int,
                     rng: np.random.Generator, memory: int,
                     first_improvement: bool) -> SearchResult:
    current = start
    analysis = analyze_solution(inst, current, rng)
    initial = analysis.schedule.makespan
    current_makespan = initial
    incumbent_sol, incumbent = current, initial
    # the restart pool holds the most recently examined solutions: the states
    # walked through plus every evaluated neighbour. Restarting into a
    # not-yet-visited neighbour is what lets an improving-only rule leave a
    # basin whose improving closure is exhausted.
    memory_buf: deque[Solution] = deque(maxlen=memory)
    memory_buf.append(current)
    trace: list[TraceRow] = []
    visited = [current]
    taken = 0
    for step in range(1, steps + 1):
        restarted = False
        chosen = None
        n_open = len(analysis.moves)
        if not analysis.moves.absorbing:
            neighbours, makespans = _neighbour_makespans(inst, current, analysis)
            memory_buf.extend(neighbours)
            if first_improvement:
                for nb, mk in zip(neighbours, makespans):
                    if mk < current_makespan:
                        chosen = (nb, mk)
                        break
            else:
                k = int(np.argmin(makespans))
                if makespans[k] < current_makespan:
                    chosen = (neighbours[k], makespans[k])
        if chosen is None:
            # local minimum (or absorbing): restart from the recent memory
            current = memory_buf[int(rng.integers(len(memory_buf)))]
            analysis = analyze_solution(inst, current, rng)
            current_makespan = analysis.schedule.makespan
            restarted = True
        else:
            current, current_makespan = chosen
            analysis = analyze_solution(inst, current, rng)
        taken = step
        memory_buf.append(current)
        visited.append(current)
        if current_makespan < incumbent:
            incumbent_sol, incumbent = current, current_makespan
        trace.append(TraceRow(step, current_makespan, incumbent, restarted,
                              n_open))
    return SearchResult(incumbent_sol, incumbent, initial, taken, trace,
                        visited)


def run_best_improvement(inst: Instance, start: Solution, steps: int,
                         rng: np.random.Generator,
                         memory: int = RESTART_MEMORY) -> SearchResult:
    return _run_improvement(inst, start, steps, rng, memory,
                            first_improvement=False)


def run_first_improvement(inst: Instance, start: Solution, steps: int,
                          rng: np.random.Generator,
                          memory: int = RESTART_MEMORY) -> SearchResult:
    return _run_improvement(inst, start, steps, rng, memory,
                            first_improvement=True)


def run_tabu_n5(inst: Instance, start: Solution, steps: int,
                rng: np.random.Generator,
                tenure_range: tuple[int, int] = TABU_TENURE_RANGE
                ) -> SearchResult:
    """Greedy over non-tabu swaps; a tabu swap passes only when it would beat
    the incumbent. Accepting a swap forbids its reversal for a random tenure."""
    current = start
    analysis = analyze_solution(inst, current, rng)
    initial = analysis.schedule.makespan
    incumbent_sol, incumbent = current, initial
    tabu: dict[Move, int] = {}
    last_reverse: Move | None = None
    trace: list[TraceRow] = []
    visited = [current]
    taken = 0
    for step in range(1, steps + 1):
        if analysis.moves.absorbing:
            break
        tabu = {sig: exp for sig, exp in tabu.items() if exp > step}
        neighbours, makespans = _neighbour_makespans(inst, current, analysis)
        moves = analysis.moves.moves
        allowed = [k for k, mv in enumerate(moves)
                   if mv not in tabu or makespans[k] < incumbent]
        if allowed:
            k = min(allowed, key=lambda i: makespans[i])
        else:
            # everything is forbidden: take the entry expiring soonest, but
            # never undo the last swap while alternatives exist
            pool = [i for i in range(len(moves))
                    if moves[i] != last_reverse] or list(range(len(moves)))
            k = min(pool, key=lambda i: (tabu[moves[i]], makespans[i]))
        move = moves[k]
        reverse = Move(move.b, move.a, move.machine)
        tenure = int(rng.integers(tenure_range[0], tenure_range[1] + 1))
        tabu[reverse] = step + tenure
        last_reverse = reverse
        current = neighbours[k]
        analysis = analyze_solution(inst, current, rng)
        taken = step
        if makespans[k] < incumbent:
            incumbent_sol, incumbent = current, makespans[k]
        trace.append(TraceRow(step, makespans[k], incumbent, False,
                              len(moves)))
        visited.append(current)
    return SearchResult(incumbent_sol, incumbent, initial, taken, trace,
                        visited)


def run_random_walk(inst: Instance, start: Solution, steps: int,
                    rng: np.random.Generator) -> SearchResult:
    """Uniform move selection; the reference no-learning policy."""
    current = start
    analysis = analyze_solution(inst, current, rng)
    initial = analysis.schedule.makespan
    incumbent_sol, incumbent = current, initial
    trace: list[TraceRow] = []
    visited = [current]
    taken = 0
    for step in range(1, steps + 1):
        if analysis.moves.absorbing:
            break
        n_open = len(analysis.moves)
        move = analysis.moves.moves[int(rng.integers(n_open))]
        current = apply_move(current, move)
        analysis = analyze_solution(inst, current, rng)
        taken = step
        makespan = analysis.schedule.makespan
        if makespan < incumbent:
            incumbent_sol, incumbent = current, makespan
        trace.append(TraceRow(step, makespan, incumbent, False, n_open))
        visited.append(current)
    return SearchResult(incumbent_sol, incumbent, initial, taken, trace,
                        visited)
