"""Candidate moves from critical blocks and the flattened action mask.

A move swaps two operations adjacent on one machine. Candidates come from
the blocks of one critical path: interior blocks offer their first and last
adjacent pair, the block touching SOURCE only its last pair, the block
touching SINK only its first pair, and single-operation blocks nothing.
A path with a single block offers no moves at all; such states are absorbing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluate import CriticalBlocks, Schedule, evaluate_schedule, extract_critical
from .graph import GraphView, Move, Solution, build_graph
from .instances import Instance


@dataclass
class MoveSet:
    """Candidate pairs plus their (tail, head) node-id cells for masking."""

    moves: tuple[Move, ...]
    cells: np.ndarray  # shape (len(moves), 2), node ids into the flat order

    def __len__(self) -> int:
        return len(self.moves)

    @property
    def absorbing(self) -> bool:
        return not self.moves


def enumerate_moves(cb: CriticalBlocks, inst: Instance) -> MoveSet:
    """First/last pairs of critical blocks per the rules above, deduplicated."""
    moves: list[Move] = []
    if len(cb.blocks) > 1:
        last = len(cb.blocks) - 1
        for k, (block, machine) in enumerate(zip(cb.blocks, cb.machines)):
            if len(block) < 2:
                continue
            first_pair = Move(block[0], block[1], machine)
            last_pair = Move(block[-2], block[-1], machine)
            if k == 0:
                moves.append(last_pair)
            elif k == last:
                moves.append(first_pair)
            else:
                moves.append(first_pair)
                if last_pair != first_pair:
                    moves.append(last_pair)
    cells = np.array([[inst.node_id(m.a), inst.node_id(m.b)] for m in moves],
                     dtype=np.int64).reshape(len(moves), 2)
    return MoveSet(moves=tuple(moves), cells=cells)


def build_mask(ms: MoveSet, node_count: int) -> np.ndarray:
    """Dense boolean node x node matrix, True exactly at candidate cells."""
    mask = np.zeros((node_count, node_count), dtype=bool)
    if len(ms):
        mask[ms.cells[:, 0], ms.cells[:, 1]] = True
    return mask


@dataclass
class StateAnalysis:
    """Everything a search step needs for one solution."""

    graph: GraphView
    schedule: Schedule
    blocks: CriticalBlocks
    moves: MoveSet


def analyze_solution(inst: Instance, sol: Solution,
                     rng: np.random.Generator,
                     schedule: Schedule | None = None) -> StateAnalysis:
    """Build the graph, evaluate it (unless given) and enumerate the moves."""
    g = build_graph(inst, sol)
    sched = schedule if schedule is not None else evaluate_schedule(g)
    cb = extract_critical(g, sched, rng)
    ms = enumerate_moves(cb, inst)
    return StateAnalysis(graph=g, schedule=sched, blocks=cb, moves=ms)
