"""Complete solutions as machine permutations and their induced precedence graph.

A solution fixes the processing order on every machine. Together with the
job routes this induces a directed graph over all operations plus the two
dummy nodes: route arcs chain each job's operations between SOURCE and SINK,
and machine arcs chain consecutive operations of each machine order. The
weight of an arc is the processing time of the node it leaves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .instances import OpId

if TYPE_CHECKING:  # pragma: no cover
    from .instances import Instance


class CycleError(RuntimeError):
    """Raised when an operation requiring a DAG meets a cyclic graph."""


class Move(NamedTuple):
    """Swap of two operations adjacent on one machine; ``a`` directly before ``b``."""

    a: OpId
    b: OpId
    machine: int


@dataclass(frozen=True)
class Solution:
    """One processing order per machine. Value semantics; moves copy."""

    machine_orders: tuple[tuple[OpId, ...], ...]

    def order_of(self, machine: int) -> tuple[OpId, ...]:
        return self.machine_orders[machine]


@dataclass
class GraphView:
    """Arc-array view of the precedence graph a solution induces.

    ``src[k] -> dst[k]`` are node ids in the instance's flat numbering;
    ``job_arc[k]`` is True for route arcs (including the dummy arcs), False
    for machine arcs. Arc weights are ``proc[src]``.
    """

    inst: "Instance"
    src: np.ndarray
    dst: np.ndarray
    job_arc: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def node_count(self) -> int:
        return self.inst.node_count

    @property
    def proc(self) -> np.ndarray:
        return self.inst.proc_by_node

    @property
    def arc_count(self) -> int:
        return len(self.src)

    def arc_weights(self) -> np.ndarray:
        return self.proc[self.src]

    def in_lists(self) -> list[list[int]]:
        """In-neighbour node ids per node (arc tails pointing at the node)."""
        lists = self._cache.get("in")
        if lists is None:
            lists = [[] for _ in range(self.node_count)]
            for u, v in zip(self.src.tolist(), self.dst.tolist()):
                lists[v].append(u)
            self._cache["in"] = lists
        return lists

    def out_lists(self) -> list[list[int]]:
        lists = self._cache.get("out")
        if lists is None:
            lists = [[] for _ in range(self.node_count)]
            for u, v in zip(self.src.tolist(), self.dst.tolist()):
                lists[u].append(v)
            self._cache["out"] = lists
        return lists

    def in_neighbors(self, op: OpId) -> list[OpId]:
        node = self.inst.node_id(op)
        return [self.inst.op_of(u) for u in self.in_lists()[node]]

    def out_neighbors(self, op: OpId) -> list[OpId]:
        node = self.inst.node_id(op)
        return [self.inst.op_of(v) for v in self.out_lists()[node]]


def build_graph(inst: "Instance", sol: Solution) -> GraphView:
    """Route arcs plus directed machine arcs from the solution's orders."""
    if len(sol.machine_orders) != inst.num_machines:
        raise ValueError("solution machine count does not match instance")
    src: list[int] = []
    dst: list[int] = []
    job_arc: list[bool] = []
    m_count = inst.num_machines
    for j in range(inst.num_jobs):
        base = j * m_count
        src.append(inst.source_id)
        dst.append(base)
        job_arc.append(True)
        for i in range(m_count - 1):
            src.append(base + i)
            dst.append(base + i + 1)
            job_arc.append(True)
        src.append(base + m_count - 1)
        dst.append(inst.sink_id)
        job_arc.append(True)
    for order in sol.machine_orders:
        for a, b in zip(order, order[1:]):
            src.append(inst.node_id(a))
            dst.append(inst.node_id(b))
            job_arc.append(False)
    return GraphView(
        inst=inst,
        src=np.asarray(src, dtype=np.int64),
        dst=np.asarray(dst, dtype=np.int64),
        job_arc=np.asarray(job_arc, dtype=bool),
    )


def is_acyclic(g: GraphView) -> bool:
    """Kahn peeling; True iff a topological order covers every node."""
    n = g.node_count
    indeg = np.bincount(g.dst, minlength=n)
    out = g.out_lists()
    stack = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    indeg = indeg.tolist()
    while stack:
        v = stack.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen == n


def topological_order(g: GraphView) -> list[int]:
    """A topological order of node ids; raises CycleError when none exists."""
    n = g.node_count
    indeg = np.bincount(g.dst, minlength=n).tolist()
    out = g.out_lists()
    stack = [v for v in range(n) if indeg[v] == 0]
    order: list[int] = []
    while stack:
        v = stack.pop()
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    if len(order) != n:
        raise CycleError("graph contains a cycle")
    return order


def apply_move(sol: Solution, mv: Move) -> Solution:
    """Transpose the adjacent pair on its machine; all other orders unchanged."""
    order = sol.machine_orders[mv.machine]
    try:
        idx = order.index(mv.a)
    except ValueError:
        raise ValueError(f"{mv.a} not scheduled on machine {mv.machine}") from None
    if idx + 1 >= len(order) or order[idx + 1] != mv.b:
        raise ValueError(f"pair ({mv.a}, {mv.b}) is not adjacent on machine "
                         f"{mv.machine}")
    new_order = order[:idx] + (mv.b, mv.a) + order[idx + 2:]
    orders = list(sol.machine_orders)
    orders[mv.machine] = new_order
    return Solution(tuple(orders))


def context_subgraphs(g: GraphView) -> tuple[GraphView, GraphView]:
    """Split into the route-arc graph and the machine-arc graph.

    Both keep every node; the dummies are isolated in the machine graph.
    """
    j = g.job_arc
    gj = GraphView(inst=g.inst, src=g.src[j], dst=g.dst[j],
                   job_arc=np.ones(int(j.sum()), dtype=bool))
    m = ~j
    gm = GraphView(inst=g.inst, src=g.src[m], dst=g.dst[m],
                   job_arc=np.zeros(int(m.sum()), dtype=bool))
    return gj, gm


def serialize_solution(sol: Solution) -> str:
    """One line per machine of space-separated ``job.pos`` tokens."""
    return "\n".join(" ".join(op.token() for op in order)
                     for order in sol.machine_orders) + "\n"


def parse_solution(text: str) -> Solution:
    orders = []
    for line in text.strip().splitlines():
        ops = []
        for tok in line.split():
            j, _, i = tok.partition(".")
            ops.append(OpId(int(j), int(i)))
        orders.append(tuple(ops))
    return Solution(tuple(orders))
