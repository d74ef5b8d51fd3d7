"""Schedule evaluation: start times, makespan, critical path and blocks.

Two interchangeable evaluators are provided. ``cpm_oracle`` computes earliest
and latest start times by recursion over a topological order. ``forward_pass``
and ``backward_pass`` compute the same quantities with synchronous max-pooling
message sweeps carrying a (value, readiness) pair per node, which vectorizes
over arc arrays and extends to whole batches of graphs via a disjoint union
(``batch_evaluate``). All times are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CycleError, GraphView, topological_order
from .instances import OpId


@dataclass
class Schedule:
    """Earliest/latest start per node id plus the makespan."""

    est: np.ndarray
    lst: np.ndarray
    makespan: int

    def est_of(self, g: GraphView, op: OpId) -> int:
        return int(self.est[g.inst.node_id(op)])

    def lst_of(self, g: GraphView, op: OpId) -> int:
        return int(self.lst[g.inst.node_id(op)])


@dataclass
class CriticalBlocks:
    """One longest path SOURCE..SINK and its maximal same-machine runs."""

    path: tuple[OpId, ...]
    blocks: tuple[tuple[OpId, ...], ...]
    machines: tuple[int, ...]


def _in_segments(g: GraphView):
    """Arc arrays sorted by head node, with reduceat boundaries (cached)."""
    seg = g._cache.get("in_segments")
    if seg is None:
        order = np.argsort(g.dst, kind="stable")
        dst_sorted = g.dst[order]
        src_sorted = g.src[order]
        starts = np.flatnonzero(np.r_[True, dst_sorted[1:] != dst_sorted[:-1]])
        heads = dst_sorted[starts]
        seg = (src_sorted, heads, starts)
        g._cache["in_segments"] = seg
    return seg


def forward_pass(g: GraphView) -> tuple[np.ndarray, int, int]:
    """Earliest starts by synchronous message sweeps; returns (est, makespan, passes).

    Every node keeps a value accumulator (0 initially) and a readiness flag
    (0 only at SOURCE initially). A sweep recomputes, for each node with
    incoming arcs, the max over tails of ``proc[tail] + value[tail]`` where
    unready tails contribute their processing time alone, and the max of the
    tails' flags. Values of ready nodes are exact earliest starts; sweeps stop
    once every flag cleared.
    """
    n = g.node_count
    proc = g.proc
    src_sorted, heads, starts = _in_segments(g)
    d = np.zeros(n, dtype=np.int64)
    c = np.ones(n, dtype=np.int64)
    c[g.inst.source_id] = 0
    passes = 0
    while c.any():
        if passes > n:
            raise CycleError("forward sweeps exceeded the node count; "
                             "graph has a cycle")
        contrib = proc[src_sorted] + (1 - c[src_sorted]) * d[src_sorted]
        new_d = d.copy()
        new_d[heads] = np.maximum.reduceat(contrib, starts)
        new_c = c.copy()
        new_c[heads] = np.maximum.reduceat(c[src_sorted], starts)
        d, c = new_d, new_c
        passes += 1
    return d, int(d[g.inst.sink_id]), passes


def backward_pass(g: GraphView, makespan: int) -> tuple[np.ndarray, int]:
    """Latest starts via sweeps over the arc-reversed graph; returns (lst, passes).

    Messages accumulate the negated latest start. An update into node V over
    a reversed arc keeps the original arc's weight, which is V's own
    processing time, so a ready head U contributes ``proc[V] + value[U]``.
    """
    n = g.node_count
    proc = g.proc
    # reversed graph: arcs dst -> src, grouped by original src
    seg = g._cache.get("out_segments")
    if seg is None:
        order = np.argsort(g.src, kind="stable")
        src_sorted = g.src[order]
        dst_sorted = g.dst[order]
        starts = np.flatnonzero(np.r_[True, src_sorted[1:] != src_sorted[:-1]])
        heads = src_sorted[starts]
        seg = (dst_sorted, heads, starts, proc[src_sorted])
        g._cache["out_segments"] = seg
    tails_sorted, heads, starts, weights = seg
    d = np.full(n, -1, dtype=np.int64)
    c = np.ones(n, dtype=np.int64)
    d[g.inst.sink_id] = -makespan
    c[g.inst.sink_id] = 0
    passes = 0
    while c.any():
        if passes > n:
            raise CycleError("backward sweeps exceeded the node count; "
                             "graph has a cycle")
        contrib = weights + (1 - c[tails_sorted]) * d[tails_sorted]
        new_d = d.copy()
        new_d[heads] = np.maximum.reduceat(contrib, starts)
        new_c = c.copy()
        new_c[heads] = np.maximum.reduceat(c[tails_sorted], starts)
        d, c = new_d, new_c
        passes += 1
    return -d, passes


def evaluate_schedule(g: GraphView) -> Schedule:
    """Forward plus backward sweeps packaged as a Schedule."""
    est, makespan, _ = forward_pass(g)
    lst, _ = backward_pass(g, makespan)
    return Schedule(est=est, lst=lst, makespan=makespan)


def cpm_oracle(g: GraphView) -> Schedule:
    """Reference evaluator: per-node recursion over a topological order."""
    order = topological_order(g)
    n = g.node_count
    proc = g.proc.tolist()
    in_lists = g.in_lists()
    out_lists = g.out_lists()
    est = [0] * n
    for v in order:
        best = 0
        for u in in_lists[v]:
            cand = est[u] + proc[u]
            if cand > best:
                best = cand
        est[v] = best
    makespan = est[g.inst.sink_id]
    lst = [0] * n
    lst[g.inst.sink_id] = makespan
    for v in reversed(order):
        outs = out_lists[v]
        if not outs:
            continue
        lst[v] = min(lst[w] for w in outs) - proc[v]
    return Schedule(est=np.asarray(est, dtype=np.int64),
                    lst=np.asarray(lst, dtype=np.int64),
                    makespan=int(makespan))


def longest_path_node_count(g: GraphView) -> int:
    """Most nodes on any SOURCE..SINK path; upper bound on sweep counts."""
    order = topological_order(g)
    depth = [1] * g.node_count
    in_lists = g.in_lists()
    for v in order:
        for u in in_lists[v]:
            if depth[u] + 1 > depth[v]:
                depth[v] = depth[u] + 1
    return depth[g.inst.sink_id]


def batch_evaluate(graphs: list[GraphView]) -> list[Schedule]:
    """Evaluate many graphs in shared sweeps over their disjoint union.

    Results are identical to evaluating each graph alone; a cyclic member is
    reported with its batch index.
    """
    if not graphs:
        return []
    counts = [g.node_count for g in graphs]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    src = np.concatenate([g.src + offsets[i] for i, g in enumerate(graphs)])
    dst = np.concatenate([g.dst + offsets[i] for i, g in enumerate(graphs)])
    proc = np.concatenate([g.proc for g in graphs])
    source_ids = np.array([g.inst.source_id + offsets[i]
                           for i, g in enumerate(graphs)])
    sink_ids = np.array([g.inst.sink_id + offsets[i]
                         for i, g in enumerate(graphs)])

    def sweep(src_arr, dst_arr, d, c, weights_per_arc):
        order = np.argsort(dst_arr, kind="stable")
        tails, heads_all = src_arr[order], dst_arr[order]
        starts = np.flatnonzero(np.r_[True, heads_all[1:] != heads_all[:-1]])
        heads = heads_all[starts]
        w = weights_per_arc[order]
        max_passes = max(counts) + 1
        passes = 0
        while c.any():
            if passes > max_passes:
                bad = [i for i in range(len(graphs))
                       if c[offsets[i]:offsets[i + 1]].any()]
                raise CycleError(f"cycle in batch member(s) {bad}")
            contrib = w + (1 - c[tails]) * d[tails]
            new_d = d.copy()
            new_d[heads] = np.maximum.reduceat(contrib, starts)
            new_c = c.copy()
            new_c[heads] = np.maximum.reduceat(c[tails], starts)
            d, c = new_d, new_c
            passes += 1
        return d

    d = np.zeros(total, dtype=np.int64)
    c = np.ones(total, dtype=np.int64)
    c[source_ids] = 0
    est = sweep(src, dst, d, c, proc[src])
    makespans = est[sink_ids]

    d = np.full(total, -1, dtype=np.int64)
    c = np.ones(total, dtype=np.int64)
    d[sink_ids] = -makespans
    c[sink_ids] = 0
    # reversed arcs keep the original weight: the processing time of the
    # original tail, which is the reversed arc's head
    neg_lst = sweep(dst, src, d, c, proc[src])

    out = []
    for i in range(len(graphs)):
        lo, hi = offsets[i], offsets[i + 1]
        out.append(Schedule(est=est[lo:hi].copy(),
                            lst=-neg_lst[lo:hi].copy(),
                            makespan=int(makespans[i])))
    return out


def extract_critical(g: GraphView, sched: Schedule,
                     rng: np.random.Generator) -> CriticalBlocks:
    """Walk one longest path back from SINK, breaking ties uniformly at random,
    then split it into maximal same-machine runs (dummies dropped)."""
    inst = g.inst
    est, lst = sched.est, sched.lst
    in_lists = g.in_lists()
    proc = g.proc
    path_nodes = [inst.sink_id]
    v = inst.sink_id
    while v != inst.source_id:
        cands = [u for u in in_lists[v]
                 if est[u] + proc[u] == est[v] and est[u] == lst[u]]
        if not cands:
            raise RuntimeError("no critical predecessor found; schedule is stale")
        v = cands[int(rng.integers(len(cands)))] if len(cands) > 1 else cands[0]
        path_nodes.append(v)
    path_nodes.reverse()
    path = tuple(inst.op_of(v) for v in path_nodes)

    machine = inst.machine_by_node
    blocks: list[tuple[OpId, ...]] = []
    machines: list[int] = []
    run: list[OpId] = []
    run_machine = -1
    for node in path_nodes:
        if node in (inst.source_id, inst.sink_id):
            continue
        m = int(machine[node])
        if run and m == run_machine:
            run.append(inst.op_of(node))
        else:
            if run:
                blocks.append(tuple(run))
                machines.append(run_machine)
            run = [inst.op_of(node)]
            run_machine = m
    if run:
        blocks.append(tuple(run))
        machines.append(run_machine)
    return CriticalBlocks(path=path, blocks=tuple(blocks), machines=tuple(machines))
