import numpy as np
import pytest

from jobshop.dispatch import random_dispatch_solution
from jobshop.evaluate import (
    backward_pass,
    batch_evaluate,
    cpm_oracle,
    evaluate_schedule,
    extract_critical,
    forward_pass,
    longest_path_node_count,
)
from jobshop.graph import CycleError, Solution, build_graph
from jobshop.instances import Instance, OpId, SINK, SOURCE, generate_taillard


def chain_graph():
    # one job over two machines: a pure chain S -> A(2) -> B(3) -> T
    inst = Instance(1, 2, (((0, 2), (1, 3)),))
    sol = Solution(((OpId(0, 0),), (OpId(0, 1),)))
    return inst, build_graph(inst, sol)


def test_forward_on_chain():
    inst, g = chain_graph()
    est, makespan, passes = forward_pass(g)
    assert est[inst.node_id(OpId(0, 0))] == 0
    assert est[inst.node_id(OpId(0, 1))] == 2
    assert makespan == 5
    assert passes <= longest_path_node_count(g)


def test_backward_on_chain():
    inst, g = chain_graph()
    _, makespan, _ = forward_pass(g)
    lst, passes = backward_pass(g, makespan)
    assert lst[inst.node_id(OpId(0, 0))] == 0
    assert lst[inst.node_id(OpId(0, 1))] == 2
    assert lst[inst.source_id] == 0
    assert passes <= longest_path_node_count(g)


def test_forward_three_jobs(three_job_instance, three_job_solution):
    g = build_graph(three_job_instance, three_job_solution)
    est, makespan, passes = forward_pass(g)
    nid = three_job_instance.node_id
    assert est[nid(OpId(0, 0))] == 0
    assert est[nid(OpId(1, 0))] == 3
    assert est[nid(OpId(2, 0))] == 5
    assert est[nid(OpId(0, 1))] == 3
    assert est[nid(OpId(1, 1))] == 5
    assert est[nid(OpId(2, 1))] == 8
    assert makespan == 10
    assert passes <= 6


def test_backward_three_jobs(three_job_instance, three_job_solution):
    g = build_graph(three_job_instance, three_job_solution)
    _, makespan, _ = forward_pass(g)
    lst, _ = backward_pass(g, makespan)
    nid = three_job_instance.node_id
    assert lst[nid(OpId(0, 0))] == 0
    assert lst[nid(OpId(1, 0))] == 3
    assert lst[nid(OpId(1, 1))] == 5
    assert lst[nid(OpId(2, 1))] == 8
    assert lst[nid(OpId(0, 1))] == 4
    assert lst[nid(OpId(2, 0))] == 7


def test_forward_cross(cross_instance, cross_solution):
    g = build_graph(cross_instance, cross_solution)
    est, makespan, _ = forward_pass(g)
    nid = cross_instance.node_id
    assert est[nid(OpId(0, 0))] == 0
    assert est[nid(OpId(1, 0))] == 0
    assert est[nid(OpId(0, 1))] == 2
    assert est[nid(OpId(1, 1))] == 2
    assert makespan == 6


def test_backward_cross(cross_instance, cross_solution):
    g = build_graph(cross_instance, cross_solution)
    sched = evaluate_schedule(g)
    nid = cross_instance.node_id
    # only the second op of job 0 has slack
    assert sched.lst[nid(OpId(0, 1))] == 3
    for op in [OpId(0, 0), OpId(1, 0), OpId(1, 1)]:
        assert sched.lst[nid(op)] == sched.est[nid(op)]


def test_cpm_oracle_single_op():
    inst = Instance(1, 1, (((0, 5),),))
    g = build_graph(inst, Solution(((OpId(0, 0),),)))
    sched = cpm_oracle(g)
    assert sched.est[inst.node_id(OpId(0, 0))] == 0
    assert sched.lst[inst.node_id(OpId(0, 0))] == 0
    assert sched.makespan == 5


def test_cpm_oracle_rejects_cycle(cross_instance):
    bad = Solution(((OpId(1, 1), OpId(0, 0)), (OpId(0, 1), OpId(1, 0))))
    with pytest.raises(CycleError):
        cpm_oracle(build_graph(cross_instance, bad))


def test_forward_pass_rejects_cycle(cross_instance):
    bad = Solution(((OpId(1, 1), OpId(0, 0)), (OpId(0, 1), OpId(1, 0))))
    with pytest.raises(CycleError):
        forward_pass(build_graph(cross_instance, bad))


def test_sweeps_match_oracle_on_random_solutions():
    checked = 0
    for seed in range(60):
        inst = generate_taillard(2 + seed % 7, 2 + seed % 5, seed)
        rng = np.random.default_rng(seed + 1)
        sol = random_dispatch_solution(inst, rng)
        g = build_graph(inst, sol)
        ref = cpm_oracle(g)
        est, makespan, fwd_passes = forward_pass(g)
        lst, bwd_passes = backward_pass(g, makespan)
        assert np.array_equal(est, ref.est)
        assert np.array_equal(lst, ref.lst)
        assert makespan == ref.makespan
        bound = longest_path_node_count(g)
        assert fwd_passes <= bound
        assert bwd_passes <= bound
        assert (0 <= ref.est).all()
        assert (ref.est <= ref.lst).all()
        assert est[inst.source_id] == 0
        assert est[inst.sink_id] == makespan
        assert lst[inst.source_id] == 0
        assert lst[inst.sink_id] == makespan
        checked += 1
    assert checked == 60


def test_readiness_is_monotone():
    # count of unready nodes never increases between sweeps
    inst = generate_taillard(6, 5, seed=11)
    sol = random_dispatch_solution(inst, np.random.default_rng(2))
    g = build_graph(inst, sol)
    from jobshop.evaluate import _in_segments

    src_sorted, heads, starts = _in_segments(g)
    d = np.zeros(g.node_count, dtype=np.int64)
    c = np.ones(g.node_count, dtype=np.int64)
    c[inst.source_id] = 0
    prev = c.copy()
    while c.any():
        new_d = d.copy()
        new_d[heads] = np.maximum.reduceat(
            g.proc[src_sorted] + (1 - c[src_sorted]) * d[src_sorted], starts)
        new_c = c.copy()
        new_c[heads] = np.maximum.reduceat(c[src_sorted], starts)
        d, c = new_d, new_c
        # flags only ever clear: no node flips back to unready
        assert (c <= prev).all()
        prev = c.copy()


def test_batch_matches_sequential(three_job_instance, three_job_solution,
                                  cross_instance, cross_solution):
    g1 = build_graph(cross_instance, cross_solution)
    g2 = build_graph(three_job_instance, three_job_solution)
    batch = batch_evaluate([g1, g2])
    assert [s.makespan for s in batch] == [6, 10]
    for g, sched in zip([g1, g2], batch):
        ref = cpm_oracle(g)
        assert np.array_equal(sched.est, ref.est)
        assert np.array_equal(sched.lst, ref.lst)


def test_batch_of_one(cross_instance, cross_solution):
    g = build_graph(cross_instance, cross_solution)
    (sched,) = batch_evaluate([g])
    ref = evaluate_schedule(g)
    assert np.array_equal(sched.est, ref.est)
    assert np.array_equal(sched.lst, ref.lst)
    assert sched.makespan == ref.makespan


def test_batch_empty():
    assert batch_evaluate([]) == []


def test_batch_reports_cyclic_member(cross_instance, cross_solution):
    good = build_graph(cross_instance, cross_solution)
    bad = build_graph(cross_instance, Solution(
        ((OpId(1, 1), OpId(0, 0)), (OpId(0, 1), OpId(1, 0)))))
    with pytest.raises(CycleError, match=r"\[1\]"):
        batch_evaluate([good, bad])


def test_batch_mixed_sizes_match_oracle():
    graphs = []
    for seed in range(64):
        inst = generate_taillard(2 + seed % 9, 2 + seed % 6, seed + 100)
        sol = random_dispatch_solution(inst, np.random.default_rng(seed))
        graphs.append(build_graph(inst, sol))
    scheds = batch_evaluate(graphs)
    for g, sched in zip(graphs, scheds):
        ref = cpm_oracle(g)
        assert np.array_equal(sched.est, ref.est)
        assert np.array_equal(sched.lst, ref.lst)
        assert sched.makespan == ref.makespan


def test_extract_critical_three_jobs(three_job_instance, three_job_solution):
    g = build_graph(three_job_instance, three_job_solution)
    sched = evaluate_schedule(g)
    cb = extract_critical(g, sched, np.random.default_rng(0))
    assert cb.path == (SOURCE, OpId(0, 0), OpId(1, 0), OpId(1, 1), OpId(2, 1), SINK)
    assert cb.blocks == ((OpId(0, 0), OpId(1, 0)), (OpId(1, 1), OpId(2, 1)))
    assert cb.machines == (0, 1)


def test_extract_critical_path_length_is_makespan():
    for seed in range(20):
        inst = generate_taillard(5, 4, seed)
        sol = random_dispatch_solution(inst, np.random.default_rng(seed))
        g = build_graph(inst, sol)
        sched = evaluate_schedule(g)
        cb = extract_critical(g, sched, np.random.default_rng(seed))
        total = sum(inst.proc_of(op) for op in cb.path)
        assert total == sched.makespan
        for op in cb.path:
            node = inst.node_id(op)
            assert sched.est[node] == sched.lst[node]
        for block, machine in zip(cb.blocks, cb.machines):
            assert {inst.machine_of(op) for op in block} == {machine}


def test_extract_critical_on_chain_blocks():
    inst, g = chain_graph()
    sched = evaluate_schedule(g)
    cb = extract_critical(g, sched, np.random.default_rng(0))
    assert cb.path == (SOURCE, OpId(0, 0), OpId(0, 1), SINK)
    assert cb.blocks == ((OpId(0, 0),), (OpId(0, 1),))


def test_extract_critical_cross_ties(cross_instance, cross_solution):
    g = build_graph(cross_instance, cross_solution)
    sched = evaluate_schedule(g)
    seen = set()
    for seed in range(20):
        cb = extract_critical(g, sched, np.random.default_rng(seed))
        assert cb.path[2] == OpId(1, 1)
        seen.add(cb.path[1])
        assert all(len(b) <= 2 for b in cb.blocks)
    # both tied predecessors appear across seeds
    assert seen == {OpId(0, 0), OpId(1, 0)}
