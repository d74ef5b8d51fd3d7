from pathlib import Path

import pytest

from jobshop.bench import load_instance
from jobshop.evaluate import cpm_oracle
from jobshop.exact import brute_force_best, solve_exact
from jobshop.graph import build_graph, is_acyclic
from jobshop.instances import generate_taillard

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.mark.parametrize("seed", range(6))
def test_branch_and_bound_matches_brute_force_3x3(seed):
    inst = generate_taillard(3, 3, seed)
    res = solve_exact(inst)
    assert res.proved
    assert res.makespan == brute_force_best(inst)


@pytest.mark.parametrize("jobs,machines,seed", [(2, 4, 1), (4, 2, 3), (3, 2, 9)])
def test_branch_and_bound_matches_brute_force_rect(jobs, machines, seed):
    inst = generate_taillard(jobs, machines, seed)
    res = solve_exact(inst)
    assert res.proved
    assert res.makespan == brute_force_best(inst)


def test_solution_achieves_reported_makespan():
    inst = generate_taillard(4, 4, seed=5)
    res = solve_exact(inst)
    g = build_graph(inst, res.solution)
    assert is_acyclic(g)
    assert cpm_oracle(g).makespan == res.makespan


def test_upper_bound_hint_prunes_but_keeps_value():
    inst = generate_taillard(4, 4, seed=6)
    free = solve_exact(inst)
    hinted = solve_exact(inst, upper_bound=free.makespan)
    assert hinted.makespan == free.makespan
    assert hinted.nodes_explored <= free.nodes_explored


def test_node_limit_interrupts():
    inst = generate_taillard(6, 6, seed=7)
    res = solve_exact(inst, node_limit=5)
    assert not res.proved


def test_six_by_six_anchor_is_proved_and_table_matches():
    inst = load_instance(DATA / "instances" / "ft06.txt")
    res = solve_exact(inst)
    assert res.proved
    table = {}
    for line in (DATA / "best_known.csv").read_text().splitlines()[1:]:
        name, value = line.split(",")
        table[name] = int(value)
    assert table["ft06"] == res.makespan == 55


def test_shipped_table_matches_oracle_on_small_instances():
    table = {}
    for line in (DATA / "best_known.csv").read_text().splitlines()[1:]:
        name, value = line.split(",")
        table[name] = int(value)
    for name, expected in table.items():
        inst = load_instance(DATA / "instances" / f"{name}.txt")
        if inst.num_jobs * inst.num_machines > 25:
            continue  # ft06 covered by its own test above
        res = solve_exact(inst)
        assert res.proved
        assert res.makespan == expected, name
