import numpy as np
import pytest

from jobshop.dispatch import initial_solution_fdd_mwkr
from jobshop.checkpoint import CheckpointError
from jobshop.graph import build_graph
from jobshop.instances import Instance, OpId, generate_taillard
from jobshop.neighborhood import analyze_solution
from jobshop.nn import grad_check, masked_softmax
from jobshop.policy import (
    DUMMY_ACTION,
    PolicyConfig,
    PolicyNetwork,
    build_features,
    encode_states,
    sample_action,
)

SMALL = PolicyConfig(iterations=2, embed_dim=8, mlp_hidden=8, head_hidden=8,
                     head_layers=2, score_dim=6)


def analyzed(inst, sol, seed=0):
    return analyze_solution(inst, sol, np.random.default_rng(seed))


def small_state(seed=0, jobs=3, machines=3):
    inst = generate_taillard(jobs, machines, seed)
    sol = initial_solution_fdd_mwkr(inst)
    return inst, analyzed(inst, sol, seed)


def test_build_features_scaling():
    inst = Instance(1, 1, (((0, 99),),))
    g = build_graph(inst, initial_solution_fdd_mwkr(inst))
    est = np.array([500, 0, 99])
    lst = np.array([1000, 0, 99])
    feats = build_features(inst, est, lst)
    assert feats[0].tolist() == [1.0, 0.5, 1.0]


def test_features_source_all_zero(three_job_instance, three_job_solution):
    analysis = analyzed(three_job_instance, three_job_solution)
    feats = build_features(three_job_instance, analysis.schedule.est,
                           analysis.schedule.lst)
    assert feats[three_job_instance.source_id].tolist() == [0.0, 0.0, 0.0]


def test_features_critical_nodes_have_equal_times(three_job_instance,
                                                  three_job_solution):
    analysis = analyzed(three_job_instance, three_job_solution)
    feats = build_features(three_job_instance, analysis.schedule.est,
                           analysis.schedule.lst)
    for op in analysis.blocks.path:
        node = three_job_instance.node_id(op)
        assert feats[node, 1] == feats[node, 2]


def test_tpm_graph_embedding_is_mean_of_sums():
    inst, state = small_state(3)
    enc = encode_states([state])
    net = PolicyNetwork(SMALL, seed=1)
    mu_v, mu_g, _ = net.tpm_embed(enc.features, enc.full, enc.offsets,
                                  enc.counts, train=False)
    # pooling commutes with the per-iteration sum when merge_sum is on
    assert np.allclose(mu_g[0], mu_v.mean(axis=0), atol=1e-9)


def test_tpm_final_iteration_mode():
    inst, state = small_state(3)
    enc = encode_states([state])
    cfg = PolicyConfig(iterations=2, embed_dim=8, mlp_hidden=8, head_hidden=8,
                       head_layers=2, score_dim=6, merge_sum=False)
    net = PolicyNetwork(cfg, seed=1)
    mu_v_final, _, _ = net.tpm_embed(enc.features, enc.full, enc.offsets,
                                     enc.counts, train=False)
    net_sum = PolicyNetwork(SMALL, seed=1)
    mu_v_sum, _, _ = net_sum.tpm_embed(enc.features, enc.full, enc.offsets,
                                       enc.counts, train=False)
    assert not np.allclose(mu_v_final, mu_v_sum)


def test_cam_halves_average():
    inst, state = small_state(5)
    enc = encode_states([state])
    cfg = PolicyConfig(iterations=1, embed_dim=8, mlp_hidden=8, head_hidden=8,
                       head_layers=2, score_dim=6)
    net = PolicyNetwork(cfg, seed=2)
    v = enc.features
    vj, _ = net.route_gats[0].forward(v, enc.routes)
    vm, _ = net.machine_gats[0].forward(v, enc.machines)
    expect = 0.5 * (vj + vm)
    nu_v, nu_g, _ = net.cam_embed(v, enc.routes, enc.machines, enc.offsets,
                                  enc.counts)
    assert np.allclose(nu_v, expect, atol=1e-9)
    assert np.allclose(nu_g[0], expect.mean(axis=0), atol=1e-9)


def test_cam_zero_weights_make_halves_equal():
    inst, state = small_state(5)
    enc = encode_states([state])
    cfg = PolicyConfig(iterations=1, embed_dim=8, mlp_hidden=8, head_hidden=8,
                       head_layers=2, score_dim=6)
    net = PolicyNetwork(cfg, seed=2)
    for name, v in net.store.values.items():
        if name.startswith("cam0") and name.endswith(".w"):
            v[...] = 0.0
    nu_v, _, _ = net.cam_embed(enc.features, enc.routes, enc.machines,
                               enc.offsets, enc.counts)
    vj, _ = net.route_gats[0].forward(enc.features, enc.routes)
    assert np.allclose(nu_v, vj)
    assert np.allclose(nu_v, 0.0)


def test_distribution_supported_exactly_on_moves(three_job_instance,
                                                 three_job_solution):
    analysis = analyzed(three_job_instance, three_job_solution)
    net = PolicyNetwork(SMALL, seed=3)
    (dist,) = net.distributions([analysis])
    assert len(dist.probs) == 2
    assert dist.probs.sum() == pytest.approx(1.0)
    assert (dist.probs > 0).all()
    assert {(m.a, m.b) for m in dist.moves} == {
        (OpId(0, 0), OpId(1, 0)), (OpId(1, 1), OpId(2, 1))}


def test_dense_distribution_matches_masked_softmax(three_job_instance,
                                                   three_job_solution):
    analysis = analyzed(three_job_instance, three_job_solution)
    enc = encode_states([analysis])
    net = PolicyNetwork(SMALL, seed=3)
    dists, cache = net.forward(enc, train=False)
    n = three_job_instance.node_count
    sc = cache.head_out @ cache.head_out.T
    assert np.allclose(sc, sc.T)
    from jobshop.neighborhood import build_mask

    mask = build_mask(analysis.moves, n)
    dense_ref = masked_softmax(sc.ravel(), mask.ravel())
    dense = dists[0].to_dense(n)
    assert np.allclose(dense, dense_ref, atol=1e-12)


def test_absorbing_state_maps_to_noop():
    inst = Instance(1, 1, (((0, 5),),))
    analysis = analyzed(inst, initial_solution_fdd_mwkr(inst))
    net = PolicyNetwork(SMALL, seed=4)
    (dist,) = net.distributions([analysis])
    assert dist.absorbing
    dense = dist.to_dense(inst.node_count)
    assert dense[-1] == 1.0
    assert dense[:-1].sum() == 0.0
    assert sample_action(dist, np.random.default_rng(0)) is None


def test_single_move_gets_probability_one():
    # identical two-machine routes: the critical path holds a two-op block
    # plus a singleton, so exactly one candidate pair opens up
    inst = Instance(2, 2, (((0, 2), (1, 2)), ((0, 2), (1, 2))))
    analysis = analyzed(inst, initial_solution_fdd_mwkr(inst))
    assert len(analysis.moves) == 1
    net = PolicyNetwork(SMALL, seed=5)
    (dist,) = net.distributions([analysis])
    assert dist.probs.tolist() == [1.0]


def test_sampling_is_deterministic_and_matches_frequencies():
    inst, analysis = small_state(seed=9, jobs=4, machines=3)
    net = PolicyNetwork(SMALL, seed=6)
    (dist,) = net.distributions([analysis])
    a = dist.sample(np.random.default_rng(42))
    b = dist.sample(np.random.default_rng(42))
    assert a == b
    if len(dist.probs) > 1:
        draws = 100_000
        rng = np.random.default_rng(7)
        counts = np.zeros(len(dist.probs))
        for _ in range(draws):
            counts[dist.sample(rng)] += 1
        freqs = counts / draws
        sigma = np.sqrt(dist.probs * (1 - dist.probs) / draws)
        assert (np.abs(freqs - dist.probs) <= 3 * sigma + 1e-12).all()


def test_greedy_mode_picks_argmax():
    inst, analysis = small_state(seed=9, jobs=4, machines=3)
    net = PolicyNetwork(SMALL, seed=6)
    (dist,) = net.distributions([analysis])
    move = sample_action(dist, np.random.default_rng(0), greedy=True)
    assert move == dist.moves[int(np.argmax(dist.probs))]


def test_policy_relabeling_invariance():
    # feeding the same state twice in a batch must give identical rows and
    # identical distributions (block-diagonal independence)
    inst, analysis = small_state(seed=11, jobs=3, machines=3)
    net = PolicyNetwork(SMALL, seed=8)
    single = net.distributions([analysis])[0]
    double = net.distributions([analysis, analysis])
    assert np.allclose(double[0].probs, double[1].probs, atol=1e-9)
    assert np.allclose(single.probs, double[0].probs, atol=1e-9)


def randomize_params(net, seed):
    r = np.random.default_rng(seed)
    for v in net.store.values.values():
        v[...] = r.normal(scale=0.4, size=v.shape)


def test_full_policy_gradcheck_small():
    inst, analysis = small_state(seed=13, jobs=3, machines=3)
    enc = encode_states([analysis])
    net = PolicyNetwork(SMALL, seed=9)
    randomize_params(net, 90)
    dists, _ = net.forward(enc, train=True, update_running=False)
    action = int(np.argmax(dists[0].probs))

    def closure(compute_grad):
        ds, cache = net.forward(enc, train=True, update_running=False)
        if compute_grad:
            net.accumulate_logprob_grad(cache, [action], [1.0])
        return ds[0].log_prob(action)

    report = grad_check(closure, net.store, np.random.default_rng(10),
                        probes_per_param=2)
    assert report.max_rel_err <= 1e-4, report.worst


def test_checkpoint_round_trip(tmp_path):
    inst, analysis = small_state(seed=17, jobs=3, machines=2)
    net = PolicyNetwork(SMALL, seed=11)
    # perturb running stats so buffers are exercised too
    for name, buf in net.store.buffers.items():
        buf += 0.25
    path = tmp_path / "policy.npz"
    net.save(path)
    loaded = PolicyNetwork.load(path)
    assert loaded.config == net.config
    for name, v in net.store.values.items():
        assert np.array_equal(loaded.store.values[name], v)
    for name, v in net.store.buffers.items():
        assert np.array_equal(loaded.store.buffers[name], v)
    a = net.distributions([analysis])[0]
    b = loaded.distributions([analysis])[0]
    assert np.array_equal(a.probs, b.probs)


def test_checkpoint_rejects_corrupt_file(tmp_path):
    path = tmp_path / "bad.npz"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        PolicyNetwork.load(path)


def test_checkpoint_shape_manifest_guard(tmp_path):
    net = PolicyNetwork(SMALL, seed=12)
    path = tmp_path / "p.npz"
    net.save(path)
    other = PolicyNetwork(PolicyConfig(iterations=2, embed_dim=4, mlp_hidden=4,
                                       head_hidden=4, head_layers=2,
                                       score_dim=4), seed=12)
    with pytest.raises((CheckpointError, KeyError, ValueError)):
        other.store.load_values(*PolicyNetwork_load_arrays(path))


def PolicyNetwork_load_arrays(path):
    from jobshop.checkpoint import load_checkpoint

    _, params, buffers = load_checkpoint(path)
    return params, buffers


def test_embedding_stacks_are_permutation_equivariant():
    inst, analysis = small_state(seed=23, jobs=3, machines=3)
    enc = encode_states([analysis])
    net = PolicyNetwork(SMALL, seed=14)
    mu_v, mu_g, _ = net.tpm_embed(enc.features, enc.full, enc.offsets,
                                  enc.counts, train=True, update_running=False)
    nu_v, nu_g, _ = net.cam_embed(enc.features, enc.routes, enc.machines,
                                  enc.offsets, enc.counts)

    from jobshop.nn import EdgeSet, with_self_loops

    n = enc.features.shape[0]
    perm = np.random.default_rng(15).permutation(n)
    feats_p = np.empty_like(enc.features)
    feats_p[perm] = enc.features
    full_p = EdgeSet(perm[enc.full.src], perm[enc.full.dst], n)
    # strip the self-loops before relabeling, then re-add them
    e_r = enc.routes.edge_count - n
    routes_p = with_self_loops(perm[enc.routes.src[:e_r]],
                               perm[enc.routes.dst[:e_r]], n)
    e_m = enc.machines.edge_count - n
    machines_p = with_self_loops(perm[enc.machines.src[:e_m]],
                                 perm[enc.machines.dst[:e_m]], n)
    mu_v2, mu_g2, _ = net.tpm_embed(feats_p, full_p, enc.offsets, enc.counts,
                                    train=True, update_running=False)
    nu_v2, nu_g2, _ = net.cam_embed(feats_p, routes_p, machines_p,
                                    enc.offsets, enc.counts)
    assert np.allclose(mu_v2[perm], mu_v, atol=1e-9)
    assert np.allclose(nu_v2[perm], nu_v, atol=1e-9)
    assert np.allclose(mu_g2, mu_g, atol=1e-9)
    assert np.allclose(nu_g2, nu_g, atol=1e-9)
