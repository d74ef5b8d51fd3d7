"""Move-picking policy over precedence graphs.

Node features are the normalized (processing time, earliest start, latest
start) triples. Two embedding stacks run side by side: an isomorphism-style
stack over the full graph whose per-iteration outputs are summed, and an
attention stack run separately over the route-arc and machine-arc subgraphs
whose halves are averaged each iteration. Their node and pooled graph
embeddings are concatenated and fed through a scoring head; the dot product
of head outputs scores every candidate operation pair, and a softmax over the
open pairs yields the action distribution. Absorbing states map to a no-op
action with probability one.

The whole stack operates on a batch of graphs at once: nodes of all graphs
are stacked, arc arrays are offset, and batch-norm statistics are taken over
the stacked nodes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .graph import Move
from .instances import Instance
from .neighborhood import StateAnalysis
from .nn import (
    Adam,
    EdgeSet,
    GatLayer,
    GinLayer,
    MLP,
    ParamStore,
    with_self_loops,
)

PROC_SCALE = 99.0
TIME_SCALE = 1000.0

#: index returned for the no-op action of absorbing states
DUMMY_ACTION = -1


@dataclass(frozen=True)
class PolicyConfig:
    iterations: int = 4          # embedding iterations per stack
    embed_dim: int = 128         # node embedding width
    mlp_hidden: int = 128        # hidden width of the isomorphism-stack MLPs
    head_hidden: int = 64        # hidden width of the scoring head
    head_layers: int = 4         # hidden layer count of the scoring head
    score_dim: int = 64          # width of the per-node scoring vector
    attention_heads: int = 1
    merge_sum: bool = True       # node embedding: sum of iterations vs final

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(**d)


def build_features(inst: Instance, est: np.ndarray, lst: np.ndarray) -> np.ndarray:
    """Per-node (p, est, lst) scaled by the fixed normalization constants."""
    out = np.empty((inst.node_count, 3))
    out[:, 0] = inst.proc_by_node / PROC_SCALE
    out[:, 1] = est / TIME_SCALE
    out[:, 2] = lst / TIME_SCALE
    return out


@dataclass
class EncodedBatch:
    """Stacked node features and offset arc sets for a batch of states."""

    features: np.ndarray
    full: EdgeSet
    routes: EdgeSet     # route arcs plus self-loops
    machines: EdgeSet   # machine arcs plus self-loops
    offsets: np.ndarray
    counts: np.ndarray
    graph_of_node: np.ndarray
    cells: list[np.ndarray]        # per state: (k, 2) global node ids
    moves: list[tuple[Move, ...]]

    @property
    def batch_size(self) -> int:
        return len(self.counts)


def encode_states(states: list[StateAnalysis]) -> EncodedBatch:
    counts = np.array([s.graph.node_count for s in states], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    feats = np.concatenate([
        build_features(s.graph.inst, s.schedule.est, s.schedule.lst)
        for s in states])
    full_src = np.concatenate([s.graph.src + offsets[i]
                               for i, s in enumerate(states)])
    full_dst = np.concatenate([s.graph.dst + offsets[i]
                               for i, s in enumerate(states)])
    job_arc = np.concatenate([s.graph.job_arc for s in states])
    full = EdgeSet(full_src, full_dst, total)
    routes = with_self_loops(full_src[job_arc], full_dst[job_arc], total)
    machines = with_self_loops(full_src[~job_arc], full_dst[~job_arc], total)
    cells = [s.moves.cells + offsets[i] for i, s in enumerate(states)]
    moves = [s.moves.moves for s in states]
    graph_of_node = np.repeat(np.arange(len(states)), counts)
    return EncodedBatch(features=feats, full=full, routes=routes,
                        machines=machines, offsets=offsets, counts=counts,
                        graph_of_node=graph_of_node, cells=cells, moves=moves)


@dataclass
class ActionDistribution:
    """Distribution over one state's candidate moves (empty when absorbing)."""

    moves: tuple[Move, ...]
    cells: np.ndarray
    probs: np.ndarray

    @property
    def absorbing(self) -> bool:
        return len(self.moves) == 0

    def sample(self, rng: np.random.Generator) -> int:
        if self.absorbing:
            return DUMMY_ACTION
        u = rng.random()
        return int(min(np.searchsorted(np.cumsum(self.probs), u),
                       len(self.probs) - 1))

    def greedy(self) -> int:
        if self.absorbing:
            return DUMMY_ACTION
        return int(np.argmax(self.probs))

    def log_prob(self, index: int) -> float:
        if index == DUMMY_ACTION:
            return 0.0
        return float(np.log(self.probs[index]))

    def to_dense(self, node_count: int, offset: int = 0) -> np.ndarray:
        """Flattened node x node probabilities plus the trailing no-op slot."""
        dense = np.zeros(node_count * node_count + 1)
        if self.absorbing:
            dense[-1] = 1.0
            return dense
        local = self.cells - offset
        dense[local[:, 0] * node_count + local[:, 1]] = self.probs
        return dense


def sample_action(dist: ActionDistribution, rng: np.random.Generator,
                  greedy: bool = False) -> Move | None:
    """Draw (or argmax) a move; None signals the no-op in absorbing states."""
    idx = dist.greedy() if greedy else dist.sample(rng)
    if idx == DUMMY_ACTION:
        return None
    return dist.moves[idx]


def _segment_mean(x: np.ndarray, offsets: np.ndarray,
                  counts: np.ndarray) -> np.ndarray:
    sums = np.add.reduceat(x, offsets[:-1], axis=0)
    return sums / counts[:, None]


def _segment_mean_backward(dmean: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.repeat(dmean / counts[:, None], counts, axis=0)


@dataclass
class PolicyCache:
    enc: EncodedBatch
    tpm_caches: list
    tpm_outputs: list[np.ndarray]
    cam_caches: list
    head_cache: object
    head_out: np.ndarray
    dists: list[ActionDistribution]


class PolicyNetwork:
    """The full scoring pipeline plus reverse-mode gradients and persistence."""

    def __init__(self, config: PolicyConfig, seed: int = 0):
        self.config = config
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        p = config.embed_dim
        self.tpm_layers = []
        self.route_gats = []
        self.machine_gats = []
        for k in range(config.iterations):
            in_dim = 3 if k == 0 else p
            self.tpm_layers.append(GinLayer(
                self.store, f"tpm{k}", in_dim, config.mlp_hidden, p, rng))
        for k in range(config.iterations):
            in_dim = 3 if k == 0 else p
            self.route_gats.append(GatLayer(
                self.store, f"cam{k}.routes", in_dim, p,
                config.attention_heads, rng))
            self.machine_gats.append(GatLayer(
                self.store, f"cam{k}.machines", in_dim, p,
                config.attention_heads, rng))
        head_widths = ([4 * p] + [config.head_hidden] * config.head_layers
                       + [config.score_dim])
        self.head = MLP(self.store, "head", head_widths, rng,
                        norm=False, act_last=False)
        # near-zero scores at init: the starting policy is statistically
        # uniform over the open moves and training only departs from it where
        # the gradient carries signal. The output must not be exactly zero:
        # pair scores are bilinear in it, making the origin a stationary
        # point with no gradient at all.
        self.head.layers[-1].w *= 0.02
        self.head.layers[-1].b[...] = 0.0

    # -- embedding stacks ---------------------------------------------------

    def tpm_embed(self, x: np.ndarray, full: EdgeSet, offsets: np.ndarray,
                  counts: np.ndarray, train: bool, update_running: bool = True):
        h = x
        outputs = []
        caches = []
        for layer in self.tpm_layers:
            h, cache = layer.forward(h, full, train, update_running)
            outputs.append(h)
            caches.append(cache)
        if self.config.merge_sum:
            node_emb = sum(outputs)
        else:
            node_emb = outputs[-1]
        graph_emb = sum(_segment_mean(o, offsets, counts) for o in outputs)
        return node_emb, graph_emb, (caches, outputs)

    def tpm_backward(self, d_node: np.ndarray, d_graph: np.ndarray,
                     cache, counts: np.ndarray) -> np.ndarray:
        caches, outputs = cache
        k_last = len(self.tpm_layers) - 1
        d_chain = np.zeros_like(outputs[-1])
        for k in range(k_last, -1, -1):
            d_out = d_chain + _segment_mean_backward(d_graph, counts)
            if self.config.merge_sum or k == k_last:
                d_out = d_out + d_node
            d_chain = self.tpm_layers[k].backward(d_out, caches[k])
        return d_chain

    def cam_embed(self, x: np.ndarray, routes: EdgeSet, machines: EdgeSet,
                  offsets: np.ndarray, counts: np.ndarray):
        v = x
        caches = []
        for gat_j, gat_m in zip(self.route_gats, self.machine_gats):
            vj, cj = gat_j.forward(v, routes)
            vm, cm = gat_m.forward(v, machines)
            v = 0.5 * (vj + vm)
            caches.append((cj, cm))
        graph_emb = _segment_mean(v, offsets, counts)
        return v, graph_emb, caches

    def cam_backward(self, d_node: np.ndarray, d_graph: np.ndarray,
                     caches, counts: np.ndarray) -> np.ndarray:
        d_v = d_node + _segment_mean_backward(d_graph, counts)
        for (cj, cm), gat_j, gat_m in zip(reversed(caches),
                                          reversed(self.route_gats),
                                          reversed(self.machine_gats)):
            half = 0.5 * d_v
            d_v = gat_j.backward(half, cj) + gat_m.backward(half, cm)
        return d_v

    # -- full pipeline --------------------------------------------------------

    def forward(self, enc: EncodedBatch, train: bool,
                update_running: bool = True) -> tuple[list[ActionDistribution],
                                                      PolicyCache]:
        mu_v, mu_g, tpm_cache = self.tpm_embed(
            enc.features, enc.full, enc.offsets, enc.counts, train,
            update_running)
        nu_v, nu_g, cam_cache = self.cam_embed(
            enc.features, enc.routes, enc.machines, enc.offsets, enc.counts)
        h_nodes = np.concatenate([mu_v, nu_v], axis=1)
        h_graph = np.concatenate([mu_g, nu_g], axis=1)
        head_in = np.concatenate([h_nodes, h_graph[enc.graph_of_node]], axis=1)
        head_out, head_cache = self.head.forward(head_in, train)
        dists = []
        for b in range(enc.batch_size):
            cells = enc.cells[b]
            if len(cells) == 0:
                dists.append(ActionDistribution(enc.moves[b], cells,
                                                np.zeros(0)))
                continue
            scores = (head_out[cells[:, 0]] * head_out[cells[:, 1]]).sum(axis=1)
            z = np.exp(scores - scores.max())
            probs = z / z.sum()
            dists.append(ActionDistribution(enc.moves[b], cells, probs))
        cache = PolicyCache(enc=enc, tpm_caches=tpm_cache[0],
                            tpm_outputs=tpm_cache[1], cam_caches=cam_cache,
                            head_cache=head_cache, head_out=head_out,
                            dists=dists)
        return dists, cache

    def accumulate_logprob_grad(self, cache: PolicyCache, actions: list[int],
                                coeffs: list[float]) -> None:
        """Add d/dtheta of sum_b coeffs[b] * log pi_b(actions[b]) to the grads.

        No-op actions contribute nothing: an absorbing state's distribution is
        constant in the parameters.
        """
        enc = cache.enc
        head_out = cache.head_out
        d_head_out = np.zeros_like(head_out)
        touched = False
        for b, (action, coeff) in enumerate(zip(actions, coeffs)):
            if action == DUMMY_ACTION or coeff == 0.0:
                continue
            dist = cache.dists[b]
            if dist.absorbing:
                continue
            g = -coeff * dist.probs
            g[action] += coeff
            cells = enc.cells[b]
            i, j = cells[:, 0], cells[:, 1]
            np.add.at(d_head_out, i, g[:, None] * head_out[j])
            np.add.at(d_head_out, j, g[:, None] * head_out[i])
            touched = True
        if not touched:
            return
        d_head_in = self.head.backward(d_head_out, cache.head_cache)
        two_p = 2 * self.config.embed_dim
        d_nodes = d_head_in[:, :two_p]
        d_graph_rows = d_head_in[:, two_p:]
        d_graph = np.add.reduceat(d_graph_rows, enc.offsets[:-1], axis=0)
        p = self.config.embed_dim
        self.tpm_backward(d_nodes[:, :p], d_graph[:, :p],
                          (cache.tpm_caches, cache.tpm_outputs), enc.counts)
        self.cam_backward(d_nodes[:, p:], d_graph[:, p:],
                          cache.cam_caches, enc.counts)

    # -- convenience ----------------------------------------------------------

    def distributions(self, states: list[StateAnalysis], train: bool = False,
                      update_running: bool = False) -> list[ActionDistribution]:
        dists, _ = self.forward(encode_states(states), train, update_running)
        return dists

    def act(self, state: StateAnalysis, rng: np.random.Generator,
            greedy: bool = False) -> Move | None:
        (dist,) = self.distributions([state])
        return sample_action(dist, rng, greedy=greedy)

    def save(self, path) -> None:
        save_checkpoint(path, self.store, self.config.to_dict())

    @classmethod
    def load(cls, path) -> "PolicyNetwork":
        config_dict, params, buffers = load_checkpoint(path)
        try:
            config = PolicyConfig.from_dict(config_dict)
        except TypeError as exc:
            raise CheckpointError(f"{path}: bad config: {exc}") from exc
        net = cls(config)
        net.store.load_values(params, buffers)
        return net

    def optimizer(self, lr: float) -> Adam:
        return Adam(self.store, lr)
