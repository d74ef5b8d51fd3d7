"""Minimal differentiable kernels: dense maps, batch norm, GIN and GAT layers.

Everything runs in 64-bit floats. Layers hold references into a shared
``ParamStore``; ``forward`` returns an output plus an opaque cache and
``backward`` consumes the cache, accumulates parameter gradients in place and
returns the gradient w.r.t. the layer input. A finite-difference checker
validates any scalar closure against the hand-written gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParamStore:
    """Named parameter arrays with matching gradient buffers, plus non-learned
    buffers (batch-norm running statistics)."""

    def __init__(self) -> None:
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add_param(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        return arr

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise ValueError(f"duplicate buffer {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self.buffers[name] = arr
        return arr

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum())
                                 for g in self.grads.values())))

    def num_params(self) -> int:
        return sum(v.size for v in self.values.values())

    def load_values(self, values: dict[str, np.ndarray],
                    buffers: dict[str, np.ndarray]) -> None:
        """Copy matching arrays in place; shapes must agree exactly."""
        for name, arr in self.values.items():
            if name not in values:
                raise KeyError(f"missing parameter {name!r}")
            src = np.asarray(values[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}: "
                                 f"{src.shape} vs {arr.shape}")
            arr[...] = src
        for name, arr in self.buffers.items():
            if name not in buffers:
                raise KeyError(f"missing buffer {name!r}")
            src = np.asarray(buffers[name], dtype=np.float64)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for buffer {name!r}")
            arr[...] = src


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
           shape: tuple[int, ...] | None = None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


class EdgeSet:
    """A fixed directed arc set with cached sort orders for vectorized
    segment reductions (sums and per-head softmax by destination)."""

    def __init__(self, src: np.ndarray, dst: np.ndarray, node_count: int):
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.node_count = node_count
        self.edge_count = len(self.src)
        self._by_dst = self._segment_index(self.dst)
        self._by_src = self._segment_index(self.src)

    @staticmethod
    def _segment_index(key: np.ndarray):
        order = np.argsort(key, kind="stable")
        sorted_key = key[order]
        if len(sorted_key):
            starts = np.flatnonzero(
                np.r_[True, sorted_key[1:] != sorted_key[:-1]])
            ids = sorted_key[starts]
            counts = np.diff(np.r_[starts, len(sorted_key)])
        else:
            starts = np.zeros(0, dtype=np.int64)
            ids = np.zeros(0, dtype=np.int64)
            counts = np.zeros(0, dtype=np.int64)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        return order, inverse, starts, ids, counts

    def _reduce(self, index, edge_values: np.ndarray) -> np.ndarray:
        order, _, starts, ids, _ = index
        out_shape = (self.node_count,) + edge_values.shape[1:]
        out = np.zeros(out_shape, dtype=edge_values.dtype)
        if len(order):
            sums = np.add.reduceat(edge_values[order], starts, axis=0)
            out[ids] = sums
        return out

    def sum_by_dst(self, edge_values: np.ndarray) -> np.ndarray:
        """out[v] = sum of edge_values over arcs with head v."""
        return self._reduce(self._by_dst, edge_values)

    def sum_by_src(self, edge_values: np.ndarray) -> np.ndarray:
        """out[u] = sum of edge_values over arcs with tail u."""
        return self._reduce(self._by_src, edge_values)

    def gather_sum_in(self, node_values: np.ndarray) -> np.ndarray:
        """out[v] = sum of node_values[u] over in-neighbours u of v."""
        if self.edge_count == 0:
            return np.zeros_like(node_values)
        return self.sum_by_dst(node_values[self.src])

    def softmax_by_dst(self, logits: np.ndarray):
        """Softmax of per-arc logits within each head-node segment.

        Returns (weights, cache); every node reached by at least one arc gets
        weights summing to one.
        """
        order, inverse, starts, ids, counts = self._by_dst
        z = logits[order]
        seg_max = np.maximum.reduceat(z, starts)
        z = z - np.repeat(seg_max, counts)
        ez = np.exp(z)
        seg_sum = np.add.reduceat(ez, starts)
        alpha_sorted = ez / np.repeat(seg_sum, counts)
        alpha = alpha_sorted[inverse]
        return alpha, alpha

    def softmax_by_dst_backward(self, d_alpha: np.ndarray,
                                alpha: np.ndarray) -> np.ndarray:
        order, inverse, starts, ids, counts = self._by_dst
        prod = alpha * d_alpha
        seg = np.add.reduceat(prod[order], starts)
        return alpha * (d_alpha - np.repeat(seg, counts)[inverse])


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0.0, 1.0, slope)


class Dense:
    """Affine map y = x W + b."""

    def __init__(self, store: ParamStore, name: str, fan_in: int, fan_out: int,
                 rng: np.random.Generator):
        self.w = store.add_param(f"{name}.w", glorot(rng, fan_in, fan_out))
        self.b = store.add_param(f"{name}.b", np.zeros(fan_out))
        self.gw = store.grads[f"{name}.w"]
        self.gb = store.grads[f"{name}.b"]

    def forward(self, x: np.ndarray):
        return x @ self.w + self.b, x

    def backward(self, dy: np.ndarray, x: np.ndarray) -> np.ndarray:
        self.gw += x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.w.T


class BatchNorm:
    """Normalization over the node axis with learnable scale and shift.

    Training mode normalizes by the batch statistics and refreshes the
    running averages (momentum 0.1); inference mode uses the running
    averages only.
    """

    def __init__(self, store: ParamStore, name: str, width: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = store.add_param(f"{name}.gamma", np.ones(width))
        self.beta = store.add_param(f"{name}.beta", np.zeros(width))
        self.ggamma = store.grads[f"{name}.gamma"]
        self.gbeta = store.grads[f"{name}.beta"]
        self.run_mean = store.add_buffer(f"{name}.run_mean", np.zeros(width))
        self.run_var = store.add_buffer(f"{name}.run_var", np.ones(width))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            if update_running:
                m = self.momentum
                self.run_mean[...] = (1 - m) * self.run_mean + m * mean
                self.run_var[...] = (1 - m) * self.run_var + m * var
        else:
            mean, var = self.run_mean, self.run_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        y = self.gamma * xhat + self.beta
        return y, (xhat, inv, train)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        xhat, inv, train = cache
        self.ggamma += (dy * xhat).sum(axis=0)
        self.gbeta += dy.sum(axis=0)
        dxhat = dy * self.gamma
        if not train:
            return dxhat * inv
        n = xhat.shape[0]
        return (inv / n) * (n * dxhat
                            - dxhat.sum(axis=0)
                            - xhat * (dxhat * xhat).sum(axis=0))


class MLP:
    """Stack of Dense layers.

    With ``norm=True`` every layer applies rectifier then batch norm (the
    embedding-module flavour); with ``norm=False`` hidden layers apply the
    rectifier alone and the final layer stays affine when ``act_last`` is
    False (the scoring-head flavour).
    """

    def __init__(self, store: ParamStore, name: str, widths: list[int],
                 rng: np.random.Generator, *, norm: bool, act_last: bool):
        self.layers: list[Dense] = []
        self.norms: list[BatchNorm | None] = []
        self.norm = norm
        self.act_last = act_last
        for z in range(len(widths) - 1):
            self.layers.append(Dense(store, f"{name}.l{z}", widths[z],
                                     widths[z + 1], rng))
            is_last = z == len(widths) - 2
            use_act = act_last or not is_last
            self.norms.append(BatchNorm(store, f"{name}.l{z}.bn", widths[z + 1])
                              if (norm and use_act) else None)

    def forward(self, x: np.ndarray, train: bool, update_running: bool = True):
        caches = []
        h = x
        n_layers = len(self.layers)
        for z, (lin, bn) in enumerate(zip(self.layers, self.norms)):
            pre, lin_cache = lin.forward(h)
            use_act = self.act_last or z < n_layers - 1
            act = relu(pre) if use_act else pre
            if bn is not None:
                h, bn_cache = bn.forward(act, train, update_running)
            else:
                h, bn_cache = act, None
            caches.append((lin_cache, pre, use_act, bn_cache))
        return h, caches

    def backward(self, dy: np.ndarray, caches) -> np.ndarray:
        d = dy
        for (lin, bn), (lin_cache, pre, use_act, bn_cache) in zip(
                reversed(list(zip(self.layers, self.norms))), reversed(caches)):
            if bn is not None:
                d = bn.backward(d, bn_cache)
            if use_act:
                d = d * (pre > 0.0)
            d = lin.backward(d, lin_cache)
        return d


class GinLayer:
    """Isomorphism-style update: MLP over (1 + eps) * self + sum of in-neighbours."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, hidden: int,
                 out_dim: int, rng: np.random.Generator, norm: bool = True):
        self.eps = store.add_param(f"{name}.eps", np.zeros(()))
        self.geps = store.grads[f"{name}.eps"]
        self.mlp = MLP(store, f"{name}.mlp", [in_dim, hidden, out_dim], rng,
                       norm=norm, act_last=True)

    def forward(self, h: np.ndarray, edges: EdgeSet, train: bool,
                update_running: bool = True):
        agg = (1.0 + self.eps) * h + edges.gather_sum_in(h)
        out, mlp_cache = self.mlp.forward(agg, train, update_running)
        return out, (h, edges, mlp_cache)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        h, edges, mlp_cache = cache
        dagg = self.mlp.backward(dy, mlp_cache)
        self.geps += (dagg * h).sum()
        dh = (1.0 + self.eps) * dagg
        if edges.edge_count:
            dh = dh + edges.sum_by_src(dagg[edges.dst])
        return dh


class GatLayer:
    """Attention layer over a directed arc set extended with self-loops.

    Per head: transform, score every (in-neighbour or self, node) pair with a
    leaky rectifier logit, softmax per node, aggregate; head outputs are
    averaged. Nodes without in-arcs attend to themselves alone.
    """

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int,
                 heads: int, rng: np.random.Generator):
        self.heads = heads
        self.w = []
        self.a_src = []
        self.a_dst = []
        self.gw = []
        self.ga_src = []
        self.ga_dst = []
        for h in range(heads):
            w = store.add_param(f"{name}.h{h}.w", glorot(rng, in_dim, out_dim))
            asrc = store.add_param(f"{name}.h{h}.a_src",
                                   glorot(rng, out_dim, 1, shape=(out_dim,)))
            adst = store.add_param(f"{name}.h{h}.a_dst",
                                   glorot(rng, out_dim, 1, shape=(out_dim,)))
            self.w.append(w)
            self.a_src.append(asrc)
            self.a_dst.append(adst)
            self.gw.append(store.grads[f"{name}.h{h}.w"])
            self.ga_src.append(store.grads[f"{name}.h{h}.a_src"])
            self.ga_dst.append(store.grads[f"{name}.h{h}.a_dst"])

    def forward(self, h: np.ndarray, edges: EdgeSet):
        """``edges`` must already include a self-loop on every node."""
        per_head = []
        outputs = []
        for k in range(self.heads):
            z = h @ self.w[k]
            s = z @ self.a_src[k]
            t = z @ self.a_dst[k]
            pre = s[edges.src] + t[edges.dst]
            logits = leaky_relu(pre)
            alpha, _ = edges.softmax_by_dst(logits)
            msg = z[edges.src] * alpha[:, None]
            outputs.append(edges.sum_by_dst(msg))
            per_head.append((z, pre, alpha))
        out = outputs[0] if self.heads == 1 else sum(outputs) / self.heads
        return out, (h, edges, per_head)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        h, edges, per_head = cache
        dh = np.zeros_like(h)
        scale = 1.0 / self.heads
        for k in range(self.heads):
            z, pre, alpha = per_head[k]
            dout = dy * scale
            dmsg = dout[edges.dst]
            dalpha = (dmsg * z[edges.src]).sum(axis=1)
            dz = edges.sum_by_src(alpha[:, None] * dmsg)
            dlogits = edges.softmax_by_dst_backward(dalpha, alpha)
            dpre = dlogits * leaky_relu_grad(pre)
            ds = edges.sum_by_src(dpre)
            dt = edges.sum_by_dst(dpre)
            dz += ds[:, None] * self.a_src[k] + dt[:, None] * self.a_dst[k]
            self.ga_src[k] += z.T @ ds
            self.ga_dst[k] += z.T @ dt
            self.gw[k] += h.T @ dz
            dh += dz @ self.w[k].T
        return dh


def with_self_loops(src: np.ndarray, dst: np.ndarray,
                    node_count: int) -> EdgeSet:
    loops = np.arange(node_count, dtype=np.int64)
    return EdgeSet(np.concatenate([src, loops]),
                   np.concatenate([dst, loops]), node_count)


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Probabilities over ``len(scores) + 1`` slots; the extra slot is the
    no-op action, which takes probability one exactly when nothing is open.

    Masked entries get probability exactly zero.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.shape != scores.shape:
        raise ValueError("mask and scores must have the same length")
    probs = np.zeros(len(scores) + 1)
    if not mask.any():
        probs[-1] = 1.0
        return probs
    open_scores = scores[mask]
    ez = np.exp(open_scores - open_scores.max())
    probs[:-1][mask] = ez / ez.sum()
    return probs


@dataclass
class GradCheckReport:
    max_rel_err: float
    l2_rel_err: float
    probed: int
    worst: tuple[str, int, float, float] | None  # name, flat index, fd, analytic

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= 1e-4


def grad_check(closure, store: ParamStore, rng: np.random.Generator,
               probes_per_param: int = 4, step: float = 1e-6) -> GradCheckReport:
    """Central finite differences against the closure's reverse-mode gradient.

    ``closure(compute_grad)`` returns a scalar; with ``compute_grad`` True it
    must also accumulate gradients into the store. A random sample of
    coordinates from every parameter is probed. Relative errors use a 1e-4
    floor in the denominator so that finite-difference roundoff on
    near-zero coordinates does not register as disagreement.
    """
    store.zero_grads()
    closure(True)
    analytic = {name: g.copy() for name, g in store.grads.items()}

    fd_vals: list[float] = []
    an_vals: list[float] = []
    max_rel = 0.0
    worst = None
    probed = 0
    for name, value in store.values.items():
        flat = value.reshape(-1)
        k = min(probes_per_param, flat.size)
        idxs = rng.choice(flat.size, size=k, replace=False)
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = closure(False)
            flat[idx] = orig - step
            f_minus = closure(False)
            flat[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            an = analytic[name].reshape(-1)[idx]
            if max(abs(fd), abs(an)) < 1e-6:
                # below the roundoff floor of central differences; both sides
                # agree the coordinate is inert
                rel = 0.0
            else:
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-4)
            fd_vals.append(fd)
            an_vals.append(an)
            probed += 1
            if rel > max_rel:
                max_rel = rel
                worst = (name, int(idx), float(fd), float(an))
    fd_arr = np.asarray(fd_vals)
    an_arr = np.asarray(an_vals)
    denom = max(float(np.linalg.norm(fd_arr)), float(np.linalg.norm(an_arr)),
                1e-12)
    l2 = float(np.linalg.norm(fd_arr - an_arr)) / denom
    return GradCheckReport(max_rel_err=float(max_rel), l2_rel_err=l2,
                           probed=probed, worst=worst)


class Adam:
    """Adam with bias correction and a constant learning rate."""

    def __init__(self, store: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(v) for name, v in store.values.items()}
        self.v = {name: np.zeros_like(v) for name, v in store.values.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, value in self.store.values.items():
            g = self.store.grads[name]
            m = self.m[name]
            v = self.v[name]
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            value -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
