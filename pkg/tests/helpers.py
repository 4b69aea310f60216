"""Shared builders for the test suite."""
import numpy as np

from patchgraph.config import ModelConfig
from patchgraph.gnn import init_model, model_forward
from patchgraph.graphbuild import assemble_graph
from patchgraph.numkit import Rng, cross_entropy
from patchgraph.slideio import FeatureSet


def random_two_mag_graph(rng: Rng, mode="concat_avg", n_min=6, n_max=12, dim=4):
    """A random 5x/10x graph with ``n_min..n_max`` nodes; high-magnification
    nodes are children of the drawn low-magnification nodes."""
    while True:
        n_low = 2 + rng.integers(3)
        cells = rng.permutation(9)[:n_low]
        low = [(int(c) // 3, int(c) % 3) for c in cells]
        kids = [(2 * r + i, 2 * c + j) for r, c in low for i in (0, 1) for j in (0, 1)]
        target = n_min + rng.integers(n_max - n_min + 1)
        n_high = target - n_low
        if 1 <= n_high <= len(kids):
            break
    high = [kids[p] for p in rng.permutation(len(kids))[:n_high]]
    return assemble_graph(
        [
            FeatureSet(5, dim, low, rng.normal(size=(len(low), dim))),
            FeatureSet(10, dim, high, rng.normal(size=(len(high), dim))),
        ],
        mode,
    )


def small_config(mode="concat_avg", **kw):
    base = dict(embedding_size=6, message_passings=2, graph_poolings=2, pooling_factor=0.7,
                dropout=0.0, feature_space_mode=mode)
    base.update(kw)
    return ModelConfig(**base)


def random_model(config, dim, rng: Rng, scale=None):
    """Model with default init, or every parameter uniform in [-scale, scale]."""
    model = init_model(config, dim, rng.substream("init"))
    if scale is not None:
        for p in model.parameters():
            p.data[...] = rng.uniform(-scale, scale, size=p.shape)
    return model


def loss_fn(model, graph, label, kept_log=None):
    """Closure for grad_check; records each block's kept set in ``kept_log``."""
    def f():
        trace = [] if kept_log is not None else None
        out = cross_entropy(model_forward(model, graph, trace=trace), label)
        if kept_log is not None:
            kept_log.append(tuple(tuple(t["kept"]) for t in trace))
        return out
    return f


def adjacency(edges, n):
    adj = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        adj[i, j] = adj[j, i] = True
    return adj


def dense_gatv2(layer, x, adj):
    """Dense masked-softmax GATv2 reference."""
    n = len(x)
    ws, wd = x @ layer.W_src.data, x @ layer.W_dst.data
    out = np.zeros((n, layer.d_out))
    for i in range(n):
        z = ws[i][None, :] + wd + layer.bias.data[None, :]
        z = np.where(z > 0, z, layer.slope * z)
        e = z @ layer.att.data
        e = np.where(adj[i], e, -np.inf)
        a = np.exp(e - e[adj[i]].max())
        a = a / a.sum()
        out[i] = a @ wd
    return out


def dense_model_forward(model, graph):
    """Second implementation of the forward pass on dense matrices."""
    import math

    x = graph.features
    if model.merge is None:
        h = x @ model.input_proj[0].weight.data
    else:
        d_in = model.feature_dim
        low = x[:, :d_in] @ model.input_proj[0].weight.data
        high = x[:, d_in:] @ model.input_proj[1].weight.data
        h = np.hstack([low, high]) @ model.merge.weight.data
    adj = adjacency(graph.edges, graph.n_nodes)
    keys = [tuple(k) for k in graph.keys.tolist()]
    total = np.zeros(2 * h.shape[1])
    for block in model.blocks:
        for layer in block.layers:
            h = np.maximum(dense_gatv2(layer, h, adj), 0.0)
        s = dense_gatv2(block.pool.score, h, adj)[:, 0]
        k = max(1, math.ceil(round(block.pool.ratio * len(h), 9)))
        # scores within 1e-12 of their predecessor share a tie class
        desc = sorted(range(len(h)), key=lambda i: -s[i])
        cls, c = {}, 0
        for a, b in zip([None] + desc, desc):
            if a is not None and s[a] - s[b] > 1e-12 * max(1.0, abs(s[a])):
                c += 1
            cls[b] = c
        order = sorted(range(len(h)), key=lambda i: (cls[i], keys[i]))
        kept = sorted(order[:k])
        h = h[kept] * np.tanh(s[kept])[:, None]
        adj = adj[np.ix_(kept, kept)]
        keys = [keys[i] for i in kept]
        total = total + np.concatenate([h.mean(axis=0), h.max(axis=0)])
    return total @ model.head.weight.data + model.head.bias.data


def brute_force_neighbours(coords):
    """Count unordered Chebyshev-distance-1 pairs."""
    import itertools

    return sum(
        max(abs(r1 - r2), abs(c1 - c2)) == 1
        for (r1, c1), (r2, c2) in itertools.combinations(coords, 2)
    )


def mp_two_sided_p(a, b):
    """Two-sided paired t-test p-value at 50 significant digits."""
    import mpmath

    mpmath.mp.dps = 50
    d = [mpmath.mpf(x) - mpmath.mpf(y) for x, y in zip(a, b)]
    n = len(d)
    mean = sum(d) / n
    sd = mpmath.sqrt(sum((x - mean) ** 2 for x in d) / (n - 1))
    t = mean / (sd / mpmath.sqrt(n))
    df = n - 1
    return float(mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True))
