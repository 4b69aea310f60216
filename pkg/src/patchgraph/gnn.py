"""GATv2 + SAGPool patch-graph classifier.

Forward pass for one slide graph:

1. Project node features to width ``d`` (one shared map for ``naive``; for
   the concatenated modes each half goes through its magnification's map and
   the resulting ``2d`` vector is merged back to ``d``).
2. For each graph block: ``message_passings`` GATv2 layers, each followed by
   ReLU, then SAGPool keeps ``ceil(ratio * N)`` nodes gated by ``tanh(score)``.
   The block's readout is ``[mean ; max]`` over the kept nodes.
3. Sum the block readouts, apply dropout when training, and map the ``2d``
   vector to five logits with one linear layer.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import CheckpointMismatchError, ParseError, ValidationError
from .graphbuild import FeatureSpaceMode, MultiResGraph
from .numkit import (
    Rng,
    Tensor,
    concat,
    leaky_relu,
    matmul,
    max_rows,
    mean_rows,
    mul,
    relu,
    reshape,
    segment_softmax,
    segment_sum,
    take_rows,
    tanh,
)
from .slideio.formats import format_float

N_CLASSES = 5


def _uniform_param(rng: Rng, shape, fan_in: int, name: str) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def _zeros_param(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: Rng, bias: bool = True, name: str = "linear"):
        self.weight = _uniform_param(rng, (d_in, d_out), d_in, f"{name}.weight")
        self.bias = _zeros_param((d_out,), f"{name}.bias") if bias else None

    def parameters(self):
        return [self.weight] + ([self.bias] if self.bias is not None else [])

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class GATv2Layer:
    """Single-head GATv2 convolution.

    For centre node ``i`` and neighbour ``j``::

        e_ij  = att . LeakyReLU(W_src h_i + W_dst h_j + bias)
        a_ij  = softmax_j(e_ij)
        out_i = sum_j a_ij W_dst h_j
    """

    def __init__(self, d_in: int, d_out: int, rng: Rng, slope: float = 0.2, name: str = "gat"):
        if d_out < 1:
            raise ValidationError("GATv2 output width must be positive")
        self.W_src = _uniform_param(rng, (d_in, d_out), d_in, f"{name}.W_src")
        self.W_dst = _uniform_param(rng, (d_in, d_out), d_in, f"{name}.W_dst")
        self.att = _uniform_param(rng, (d_out,), d_out, f"{name}.att")
        self.bias = _zeros_param((d_out,), f"{name}.bias")
        self.slope = slope

    @property
    def d_out(self) -> int:
        return self.W_src.shape[1]

    def parameters(self):
        return [self.W_src, self.W_dst, self.att, self.bias]


def _as_directed(edges, n: int):
    if isinstance(edges, tuple):
        centers, nbrs = edges
    else:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        loop = e[:, 0] == e[:, 1]
        centers = np.concatenate([e[:, 0], e[~loop, 1]])
        nbrs = np.concatenate([e[:, 1], e[~loop, 0]])
    centers = np.asarray(centers, dtype=np.int64)
    nbrs = np.asarray(nbrs, dtype=np.int64)
    if n and np.any(np.bincount(centers, minlength=n)[:n] == 0):
        lonely = int(np.flatnonzero(np.bincount(centers, minlength=n)[:n] == 0)[0])
        raise ValidationError(f"node {lonely} has no incident edge (missing self-loop?)")
    return centers, nbrs


def gatv2_forward(layer: GATv2Layer, x: Tensor, edges, return_attention: bool = False):
    """Apply ``layer`` over ``edges``: an ``(E, 2)`` undirected pair array or a
    ``(centers, neighbours)`` tuple of directed index arrays."""
    n = x.shape[0]
    centers, nbrs = _as_directed(edges, n)
    hs = matmul(x, layer.W_src)
    hd = matmul(x, layer.W_dst)
    msg = take_rows(hd, nbrs)
    z = leaky_relu(take_rows(hs, centers) + msg + layer.bias, layer.slope)
    e = reshape(matmul(z, reshape(layer.att, (layer.d_out, 1))), (len(centers),))
    alpha = segment_softmax(e, centers, n)
    out = segment_sum(mul(msg, reshape(alpha, (len(centers), 1))), centers, n)
    if return_attention:
        return out, alpha.data
    return out


SCORE_TIE_TOL = 1e-12


def tie_ranks(scores) -> np.ndarray:
    """Dense descending rank of each score, treating scores that differ by
    less than ``SCORE_TIE_TOL`` (relative, chained) as equal, so that ties
    created by structure do not depend on summation order."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    ranks = np.empty(len(s), dtype=np.int64)
    rank = 0
    for pos, i in enumerate(order):
        if pos:
            prev = s[order[pos - 1]]
            if prev - s[i] > SCORE_TIE_TOL * max(1.0, abs(prev)):
                rank += 1
        ranks[i] = rank
    return ranks


def pool_size(ratio: float, n: int) -> int:
    return max(1, math.ceil(round(ratio * n, 9)))


class SAGPoolLayer:
    def __init__(self, d: int, ratio: float, rng: Rng, name: str = "pool"):
        if not 0 < ratio <= 1:
            raise ValidationError("pooling ratio must lie in (0, 1]")
        self.score = GATv2Layer(d, 1, rng, name=f"{name}.score")
        self.ratio = ratio

    def parameters(self):
        return self.score.parameters()


def sagpool_forward(layer: SAGPoolLayer, x: Tensor, edges, keys=None):
    """Keep the top-scoring nodes.

    Returns ``(kept features, (centers, neighbours) of the induced subgraph,
    kept indices)``. Score ties are broken by ``keys`` (rows compared
    lexicographically), defaulting to node index.
    """
    n = x.shape[0]
    centers, nbrs = _as_directed(edges, n)
    scores = reshape(gatv2_forward(layer.score, x, (centers, nbrs)), (n,))
    k = pool_size(layer.ratio, n)
    if keys is None:
        keys = np.arange(n, dtype=np.float64)[:, None]
    keys = np.asarray(keys, dtype=np.float64).reshape(n, -1)
    ranks = tie_ranks(scores.data)
    order = np.lexsort(tuple(keys[:, c] for c in range(keys.shape[1] - 1, -1, -1)) + (ranks,))
    kept = np.sort(order[:k])
    gate = tanh(reshape(take_rows(scores, kept), (k, 1)))
    pooled = mul(take_rows(x, kept), gate)
    remap = np.full(n, -1, dtype=np.int64)
    remap[kept] = np.arange(k)
    live = (remap[centers] >= 0) & (remap[nbrs] >= 0)
    return pooled, (remap[centers[live]], remap[nbrs[live]]), kept


@dataclass
class GraphState:
    x: Tensor
    centers: np.ndarray
    nbrs: np.ndarray
    keys: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]


class GraphBlock:
    def __init__(self, d: int, message_passings: int, ratio: float, rng: Rng, name: str = "block"):
        self.layers = [GATv2Layer(d, d, rng, name=f"{name}.mp{i}") for i in range(message_passings)]
        self.pool = SAGPoolLayer(d, ratio, rng, name=f"{name}.pool")

    def parameters(self):
        out = []
        for layer in self.layers:
            out += layer.parameters()
        return out + self.pool.parameters()


def block_forward(block: GraphBlock, state: GraphState, trace: list | None = None):
    """Returns ``(pooled state, readout of length 2d)``.

    When ``trace`` is a list, a dict with the block's pooling scores, kept
    indices and selection margin is appended to it.
    """
    if state.n_nodes == 0:
        raise ValidationError("block received an empty graph")
    x = state.x
    edges = (state.centers, state.nbrs)
    for layer in block.layers:
        x = relu(gatv2_forward(layer, x, edges))
    pooled, (c, nb), kept = sagpool_forward(block.pool, x, edges, state.keys)
    if trace is not None:
        scores = gatv2_forward(block.pool.score, Tensor._wrap(x.data), edges).data.reshape(-1)
        trace.append({"scores": scores, "kept": kept, "margin": selection_margin(scores, len(kept))})
    readout = concat([mean_rows(pooled), max_rows(pooled)])
    return GraphState(pooled, c, nb, state.keys[kept]), readout


def selection_margin(scores, k: int) -> float:
    """Gap between the k-th and (k+1)-th largest score; inf when all are
    kept or when the two share a tie class (selection then follows keys)."""
    if k >= len(scores):
        return math.inf
    s = np.sort(np.asarray(scores))[::-1]
    gap = float(s[k - 1] - s[k])
    if gap <= SCORE_TIE_TOL * max(1.0, abs(s[k - 1])):
        return math.inf
    return gap


class PatchGraphModel:
    def __init__(self, config: ModelConfig, feature_dim: int, rng: Rng):
        self.config = config
        self.mode = config.mode
        self.magnifications = tuple(config.magnifications)
        self.feature_dim = feature_dim
        self.dropout_p = config.dropout
        d = config.embedding_size
        if self.mode is FeatureSpaceMode.NAIVE:
            self.input_proj = [Linear(feature_dim, d, rng, bias=False, name="proj.shared")]
            self.merge = None
        else:
            self.input_proj = [
                Linear(feature_dim, d, rng, bias=False, name=f"proj.slot{s}") for s in range(2)
            ]
            self.merge = Linear(2 * d, d, rng, bias=False, name="merge")
        self.blocks = [
            GraphBlock(d, config.message_passings, config.pooling_factor, rng, name=f"blocks.{b}")
            for b in range(config.graph_poolings)
        ]
        self.head = Linear(2 * d, N_CLASSES, rng, bias=True, name="head")

    def parameters(self) -> list[Tensor]:
        out = []
        for proj in self.input_proj:
            out += proj.parameters()
        if self.merge is not None:
            out += self.merge.parameters()
        for block in self.blocks:
            out += block.parameters()
        return out + self.head.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def project(self, graph: MultiResGraph) -> Tensor:
        feats = Tensor._wrap(graph.features)
        if self.mode is FeatureSpaceMode.NAIVE:
            if graph.features.shape[1] != self.feature_dim:
                raise ValidationError(
                    f"graph has {graph.features.shape[1]} features, model expects {self.feature_dim}"
                )
            return self.input_proj[0](feats)
        D = self.feature_dim
        if graph.features.shape[1] != 2 * D:
            raise ValidationError(
                f"graph has {graph.features.shape[1]} features, model expects {2 * D}"
            )
        low = self.input_proj[0](Tensor._wrap(graph.features[:, :D]))
        high = self.input_proj[1](Tensor._wrap(graph.features[:, D:]))
        return self.merge(concat([low, high], axis=1))


def init_model(config: ModelConfig, feature_dim: int, rng: Rng) -> PatchGraphModel:
    """Build a model for ``feature_dim``-wide patch features (per magnification)."""
    config.validate()
    if feature_dim < 1:
        raise ValidationError("feature_dim must be positive")
    return PatchGraphModel(config, feature_dim, rng)


def model_forward(model: PatchGraphModel, graph: MultiResGraph, train_mode: bool = False,
                  rng: Rng | None = None, trace: list | None = None) -> Tensor:
    """Five class logits for one slide graph."""
    if graph.n_nodes == 0:
        raise ValidationError("cannot classify an empty graph")
    if graph.mode is not model.mode:
        raise ValidationError(f"graph built as {graph.mode.value}, model expects {model.mode.value}")
    centers, nbrs = graph.directed()
    state = GraphState(model.project(graph), centers, nbrs, graph.keys)
    total = None
    for block in model.blocks:
        state, readout = block_forward(block, state, trace)
        total = readout if total is None else total + readout
    if train_mode and model.dropout_p > 0:
        if rng is None:
            raise ValidationError("training-mode dropout needs an rng")
        keep = 1.0 - model.dropout_p
        mask = rng.bernoulli(keep, total.shape).astype(np.float64) / keep
        total = mul(total, mask)
    return model.head(total)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def predict_proba(model: PatchGraphModel, graph: MultiResGraph) -> np.ndarray:
    return softmax(model_forward(model, graph, train_mode=False).data)


# -- checkpoints -----------------------------------------------------------
#
# One CSV row per parameter tensor, in ``named_parameters`` order:
#
#     name,shape,values
#     proj.slot0.weight,16x32,0.013,...
#
# ``shape`` joins dimensions with "x"; values are row-major shortest
# round-trip decimals.

CHECKPOINT_HEADER = ["name", "shape", "values"]


def save_checkpoint(path, model: PatchGraphModel) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CHECKPOINT_HEADER)
        for name, p in model.named_parameters():
            shape = "x".join(str(s) for s in p.shape)
            writer.writerow([name, shape] + [format_float(v) for v in p.data.reshape(-1)])


def read_checkpoint(path) -> list[tuple[str, np.ndarray]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != CHECKPOINT_HEADER:
            raise ParseError(f"{path}: not a checkpoint file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                shape = tuple(int(s) for s in row[1].split("x"))
                values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            if values.size != int(np.prod(shape)):
                raise ParseError(f"{path}:{lineno}: {values.size} values for shape {shape}")
            out.append((row[0], values.reshape(shape)))
    return out


def load_checkpoint(path, model: PatchGraphModel) -> PatchGraphModel:
    """Copy checkpoint values into ``model``; names and shapes must match."""
    stored = read_checkpoint(path)
    expected = model.named_parameters()
    if [n for n, _ in stored] != [n for n, _ in expected]:
        raise CheckpointMismatchError(f"{path}: parameter names do not match the configured model")
    for (name, arr), (_, p) in zip(stored, expected):
        if arr.shape != p.shape:
            raise CheckpointMismatchError(f"{path}: {name} has shape {arr.shape}, model expects {p.shape}")
        p.data[...] = arr
    return model
