"""Multi-resolution patch graphs.

Nodes are patches at one or two magnifications. Same-magnification patches
are joined to their 8-neighbourhood (Chebyshev distance 1 on the lattice),
each low-magnification patch ``(r, c)`` is joined to the high-magnification
patches ``(2r + i, 2c + j)`` that cover it, and every node has a self-loop.
Edges are undirected and stored once as ``(i, j)`` with ``i <= j``.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .slideio.formats import format_mag

_FORWARD_OFFSETS = ((0, 1), (1, -1), (1, 0), (1, 1))
EDGE_HEADER = ["src_mag", "src_row", "src_col", "dst_mag", "dst_row", "dst_col"]


class FeatureSpaceMode(str, enum.Enum):
    NAIVE = "naive"
    CONCAT_ZERO = "concat_zero"
    CONCAT_AVG = "concat_avg"

    @property
    def concatenated(self) -> bool:
        return self is not FeatureSpaceMode.NAIVE


def _index(coords) -> dict:
    return {(int(r), int(c)): i for i, (r, c) in enumerate(coords)}


def build_intra_edges(grid, self_loops: bool = True) -> np.ndarray:
    """``(E, 2)`` local index pairs of Chebyshev-1 neighbours (plus self-loops)."""
    coords = np.asarray(grid.coords).reshape(-1, 2)
    lookup = _index(coords)
    if len(lookup) != len(coords):
        raise ValidationError("grid has duplicate (row, col) entries")
    pairs = []
    for i, (r, c) in enumerate(coords):
        for dr, dc in _FORWARD_OFFSETS:
            j = lookup.get((int(r) + dr, int(c) + dc))
            if j is not None:
                pairs.append((min(i, j), max(i, j)))
        if self_loops:
            pairs.append((i, i))
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def build_cross_edges(low, high) -> np.ndarray:
    """``(E, 2)`` pairs ``(low index, high index)`` of parent/child patches."""
    if float(high.magnification) != 2.0 * float(low.magnification):
        raise ValidationError(
            f"cross edges need a 2x magnification ratio, got {low.magnification}x and {high.magnification}x"
        )
    lookup = _index(np.asarray(high.coords).reshape(-1, 2))
    pairs = []
    for i, (r, c) in enumerate(np.asarray(low.coords).reshape(-1, 2)):
        for dr in (0, 1):
            for dc in (0, 1):
                j = lookup.get((2 * int(r) + dr, 2 * int(c) + dc))
                if j is not None:
                    pairs.append((i, j))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


@dataclass
class MultiResGraph:
    mags: np.ndarray  # (N,) magnification of each node
    coords: np.ndarray  # (N, 2) lattice row, col
    features: np.ndarray  # (N, F)
    edges: np.ndarray  # (E, 2) undirected, i <= j, self-loops included
    slot: np.ndarray  # (N,) 0 = low magnification, 1 = high
    magnifications: tuple
    mode: FeatureSpaceMode

    @property
    def n_nodes(self) -> int:
        return len(self.mags)

    @property
    def nodes(self) -> list[tuple]:
        return [(float(m), int(r), int(c)) for m, (r, c) in zip(self.mags, self.coords)]

    @property
    def keys(self) -> np.ndarray:
        """``(N, 3)`` float array of (mag, row, col), a permutation-free node identity."""
        return np.column_stack([self.mags, self.coords.astype(np.float64)])

    def directed(self) -> tuple[np.ndarray, np.ndarray]:
        """``(centers, neighbours)``: both directions of each edge, self-loops once."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        loop = i == j
        centers = np.concatenate([i, j[~loop]])
        nbrs = np.concatenate([j, i[~loop]])
        return centers, nbrs

    def permute(self, perm) -> "MultiResGraph":
        """The same graph with node ``perm[k]`` moved to position ``k``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        e = inv[self.edges]
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        return replace(
            self,
            mags=self.mags[perm],
            coords=self.coords[perm],
            features=self.features[perm],
            slot=self.slot[perm],
            edges=e,
        )


def _sorted_sets(features) -> list:
    sets = list(features.values()) if isinstance(features, dict) else list(features)
    return sorted(sets, key=lambda fs: fs.magnification)


def assemble_graph(features, mode=FeatureSpaceMode.CONCAT_AVG) -> MultiResGraph:
    """Build a slide graph from one or two per-magnification FeatureSets.

    Feature layouts: ``naive`` keeps each node's own vector; the concatenated
    modes use ``[low half | high half]`` with the node's own vector in its own
    half and, in the other half, zeros (``concat_zero``) or the mean of the
    other magnification's vectors on this slide (``concat_avg``).
    """
    mode = FeatureSpaceMode(mode)
    sets = _sorted_sets(features)
    if not sets or len(sets) > 2:
        raise ValidationError("a graph needs one or two magnifications")
    if len({fs.dim for fs in sets}) != 1:
        raise ValidationError("feature dimensions differ across magnifications")
    if mode.concatenated and len(sets) != 2:
        raise ValidationError(f"{mode.value} requires two magnifications")
    n = sum(len(fs) for fs in sets)
    if n == 0:
        raise ValidationError("graph has no nodes")
    d = sets[0].dim

    blocks, edges, offset = [], [], 0
    for level, fs in enumerate(sets):
        edges.append(build_intra_edges(fs) + offset)
        offset += len(fs)
    if len(sets) == 2:
        cross = build_cross_edges(sets[0], sets[1])
        cross[:, 1] += len(sets[0])
        edges.append(cross)

    if mode is FeatureSpaceMode.NAIVE:
        feats = np.concatenate([fs.values for fs in sets], axis=0)
    else:
        low, high = sets
        if mode is FeatureSpaceMode.CONCAT_ZERO:
            fill_low, fill_high = np.zeros(d), np.zeros(d)
        else:
            fill_low = high.values.mean(axis=0) if len(high) else np.zeros(d)
            fill_high = low.values.mean(axis=0) if len(low) else np.zeros(d)
        feats = np.concatenate(
            [
                np.hstack([low.values, np.broadcast_to(fill_low, (len(low), d))]),
                np.hstack([np.broadcast_to(fill_high, (len(high), d)), high.values]),
            ],
            axis=0,
        )
    for level, fs in enumerate(sets):
        blocks.append(np.full(len(fs), level, dtype=np.int64))

    e = np.concatenate(edges, axis=0)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    return MultiResGraph(
        mags=np.concatenate([np.full(len(fs), fs.magnification) for fs in sets]),
        coords=np.concatenate([fs.coords for fs in sets], axis=0).astype(np.int64),
        features=np.ascontiguousarray(feats, dtype=np.float64),
        edges=e,
        slot=np.concatenate(blocks),
        magnifications=tuple(fs.magnification for fs in sets),
        mode=mode,
    )


def subsample_patches(features, max_patches: int, rng) -> list:
    """Randomly reduce a slide to at most ``max_patches`` nodes.

    With two magnifications, low-magnification patches are drawn without
    replacement and each brings its children; drawing stops at the first
    family that would overflow. High-magnification patches without a parent
    count as families of one.
    """
    if max_patches < 1:
        raise ValidationError("max_patches must be >= 1")
    sets = _sorted_sets(features)
    total = sum(len(fs) for fs in sets)
    if total <= max_patches:
        return sets
    if len(sets) == 1:
        keep = np.zeros(len(sets[0]), dtype=bool)
        keep[rng.choice(len(sets[0]), max_patches)] = True
        return [sets[0].subset(keep)]

    low, high = sets
    cross = build_cross_edges(low, high)
    children = [[] for _ in range(len(low))]
    for i, j in cross:
        children[i].append(j)
    has_parent = np.zeros(len(high), dtype=bool)
    has_parent[cross[:, 1]] = True
    families = [([i], kids) for i, kids in enumerate(children)]
    families += [([], [j]) for j in np.flatnonzero(~has_parent)]

    keep_low = np.zeros(len(low), dtype=bool)
    keep_high = np.zeros(len(high), dtype=bool)
    used = 0
    for f in rng.permutation(len(families)):
        lows, highs = families[f]
        size = len(lows) + len(highs)
        if used + size > max_patches:
            break
        keep_low[lows] = True
        keep_high[highs] = True
        used += size
    return [low.subset(keep_low), high.subset(keep_high)]


def write_edge_list(path, graph: MultiResGraph) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EDGE_HEADER)
        for i, j in graph.edges:
            writer.writerow([
                format_mag(graph.mags[i]), int(graph.coords[i, 0]), int(graph.coords[i, 1]),
                format_mag(graph.mags[j]), int(graph.coords[j, 0]), int(graph.coords[j, 1]),
            ])
