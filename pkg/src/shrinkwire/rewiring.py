"""Cluster detection on weight graphs and algebraic-connectivity rewiring.

Clusters are the connected components of the positive-weight subgraph.
Candidate links are ranked by the first-order gain in algebraic
connectivity, ``w * (v_i - v_j)**2`` with v the Fiedler vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InputError, UnsupportedError
from .graph import (
    WeightedGraph,
    fiedler,
    fiedler_from_laplacian,
    graph_weight_view,
    weight_matrix_to_graph,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterPartition:
    assignment: tuple[int, ...]
    cluster_count: int

    def __post_init__(self):
        ids = set(self.assignment)
        if ids != set(range(self.cluster_count)):
            raise InputError("cluster ids must be contiguous from 0")

    @property
    def n(self) -> int:
        return len(self.assignment)

    def members(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.cluster_count)]
        for v, c in enumerate(self.assignment):
            out[c].append(v)
        return out

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "ClusterPartition":
        """Relabel arbitrary ids to 0..k-1 in order of first appearance."""
        remap: dict[int, int] = {}
        out = tuple(remap.setdefault(int(c), len(remap)) for c in labels)
        return cls(out, len(remap))


@dataclass(frozen=True)
class EdgeCandidate:
    i: int
    j: int
    w: float
    score: float = 0.0

    def __post_init__(self):
        if self.i == self.j:
            raise InputError(f"candidate ({self.i}, {self.j}) is a self-loop")
        if not self.w > 0:
            raise InputError(f"candidate weight must be > 0, got {self.w}")


def detect_clusters(g: WeightedGraph) -> ClusterPartition:
    """Connected components of the subgraph of positive-weight edges."""
    if g.directed:
        raise UnsupportedError("cluster detection expects an undirected graph")
    pos = [(i, j) for i, j, w in g.edges if w > 0]
    rows = np.array([e[0] for e in pos], dtype=int)
    cols = np.array([e[1] for e in pos], dtype=int)
    adj = coo_matrix((np.ones(len(pos)), (rows, cols)), shape=(g.n, g.n))
    _, labels = connected_components(adj, directed=False)
    return ClusterPartition.from_labels(labels)


def _validate_candidates(g: WeightedGraph, candidates: Iterable[EdgeCandidate]) -> list[EdgeCandidate]:
    out = []
    for c in candidates:
        if not (0 <= c.i < g.n and 0 <= c.j < g.n):
            raise InputError(f"candidate ({c.i}, {c.j}) out of range")
        if g.has_edge(c.i, c.j):
            raise InputError(f"candidate ({c.i}, {c.j}) is already an edge")
        out.append(c)
    return out


def _score(candidates: list[EdgeCandidate], v: np.ndarray) -> list[EdgeCandidate]:
    scored = [replace(c, score=float(c.w * (v[c.i] - v[c.j]) ** 2)) for c in candidates]
    scored.sort(key=lambda c: (-c.score, min(c.i, c.j), max(c.i, c.j)))
    return scored


def greedy_scores(g: WeightedGraph, candidates: Sequence[EdgeCandidate]) -> list[EdgeCandidate]:
    """Score candidates by ``w * (v_i - v_j)**2`` and sort descending.

    v is the Fiedler vector of the ``|w|`` Laplacian of g. Ties are broken by
    the (smaller, larger) endpoint pair.
    """
    cands = _validate_candidates(g, candidates)
    if not cands:
        return []
    _, v = fiedler(g, absolute=True)
    return _score(cands, v)


@dataclass
class RewireResult:
    graph: WeightedGraph
    added: list[EdgeCandidate] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.added)


def rewire(g: WeightedGraph, candidates: Sequence[EdgeCandidate], budget: int) -> RewireResult:
    """Greedily add up to ``budget`` candidates, rescoring after each addition."""
    if budget < 1:
        raise InputError(f"budget must be >= 1, got {budget}")
    pool = _validate_candidates(g, candidates)
    added: list[EdgeCandidate] = []
    while pool and len(added) < budget:
        best = greedy_scores(g, pool)[0]
        g = g.with_edges([(best.i, best.j, best.w)])
        added.append(best)
        pool = [c for c in pool if not g.has_edge(c.i, c.j)]
    if len(added) < budget:
        log.info("rewire stopped early: %d of %d edges added", len(added), budget)
    return RewireResult(g, added)


def fiedler_penalty(
    w,
    partition: ClusterPartition,
    delta: float,
    per_cluster: bool = True,
) -> float:
    """``delta`` times the algebraic connectivity of the ``|w|`` graph.

    By default the connectivity is summed over each cluster's induced
    subgraph (singletons contribute 0); ``per_cluster=False`` uses the whole
    graph instead. A non-square or asymmetric ``w`` is read as a bipartite
    row/column graph.
    """
    if delta < 0:
        raise InputError(f"delta must be >= 0, got {delta}")
    A = np.abs(graph_weight_view(w))
    if A.shape[0] != partition.n:
        raise InputError(f"partition covers {partition.n} vertices, graph has {A.shape[0]}")
    if delta == 0:
        return 0.0
    groups = partition.members() if per_cluster else [list(range(A.shape[0]))]
    total = 0.0
    for members in groups:
        if len(members) < 2:
            continue
        sub = A[np.ix_(members, members)]
        L = np.diag(sub.sum(axis=1)) - sub
        total += max(fiedler_from_laplacian(L)[0], 0.0)
    return delta * total


def match_clusters(prev: ClusterPartition, curr: ClusterPartition) -> dict[int, int]:
    """Greedy maximum-overlap matching of prev cluster ids to curr cluster ids.

    Pairs are taken in order of decreasing overlap; ties go to the pair whose
    shared vertex set has the smallest vertex, which keeps the matching
    symmetric under swapping the two partitions.
    """
    if prev.n != curr.n:
        raise InputError(f"partitions differ in size: {prev.n} vs {curr.n}")
    first: dict[tuple[int, int], int] = {}
    count: dict[tuple[int, int], int] = {}
    for v, (a, b) in enumerate(zip(prev.assignment, curr.assignment)):
        first.setdefault((a, b), v)
        count[(a, b)] = count.get((a, b), 0) + 1
    pairs = sorted(count, key=lambda p: (-count[p], first[p]))
    used_a, used_b, out = set(), set(), {}
    for a, b in pairs:
        if a in used_a or b in used_b:
            continue
        used_a.add(a)
        used_b.add(b)
        out[a] = b
    return out


def detect_erroneous(prev: ClusterPartition, curr: ClusterPartition) -> list[int]:
    """Vertices whose cluster changed between snapshots, up to relabelling."""
    mapping = match_clusters(prev, curr)
    return [
        v
        for v, (a, b) in enumerate(zip(prev.assignment, curr.assignment))
        if mapping.get(a) != b
    ]


def data_graph_scores(g: WeightedGraph, top: int = 20, weight: float = 1.0) -> list[EdgeCandidate]:
    """Report-only scoring of every non-edge of a data graph; nothing is modified."""
    _, v = fiedler(g, absolute=True)
    iu, ju = np.triu_indices(g.n, k=1)
    scores = weight * (v[iu] - v[ju]) ** 2
    order = np.lexsort((ju, iu, -scores))
    out = []
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        if g.has_edge(i, j):
            continue
        out.append(EdgeCandidate(i, j, weight, float(scores[k])))
        if len(out) == top:
            break
    return out


# -- training-time hook ------------------------------------------------------


@dataclass
class RewireEvent:
    epoch: int
    layer: int
    vertex: int
    action: str  # "zeroed" | "added"
    i: int
    j: int
    w: float
    score: float

    def csv_row(self) -> str:
        return (
            f"{self.epoch},{self.layer},{self.vertex},{self.action},"
            f"{self.i},{self.j},{self.w:.17g},{self.score:.17g}"
        )


def events_to_csv(events: Sequence[RewireEvent]) -> str:
    rows = ["epoch,layer,vertex,action,i,j,w,score"] + [e.csv_row() for e in events]
    return "\n".join(rows) + "\n"


def link_threshold(W: np.ndarray, keep_fraction: float) -> float:
    """Magnitude cut that keeps roughly the strongest ``keep_fraction`` of entries."""
    if not 0.0 < keep_fraction <= 1.0:
        raise InputError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return 0.0
    return float(np.quantile(np.abs(W), 1.0 - keep_fraction))


class CoupledRewireHook:
    """Training hook that repairs weight links whose cluster membership churns.

    Every ``cadence`` epochs from ``warmup`` on, each selected layer's weight
    matrix is viewed as a bipartite graph (links weaker than the
    ``keep_fraction`` quantile dropped) and partitioned into positive-link
    clusters. Vertices that changed cluster since the previous snapshot are
    flagged. For each flagged vertex, links that contradict its former
    cluster (positive links leaving it, negative links inside it) are zeroed,
    then the best-scoring links back into that cluster are added with weight
    ``delta`` times the cluster's mean absolute link weight.

    ``delta == 0`` leaves the model untouched (flags are still recorded).
    Call from the training thread only.
    """

    def __init__(
        self,
        delta: float,
        warmup: int = 20,
        cadence: int = 10,
        keep_fraction: float = 0.1,
        layers: Sequence[int] | None = None,
        max_added: int = 16,
    ):
        if delta < 0:
            raise InputError(f"delta must be >= 0, got {delta}")
        if cadence < 1 or warmup < 0:
            raise InputError("cadence must be >= 1 and warmup >= 0")
        link_threshold(np.zeros((1, 1)), keep_fraction)
        self.delta = delta
        self.warmup = warmup
        self.cadence = cadence
        self.keep_fraction = keep_fraction
        self.layers = None if layers is None else list(layers)
        self.max_added = max_added
        self.snapshots: dict[int, ClusterPartition] = {}
        self.flagged: dict[tuple[int, int], list[int]] = {}
        self.events: list[RewireEvent] = []

    def due(self, epoch: int) -> bool:
        return epoch >= self.warmup and (epoch - self.warmup) % self.cadence == 0

    def _graph(self, W: np.ndarray) -> WeightedGraph:
        return weight_matrix_to_graph(W, link_threshold(W, self.keep_fraction), "bipartite")

    def __call__(self, model, epoch: int):
        if not self.due(epoch):
            return model
        layers = range(len(model.layers)) if self.layers is None else self.layers
        out = None
        for t in layers:
            W = model.layers[t].W
            g = self._graph(W)
            part = detect_clusters(g)
            prev = self.snapshots.get(t)
            self.snapshots[t] = part
            if prev is None:
                continue
            flagged = detect_erroneous(prev, part)
            self.flagged[(epoch, t)] = flagged
            if not flagged or self.delta == 0:
                continue
            W_new = self._repair(W, g, prev, part, flagged, epoch, t)
            if out is None:
                out = model.copy()
            out.layers[t].W = W_new
            self.snapshots[t] = detect_clusters(self._graph(W_new))
        return model if out is None else out

    def _repair(self, W, g, prev, curr, flagged, epoch, layer) -> np.ndarray:
        R = W.shape[0]
        W = W.copy()
        mapping = match_clusters(prev, curr)
        prev_members = prev.members()
        curr_members = [set(m) for m in curr.members()]
        adj: dict[int, list[tuple[int, float]]] = {}
        for i, j, w in g.edges:
            adj.setdefault(i, []).append((j, w))
            adj.setdefault(j, []).append((i, w))

        def entry(a: int, b: int) -> tuple[int, int]:
            return (a, b - R) if a < R else (b, a - R)

        homes: dict[int, set[int]] = {}
        for v in flagged:
            home = mapping.get(prev.assignment[v])
            mates = {u for u in prev_members[prev.assignment[v]] if u != v}
            if home is not None and mates & curr_members[home]:
                mates &= curr_members[home]
            homes[v] = mates
            for u, w in adj.get(v, []):
                if (w > 0 and u not in mates) or (w < 0 and u in mates):
                    r, c = entry(v, u)
                    W[r, c] = 0.0
                    self.events.append(RewireEvent(epoch, layer, v, "zeroed", r, c, w, 0.0))

        repaired = weight_matrix_to_graph(W, link_threshold(W, self.keep_fraction), "bipartite")
        absw = np.abs([w for _, _, w in g.edges]) if g.edges else np.zeros(1)
        candidates: dict[tuple[int, int], tuple[int, EdgeCandidate]] = {}
        for v, mates in homes.items():
            cluster = mates | {v}
            inside = [abs(w) for i, j, w in g.edges if i in cluster and j in cluster]
            scale = float(np.mean(inside)) if inside else float(absw.mean())
            if scale <= 0:
                continue
            for u in sorted(mates):
                if (u < R) == (v < R) or repaired.has_edge(v, u):
                    continue
                key = (min(u, v), max(u, v))
                candidates.setdefault(key, (v, EdgeCandidate(key[0], key[1], self.delta * scale)))
        if not candidates or repaired.n < 2:
            return W
        budget = min(len(flagged), self.max_added)
        result = rewire(repaired, [c for _, c in candidates.values()], budget)
        for c in result.added:
            v = candidates[(c.i, c.j)][0]
            r, col = entry(c.i, c.j)
            W[r, col] = c.w
            self.events.append(RewireEvent(epoch, layer, v, "added", r, col, c.w, c.score))
        return W


class SignFlipInjector:
    """Hook that flips the sign of a random fraction of one layer's weights once.

    The touched bipartite vertices (rows ``r`` and columns ``R + c``) are kept
    in ``corrupted_vertices`` as ground truth for detection experiments.
    """

    def __init__(self, layer: int, epoch: int, fraction: float = 0.05, seed: int = 0):
        if not 0.0 < fraction <= 1.0:
            raise InputError(f"fraction must lie in (0, 1], got {fraction}")
        self.layer = layer
        self.epoch = epoch
        self.fraction = fraction
        self.seed = seed
        self.flipped: list[tuple[int, int]] = []
        self.corrupted_vertices: set[int] = set()

    def __call__(self, model, epoch: int):
        if epoch != self.epoch:
            return model
        out = model.copy()
        W = out.layers[self.layer].W
        k = max(1, int(round(self.fraction * W.size)))
        idx = np.random.default_rng(self.seed).choice(W.size, k, replace=False)
        rows, cols = np.unravel_index(np.sort(idx), W.shape)
        W[rows, cols] *= -1.0
        self.flipped = list(zip(rows.tolist(), cols.tolist()))
        self.corrupted_vertices = set(rows.tolist()) | {W.shape[0] + c for c in cols.tolist()}
        return out
