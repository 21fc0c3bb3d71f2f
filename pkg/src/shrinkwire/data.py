"""Node-classification datasets: citation-network files, synthetic SBMs, splits.

On-disk layout for a dataset called ``name`` inside a directory::

    name.edges     edge list (``n directed`` header, then ``i j w`` lines)
    name.features  matrix text (``rows cols`` header, then rows)
    name.labels    one integer class id per line
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .graph import WeightedGraph, adjacency, clean_edges, parse_edge_list, write_edge_list
from .linalg import as_matrix, read_matrix, write_matrix

log = logging.getLogger(__name__)


@dataclass
class RawGraphData:
    graph: WeightedGraph
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.n
        if self.features.shape[0] != n or self.labels.shape != (n,):
            raise FormatError(
                f"inconsistent sizes: graph n={n}, features {self.features.shape[0]} rows, "
                f"labels {self.labels.shape[0]}"
            )
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise FormatError(f"labels must lie in [0, {self.class_count})")

    @property
    def n(self) -> int:
        return self.graph.n


@dataclass
class NodeDataset:
    A_hat: np.ndarray
    X: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    class_count: int

    @property
    def n(self) -> int:
        return self.X.shape[0]


def load_citation(dir_path: str | Path, name: str, class_count: int | None = None) -> RawGraphData:
    """Read ``name.edges``, ``name.features`` and ``name.labels`` from ``dir_path``.

    Self-loops and repeated edges are dropped and counted in a warning.
    ``class_count`` defaults to ``max(label) + 1``.
    """
    d = Path(dir_path)
    paths = {ext: d / f"{name}.{ext}" for ext in ("edges", "features", "labels")}
    for p in paths.values():
        if not p.is_file():
            raise FileNotFoundError(f"missing dataset file {p}")
    n, directed, edges = parse_edge_list(paths["edges"].read_text(encoding="utf-8"))
    graph, dropped = clean_edges(n, directed, edges)
    if dropped:
        log.warning("%s: dropped %d duplicate or self-loop edges", name, dropped)
    features = read_matrix(paths["features"])
    tokens = paths["labels"].read_text(encoding="utf-8").split()
    if not tokens:
        raise FormatError(f"{paths['labels']} is empty")
    try:
        labels = np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{paths['labels']}: {exc}") from exc
    if class_count is None:
        class_count = int(labels.max()) + 1
    return RawGraphData(graph, features, labels, class_count)


def save_citation(dir_path: str | Path, name: str, data: RawGraphData) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    write_edge_list(d / f"{name}.edges", data.graph)
    write_matrix(d / f"{name}.features", data.features)
    (d / f"{name}.labels").write_text(
        "".join(f"{int(y)}\n" for y in data.labels), encoding="utf-8"
    )


def propagation_matrix(g: WeightedGraph, renormalized: bool = True) -> np.ndarray:
    """``D~^-1/2 (A + I) D~^-1/2`` by default, or the raw adjacency."""
    A = adjacency(g)
    if not renormalized:
        return A
    A = A + np.eye(g.n)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise InputError("renormalized propagation needs positive degrees")
    s = 1.0 / np.sqrt(deg)
    return s[:, None] * A * s[None, :]


def split(
    data: RawGraphData,
    per_class_train: int = 20,
    val: int = 100,
    test: int = 1000,
    seed: int = 0,
    renormalized: bool = True,
) -> NodeDataset:
    """Seeded train/val/test split.

    A single seeded permutation orders the nodes. Each class contributes its
    first ``per_class_train`` nodes to training; the remaining nodes, still in
    permutation order, fill validation then test.
    """
    if min(per_class_train, val, test) < 0:
        raise InputError("split sizes must be non-negative")
    n, C = data.n, data.class_count
    if per_class_train * C + val + test > n:
        raise InputError(
            f"split needs {per_class_train * C + val + test} nodes, dataset has {n}"
        )
    counts = np.bincount(data.labels, minlength=C)
    if counts.min() < per_class_train:
        raise InputError(
            f"class {int(counts.argmin())} has {int(counts.min())} nodes, "
            f"fewer than per_class_train={per_class_train}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train = np.zeros(n, bool)
    taken = np.zeros(C, int)
    for v in perm:
        c = data.labels[v]
        if taken[c] < per_class_train:
            train[v] = True
            taken[c] += 1
    rest = perm[~train[perm]]
    val_mask = np.zeros(n, bool)
    test_mask = np.zeros(n, bool)
    val_mask[rest[:val]] = True
    test_mask[rest[val : val + test]] = True
    return NodeDataset(
        A_hat=propagation_matrix(data.graph, renormalized),
        X=data.features.copy(),
        labels=data.labels.copy(),
        train_mask=train,
        val_mask=val_mask,
        test_mask=test_mask,
        class_count=C,
    )


def generate_sbm(
    blocks: int = 2,
    nodes_per_block: int = 100,
    p_in: float = 0.1,
    p_out: float = 0.01,
    feature_dim: int = 16,
    feature_gap: float = 2.0,
    seed: int = 0,
) -> RawGraphData:
    """Stochastic block model with Gaussian class features.

    Block k's feature mean is ``feature_gap / sqrt(2)`` along axis k, so any
    two class means sit exactly ``feature_gap`` apart; each node adds
    unit-variance Gaussian noise. Labels are block ids.
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise InputError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if blocks < 1 or nodes_per_block < 1:
        raise InputError("blocks and nodes_per_block must be >= 1")
    if feature_dim < blocks:
        raise InputError(f"feature_dim must be >= blocks ({blocks}), got {feature_dim}")
    if feature_gap < 0:
        raise InputError("feature_gap must be >= 0")
    rng = np.random.default_rng(seed)
    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks), nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < p
    graph = WeightedGraph(n, False, tuple(zip(iu[keep], ju[keep], np.ones(keep.sum()))))
    means = np.zeros((blocks, feature_dim))
    means[np.arange(blocks), np.arange(blocks)] = feature_gap / np.sqrt(2.0)
    features = means[labels] + rng.standard_normal((n, feature_dim))
    return RawGraphData(graph, features, labels, blocks)
