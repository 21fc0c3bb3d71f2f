"""Weighted graphs and their spectral forms.

Adjacency convention: ``A[i, j]`` holds the weight of the edge *from* j *to* i,
so a directed edge ``(0, 1, w)`` lands in ``A[1, 0]``. Undirected graphs are
stored with ``i < j`` and produce a symmetric adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .errors import DegenerateDegreeError, FormatError, InputError, UnsupportedError
from .linalg import as_matrix, sym_eig

Edge = tuple[int, int, float]


@dataclass(frozen=True)
class WeightedGraph:
    n: int
    directed: bool = False
    edges: tuple[Edge, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 0:
            raise InputError(f"vertex count must be >= 0, got {self.n}")
        seen = set()
        norm = []
        for e in self.edges:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InputError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise InputError(f"self-loop at vertex {i}")
            if not np.isfinite(w):
                raise InputError(f"edge ({i}, {j}) has non-finite weight")
            if not self.directed and i > j:
                i, j = j, i
            if (i, j) in seen:
                raise InputError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            norm.append((i, j, w))
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.edges:
            return np.empty(0, int), np.empty(0, int), np.empty(0)
        src, dst, w = zip(*self.edges)
        return np.array(src, int), np.array(dst, int), np.array(w, float)

    def has_edge(self, i: int, j: int) -> bool:
        if not self.directed and i > j:
            i, j = j, i
        return (i, j) in self._edge_set

    @cached_property
    def _edge_set(self) -> frozenset:
        return frozenset((i, j) for i, j, _ in self.edges)

    def with_edges(self, extra: Iterable[Edge]) -> "WeightedGraph":
        return WeightedGraph(self.n, self.directed, self.edges + tuple(extra))

    def induced(self, vertices) -> "WeightedGraph":
        """Subgraph on ``vertices`` (relabelled 0..k-1 in the given order)."""
        index = {int(v): k for k, v in enumerate(vertices)}
        sub = [
            (index[i], index[j], w) for i, j, w in self.edges if i in index and j in index
        ]
        return WeightedGraph(len(index), self.directed, tuple(sub))


def adjacency(g: WeightedGraph, absolute: bool = False) -> np.ndarray:
    src, dst, w = g._arrays
    if absolute:
        w = np.abs(w)
    A = np.zeros((g.n, g.n))
    A[dst, src] = w
    if not g.directed:
        A[src, dst] = w
    return A


def laplacian(g: WeightedGraph, absolute: bool = False) -> np.ndarray:
    """Unnormalized ``L = D - A`` with D the row sums of A."""
    A = adjacency(g, absolute)
    return np.diag(A.sum(axis=1)) - A


def normalized_laplacian(g: WeightedGraph, absolute: bool = False) -> np.ndarray:
    A = adjacency(g, absolute)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        bad = np.flatnonzero(deg <= 0).tolist()
        raise DegenerateDegreeError(f"vertices with non-positive degree: {bad[:10]}")
    s = 1.0 / np.sqrt(deg)
    return s[:, None] * (np.diag(deg) - A) * s[None, :]


@dataclass(frozen=True)
class IncidenceMatrix:
    H: np.ndarray  # n x m
    edge_order: tuple[int, ...]
    weights: np.ndarray  # length m

    def laplacian(self) -> np.ndarray:
        return (self.H * self.weights) @ self.H.T


def incidence(g: WeightedGraph) -> IncidenceMatrix:
    """Node-edge incidence: column l has +1 at i and -1 at j for edge (i, j), i < j."""
    if g.directed:
        raise UnsupportedError("incidence matrix is only defined here for undirected graphs")
    src, dst, w = g._arrays
    H = np.zeros((g.n, g.m))
    cols = np.arange(g.m)
    H[src, cols] = 1.0
    H[dst, cols] = -1.0
    return IncidenceMatrix(H=H, edge_order=tuple(range(g.m)), weights=w.copy())


def complement_basis(n: int) -> np.ndarray:
    """Orthonormal n x (n-1) basis of the complement of the all-ones vector.

    Uses the Helmert construction: column k (1-based) is
    ``(1, ..., 1, -k, 0, ..., 0) / sqrt(k (k + 1))`` with k leading ones.
    """
    if n < 2:
        raise InputError(f"complement basis needs n >= 2, got {n}")
    U = np.zeros((n, n - 1))
    for k in range(1, n):
        U[:k, k - 1] = 1.0
        U[k, k - 1] = -float(k)
        U[:, k - 1] /= np.sqrt(k * (k + 1.0))
    return U


def fiedler_from_laplacian(L: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum of the Rayleigh quotient of symmetric L over vectors orthogonal to 1.

    L must satisfy ``L @ 1 = 0``. The all-ones direction is shifted above the
    spectrum, so the smallest eigenpair of the shifted matrix is the
    constrained minimizer even when the null space of L is degenerate.
    """
    n = L.shape[0]
    if n < 2:
        raise InputError(f"Fiedler pair needs n >= 2, got {n}")
    shift = 2.0 * np.max(np.abs(L).sum(axis=1)) + 1.0
    res = sym_eig(L + (shift / n) * np.ones((n, n)))
    v = res.vectors[:, 0]
    v = v - v.mean()
    v /= np.linalg.norm(v)
    return float(res.values[0]), v


def fiedler(g: WeightedGraph, absolute: bool = True) -> tuple[float, np.ndarray]:
    """Algebraic connectivity and Fiedler vector of an undirected graph.

    With ``absolute=True`` the Laplacian is built from ``|w|`` so it stays
    positive semidefinite when negative weights are present.
    """
    if g.directed:
        raise UnsupportedError("fiedler expects an undirected graph")
    if g.n < 2:
        raise InputError(f"fiedler needs n >= 2, got {g.n}")
    return fiedler_from_laplacian(laplacian(g, absolute))


def directed_algebraic_connectivity(g: WeightedGraph) -> float:
    """``lambda_min(U~^T (L + L^T) U~ / 2)`` over the complement of 1."""
    if g.n < 2:
        raise InputError(f"algebraic connectivity needs n >= 2, got {g.n}")
    L = laplacian(g)
    U = complement_basis(g.n)
    M = 0.5 * U.T @ (L + L.T) @ U
    return float(sym_eig(0.5 * (M + M.T)).values[0])


def _is_adjacency_like(a: np.ndarray, tol: float) -> bool:
    return (
        a.shape[0] == a.shape[1]
        and np.max(np.abs(a - a.T), initial=0.0) <= tol
        and np.max(np.abs(np.diag(a)), initial=0.0) == 0.0
    )


def weight_matrix_to_graph(
    w,
    threshold: float = 0.0,
    mode: Literal["auto", "bipartite", "square"] = "auto",
    tol: float = 1e-10,
) -> WeightedGraph:
    """Undirected graph view of a weight matrix.

    Bipartite mode puts rows on vertices ``0..r-1`` and columns on
    ``r..r+c-1``. Square mode reads ``w`` as a symmetric adjacency and uses the
    strict upper triangle. ``auto`` picks square mode only for symmetric
    matrices with a zero diagonal. Entries with ``|w_ij| <= threshold`` are
    dropped.
    """
    a = as_matrix(w, "weight matrix")
    if threshold < 0:
        raise InputError(f"threshold must be >= 0, got {threshold}")
    if mode == "auto":
        mode = "square" if _is_adjacency_like(a, tol) else "bipartite"
    if mode == "square":
        if a.shape[0] != a.shape[1]:
            raise InputError("square mode needs a square matrix")
        iu, ju = np.triu_indices(a.shape[0], k=1)
        vals = 0.5 * (a[iu, ju] + a[ju, iu])
        keep = np.abs(vals) > threshold
        return WeightedGraph(a.shape[0], False, tuple(zip(iu[keep], ju[keep], vals[keep])))
    r, c = a.shape
    ii, jj = np.nonzero(np.abs(a) > threshold)
    return WeightedGraph(r + c, False, tuple(zip(ii, jj + r, a[ii, jj])))


def graph_weight_view(w, mode: Literal["auto", "bipartite", "square"] = "auto") -> np.ndarray:
    """Symmetric adjacency matching :func:`weight_matrix_to_graph` at threshold 0."""
    a = as_matrix(w, "weight matrix")
    if mode == "auto":
        mode = "square" if _is_adjacency_like(a, 1e-10) else "bipartite"
    if mode == "square":
        out = 0.5 * (a + a.T)
        np.fill_diagonal(out, 0.0)
        return out
    r, c = a.shape
    out = np.zeros((r + c, r + c))
    out[:r, r:] = a
    out[r:, :r] = a.T
    return out


# -- edge-list text format ---------------------------------------------------
# first line "n directed(0|1)", then one "i j w" line per edge.


def format_edge_list(g: WeightedGraph) -> str:
    lines = [f"{g.n} {int(g.directed)}"]
    lines.extend(f"{i} {j} {w:.17g}" for i, j, w in g.edges)
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> tuple[int, bool, list[Edge]]:
    """Parse without validating edges; returns ``(n, directed, raw_edges)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("edge list is empty")
    head = lines[0].split()
    if len(head) != 2 or head[1] not in ("0", "1"):
        raise FormatError(f"bad edge-list header {lines[0]!r}")
    try:
        n = int(head[0])
    except ValueError as exc:
        raise FormatError(f"bad vertex count {head[0]!r}") from exc
    edges = []
    for k, ln in enumerate(lines[1:], start=2):
        toks = ln.split()
        if len(toks) != 3:
            raise FormatError(f"line {k}: expected 'i j w', got {ln!r}")
        try:
            i, j, w = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError as exc:
            raise FormatError(f"line {k}: {exc}") from exc
        if not (0 <= i < n and 0 <= j < n):
            raise FormatError(f"line {k}: vertex out of range for n={n}")
        if not np.isfinite(w):
            raise FormatError(f"line {k}: non-finite weight")
        edges.append((i, j, w))
    return n, head[1] == "1", edges


def clean_edges(n: int, directed: bool, edges: Iterable[Edge]) -> tuple[WeightedGraph, int]:
    """Build a graph keeping the first copy of each edge; returns (graph, dropped)."""
    kept, seen, dropped = [], set(), 0
    for i, j, w in edges:
        key = (i, j) if directed or i < j else (j, i)
        if i == j or key in seen:
            dropped += 1
            continue
        seen.add(key)
        kept.append((i, j, w))
    return WeightedGraph(n, directed, tuple(kept)), dropped


def read_edge_list(path: str | Path) -> WeightedGraph:
    n, directed, edges = parse_edge_list(Path(path).read_text(encoding="utf-8"))
    try:
        return WeightedGraph(n, directed, tuple(edges))
    except InputError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_edge_list(path: str | Path, g: WeightedGraph) -> None:
    Path(path).write_text(format_edge_list(g), encoding="utf-8")
