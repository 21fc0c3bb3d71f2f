"""Linear multi-agent consensus ``x(t+1) = A x(t)``.

When A is doubly stochastic and its graph connected, every agent converges
to the average of the initial states. Other matrices are simulated as well,
and reports say which regime applies.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import DivergenceError, FormatError, InputError
from .graph import WeightedGraph, laplacian, normalized_laplacian
from .linalg import as_matrix, parse_matrix

Verdict = Literal["converges", "marginal", "diverges"]

DIVERGENCE_NORM = 1e12


@dataclass
class ConsensusSystem:
    A: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.x0 = np.array(self.x0, dtype=float).reshape(-1)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise InputError(f"A must be square, got {self.A.shape}")
        if self.x0.shape != (n,):
            raise InputError(f"x0 must have length {n}, got {self.x0.shape[0]}")
        if not np.all(np.isfinite(self.x0)):
            raise InputError("x0 contains NaN or Inf")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def is_doubly_stochastic(self, tol: float = 1e-10) -> bool:
        one = np.ones(self.n)
        return (
            bool(np.all(self.A >= -tol))
            and np.allclose(self.A @ one, one, atol=tol, rtol=0)
            and np.allclose(one @ self.A, one, atol=tol, rtol=0)
        )

    @property
    def regime(self) -> str:
        return "average-consensus" if self.is_doubly_stochastic() else "general"


def step(sys: ConsensusSystem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise InputError(f"state must have length {sys.n}")
    return sys.A @ x


def consensus_matrix(g: WeightedGraph, eps: float | None = None) -> np.ndarray:
    """``I - eps L`` for an undirected graph; eps defaults to ``1 / (1 + d_max)``.

    With nonnegative weights and ``eps <= 1 / (1 + d_max)`` the result is
    symmetric, doubly stochastic, and has no eigenvalue at -1.
    """
    L = laplacian(g)
    if eps is None:
        eps = 1.0 / (1.0 + float(np.max(np.diag(L), initial=0.0)))
    return np.eye(g.n) - eps * L


def normalized_consensus_matrix(g: WeightedGraph) -> np.ndarray:
    """``I - L_norm``; mean-preserving only for regular graphs."""
    return np.eye(g.n) - normalized_laplacian(g)


def spectral_convergence_check(A, tol: float | None = None) -> Verdict:
    """Classify ``x(t+1) = A x(t)`` by the eigenvalue moduli of A.

    Converges when every modulus is below 1, or when the only unit-modulus
    eigenvalue is a simple 1 whose eigenvector is the all-ones vector.
    Diverges when some modulus exceeds ``1 + tol``; marginal otherwise.
    Symmetric A uses a symmetric eigensolver (tol 1e-9); general A a dense
    nonsymmetric one (tol 1e-6). A spectral-norm bound below 1 short-cuts to
    "converges".
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise InputError(f"A must be square, got {A.shape}")
    symmetric = np.allclose(A, A.T, atol=1e-12, rtol=0)
    if tol is None:
        tol = 1e-9 if symmetric else 1e-6
    if np.linalg.norm(A, 2) < 1.0 - tol:
        return "converges"
    mods = np.abs(np.linalg.eigvalsh(A) if symmetric else np.linalg.eigvals(A))
    if np.any(mods > 1.0 + tol):
        return "diverges"
    on_circle = mods >= 1.0 - tol
    if not on_circle.any():
        return "converges"
    one = np.ones(n)
    if on_circle.sum() == 1 and np.allclose(A @ one, one, atol=tol, rtol=0):
        return "converges"
    return "marginal"


@dataclass
class ConsensusRun:
    x: np.ndarray
    steps: int
    reached: bool
    regime: str
    trajectory: list[np.ndarray]


def run_to_consensus(
    sys: ConsensusSystem,
    tol: float = 1e-6,
    max_steps: int = 10_000,
    record: bool = True,
) -> ConsensusRun:
    """Iterate until agreement, stagnation, or ``max_steps``.

    Doubly stochastic systems stop once every agent is within ``tol`` of the
    initial mean. Any system stops when all agents agree within ``tol`` or
    when an update moves no agent by more than ``tol / 10``. ``reached``
    reports whether the agents agree at the end.
    """
    if not tol > 0:
        raise InputError(f"tol must be > 0, got {tol}")
    x = sys.x0.copy()
    target = x.mean()
    average = sys.is_doubly_stochastic()
    traj = [x.copy()] if record else []

    def agreed(v: np.ndarray) -> bool:
        if average:
            return bool(np.max(np.abs(v - target)) <= tol)
        return bool(np.ptp(v) <= tol)

    steps = 0
    while steps < max_steps and not agreed(x):
        x_new = sys.A @ x
        steps += 1
        if record:
            traj.append(x_new.copy())
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > DIVERGENCE_NORM:
            raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g} at step {steps}")
        moved = float(np.max(np.abs(x_new - x)))
        x = x_new
        if moved <= tol / 10:
            break
    return ConsensusRun(x, steps, agreed(x), sys.regime, traj)


def trajectory_to_csv(traj) -> str:
    n = len(traj[0]) if traj else 0
    rows = ["step," + ",".join(f"x_{i}" for i in range(n))]
    rows += [f"{t}," + ",".join(f"{v:.17g}" for v in x) for t, x in enumerate(traj)]
    return "\n".join(rows) + "\n"


def read_system(path: str | Path) -> ConsensusSystem:
    """Matrix text for A followed by one line holding x0."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if len(lines) < 2:
        raise FormatError(f"{path}: expected a matrix and an x0 line")
    try:
        rows = int(lines[0].split()[0])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: bad matrix header") from exc
    A = parse_matrix("\n".join(lines[: rows + 1]))
    if len(lines) != rows + 2:
        raise FormatError(f"{path}: expected exactly one x0 line after the matrix")
    try:
        x0 = [float(t) for t in lines[rows + 1].split()]
    except ValueError as exc:
        raise FormatError(f"{path}: bad x0 line") from exc
    try:
        return ConsensusSystem(A, x0)
    except InputError as exc:
        raise FormatError(f"{path}: {exc}") from exc
