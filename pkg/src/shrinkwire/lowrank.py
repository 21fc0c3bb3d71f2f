"""Latent-rank estimation and pyramidal width planning.

The rank of an activation matrix is read off its singular-value energy
profile; planned widths are forced to shrink front-to-back.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .linalg import as_matrix, nuclear_norm, sv_threshold, top_singular_values


@dataclass(frozen=True)
class WidthPlan:
    widths: tuple[int, ...]
    energy_threshold: float
    source_ranks: tuple[int, ...]

    def __post_init__(self):
        if any(b > a for a, b in zip(self.widths, self.widths[1:])):
            raise InputError(f"widths must be non-increasing, got {self.widths}")
        if any(w < 1 for w in self.widths):
            raise InputError("every width must be >= 1")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(
            {
                "widths": list(d["widths"]),
                "source_ranks": list(d["source_ranks"]),
                "energy_threshold": d["energy_threshold"],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "WidthPlan":
        d = json.loads(text)
        return cls(
            widths=tuple(int(w) for w in d["widths"]),
            energy_threshold=float(d["energy_threshold"]),
            source_ranks=tuple(int(r) for r in d["source_ranks"]),
        )


def estimate_rank(sigma: Sequence[float], energy_threshold: float = 0.99) -> int:
    """Smallest k whose leading singular values hold ``energy_threshold`` of the energy.

    Energy is the sum of squared singular values. A threshold of 1.0 counts
    the singular values above rounding level (``sigma_max * len(sigma) * 4 eps``,
    close to the usual numerical-rank rule); an all-zero spectrum has rank 1
    by convention.
    """
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InputError("sigma must be a non-empty 1-D sequence")
    if not 0.0 < energy_threshold <= 1.0:
        raise InputError(f"energy_threshold must lie in (0, 1], got {energy_threshold}")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise InputError("sigma must be non-negative and descending")
    energy = s**2
    total = energy.sum()
    if total == 0.0:
        return 1
    if energy_threshold == 1.0:
        tiny = s[0] * s.size * 4 * np.finfo(float).eps
        return max(1, int(np.count_nonzero(s > tiny)))
    cum = np.cumsum(energy)
    # relative slack keeps exact ratios like 9/10 >= 0.9 from failing on rounding
    target = energy_threshold * total * (1.0 - 1e-12)
    k = int(np.searchsorted(cum, target, side="left")) + 1
    return min(max(k, 1), s.size)


@dataclass
class CompletionProblem:
    observed: np.ndarray
    mask: np.ndarray
    alpha: float
    step: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-10

    def __post_init__(self):
        self.observed = as_matrix(self.observed, "observed")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.observed.shape:
            raise InputError("mask and observed must share a shape")
        if not self.mask.any():
            raise InputError("mask must observe at least one entry")
        if not self.alpha > 0:
            raise InputError(f"alpha must be > 0, got {self.alpha}")
        # the data term's gradient is 1-Lipschitz; larger steps lose monotonicity
        if not 0 < self.step <= 1:
            raise InputError(f"step must lie in (0, 1], got {self.step}")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")

    def objective(self, X: np.ndarray) -> float:
        r = np.where(self.mask, X - self.observed, 0.0)
        return 0.5 * float(np.sum(r * r)) + self.alpha * nuclear_norm(X)


@dataclass
class CompletionResult:
    X: np.ndarray
    iterations: int
    converged: bool
    objective: list[float] = field(default_factory=list)


def complete_matrix(p: CompletionProblem, track_objective: bool = False) -> CompletionResult:
    """Proximal-gradient (singular value thresholding) solver for
    ``min 0.5 ||mask * (X - observed)||_F^2 + alpha ||X||_*`` started at zero.
    """
    X = np.zeros_like(p.observed)
    history = [p.objective(X)] if track_objective else []
    thresh = p.step * p.alpha
    for it in range(1, p.max_iters + 1):
        grad = np.where(p.mask, X - p.observed, 0.0)
        X_new = sv_threshold(X - p.step * grad, thresh, "soft")
        change = float(np.linalg.norm(X_new - X))
        X = X_new
        if track_objective:
            history.append(p.objective(X))
        if change <= p.tol:
            return CompletionResult(X, it, True, history)
    return CompletionResult(X, p.max_iters, False, history)


def plan_widths(
    activations: Sequence[np.ndarray],
    energy_threshold: float = 0.99,
    min_width: int = 1,
) -> WidthPlan:
    """Pyramidal widths from per-layer activation ranks.

    Each activation's rank comes from :func:`estimate_rank`; the plan is the
    running minimum front-to-back, floored at ``min_width``.
    """
    if len(activations) == 0:
        raise InputError("need at least one activation matrix")
    if min_width < 1:
        raise InputError(f"min_width must be >= 1, got {min_width}")
    ranks = []
    for a in activations:
        a = as_matrix(a, "activation")
        ranks.append(estimate_rank(top_singular_values(a, min(a.shape)), energy_threshold))
    widths = np.maximum(np.minimum.accumulate(ranks), min_width)
    return WidthPlan(
        widths=tuple(int(w) for w in widths),
        energy_threshold=float(energy_threshold),
        source_ranks=tuple(ranks),
    )
