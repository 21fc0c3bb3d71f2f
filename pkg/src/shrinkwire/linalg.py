"""Dense linear-algebra kernels: SVD, symmetric eigendecomposition, thresholding.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Every public
function validates its input with :func:`as_matrix` and returns fresh arrays.
Singular and eigen vectors are sign-normalized so that the entry of largest
magnitude is positive, which makes results reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import FormatError, InputError, PreconditionError

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray  # m x r
    sigma: np.ndarray  # r, descending
    V: np.ndarray  # n x r

    @property
    def rank_bound(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True)
class EigResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # column i pairs with values[i]


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise :class:`InputError`."""
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains NaN or Inf")
    return a


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Per-column sign flips making the largest-magnitude entry positive."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(m) -> SvdResult:
    """Thin SVD ``m = U diag(sigma) V^T`` with r = min(rows, cols)."""
    a = as_matrix(m)
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise InputError(f"svd needs at least one row and column, got {a.shape}")
    U, s, Vt = np.linalg.svd(a, full_matrices=False)
    signs = _fix_signs(U)
    return SvdResult(U=U * signs, sigma=s, V=Vt.T * signs)


def sym_eig(m) -> EigResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise PreconditionError(f"sym_eig needs a square matrix, got {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise PreconditionError("sym_eig needs a symmetric matrix")
    values, vectors = np.linalg.eigh(0.5 * (a + a.T))
    return EigResult(values=values, vectors=vectors * _fix_signs(vectors))


def truncate_rank(s: SvdResult, k: int) -> np.ndarray:
    """Best rank-k approximation from an existing SVD."""
    if not 1 <= k <= s.rank_bound:
        raise InputError(f"k must lie in [1, {s.rank_bound}], got {k}")
    return (s.U[:, :k] * s.sigma[:k]) @ s.V[:, :k].T


def sv_threshold(m, alpha: float, mode: Literal["hard", "soft"] = "soft") -> np.ndarray:
    """Apply a hard or soft threshold to the singular values of ``m``.

    Soft mode is the proximal operator of ``alpha * nuclear_norm``.
    """
    if alpha < 0 or not np.isfinite(alpha):
        raise InputError(f"alpha must be a finite value >= 0, got {alpha}")
    s = svd(m)
    if mode == "soft":
        shrunk = np.maximum(s.sigma - alpha, 0.0)
    elif mode == "hard":
        shrunk = np.where(s.sigma < alpha, 0.0, s.sigma)
    else:
        raise InputError(f"unknown threshold mode {mode!r}")
    return (s.U * shrunk) @ s.V.T


def top_singular_values(m, k: int) -> np.ndarray:
    """The k largest singular values, descending."""
    a = as_matrix(m)
    r = min(a.shape)
    if not 0 <= k <= r:
        raise InputError(f"k must lie in [0, {r}], got {k}")
    if k == 0:
        return np.empty(0)
    return np.linalg.svd(a, compute_uv=False)[:k]


def nuclear_norm(m) -> float:
    return float(np.sum(np.linalg.svd(as_matrix(m), compute_uv=False)))


# -- matrix text format ------------------------------------------------------
# first line "rows cols", then one line per row of space-separated decimals.


def format_matrix(m) -> str:
    a = as_matrix(m)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in a)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("matrix text is empty")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise FormatError(f"bad matrix header {lines[0]!r}") from exc
    body = lines[1:]
    # tolerate trailing blank lines, but zero-column matrices have blank rows
    if cols > 0:
        body = [ln for ln in body if ln.strip()]
    else:
        body = (body + [""] * rows)[:rows]
    if len(body) != rows:
        raise FormatError(f"expected {rows} rows, found {len(body)}")
    out = np.zeros((rows, cols))
    for i, ln in enumerate(body):
        toks = ln.split()
        if len(toks) != cols:
            raise FormatError(f"row {i}: expected {cols} values, found {len(toks)}")
        try:
            out[i] = [float(t) for t in toks]
        except ValueError as exc:
            raise FormatError(f"row {i}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise FormatError("matrix contains NaN or Inf")
    return out


def read_matrix(path: str | Path) -> np.ndarray:
    return parse_matrix(Path(path).read_text(encoding="utf-8"))


def write_matrix(path: str | Path, m) -> None:
    Path(path).write_text(format_matrix(m), encoding="utf-8")
