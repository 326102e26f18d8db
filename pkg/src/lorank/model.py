"""Core SDP data types and the sparse constraint map evaluated on low-rank factors.

The problem held here is

    minimize    <C, X>
    subject to  <A_i, X> = b_i   (i = 1..m),   X >= 0 (PSD),

with ``X`` never formed explicitly: every operation works on dense factors
``U, V`` of shape ``(n, r)`` so that ``X = U V^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionMismatchError",
    "SparseSymMatrix",
    "SdpProblem",
    "apply_A",
    "apply_A_adjoint_times",
    "objective_value",
    "recombine",
]


class DimensionMismatchError(ValueError):
    """Raised when factor/vector/matrix shapes disagree."""


def _check_factor(W, n, name):
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-D array, got ndim={W.ndim}")
    if W.shape[0] != n:
        raise DimensionMismatchError(
            f"{name} has {W.shape[0]} rows, expected {n}"
        )
    return W


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric matrix in upper-triangle coordinate form.

    A stored entry ``(i, j, v)`` with ``i < j`` represents both ``(i, j)``
    and ``(j, i)``; diagonal entries are stored once.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        vals = np.ascontiguousarray(self.vals, dtype=np.float64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "vals", vals)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, vals must be 1-D arrays of equal length")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if rows.size:
            if rows.min() < 0 or cols.max() >= self.dim:
                raise ValueError("entry index out of range")
            if np.any(rows > cols):
                raise ValueError("entries must satisfy i <= j (upper triangle)")
            if not np.all(np.isfinite(vals)):
                raise ValueError("entry values must be finite")
            keys = rows * self.dim + cols
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate (i, j) entry")
        for arr in (rows, cols, vals):
            arr.setflags(write=False)

    @classmethod
    def from_entries(cls, dim: int, entries: Iterable[tuple[int, int, float]]) -> "SparseSymMatrix":
        ent = list(entries)
        if ent:
            rows, cols, vals = (np.asarray(x) for x in zip(*ent))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=np.float64)
        return cls(dim, rows, cols, vals)

    @classmethod
    def identity(cls, dim: int) -> "SparseSymMatrix":
        idx = np.arange(dim, dtype=np.int64)
        return cls(dim, idx, idx.copy(), np.ones(dim))

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def frobenius_norm_sq(self) -> float:
        """||A||_F^2 with off-diagonal stored entries counted twice."""
        diag = self.rows == self.cols
        v2 = self.vals * self.vals
        return float(v2[diag].sum() + 2.0 * v2[~diag].sum())

    def vec_one_norm(self) -> float:
        """1-norm of the full flattened matrix (off-diagonals counted twice)."""
        diag = self.rows == self.cols
        av = np.abs(self.vals)
        return float(av[diag].sum() + 2.0 * av[~diag].sum())

    def expanded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full symmetric COO arrays (off-diagonal entries mirrored)."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.vals, self.vals[off]])
        return r, c, v

    def to_csr(self) -> sp.csr_matrix:
        r, c, v = self.expanded()
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[self.rows, self.cols] = self.vals
        out[self.cols, self.rows] = self.vals
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseSymMatrix):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )


class _ConstraintKernel:
    """Precomputed accumulation arrays for the constraint map and its adjoint.

    Stores the symmetric expansion of every constraint matrix back to back
    (grouped by constraint) plus a deduplicated CSR pattern for sum_i y_i A_i.
    All reductions go through ``np.bincount``; the accumulation order is fixed,
    so results are bitwise reproducible run to run.
    """

    __slots__ = (
        "n", "m", "ent_rows", "ent_cols", "ent_vals", "owner",
        "agg_pos", "csr_indices", "csr_indptr", "csr_nnz",
    )

    def __init__(self, n: int, constraints: Sequence[SparseSymMatrix]):
        self.n = n
        self.m = len(constraints)
        rows, cols, vals, owner = [], [], [], []
        for idx, A in enumerate(constraints):
            r, c, v = A.expanded()
            rows.append(r)
            cols.append(c)
            vals.append(v)
            owner.append(np.full(r.size, idx, dtype=np.int64))
        if rows:
            self.ent_rows = np.concatenate(rows)
            self.ent_cols = np.concatenate(cols)
            self.ent_vals = np.concatenate(vals)
            self.owner = np.concatenate(owner)
        else:
            self.ent_rows = np.zeros(0, dtype=np.int64)
            self.ent_cols = np.zeros(0, dtype=np.int64)
            self.ent_vals = np.zeros(0)
            self.owner = np.zeros(0, dtype=np.int64)
        keys = self.ent_rows * n + self.ent_cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self.agg_pos = inv.astype(np.int64)
        self.csr_nnz = int(uniq.size)
        csr_rows = uniq // n
        self.csr_indices = (uniq % n).astype(np.int32)
        counts = np.bincount(csr_rows, minlength=n)
        self.csr_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def apply(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Vector of <A_i, U V^T> without forming U V^T."""
        if self.ent_rows.size == 0:
            return np.zeros(self.m)
        z = np.einsum("ek,ek->e", U[self.ent_rows], V[self.ent_cols])
        return np.bincount(self.owner, weights=self.ent_vals * z, minlength=self.m)

    def adjoint_csr(self, y: np.ndarray) -> sp.csr_matrix:
        """sum_i y_i A_i as a CSR matrix over the precomputed pattern."""
        w = self.ent_vals * y[self.owner]
        data = np.bincount(self.agg_pos, weights=w, minlength=self.csr_nnz)
        return sp.csr_matrix(
            (data, self.csr_indices, self.csr_indptr), shape=(self.n, self.n)
        )

    def adjoint_times(self, y: np.ndarray, W: np.ndarray) -> np.ndarray:
        # column-by-column bincount beats building a fresh CSR matrix per
        # call, and its accumulation order is fixed
        if self.ent_rows.size == 0:
            return np.zeros_like(W)
        w = self.ent_vals * y[self.owner]
        gathered = w[:, None] * W[self.ent_cols]
        out = np.empty_like(W)
        for k in range(W.shape[1]):
            out[:, k] = np.bincount(self.ent_rows, weights=gathered[:, k],
                                    minlength=self.n)
        return out


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """Immutable SDP instance: objective C, constraints {A_i}, right-hand side b.

    ``class_tag`` is only used to pick heuristic defaults; ``maximize`` records
    whether the reported objective should be the negated minimum (the stored
    objective is always the one the solver minimizes). ``blocks`` keeps the
    original SDPA block sizes as metadata (negative size = diagonal block).
    """

    n: int
    m: int
    objective: SparseSymMatrix
    constraints: tuple[SparseSymMatrix, ...]
    rhs: np.ndarray
    class_tag: str = "generic"
    maximize: bool = False
    name: str = ""
    blocks: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        rhs = np.ascontiguousarray(self.rhs, dtype=np.float64)
        rhs.setflags(write=False)
        object.__setattr__(self, "rhs", rhs)
        if not self.blocks:
            object.__setattr__(self, "blocks", (self.n,))
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if self.objective.dim != self.n:
            raise DimensionMismatchError("objective dim != n")
        if len(self.constraints) != self.m or rhs.shape != (self.m,):
            raise DimensionMismatchError("constraint count, rhs length and m must agree")
        for k, A in enumerate(self.constraints):
            if A.dim != self.n:
                raise DimensionMismatchError(f"constraint {k} has dim {A.dim} != n = {self.n}")
        if self.class_tag not in ("maxcut", "matrix_completion", "generic"):
            raise ValueError(f"unknown class_tag {self.class_tag!r}")
        if sum(abs(b) for b in self.blocks) != self.n:
            raise ValueError("block sizes must sum to n")

    @cached_property
    def _kernel(self) -> _ConstraintKernel:
        return _ConstraintKernel(self.n, self.constraints)

    @cached_property
    def objective_csr(self) -> sp.csr_matrix:
        return self.objective.to_csr()

    @cached_property
    def s_A(self) -> float:
        """sum_i ||A_i||_F^2 (used to bound the operator norm of the map)."""
        return float(sum(A.frobenius_norm_sq() for A in self.constraints))

    @cached_property
    def rhs_inf_norm(self) -> float:
        return float(np.abs(self.rhs).max())

    def __eq__(self, other):
        if not isinstance(other, SdpProblem):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and self.objective == other.objective
            and self.constraints == other.constraints
            and np.array_equal(self.rhs, other.rhs)
            and self.class_tag == other.class_tag
            and self.maximize == other.maximize
            and self.name == other.name
            and self.blocks == other.blocks
        )


def _check_pair(problem, U, V):
    U = _check_factor(U, problem.n, "U")
    V = _check_factor(V, problem.n, "V")
    if U.shape[1] != V.shape[1]:
        raise DimensionMismatchError(
            f"U has {U.shape[1]} columns, V has {V.shape[1]}"
        )
    return U, V


def apply_A(problem: SdpProblem, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Evaluate the constraint map on U V^T: component i is <A_i, U V^T>."""
    U, V = _check_pair(problem, U, V)
    return problem._kernel.apply(U, V)


def apply_A_adjoint_times(problem: SdpProblem, y: np.ndarray, W: np.ndarray) -> np.ndarray:
    """(sum_i y_i A_i) W as an (n, r) factor, accumulated sparsely."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (problem.m,):
        raise DimensionMismatchError(f"y has shape {y.shape}, expected ({problem.m},)")
    W = _check_factor(W, problem.n, "W")
    return problem._kernel.adjoint_times(y, W)


def objective_value(problem: SdpProblem, U: np.ndarray, V: np.ndarray) -> float:
    """<C, U V^T> for the stored (minimization) objective."""
    U, V = _check_pair(problem, U, V)
    return float(np.sum(U * (problem.objective_csr @ V)))


def recombine(U: np.ndarray, V: np.ndarray, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse a split solution back to a single factor: ((U + V)/2, 2*lambda)."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape != V.shape:
        raise DimensionMismatchError(f"shapes {U.shape} and {V.shape} differ")
    return (U + V) / 2.0, 2.0 * np.asarray(lam, dtype=np.float64)
