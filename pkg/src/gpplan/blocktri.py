"""Symmetric block-tridiagonal matrices and their banded Cholesky solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = ["BlockTridiagonalMatrix", "solve_tridiag", "cholesky_tridiag", "solve_factored"]


@dataclass
class BlockTridiagonalMatrix:
    """Symmetric matrix stored as diagonal and sub-diagonal blocks only.

    ``diag[i]`` is block (i, i) and ``lower[i]`` is block (i + 1, i); block
    (i, i + 1) is ``lower[i].T``. Blocks with ``|i - j| > 1`` have no storage
    at all, so sparsity is structural rather than numerical.
    """

    diag: np.ndarray  # (nb, n, n)
    lower: np.ndarray  # (nb - 1, n, n)

    def __post_init__(self) -> None:
        self.diag = np.asarray(self.diag, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        if self.diag.ndim != 3 or self.diag.shape[1] != self.diag.shape[2]:
            raise InvalidArgumentError("diag must have shape (nb, n, n)")
        nb, n, _ = self.diag.shape
        if self.lower.shape != (max(nb - 1, 0), n, n):
            raise InvalidArgumentError(
                f"lower must have shape {(nb - 1, n, n)}, got {self.lower.shape}"
            )

    @classmethod
    def zeros(cls, num_blocks: int, block_size: int) -> "BlockTridiagonalMatrix":
        return cls(
            np.zeros((num_blocks, block_size, block_size)),
            np.zeros((num_blocks - 1, block_size, block_size)),
        )

    @property
    def num_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        m = self.num_blocks * self.block_size
        return (m, m)

    def allocated_blocks(self) -> set[tuple[int, int]]:
        """Index pairs (i, j) of every block that has backing storage."""
        nb = self.num_blocks
        pairs = {(i, i) for i in range(nb)}
        for i in range(nb - 1):
            pairs.add((i + 1, i))
            pairs.add((i, i + 1))
        return pairs

    def block(self, i: int, j: int) -> np.ndarray:
        if i == j:
            return self.diag[i]
        if i == j + 1:
            return self.lower[j]
        if j == i + 1:
            return self.lower[i].T
        return np.zeros((self.block_size, self.block_size))

    def copy(self) -> "BlockTridiagonalMatrix":
        return BlockTridiagonalMatrix(self.diag.copy(), self.lower.copy())

    def __add__(self, other: "BlockTridiagonalMatrix") -> "BlockTridiagonalMatrix":
        return BlockTridiagonalMatrix(self.diag + other.diag, self.lower + other.lower)

    def to_dense(self) -> np.ndarray:
        nb, n = self.num_blocks, self.block_size
        out = np.zeros((nb * n, nb * n))
        for i in range(nb):
            out[i * n:(i + 1) * n, i * n:(i + 1) * n] = self.diag[i]
        for i in range(nb - 1):
            out[(i + 1) * n:(i + 2) * n, i * n:(i + 1) * n] = self.lower[i]
            out[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = self.lower[i].T
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Multiply by ``x`` given as a flat vector or a (nb, n) block array."""
        xb = np.asarray(x, dtype=float).reshape(self.num_blocks, self.block_size)
        y = np.einsum("kij,kj->ki", self.diag, xb)
        y[1:] += np.einsum("kij,kj->ki", self.lower, xb[:-1])
        y[:-1] += np.einsum("kji,kj->ki", self.lower, xb[1:])
        return y.reshape(np.shape(x))

    def add_to_diagonal(self, scale: float) -> "BlockTridiagonalMatrix":
        """Return a copy with every scalar diagonal entry multiplied by (1 + scale)."""
        out = self.copy()
        idx = np.arange(self.block_size)
        out.diag[:, idx, idx] *= 1.0 + scale
        return out


def cholesky_tridiag(A: BlockTridiagonalMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Block Cholesky factor L (block lower-bidiagonal) with A = L L^T.

    Returns ``(Ld, Ls)`` where ``Ld[i]`` is the lower-triangular diagonal block
    and ``Ls[i]`` is the sub-diagonal block (i + 1, i) of L.
    """
    nb, n = A.num_blocks, A.block_size
    Ld = np.empty((nb, n, n))
    Ls = np.empty((max(nb - 1, 0), n, n))
    pivot = A.diag[0]
    for i in range(nb):
        try:
            Ld[i] = np.linalg.cholesky(pivot)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError(f"non-positive-definite pivot at block {i}") from exc
        if i + 1 < nb:
            # Ls = A_{i+1,i} Ld^{-T}
            Ls[i] = solve_triangular(Ld[i], A.lower[i].T, lower=True).T
            pivot = A.diag[i + 1] - Ls[i] @ Ls[i].T
    return Ld, Ls


def solve_factored(factor: tuple[np.ndarray, np.ndarray], b: np.ndarray) -> np.ndarray:
    """Solve with a factor from :func:`cholesky_tridiag` (forward then back substitution)."""
    Ld, Ls = factor
    nb, n = Ld.shape[0], Ld.shape[1]
    bb = np.asarray(b, dtype=float).reshape(nb, n)
    y = np.empty((nb, n))
    y[0] = solve_triangular(Ld[0], bb[0], lower=True)
    for i in range(1, nb):
        y[i] = solve_triangular(Ld[i], bb[i] - Ls[i - 1] @ y[i - 1], lower=True)
    x = np.empty((nb, n))
    x[-1] = solve_triangular(Ld[-1], y[-1], lower=True, trans="T")
    for i in range(nb - 2, -1, -1):
        x[i] = solve_triangular(Ld[i], y[i] - Ls[i].T @ x[i + 1], lower=True, trans="T")
    return x.reshape(np.shape(b))


def solve_tridiag(A: BlockTridiagonalMatrix, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite block-tridiagonal A.

    Forward elimination over blocks followed by back-substitution: O(nb)
    block operations of O(n^3) each. ``b`` may be flat or shaped (nb, n);
    the result has the same shape.

    Raises:
        NumericalFailureError: a pivot block is not positive-definite.
    """
    if np.size(b) != A.shape[0]:
        raise InvalidArgumentError(f"right-hand side has {np.size(b)} entries, expected {A.shape[0]}")
    return solve_factored(cholesky_tridiag(A), b)
