"""Row-orthonormal block-averaging restrictions and the level hierarchy.

A transfer is stored matrix-free as an ``(n_coarse, m)`` table of fine indices
together with the common weight ``1/sqrt(m)``.  Disjoint blocks with that
weight make ``R R^T = I`` hold by construction, and prolongation is always the
plain transpose (unit scaling between levels), so every level norm is the
Euclidean one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "TransferOperator",
    "build_avg_1d",
    "build_block_1d",
    "build_tensor_2d",
    "from_descriptor",
    "restrict",
    "prolong",
    "Level",
    "LevelStack",
]


class TransferOperator:
    def __init__(self, n_fine: int, blocks, structure: str = "generic"):
        blocks = np.asarray(blocks, dtype=np.intp)
        if blocks.ndim != 2 or blocks.shape[0] == 0 or blocks.shape[1] == 0:
            raise ValueError("blocks must be a non-empty (n_coarse, m) index table")
        if n_fine <= 0:
            raise ValueError("n_fine must be positive")
        if blocks.min() < 0 or blocks.max() >= n_fine:
            raise ValueError("block index out of range")
        flat = blocks.ravel()
        if np.unique(flat).size != flat.size:
            raise ValueError("blocks overlap: a fine index appears twice")
        if structure in ("avg1d", "tensor2d") and flat.size != n_fine:
            raise ValueError(f"{structure} transfer must cover every fine index")
        blocks.setflags(write=False)
        self.n_fine = int(n_fine)
        self.blocks = blocks
        self.structure = structure
        self.weight = 1.0 / np.sqrt(blocks.shape[1])

    def __repr__(self):
        return (
            f"TransferOperator({self.structure}, n_fine={self.n_fine}, "
            f"n_coarse={self.n_coarse}, block={self.block_size})"
        )

    @property
    def n_coarse(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    def restrict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_fine,):
            raise ValueError(f"restrict expects length {self.n_fine}, got {x.shape}")
        return self.weight * x[self.blocks].sum(axis=1)

    def prolong(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n_coarse,):
            raise ValueError(f"prolong expects length {self.n_coarse}, got {y.shape}")
        out = np.zeros(self.n_fine)
        out[self.blocks] = (self.weight * y)[:, None]
        return out

    def matrix(self) -> np.ndarray:
        """Dense ``R``; intended for small sizes and tests."""
        R = np.zeros((self.n_coarse, self.n_fine))
        rows = np.repeat(np.arange(self.n_coarse), self.block_size)
        R[rows, self.blocks.ravel()] = self.weight
        return R

    def sparse(self):
        from scipy import sparse

        rows = np.repeat(np.arange(self.n_coarse), self.block_size)
        data = np.full(rows.size, self.weight)
        return sparse.csr_matrix((data, (rows, self.blocks.ravel())), shape=(self.n_coarse, self.n_fine))

    def compose(self, coarser: "TransferOperator") -> "TransferOperator":
        """The restriction ``coarser @ self`` from this fine space two levels down."""
        if coarser.n_fine != self.n_coarse:
            raise ValueError("transfers do not chain")
        blocks = self.blocks[coarser.blocks].reshape(coarser.n_coarse, -1)
        structure = self.structure if self.structure == coarser.structure else "generic"
        if structure != "generic" and blocks.size != self.n_fine:
            structure = "generic"
        return TransferOperator(self.n_fine, blocks, structure)

    def orthonormality_defect(self) -> float:
        """``max |R R^T - I|`` from an explicit sparse product."""
        from scipy import sparse

        S = self.sparse()
        G = (S @ S.T - sparse.identity(self.n_coarse, format="csr")).tocoo()
        return float(np.max(np.abs(G.data))) if G.nnz else 0.0

    def to_dict(self) -> dict:
        if self.structure == "avg1d":
            return {"type": "avg1d"} if self.block_size == 2 else {"type": "avg1d", "ratio": self.block_size}
        if self.structure == "tensor2d":
            return {"type": "tensor2d", "ratio": int(round(np.sqrt(self.block_size)))}
        raise TypeError("generic transfers have no descriptor")


def restrict(R: TransferOperator, x_fine) -> np.ndarray:
    return R.restrict(x_fine)


def prolong(R: TransferOperator, x_coarse) -> np.ndarray:
    return R.prolong(x_coarse)


def build_block_1d(n_fine: int, m: int) -> TransferOperator:
    if m <= 0 or n_fine <= 0 or n_fine % m:
        raise ValueError(f"block size {m} must divide n_fine={n_fine}")
    return TransferOperator(n_fine, np.arange(n_fine).reshape(-1, m), "avg1d")


def build_avg_1d(n_fine: int) -> TransferOperator:
    """Pairwise averaging ``(x[2j] + x[2j+1]) / sqrt(2)``."""
    if n_fine <= 0 or n_fine % 2:
        raise ValueError(f"pairwise averaging needs an even dimension, got {n_fine}")
    return build_block_1d(n_fine, 2)


def build_tensor_2d(n_fine_1d: int, m: int = 2) -> TransferOperator:
    """``R_1d (x) R_1d`` on a row-major ``n x n`` field; each coarse dof owns an m-by-m patch."""
    if m <= 0 or n_fine_1d <= 0 or n_fine_1d % m:
        raise ValueError(f"ratio {m} must divide the grid size {n_fine_1d}")
    n = n_fine_1d
    nc = n // m
    idx = np.arange(n * n).reshape(nc, m, nc, m)
    blocks = idx.transpose(0, 2, 1, 3).reshape(nc * nc, m * m)
    return TransferOperator(n * n, blocks, "tensor2d")


def from_descriptor(desc: dict, n_fine: int) -> TransferOperator:
    desc = dict(desc)
    kind = desc.pop("type", None)
    if kind == "avg1d":
        ratio = desc.pop("ratio", 2)
        if desc:
            raise ValueError(f"unexpected keys for avg1d: {sorted(desc)}")
        return build_avg_1d(n_fine) if ratio == 2 else build_block_1d(n_fine, ratio)
    if kind == "tensor2d":
        ratio = desc.pop("ratio", 2)
        if desc:
            raise ValueError(f"unexpected keys for tensor2d: {sorted(desc)}")
        n1 = int(round(np.sqrt(n_fine)))
        if n1 * n1 != n_fine:
            raise ValueError("tensor2d transfer needs a square number of unknowns")
        return build_tensor_2d(n1, ratio)
    raise ValueError(f"unknown transfer type {kind!r}")


@dataclass
class Level:
    """One level of the hierarchy.

    ``smooth`` is the level's own smooth objective (a rediscretization, say);
    ``None`` on a coarse level means the coarse smooth part is the fine model
    restricted to the affine subspace through the current fine iterate.
    ``transfer`` maps this level to the one below and is ``None`` on level 0.
    """

    dim: int
    phi: Any
    smooth: Any = None
    transfer: TransferOperator | None = None
    eps_h: float | None = None
    eps_delta: float | None = None
    delta_s: float | None = None


@dataclass
class LevelStack:
    levels: list[Level] = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            raise ValueError("a level stack needs at least one level")
        for i, lev in enumerate(self.levels):
            if i > 0:
                below = self.levels[i - 1]
                if lev.dim < below.dim:
                    raise ValueError("level dimensions must be nondecreasing upward")
                R = lev.transfer
                if R is None:
                    raise ValueError(f"level {i} needs a transfer to level {i - 1}")
                if R.n_fine != lev.dim or R.n_coarse != below.dim:
                    raise ValueError(f"transfer on level {i} has the wrong shape")
        if self.levels[-1].smooth is None:
            raise ValueError("the top level needs a smooth objective")

    @property
    def r(self) -> int:
        return len(self.levels) - 1

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> Level:
        return self.levels[i]

    def composite(self, i: int) -> TransferOperator | None:
        """Restriction from the top level straight down to level ``i``."""
        R = None
        for j in range(self.r, i, -1):
            R = self.levels[j].transfer if R is None else R.compose(self.levels[j].transfer)
        return R
