"""Square lattice blocks and their conditioning boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Lattice

__all__ = ["Block", "BlockSet", "enumerate_blocks", "whole_lattice_block", "boundary_sums"]


@dataclass(frozen=True)
class Block:
    """A contiguous ``k x k`` block with top-left corner ``(top, left)``."""

    top: int
    left: int
    k: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("block side must be positive")
        if not (0 <= self.top and self.top + self.k <= self.rows
                and 0 <= self.left and self.left + self.k <= self.cols):
            raise ValueError(
                f"{self.k}x{self.k} block at ({self.top}, {self.left}) lies outside "
                f"the {self.rows}x{self.cols} lattice"
            )

    @property
    def corner(self) -> int:
        """Column-major site index of the top-left corner."""
        return self.left * self.rows + self.top

    @property
    def members(self) -> np.ndarray:
        """Site indices of the block, column-major."""
        r = np.arange(self.top, self.top + self.k)
        c = np.arange(self.left, self.left + self.k)
        return (c[:, None] * self.rows + r[None, :]).ravel()

    @property
    def boundary(self) -> np.ndarray:
        """Sites outside the block sharing an edge with it (sorted)."""
        out = []
        m = self.rows
        for j in range(self.k):
            c = self.left + j
            if self.top > 0:
                out.append(c * m + self.top - 1)
            if self.top + self.k < self.rows:
                out.append(c * m + self.top + self.k)
            r = self.top + j
            if self.left > 0:
                out.append((self.left - 1) * m + r)
            if self.left + self.k < self.cols:
                out.append((self.left + self.k) * m + r)
        return np.array(sorted(out), dtype=np.int64)


@dataclass(frozen=True)
class BlockSet:
    blocks: tuple[Block, ...]
    k: int

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def corners(self) -> np.ndarray:
        return np.array([b.corner for b in self.blocks], dtype=np.int64)


def enumerate_blocks(m: int, mc: int, k: int) -> BlockSet:
    """All ``(m-k+1)(mc-k+1)`` blocks, corners in column-major order."""
    if not 1 <= k <= min(m, mc):
        raise ValueError(f"block side {k} must lie in [1, {min(m, mc)}]")
    blocks = tuple(
        Block(top, left, k, m, mc)
        for left in range(mc - k + 1)
        for top in range(m - k + 1)
    )
    return BlockSet(blocks, k)


def whole_lattice_block(m: int, mc: int) -> BlockSet:
    if m != mc:
        raise ValueError("only square lattices form a single square block")
    return BlockSet((Block(0, 0, m, m, mc),), m)


def boundary_sums(y: Lattice, blocks) -> tuple[np.ndarray, np.ndarray]:
    """Vertical and horizontal boundary neighbour sums for each block site.

    Returns two ``(C, k*k)`` integer arrays in block-local column-major order;
    a site's entry is the sum of the spins outside the block that it touches
    along a vertical (resp. horizontal) edge.
    """
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks given")
    k = blocks[0].k
    if any(b.k != k for b in blocks):
        raise ValueError("all blocks must share the same side")
    if any((b.rows, b.cols) != (y.rows, y.cols) for b in blocks):
        raise ValueError("blocks were built for a different lattice size")
    P = np.pad(y.grid.astype(np.int64), 1)
    C = len(blocks)
    bv = np.zeros((C, k, k), dtype=np.int64)  # indexed [block, col, row]
    bh = np.zeros((C, k, k), dtype=np.int64)
    for idx, b in enumerate(blocks):
        r0, c0 = b.top + 1, b.left + 1  # padded coordinates
        bv[idx, :, 0] += P[r0 - 1, c0:c0 + k]
        bv[idx, :, k - 1] += P[r0 + k, c0:c0 + k]
        bh[idx, 0, :] += P[r0:r0 + k, c0 - 1]
        bh[idx, k - 1, :] += P[r0:r0 + k, c0 + k]
    return bv.reshape(C, k * k), bh.reshape(C, k * k)
