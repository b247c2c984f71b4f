"""Conditional composite likelihoods over square lattice blocks.

The conditional density of a block given everything outside it is

    log f(y_A | y_-A, theta) = theta . s(y_A | y_-A) - log z(theta, G, y_A)

where ``s(y_A | y_-A)`` counts the block's spins and every edge touching the
block once.  Pseudolikelihood is the ``k = 1`` case.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .blocks import Block, BlockSet, boundary_sums, enumerate_blocks, whole_lattice_block
from .exact import (
    LagError,
    MAX_LAG,
    as_generator,
    block_log_partitions,
    block_raw_statistics,
    exact_block_samples,
)
from .lattice import Lattice, ModelSpec, site_conditional_probability

__all__ = [
    "Block",
    "BlockSet",
    "enumerate_blocks",
    "whole_lattice_block",
    "CompositeLikelihood",
    "block_statistics",
    "block_conditional_log_density",
    "log_composite_likelihood",
    "log_pseudolikelihood",
    "block_substreams",
    "mc_block_stat_draws",
]


def block_statistics(y: Lattice, blocks, model: ModelSpec) -> np.ndarray:
    """Observed conditional statistics ``s(y_A | y_-A)``, shape ``(C, d)``."""
    blocks = list(blocks)
    k = blocks[0].k
    bv, bh = boundary_sums(y, blocks)
    configs = np.stack([y.values[b.members] for b in blocks])
    return model.project(block_raw_statistics(configs, bv, bh, k))


def block_conditional_log_density(y: Lattice, block: Block, theta, model: ModelSpec) -> float:
    theta = model.check_theta(theta)
    s = block_statistics(y, [block], model)[0]
    return float(theta @ s - block_log_partitions(y, [block], theta, model)[0])


def _check_weights(weights, C):
    w = np.ones(C) if weights is None else np.asarray(weights, dtype=float)
    if w.ndim == 0:
        w = np.full(C, float(w))
    if w.shape != (C,):
        raise ValueError(f"expected {C} block weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("block weights must be nonnegative")
    return w


def log_composite_likelihood(y: Lattice, theta, blocks, weights=None, model: ModelSpec = None) -> float:
    """``sum_i w_i log f(y_Ai | y_-Ai, theta)``; unit weights by default."""
    if model is None:
        raise TypeError("model is required")
    return CompositeLikelihood(y, blocks, model).log_likelihood(theta, weights)


def log_pseudolikelihood(y: Lattice, theta, model: ModelSpec) -> float:
    """Sum over sites of the log full conditional."""
    return float(sum(np.log(site_conditional_probability(y, i, theta, model)) for i in range(y.n)))


class CompositeLikelihood:
    """Cached evaluator of a conditional composite likelihood for fixed data.

    Boundary sums and observed block statistics are computed once, so the
    log-likelihood can be evaluated cheaply at many parameter values.
    """

    def __init__(self, y: Lattice, blocks, model: ModelSpec):
        if isinstance(blocks, int):
            blocks = enumerate_blocks(y.rows, y.cols, blocks)
        self.y = y
        self.blocks = blocks if isinstance(blocks, BlockSet) else BlockSet(tuple(blocks), blocks[0].k)
        self.model = model
        self.k = self.blocks.k
        if self.k > MAX_LAG:
            raise LagError(f"block lag {self.k} exceeds {MAX_LAG}")
        bv, bh = boundary_sums(y, self.blocks)
        self._bv = bv.astype(float)
        self._bh = bh.astype(float)
        self.block_stats = block_statistics(y, self.blocks, model)
        self.stat_total = self.block_stats.sum(axis=0)

    def __len__(self):
        return len(self.blocks)

    def block_log_partitions(self, thetas) -> np.ndarray:
        """``(T, C)`` block log partitions for parameter rows ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        coef = np.array([self.model.raw_coefficients(t) for t in thetas])
        return _kernels.log_partition_batch(
            self.k, self.k,
            np.ascontiguousarray(coef[:, 0]), np.ascontiguousarray(coef[:, 1]),
            np.ascontiguousarray(coef[:, 2]), self._bv, self._bh,
        )

    def block_log_densities(self, theta) -> np.ndarray:
        theta = self.model.check_theta(theta)
        return self.block_stats @ theta - self.block_log_partitions(theta)[0]

    def log_likelihood(self, theta, weights=None) -> float:
        w = _check_weights(weights, len(self.blocks))
        return float(w @ self.block_log_densities(theta))

    def log_likelihood_many(self, thetas, weight: float = 1.0) -> np.ndarray:
        """Uniformly weighted log composite likelihood at each row of ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        lz = self.block_log_partitions(thetas)
        return weight * (thetas @ self.stat_total - lz.sum(axis=1))

    def stat_draws(self, theta, n_draws: int, rng) -> np.ndarray:
        return mc_block_stat_draws(self.y, theta, self.blocks, n_draws, rng, self.model)


def block_substreams(blocks, rng) -> list[np.random.Generator]:
    """One generator per block, keyed by the block's corner site.

    A single entropy value is drawn from ``rng``; each block's stream then
    depends only on that value and its corner, so reordering the blocks does
    not change any block's draws.
    """
    entropy = int(as_generator(rng).integers(2**63))
    return [
        np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(int(b.corner),)))
        for b in blocks
    ]


def mc_block_stat_draws(y: Lattice, theta, blocks, n_draws: int, rng, model: ModelSpec) -> np.ndarray:
    """Exact draws of ``s(y_A | y_-A)`` with the observed boundary fixed.

    Returns ``(C, n_draws, d)`` statistics.
    """
    if n_draws < 2:
        raise ValueError("need at least two draws per block")
    blocks = list(blocks)
    theta = model.check_theta(theta)
    k = blocks[0].k
    draws = exact_block_samples(y, blocks, theta, model, n_draws, block_substreams(blocks, rng))
    bv, bh = boundary_sums(y, blocks)
    raw = block_raw_statistics(draws, bv[:, None, :], bh[:, None, :], k)
    return model.project(raw)
