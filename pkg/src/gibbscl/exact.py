"""Exact log-partition recursion, exact sampling and enumeration oracles.

The recursion eliminates one site at a time in column-major order, carrying a
table over the ``2**lag`` configurations of the current frontier.  The lag is
the number of rows; lattices with fewer columns than rows are transposed
first so the lag is always ``min(m, m')``.
"""

from __future__ import annotations

import functools
import itertools

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .blocks import Block, boundary_sums
from .lattice import Lattice, ModelSpec, raw_statistics_batch

__all__ = [
    "MAX_LAG",
    "MAX_ENUMERATION_SITES",
    "LagError",
    "as_generator",
    "log_partition_recursive",
    "log_partition_grid",
    "log_partition_bruteforce",
    "block_conditional_log_partition",
    "block_log_partitions",
    "exact_sample",
    "exact_samples",
    "exact_block_sample",
    "exact_block_samples",
    "block_raw_statistics",
    "exact_mean_stats",
    "exact_stat_moments",
    "enumerate_configurations",
    "bruteforce_moments",
    "bruteforce_block_moments",
]

MAX_LAG = 20
MAX_ENUMERATION_SITES = 20


class LagError(ValueError):
    """The recursion table would need more than ``2**MAX_LAG`` states."""


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _kernel_layout(m, mc, max_lag):
    lag = min(m, mc)
    if lag > max_lag:
        raise LagError(f"lag {lag} exceeds the configured maximum {max_lag}")
    transpose = mc < m
    return (mc, m, True) if transpose else (m, mc, False)


def _from_kernel_order(arr, m, mc, transpose):
    if not transpose:
        return arr
    # kernel order is the row-major flattening of the original grid
    g = arr.reshape(arr.shape[:-1] + (m, mc))
    return np.ascontiguousarray(np.swapaxes(g, -1, -2).reshape(arr.shape))


def _coefficients(theta, model, transpose=False):
    h0, tv, th = model.raw_coefficients(theta)
    if transpose:
        tv, th = th, tv
    return float(h0), float(tv), float(th)


def log_partition_recursive(theta, model: ModelSpec, m: int, mc: int, max_lag: int = MAX_LAG) -> float:
    """Exact ``log z(theta)`` for an ``m x mc`` lattice in O(n 2**lag)."""
    km, kmc, transpose = _kernel_layout(m, mc, max_lag)
    h0, tv, th = _coefficients(theta, model, transpose)
    h = np.full(m * mc, h0)
    return float(_kernels.log_partition(km, kmc, h, tv, th))


def log_partition_grid(thetas, model: ModelSpec, m: int, mc: int, max_lag: int = MAX_LAG) -> np.ndarray:
    """``log z`` at each row of ``thetas`` (shape ``(T, d)``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    km, kmc, transpose = _kernel_layout(m, mc, max_lag)
    coef = np.array([model.raw_coefficients(t) for t in thetas])
    h0, tv, th = coef[:, 0], coef[:, 1], coef[:, 2]
    if transpose:
        tv, th = th, tv
    zeros = np.zeros((1, m * mc))
    out = _kernels.log_partition_batch(km, kmc, h0.copy(), tv.copy(), th.copy(), zeros, zeros)
    return out[:, 0]


def enumerate_configurations(n: int) -> np.ndarray:
    """All ``2**n`` spin vectors as an int8 array of shape ``(2**n, n)``."""
    if n > MAX_ENUMERATION_SITES:
        raise ValueError(f"refusing to enumerate 2**{n} configurations")
    # same order as itertools.product((-1, 1), repeat=n): first site is the high bit
    codes = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)


@functools.lru_cache(maxsize=4)
def _enumerated_raw_statistics(m: int, mc: int) -> np.ndarray:
    stats = raw_statistics_batch(enumerate_configurations(m * mc), m, mc).astype(float)
    stats.setflags(write=False)
    return stats


def log_partition_bruteforce(theta, model: ModelSpec, m: int, mc: int) -> float:
    """``log z`` by summing over every configuration (at most 20 sites)."""
    theta = model.check_theta(theta)
    if m * mc > MAX_ENUMERATION_SITES:
        raise ValueError(f"{m}x{mc} lattice is too large for enumeration")
    # raw statistics are cached per shape, so a theta sweep enumerates once
    return float(logsumexp(_enumerated_raw_statistics(m, mc) @ (theta @ model.P)))


def bruteforce_moments(theta, model: ModelSpec, m: int, mc: int):
    """Exact mean and covariance of ``s(y)`` by enumeration, plus state probabilities."""
    theta = model.check_theta(theta)
    configs = enumerate_configurations(m * mc)
    stats = model.project(raw_statistics_batch(configs, m, mc))
    logw = stats @ theta
    p = np.exp(logw - logsumexp(logw))
    mean = p @ stats
    dev = stats - mean
    cov = (dev * p[:, None]).T @ dev
    return mean, cov, configs, p


# -- blocks ---------------------------------------------------------------


def _block_fields(y: Lattice, blocks, theta, model):
    bv, bh = boundary_sums(y, blocks)
    h0, tv, th = _coefficients(theta, model)
    return h0 + tv * bv + th * bh, tv, th


def block_conditional_log_partition(y: Lattice, block: Block, theta, model: ModelSpec) -> float:
    """``log z(theta, G, y_A)``: sum over the block's states, boundary fixed."""
    return float(block_log_partitions(y, [block], theta, model)[0])


def block_log_partitions(y: Lattice, blocks, theta, model: ModelSpec) -> np.ndarray:
    """Vector of block-conditional log partitions, one per block."""
    blocks = list(blocks)
    k = blocks[0].k
    if k > MAX_LAG:
        raise LagError(f"block lag {k} exceeds {MAX_LAG}")
    bv, bh = boundary_sums(y, blocks)
    h0, tv, th = _coefficients(theta, model)
    out = _kernels.log_partition_batch(
        k, k, np.array([h0]), np.array([tv]), np.array([th]),
        bv.astype(float), bh.astype(float),
    )
    return out[0]


def block_raw_statistics(configs, bv, bh, k):
    """Raw conditional summaries of block configurations.

    ``configs`` has shape ``(..., k*k)``; ``bv``/``bh`` broadcast against it.
    Edges between a block site and its boundary count once, edges outside the
    block do not count.
    """
    raw = raw_statistics_batch(configs, k, k).astype(np.int64)
    c = np.asarray(configs, dtype=np.int64)
    raw[..., 1] += (c * bv).sum(axis=-1)
    raw[..., 2] += (c * bh).sum(axis=-1)
    return raw


def bruteforce_block_moments(y: Lattice, block: Block, theta, model: ModelSpec):
    """Enumerate the block's states: (mean, cov, configs, probabilities)."""
    theta = model.check_theta(theta)
    k = block.k
    configs = enumerate_configurations(k * k)
    bv, bh = boundary_sums(y, [block])
    stats = model.project(block_raw_statistics(configs, bv[0], bh[0], k))
    logw = stats @ theta
    p = np.exp(logw - logsumexp(logw))
    mean = p @ stats
    dev = stats - mean
    cov = (dev * p[:, None]).T @ dev
    return mean, cov, configs, p


# -- sampling -------------------------------------------------------------


def exact_samples(theta, model: ModelSpec, m: int, mc: int, n_draws: int, rng,
                  max_lag: int = MAX_LAG) -> np.ndarray:
    """``n_draws`` exact draws as an int8 array ``(n_draws, m*mc)``, column-major."""
    rng = as_generator(rng)
    km, kmc, transpose = _kernel_layout(m, mc, max_lag)
    h0, tv, th = _coefficients(theta, model, transpose)
    h = np.full(m * mc, h0)
    tables, _ = _kernels.forward_tables(km, kmc, h, tv, th)
    u = rng.random((n_draws, m * mc))
    draws = _kernels.backward_sample(km, kmc, h, tv, th, tables, u)
    return _from_kernel_order(draws, m, mc, transpose)


def exact_sample(theta, model: ModelSpec, m: int, mc: int, rng, max_lag: int = MAX_LAG) -> Lattice:
    """One exact draw from ``f(y | theta)``."""
    return Lattice(m, mc, exact_samples(theta, model, m, mc, 1, rng, max_lag)[0])


def exact_block_samples(y: Lattice, blocks, theta, model: ModelSpec, n_draws: int, rngs) -> np.ndarray:
    """Exact draws from each block's conditional, boundary held at ``y``.

    ``rngs`` is a single generator or one generator per block.  Returns int8
    block configurations of shape ``(C, n_draws, k*k)`` in block-local
    column-major order.
    """
    blocks = list(blocks)
    k = blocks[0].k
    if k > MAX_LAG:
        raise LagError(f"block lag {k} exceeds {MAX_LAG}")
    h, tv, th = _block_fields(y, blocks, theta, model)
    if isinstance(rngs, (list, tuple)):
        if len(rngs) != len(blocks):
            raise ValueError("need one generator per block")
        u = np.stack([as_generator(g).random((n_draws, k * k)) for g in rngs])
    else:
        u = as_generator(rngs).random((len(blocks), n_draws, k * k))
    draws, _ = _kernels.sample_batch(k, k, np.ascontiguousarray(h, dtype=float), tv, th, u)
    return draws


def exact_block_sample(y: Lattice, block: Block, theta, model: ModelSpec, rng) -> np.ndarray:
    """One exact draw of the block, returned as a ``k x k`` grid."""
    draw = exact_block_samples(y, [block], theta, model, 1, rng)[0, 0]
    return draw.reshape(block.k, block.k).T


# -- moments via the recursion --------------------------------------------


def exact_mean_stats(theta, model: ModelSpec, m: int, mc: int, h: float = 1e-4) -> np.ndarray:
    """``E[s(y)]`` as the central-difference gradient of ``log z``."""
    theta = model.check_theta(theta)
    d = model.d
    pts = np.concatenate([theta + h * np.eye(d), theta - h * np.eye(d)])
    lz = log_partition_grid(pts, model, m, mc)
    return (lz[:d] - lz[d:]) / (2 * h)


def exact_stat_moments(theta, model: ModelSpec, m: int, mc: int, h: float = 1e-4):
    """Mean and covariance of ``s(y)`` from finite differences of ``log z``.

    Uses a 3**d stencil: first derivatives by central differences, second
    derivatives by the standard central second difference / cross stencil.
    """
    theta = model.check_theta(theta)
    d = model.d
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=float)
    lz = log_partition_grid(theta + h * offsets, model, m, mc)
    table = dict(zip(map(tuple, offsets.astype(int)), lz))
    e = np.eye(d, dtype=int)
    zero = tuple([0] * d)
    mean = np.empty(d)
    cov = np.empty((d, d))
    for a in range(d):
        ea = tuple(e[a])
        na = tuple(-e[a])
        mean[a] = (table[ea] - table[na]) / (2 * h)
        cov[a, a] = (table[ea] - 2 * table[zero] + table[na]) / h**2
        for b in range(a + 1, d):
            pp = tuple(e[a] + e[b])
            mm = tuple(-e[a] - e[b])
            pm = tuple(e[a] - e[b])
            mp = tuple(-e[a] + e[b])
            cov[a, b] = cov[b, a] = (table[pp] - table[pm] - table[mp] + table[mm]) / (4 * h**2)
    return mean, cov
