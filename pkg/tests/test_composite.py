from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from gibbscl.composite import (
    Block,
    CompositeLikelihood,
    block_conditional_log_density,
    block_statistics,
    enumerate_blocks,
    log_composite_likelihood,
    log_pseudolikelihood,
    mc_block_stat_draws,
    whole_lattice_block,
)
from gibbscl.exact import bruteforce_block_moments, log_partition_bruteforce
from gibbscl.lattice import (
    ANISOTROPIC,
    AUTOLOGISTIC,
    ISING,
    Lattice,
    site_conditional_probability,
    sufficient_statistics,
)


def random_lattice(m, mc, seed):
    return Lattice(m, mc, np.random.default_rng(seed).choice([-1, 1], m * mc))


def test_block_counts():
    assert len(enumerate_blocks(16, 16, 4)) == 169
    assert len(enumerate_blocks(5, 7, 1)) == 35
    whole = enumerate_blocks(4, 4, 4)
    assert len(whole) == 1 and whole[0].boundary.size == 0
    with pytest.raises(ValueError):
        enumerate_blocks(4, 4, 5)
    with pytest.raises(ValueError):
        Block(3, 0, 2, 4, 4)


def test_block_corners_column_major():
    corners = enumerate_blocks(4, 5, 2).corners
    assert list(corners[:4]) == [0, 1, 2, 4]
    assert np.all(np.diff(corners) > 0)


def test_block_boundary_members():
    b = Block(1, 1, 2, 4, 4)
    assert sorted(b.members) == [5, 6, 9, 10]
    assert list(b.boundary) == [1, 2, 4, 7, 8, 11, 13, 14]


def test_zero_parameter_density():
    y = random_lattice(6, 6, 0)
    for b in enumerate_blocks(6, 6, 3):
        assert block_conditional_log_density(y, b, [0.0, 0.0], AUTOLOGISTIC) == pytest.approx(-9 * np.log(2))


def test_singleton_density_is_site_conditional():
    y = random_lattice(5, 5, 1)
    theta = [0.2, 0.5]
    for b in enumerate_blocks(5, 5, 1):
        expected = np.log(site_conditional_probability(y, b.members[0], theta, AUTOLOGISTIC))
        assert block_conditional_log_density(y, b, theta, AUTOLOGISTIC) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("model,theta", [(ISING, [0.4]), (ANISOTROPIC, [0.2, 0.7]), (AUTOLOGISTIC, [-0.1, 0.5])])
def test_block_conditional_normalises(model, theta):
    y = random_lattice(5, 5, 2)
    b = Block(2, 1, 2, 5, 5)
    vals = []
    for states in itertools.product((-1, 1), repeat=4):
        v = y.values.copy()
        v[b.members] = states
        vals.append(block_conditional_log_density(Lattice(5, 5, v), b, theta, model))
    assert logsumexp(vals) == pytest.approx(0.0, abs=1e-12)


def test_weights():
    y = random_lattice(5, 5, 3)
    blocks = enumerate_blocks(5, 5, 2)
    assert log_composite_likelihood(y, [0.3], blocks, np.zeros(len(blocks)), ISING) == 0.0
    with pytest.raises(ValueError):
        log_composite_likelihood(y, [0.3], blocks, np.ones(3), ISING)
    with pytest.raises(ValueError):
        log_composite_likelihood(y, [0.3], blocks, -np.ones(len(blocks)), ISING)
    cl = CompositeLikelihood(y, blocks, ISING)
    w = np.random.default_rng(0).uniform(0, 2, len(blocks))
    assert cl.log_likelihood([0.3], w) == pytest.approx(w @ cl.block_log_densities([0.3]))


def test_pseudolikelihood_values():
    y = random_lattice(4, 6, 4)
    assert log_pseudolikelihood(y, [0.0, 0.0], AUTOLOGISTIC) == pytest.approx(-24 * np.log(2))
    y = Lattice.constant(2, 2)
    expected = 4 * np.log(np.exp(0.8) / (np.exp(0.8) + np.exp(-0.8)))
    assert log_pseudolikelihood(y, [0.4], ISING) == pytest.approx(expected, abs=1e-13)


@pytest.mark.parametrize("model,theta", [(ISING, [0.4]), (ANISOTROPIC, [0.3, -0.2]), (AUTOLOGISTIC, [0.1, 0.6])])
def test_singleton_cl_is_pseudolikelihood(model, theta):
    y = random_lattice(6, 5, 5)
    cl = log_composite_likelihood(y, theta, enumerate_blocks(6, 5, 1), None, model)
    assert cl == pytest.approx(log_pseudolikelihood(y, theta, model), abs=1e-12)


@pytest.mark.parametrize("model,theta", [(ISING, [0.4]), (ANISOTROPIC, [0.3, -0.2]), (AUTOLOGISTIC, [0.1, 0.6])])
def test_whole_lattice_block_is_likelihood(model, theta):
    y = random_lattice(4, 4, 6)
    cl = log_composite_likelihood(y, theta, whole_lattice_block(4, 4), None, model)
    exact = np.atleast_1d(theta) @ sufficient_statistics(y, model) - log_partition_bruteforce(theta, model, 4, 4)
    assert cl == pytest.approx(exact, abs=1e-10)


def test_block_statistics_sum_inside_and_boundary_edges():
    y = Lattice.constant(4, 4)
    s = block_statistics(y, [Block(1, 1, 2, 4, 4)], AUTOLOGISTIC)[0]
    # 4 spins; 4 internal edges + 8 boundary edges
    np.testing.assert_array_equal(s, [4, 12])


def test_log_likelihood_many_matches_single():
    y = random_lattice(6, 6, 7)
    cl = CompositeLikelihood(y, 3, AUTOLOGISTIC)
    thetas = np.array([[0.1, 0.2], [-0.3, 0.5], [0.0, 0.0]])
    many = cl.log_likelihood_many(thetas)
    for t, v in zip(thetas, many):
        assert v == pytest.approx(cl.log_likelihood(t), abs=1e-10)


# -- Monte Carlo block draws ----------------------------------------------


def test_draws_zero_parameter_site_means():
    y = random_lattice(4, 4, 8)
    draws = mc_block_stat_draws(y, [0.0, 0.0], enumerate_blocks(4, 4, 1), 4000, np.random.default_rng(0), AUTOLOGISTIC)
    s0 = draws[..., 0]
    assert np.all(np.abs(s0.mean(axis=1)) < 4 * 1 / np.sqrt(4000))


def test_draws_deterministic_and_order_invariant():
    y = random_lattice(5, 5, 9)
    blocks = list(enumerate_blocks(5, 5, 2))
    a = mc_block_stat_draws(y, [0.3], blocks, 50, np.random.default_rng(1), ISING)
    b = mc_block_stat_draws(y, [0.3], blocks, 50, np.random.default_rng(1), ISING)
    np.testing.assert_array_equal(a, b)
    c = mc_block_stat_draws(y, [0.3], blocks[::-1], 50, np.random.default_rng(1), ISING)
    np.testing.assert_array_equal(a, c[::-1])


def test_2x2_block_covariance_matches_enumeration():
    y = random_lattice(4, 4, 10)
    b = Block(1, 2, 2, 4, 4)
    theta = [0.1, 0.4]
    mean, cov, _, _ = bruteforce_block_moments(y, b, theta, AUTOLOGISTIC)
    n = 40_000
    s = mc_block_stat_draws(y, theta, [b], n, np.random.default_rng(2), AUTOLOGISTIC)[0]
    np.testing.assert_array_less(np.abs(s.mean(axis=0) - mean), 3 * np.sqrt(np.diag(cov) / n))
    dev = s - mean
    for i in range(2):
        for j in range(2):
            prod = dev[:, i] * dev[:, j]
            assert abs(prod.mean() - cov[i, j]) < 3 * prod.std() / np.sqrt(n)


def test_too_few_draws():
    with pytest.raises(ValueError):
        mc_block_stat_draws(Lattice.constant(3, 3), [0.1], enumerate_blocks(3, 3, 1), 1, 0, ISING)
