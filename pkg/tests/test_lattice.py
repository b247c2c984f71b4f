from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbscl.lattice import (
    ANISOTROPIC,
    AUTOLOGISTIC,
    ISING,
    Lattice,
    get_model,
    neighbour_sums,
    raw_statistics,
    site_conditional_probability,
    sufficient_statistics,
    unnormalized_log_likelihood,
)
from oracles import loop_raw_statistics


@st.composite
def lattices(draw, max_side=6):
    m = draw(st.integers(1, max_side))
    mc = draw(st.integers(1, max_side))
    vals = draw(st.lists(st.sampled_from([-1, 1]), min_size=m * mc, max_size=m * mc))
    return Lattice(m, mc, np.array(vals))


def test_all_plus_2x2_autologistic():
    y = Lattice.constant(2, 2)
    np.testing.assert_array_equal(sufficient_statistics(y, AUTOLOGISTIC), [4, 4])


def test_checkerboard_2x2():
    y = Lattice.from_grid([[1, -1], [-1, 1]])
    np.testing.assert_array_equal(sufficient_statistics(y, AUTOLOGISTIC), [0, -4])


def test_all_plus_4x4_anisotropic():
    y = Lattice.constant(4, 4)
    np.testing.assert_array_equal(sufficient_statistics(y, ANISOTROPIC), [12, 12])


def test_column_major_layout():
    grid = np.array([[1, -1, 1], [-1, -1, 1]])
    y = Lattice.from_grid(grid)
    np.testing.assert_array_equal(y.values, [1, -1, -1, -1, 1, 1])
    np.testing.assert_array_equal(y.grid, grid)
    assert y.neighbours(0) == [1, 2]
    assert y.neighbours(3) == [1, 2, 5]


def test_vertical_edges_join_i_and_i_plus_1():
    # one column: only vertical edges
    y = Lattice.from_grid([[1], [1], [-1]])
    np.testing.assert_array_equal(raw_statistics(y), [1, 0, 0])


@given(lattices())
@settings(max_examples=60, deadline=None)
def test_statistics_match_loops(y):
    np.testing.assert_array_equal(raw_statistics(y), loop_raw_statistics(y.grid))


@given(lattices())
@settings(max_examples=40, deadline=None)
def test_flip_symmetry(y):
    # pair products are even, the spin sum is odd
    a, b = raw_statistics(y), raw_statistics(-y)
    assert a[0] == -b[0] and a[1] == b[1] and a[2] == b[2]
    assert unnormalized_log_likelihood(y, [0.4], ISING) == unnormalized_log_likelihood(-y, [0.4], ISING)


def test_unnormalized_log_likelihood_values():
    y = Lattice.constant(2, 2)
    assert unnormalized_log_likelihood(y, [0.0, 0.0], AUTOLOGISTIC) == 0.0
    assert unnormalized_log_likelihood(y, [0.05, 0.4], AUTOLOGISTIC) == pytest.approx(1.8, abs=1e-14)


def test_site_conditional_interior():
    y = Lattice.constant(3, 3)
    p = site_conditional_probability(y, 4, [0.4], ISING)
    assert p == pytest.approx(np.exp(1.6) / (np.exp(1.6) + np.exp(-1.6)), abs=1e-14)
    assert p == pytest.approx(0.9608, abs=1e-4)


def test_site_conditional_uniform_and_cancelling():
    rng = np.random.default_rng(1)
    y = Lattice(4, 5, rng.choice([-1, 1], 20))
    assert all(site_conditional_probability(y, i, [0.0, 0.0], AUTOLOGISTIC) == 0.5 for i in range(20))
    # corner site with one + and one - neighbour
    y = Lattice.from_grid([[1, -1], [1, 1]])
    assert site_conditional_probability(y, 0, [0.7], ISING) == pytest.approx(0.5)


@given(lattices(max_side=4), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=40, deadline=None)
def test_site_conditional_matches_energy_difference(y, a, b):
    theta = np.array([a, b])
    i = y.n // 2
    flipped = y.values.copy()
    flipped[i] = -flipped[i]
    yf = Lattice(y.rows, y.cols, flipped)
    e1 = unnormalized_log_likelihood(y, theta, AUTOLOGISTIC)
    e2 = unnormalized_log_likelihood(yf, theta, AUTOLOGISTIC)
    expected = 1.0 / (1.0 + np.exp(e2 - e1))
    assert site_conditional_probability(y, i, theta, AUTOLOGISTIC) == pytest.approx(expected, rel=1e-12)


def test_neighbour_sums_split_directions():
    y = Lattice.from_grid([[1, -1], [1, 1]])
    vert, hor = neighbour_sums(y)
    np.testing.assert_array_equal(vert, [1, 1, 1, -1])
    np.testing.assert_array_equal(hor, [-1, 1, 1, 1])


@pytest.mark.parametrize("bad", [
    dict(rows=0, cols=2, values=np.array([])),
    dict(rows=2, cols=2, values=np.array([1, 1, 1])),
    dict(rows=1, cols=2, values=np.array([1, 0])),
])
def test_invalid_lattices(bad):
    with pytest.raises(ValueError):
        Lattice(**bad)


def test_parameter_length_checked():
    with pytest.raises(ValueError):
        unnormalized_log_likelihood(Lattice.constant(2, 2), [0.1, 0.2], ISING)
    with pytest.raises(ValueError):
        get_model("potts")


def test_read_only_values():
    y = Lattice.constant(2, 2)
    with pytest.raises(ValueError):
        y.values[0] = -1


@given(lattices())
@settings(max_examples=25, deadline=None)
def test_text_and_csv_round_trip(y):
    assert Lattice.from_text(y.to_text()) == y
    assert Lattice.from_csv(y.to_csv()) == y


def test_save_load(tmp_path):
    y = Lattice(3, 4, np.random.default_rng(0).choice([-1, 1], 12))
    for name in ("y.csv", "y.txt"):
        y.save(tmp_path / name)
        assert Lattice.load(tmp_path / name) == y
