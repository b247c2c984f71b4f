"""Binary lattices, first-order dependency graphs and sufficient statistics.

Sites of an ``m x m'`` lattice are numbered top to bottom within each column,
columns left to right (column-major).  Spins take values in {-1, +1}.

Every supported model is a linear view of three raw lattice summaries

    S0 = sum_i y_i,   V = sum over vertical edges y_i y_{i+1},
    H  = sum over horizontal edges y_i y_{i+m},

each edge counted once.  ``ModelSpec.projection`` maps the raw triple to the
model's statistic vector, and its transpose maps a parameter vector to the
raw coefficients (abundance, vertical coupling, horizontal coupling).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Lattice",
    "ModelSpec",
    "ISING",
    "ANISOTROPIC",
    "AUTOLOGISTIC",
    "get_model",
    "raw_statistics",
    "sufficient_statistics",
    "unnormalized_log_likelihood",
    "site_conditional_probability",
    "neighbour_sums",
]


@dataclass(frozen=True, eq=False)
class Lattice:
    """An immutable ``rows x cols`` grid of +/-1 spins.

    ``values`` is the column-major flattening (length ``rows * cols``).
    """

    rows: int
    cols: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"lattice dimensions must be positive, got {self.rows}x{self.cols}")
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size != self.rows * self.cols:
            raise ValueError(
                f"expected {self.rows * self.cols} spins for a {self.rows}x{self.cols} lattice, "
                f"got shape {vals.shape}"
            )
        if not np.all((vals == 1) | (vals == -1)):
            raise ValueError("spins must be -1 or +1")
        vals = vals.astype(np.int8, copy=True)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_grid(cls, grid) -> "Lattice":
        """Build from a 2-D array indexed ``grid[row, col]``."""
        g = np.asarray(grid)
        if g.ndim != 2:
            raise ValueError("grid must be two-dimensional")
        return cls(g.shape[0], g.shape[1], g.flatten(order="F"))

    @classmethod
    def constant(cls, rows: int, cols: int, value: int = 1) -> "Lattice":
        return cls(rows, cols, np.full(rows * cols, value, dtype=np.int8))

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def grid(self) -> np.ndarray:
        """Read-only ``rows x cols`` view."""
        return self.values.reshape(self.cols, self.rows).T

    def __neg__(self) -> "Lattice":
        return Lattice(self.rows, self.cols, -self.values.astype(np.int16))

    def __eq__(self, other):
        if not isinstance(other, Lattice):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.rows, self.cols, self.values.tobytes()))

    def neighbours(self, i: int) -> list[int]:
        """First-order neighbours of site ``i`` in index order."""
        m, mc = self.rows, self.cols
        r, c = i % m, i // m
        out = []
        if c > 0:
            out.append(i - m)
        if r > 0:
            out.append(i - 1)
        if r < m - 1:
            out.append(i + 1)
        if c < mc - 1:
            out.append(i + m)
        return out

    # -- serialization -------------------------------------------------

    def to_text(self) -> str:
        """Row-major grid of ``+1``/``-1`` tokens, one lattice row per line."""
        return "".join(
            " ".join("+1" if v > 0 else "-1" for v in row) + "\n" for row in self.grid
        )

    @classmethod
    def from_text(cls, text: str) -> "Lattice":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty lattice text")
        width = {len(r) for r in rows}
        if len(width) != 1:
            raise ValueError("ragged lattice text")
        try:
            grid = np.array([[int(tok) for tok in r] for r in rows])
        except ValueError as exc:
            raise ValueError(f"bad spin token: {exc}") from exc
        return cls.from_grid(grid)

    def to_csv(self) -> str:
        """Single CSV row: rows, cols, then the column-major spins."""
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [self.rows, self.cols, *(int(v) for v in self.values)]
        )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Lattice":
        row = next(csv.reader(io.StringIO(text.strip())))
        m, mc = int(row[0]), int(row[1])
        return cls(m, mc, np.array([int(v) for v in row[2:]]))

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_csv() if path.suffix == ".csv" else self.to_text())

    @classmethod
    def load(cls, path) -> "Lattice":
        path = Path(path)
        text = path.read_text()
        return cls.from_csv(text) if path.suffix == ".csv" else cls.from_text(text)


@dataclass(frozen=True)
class ModelSpec:
    """A first-order lattice model given by its statistic projection.

    ``projection`` is a ``d x 3`` matrix acting on the raw summaries
    ``(S0, V, H)``.
    """

    name: str
    stat_names: tuple[str, ...]
    projection: tuple[tuple[float, float, float], ...]

    @property
    def d(self) -> int:
        return len(self.stat_names)

    @property
    def P(self) -> np.ndarray:
        return np.array(self.projection, dtype=float)

    @property
    def has_abundance(self) -> bool:
        return bool(np.any(self.P[:, 0] != 0))

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.d,):
            raise ValueError(f"{self.name} expects {self.d} parameter(s), got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("parameters must be finite")
        return theta

    def raw_coefficients(self, theta) -> np.ndarray:
        """(abundance, vertical coupling, horizontal coupling) for ``theta``."""
        return self.check_theta(theta) @ self.P

    def project(self, raw) -> np.ndarray:
        """Map raw summaries ``(..., 3)`` to statistic vectors ``(..., d)``."""
        return np.asarray(raw, dtype=float) @ self.P.T


ISING = ModelSpec("ising", ("s1",), ((0.0, 1.0, 1.0),))
ANISOTROPIC = ModelSpec("anisotropic", ("s_vertical", "s_horizontal"), ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)))
AUTOLOGISTIC = ModelSpec("autologistic", ("s0", "s1"), ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0)))

_MODELS = {spec.name: spec for spec in (ISING, ANISOTROPIC, AUTOLOGISTIC)}


def get_model(name: str) -> ModelSpec:
    try:
        return _MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_MODELS)}") from None


def raw_statistics(y: Lattice) -> np.ndarray:
    """Raw summaries ``(S0, V, H)`` as integers."""
    g = y.grid.astype(np.int64)
    return np.array(
        [g.sum(), (g[:-1, :] * g[1:, :]).sum(), (g[:, :-1] * g[:, 1:]).sum()], dtype=np.int64
    )


def raw_statistics_batch(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Raw summaries for stacked column-major configurations ``(..., n)``."""
    v = np.asarray(values)
    g = v.reshape(v.shape[:-1] + (cols, rows)).astype(np.int32)
    s0 = g.sum(axis=(-1, -2))
    vert = (g[..., :-1] * g[..., 1:]).sum(axis=(-1, -2))
    hor = (g[..., :-1, :] * g[..., 1:, :]).sum(axis=(-1, -2))
    return np.stack([s0, vert, hor], axis=-1)


def _check_dims(y: Lattice, model: ModelSpec, theta=None):
    if not isinstance(y, Lattice):
        raise TypeError("expected a Lattice")
    if theta is not None:
        return model.check_theta(theta)
    return None


def sufficient_statistics(y: Lattice, model: ModelSpec) -> np.ndarray:
    """Statistic vector ``s(y)`` for ``model`` (each edge counted once)."""
    _check_dims(y, model)
    return (model.P @ raw_statistics(y)).round().astype(np.int64)


def unnormalized_log_likelihood(y: Lattice, theta, model: ModelSpec) -> float:
    """``theta . s(y)``, the log of the unnormalised likelihood."""
    theta = _check_dims(y, model, theta)
    return float(theta @ sufficient_statistics(y, model))


def neighbour_sums(y: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Per-site sums of vertical and horizontal neighbour spins (column-major)."""
    g = np.pad(y.grid.astype(np.int64), 1)
    vert = g[:-2, 1:-1] + g[2:, 1:-1]
    hor = g[1:-1, :-2] + g[1:-1, 2:]
    return vert.flatten(order="F"), hor.flatten(order="F")


def site_conditional_probability(y: Lattice, i: int, theta, model: ModelSpec) -> float:
    """P(y_i = observed value | all other sites)."""
    theta = _check_dims(y, model, theta)
    if not 0 <= i < y.n:
        raise IndexError(f"site {i} outside lattice of {y.n} sites")
    h0, tv, th = model.raw_coefficients(theta)
    vert, hor = neighbour_sums(y)
    a = y.values[i] * (h0 + tv * vert[i] + th * hor[i])
    # e^a / (e^a + e^-a)
    return float(0.5 * (1.0 + np.tanh(a)))
