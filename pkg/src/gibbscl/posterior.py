"""Reference posteriors and comparison metrics.

Grid posteriors are normalised with the trapezoidal rule; the evidence of a
dataset is the trapezoidal integral of the unnormalised posterior.  Where the
exact ``log z`` cannot be recomputed at every point (MCMC, importance
sampling), :class:`LogPartitionSurface` interpolates exact values
precomputed on a regular parameter grid.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .exact import as_generator, log_partition_grid
from .lattice import Lattice, ModelSpec, sufficient_statistics

__all__ = [
    "GridCoverageError",
    "GridPosterior",
    "grid_from_log_values",
    "grid_posterior",
    "make_axes",
    "LogPartitionSurface",
    "ISResult",
    "ImportanceSamplingError",
    "evidence_importance_sampling",
    "Chain",
    "rwm_sample",
    "posterior_covariance",
    "kl_divergence_grid",
    "variance_ratio_metrics",
]


class GridCoverageError(ValueError):
    """The grid cuts off posterior mass."""


def _mesh(axes):
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _trapz_nd(values, axes):
    out = values
    for ax in reversed(axes):
        out = trapezoid(out, ax, axis=-1)
    return float(out)


@dataclass
class GridPosterior:
    """A density tabulated on a tensor grid.

    ``log_density`` has shape ``tuple(len(a) for a in axes)``.  It is
    normalised by ``log_norm`` (the trapezoidal log integral of the
    unnormalised values, or a normalising constant supplied from elsewhere).
    """

    axes: list
    log_density: np.ndarray
    log_evidence: float
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def points(self) -> np.ndarray:
        return _mesh(self.axes)

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    def integrate(self, values) -> float:
        return _trapz_nd(np.asarray(values), self.axes)

    @property
    def mass(self) -> float:
        return self.integrate(self.density)

    @property
    def mean(self) -> np.ndarray:
        p = self.density
        pts = self.points
        z = self.mass
        return np.array([self.integrate(p * pts[..., j]) for j in range(self.d)]) / z

    @property
    def covariance(self) -> np.ndarray:
        p = self.density
        pts = self.points - self.mean
        z = self.mass
        d = self.d
        cov = np.empty((d, d))
        for a in range(d):
            for b in range(a, d):
                cov[a, b] = cov[b, a] = self.integrate(p * pts[..., a] * pts[..., b]) / z
        return cov

    @property
    def argmax(self) -> np.ndarray:
        idx = np.unravel_index(np.argmax(self.log_density), self.log_density.shape)
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    @property
    def steps(self) -> np.ndarray:
        return np.array([np.diff(ax).max() for ax in self.axes])

    def check_coverage(self, rel: float = 1e-8) -> None:
        """Raise if the density on the grid boundary exceeds ``rel`` times its peak."""
        ld = self.log_density
        peak = ld.max()
        edge = -np.inf
        for ax in range(ld.ndim):
            edge = max(edge, np.take(ld, 0, axis=ax).max(), np.take(ld, -1, axis=ax).max())
        if edge - peak > np.log(rel):
            mu = self.mean
            sd = np.sqrt(np.diag(self.covariance))
            lo = ", ".join(f"{v:.4g}" for v in mu - 8 * sd)
            hi = ", ".join(f"{v:.4g}" for v in mu + 8 * sd)
            raise GridCoverageError(
                f"posterior mass reaches the grid boundary (edge/peak = {np.exp(edge - peak):.2e}); "
                f"suggested bounds: lower ({lo}), upper ({hi})"
            )

    # -- serialization --------------------------------------------------

    def to_csv(self) -> str:
        """JSON header line (prefixed by ``#``) followed by point/density rows."""
        buf = io.StringIO()
        header = {"d": self.d, "shape": list(self.log_density.shape),
                  "log_evidence": self.log_evidence, **self.meta}
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"theta{j}" for j in range(self.d)] + ["log_density"])
        pts = self.points.reshape(-1, self.d)
        for p, v in zip(pts, self.log_density.reshape(-1)):
            w.writerow([repr(float(x)) for x in p] + [repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridPosterior":
        lines = text.splitlines()
        header = json.loads(lines[0][2:])
        rows = list(csv.reader(lines[2:]))
        data = np.array([[float(x) for x in r] for r in rows])
        shape = tuple(header.pop("shape"))
        d = header.pop("d")
        pts = data[:, :d].reshape(shape + (d,))
        axes = [pts[(0,) * j + (slice(None),) + (0,) * (d - j - 1)][..., j] for j in range(d)]
        log_evidence = header.pop("log_evidence")
        return cls(axes, data[:, d].reshape(shape), log_evidence, header)

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())


def grid_from_log_values(axes, log_values, log_norm: Optional[float] = None, meta=None) -> GridPosterior:
    """Normalise unnormalised log values on a grid.

    With ``log_norm`` given the values are divided by that constant instead of
    their own trapezoidal integral (used to place a density normalised
    elsewhere onto a different grid).
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    lv = np.asarray(log_values, dtype=float)
    if lv.shape != tuple(len(a) for a in axes):
        raise ValueError("log values do not match the grid shape")
    if log_norm is None:
        mx = lv.max()
        log_norm = mx + np.log(_trapz_nd(np.exp(lv - mx), axes))
    return GridPosterior(axes, lv - log_norm, float(log_norm), dict(meta or {}))


def make_axes(centre, half_width, n_points) -> list:
    centre = np.atleast_1d(centre)
    half_width = np.broadcast_to(np.atleast_1d(half_width), centre.shape)
    return [np.linspace(c - h, c + h, n_points) for c, h in zip(centre, half_width)]


def grid_posterior(y: Lattice, model: ModelSpec, axes, prior=None, log_z=None,
                   check: bool = True) -> GridPosterior:
    """Exact posterior ``q(y | theta) / z(theta) p(theta)`` on a tensor grid.

    ``log_z`` may hold precomputed exact log partitions on the same grid (or a
    callable returning them for an array of points); otherwise they are
    computed with the recursion.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != model.d:
        raise ValueError(f"need {model.d} axes for model {model.name}")
    pts = _mesh(axes)
    flat = pts.reshape(-1, model.d)
    if log_z is None:
        lz = log_partition_grid(flat, model, y.rows, y.cols)
    elif callable(log_z):
        lz = np.asarray(log_z(flat), dtype=float)
    else:
        lz = np.asarray(log_z, dtype=float).reshape(-1)
    s = sufficient_statistics(y, model).astype(float)
    lv = flat @ s - lz
    if prior is not None:
        lv = lv + np.array([prior.log_density(t) for t in flat])
    post = grid_from_log_values(axes, lv.reshape(pts.shape[:-1]), meta={"model": model.name})
    if check:
        post.check_coverage()
    return post


class LogPartitionSurface:
    """Cubic interpolation of exact ``log z`` values on a regular grid (d <= 2).

    Points outside the tabulated box evaluate to ``nan``.
    """

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("values do not match the axes")
        if len(self.axes) == 1:
            self._f = CubicSpline(self.axes[0], self.values)
        elif len(self.axes) == 2:
            self._f = RectBivariateSpline(self.axes[0], self.axes[1], self.values, kx=3, ky=3, s=0)
        else:
            raise ValueError("only one- and two-dimensional surfaces are supported")

    @classmethod
    def compute(cls, model: ModelSpec, m: int, mc: int, axes) -> "LogPartitionSurface":
        axes = [np.asarray(a, dtype=float) for a in axes]
        flat = _mesh(axes).reshape(-1, len(axes))
        vals = log_partition_grid(flat, model, m, mc).reshape(tuple(len(a) for a in axes))
        return cls(axes, vals)

    @property
    def lower(self):
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self):
        return np.array([a[-1] for a in self.axes])

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if len(self.axes) == 1:
            out = self._f(pts[:, 0])
        else:
            out = self._f.ev(pts[:, 0], pts[:, 1])
        out = np.asarray(out, dtype=float)
        out[~self.contains(pts)] = np.nan
        return out

    def save(self, path) -> None:
        np.savez(path, values=self.values, **{f"axis{j}": a for j, a in enumerate(self.axes)})

    @classmethod
    def load(cls, path) -> "LogPartitionSurface":
        with np.load(path) as f:
            axes = [f[f"axis{j}"] for j in range(len(f.files) - 1)]
            return cls(axes, f["values"])


# -- importance sampling ----------------------------------------------------


class ImportanceSamplingError(RuntimeError):
    pass


@dataclass
class ISResult:
    log_evidence: float
    se: float  # standard error of the evidence estimate, relative to the estimate
    ess: float
    n_points: int


def evidence_importance_sampling(log_joint: Callable, mean, cov, n_points: int, rng,
                                 min_ess: float = 50.0) -> ISResult:
    """Importance-sampling estimate of ``log p(y)`` with a Gaussian proposal.

    ``log_joint`` maps an ``(N, d)`` array to ``log f(y | theta) + log p(theta)``.
    The estimate is ``log mean_j exp(log_joint - log g)``.
    """
    rng = as_generator(rng)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if np.any(np.linalg.eigvalsh(cov) <= 0):
        raise ValueError("proposal covariance must be positive definite")
    prop = multivariate_normal(mean, cov)
    pts = rng.multivariate_normal(mean, cov, size=n_points, method="cholesky")
    lw = np.asarray(log_joint(pts), dtype=float) - np.atleast_1d(prop.logpdf(pts))
    lw = np.where(np.isnan(lw), -np.inf, lw)
    log_ev = logsumexp(lw) - np.log(n_points)
    wn = np.exp(lw - logsumexp(lw))
    ess = 1.0 / np.sum(wn**2)
    ratio = np.exp(lw - log_ev)
    se = float(np.std(ratio, ddof=1) / np.sqrt(n_points))
    if ess < min_ess:
        raise ImportanceSamplingError(f"effective sample size {ess:.1f} below {min_ess}")
    return ISResult(float(log_ev), se, float(ess), n_points)


# -- random-walk Metropolis -------------------------------------------------


@dataclass
class Chain:
    samples: np.ndarray
    acceptance_rate: float
    burn_in: int
    log_target: np.ndarray = None

    def __len__(self):
        return len(self.samples)

    def to_csv(self, meta=None) -> str:
        buf = io.StringIO()
        header = {"burn_in": self.burn_in, "acceptance_rate": self.acceptance_rate, **(meta or {})}
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        d = self.samples.shape[1]
        w.writerow([f"theta{j}" for j in range(d)])
        for row in self.samples:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def rwm_sample(log_target: Callable, init, iterations: int, burn_in: int, scale, rng) -> Chain:
    """Gaussian random-walk Metropolis.

    ``scale`` is a proposal standard deviation (scalar or per component) or a
    full proposal covariance matrix.  The first ``burn_in`` states are dropped.
    """
    rng = as_generator(rng)
    x = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    d = x.size
    scale = np.asarray(scale, dtype=float)
    if scale.ndim == 2:
        chol = np.linalg.cholesky(scale)
    else:
        sd = np.broadcast_to(np.atleast_1d(scale), (d,))
        if np.any(sd <= 0):
            raise ValueError("proposal scale must be positive")
        chol = np.diag(sd)
    if not 0 <= burn_in < iterations:
        raise ValueError("burn-in must lie in [0, iterations)")
    lp = float(log_target(x))
    if not np.isfinite(lp):
        raise ValueError("log target is not finite at the initial state")
    out = np.empty((iterations, d))
    lps = np.empty(iterations)
    steps = rng.standard_normal((iterations, d)) @ chol.T
    logu = np.log(rng.random(iterations))
    accepted = 0
    for t in range(iterations):
        prop = x + steps[t]
        lq = float(log_target(prop))
        if np.isfinite(lq) and logu[t] < lq - lp:
            x, lp = prop, lq
            accepted += 1
        out[t] = x
        lps[t] = lp
    if accepted == 0:
        raise RuntimeError("no proposal accepted; the proposal scale is badly set")
    return Chain(out[burn_in:], accepted / iterations, burn_in, lps[burn_in:])


def posterior_covariance(chain) -> np.ndarray:
    samples = chain.samples if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if samples.shape[0] < 100:
        raise ValueError("need at least 100 samples")
    if np.all(samples == samples[0]):
        raise ValueError("degenerate chain: all samples identical")
    return np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))


# -- metrics --------------------------------------------------------------


def kl_divergence_grid(p: GridPosterior, q: GridPosterior) -> float:
    """``KL(p || q)`` by trapezoidal quadrature on a shared grid."""
    if p.d != q.d or any(a.shape != b.shape or not np.allclose(a, b) for a, b in zip(p.axes, q.axes)):
        raise ValueError("densities are tabulated on different grids")
    dens = p.density
    support = dens > 0
    if np.any(support & ~np.isfinite(q.log_density)):
        raise ValueError("q vanishes where p has mass")
    integrand = np.where(support, dens * (p.log_density - np.where(support, q.log_density, 0.0)), 0.0)
    return p.integrate(integrand)


def variance_ratio_metrics(K_cl, K_true) -> dict:
    """Ratio summaries of an approximate posterior covariance against the truth.

    Returns ``ratio`` (scalar case only), ``frobenius_ratio``
    ``||K_cl K_true^-1||_F / sqrt(d)`` and ``squared_error``
    ``||I - K_cl K_true^-1||_F^2``.
    """
    K_cl = np.atleast_2d(np.asarray(K_cl, dtype=float))
    K_true = np.atleast_2d(np.asarray(K_true, dtype=float))
    d = K_true.shape[0]
    if np.linalg.cond(K_true) > 1e14:
        raise np.linalg.LinAlgError("true covariance is singular")
    R = np.linalg.solve(K_true.T, K_cl.T).T  # K_cl K_true^-1
    out = {
        "frobenius_ratio": float(np.linalg.norm(R) / np.sqrt(d)),
        "squared_error": float(np.linalg.norm(np.eye(d) - R) ** 2),
    }
    out["ratio"] = float(R[0, 0]) if d == 1 else None
    return out
