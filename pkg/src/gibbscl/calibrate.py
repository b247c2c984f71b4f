"""Posterior gradient/Hessian identities, MAP estimation and adjustments.

For an exponential-family likelihood the log-posterior derivatives are
moments of the sufficient statistics:

    grad log p(theta | y) = s(y) - E[s(y)] + grad log p(theta)
    hess log p(theta | y) = -Cov[s(y)]     + hess log p(theta)

and the same holds block by block for the conditional composite likelihood.
Moments are estimated from exact draws (or, on small lattices, computed from
the exact recursion), which drives a stochastic-gradient BFGS search for the
two modes and then the mean, magnitude and curvature adjustments.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .composite import CompositeLikelihood
from .exact import as_generator, exact_mean_stats, exact_samples, exact_stat_moments
from .lattice import Lattice, ModelSpec, raw_statistics_batch, sufficient_statistics

__all__ = [
    "UniformPrior",
    "GaussianPrior",
    "MomentEstimates",
    "BlockMoments",
    "mc_full_moments",
    "exact_full_moments",
    "mc_block_moments",
    "exact_block_moment_sums",
    "grad_log_posterior",
    "hessian_log_posterior",
    "grad_log_cl_posterior",
    "hessian_log_cl_posterior",
    "BFGSConfig",
    "OptimResult",
    "MapEstimates",
    "ConvergenceError",
    "stochastic_bfgs",
    "bfgs_map",
    "WEIGHT_OPTIONS",
    "scalar_magnitude_weight",
    "matrix_magnitude_weight",
    "all_magnitude_weights",
    "NotNegativeDefiniteError",
    "CurvatureMatrix",
    "curvature_matrix",
    "mean_adjusted_log_posterior",
    "magnitude_adjusted_log_posterior",
    "curvature_adjusted_log_posterior",
    "CalibrationResult",
    "calibrate",
]


# -- priors ---------------------------------------------------------------


@dataclass(frozen=True)
class UniformPrior:
    """Flat prior, optionally restricted to a box."""

    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    def log_density(self, theta) -> float:
        theta = np.atleast_1d(theta)
        if self.lower is not None and np.any(theta < np.asarray(self.lower)):
            return -np.inf
        if self.upper is not None and np.any(theta > np.asarray(self.upper)):
            return -np.inf
        if self.lower is not None and self.upper is not None:
            return -float(np.sum(np.log(np.asarray(self.upper) - np.asarray(self.lower))))
        return 0.0

    def grad(self, theta) -> np.ndarray:
        return np.zeros(np.atleast_1d(theta).shape)

    def hessian(self, theta) -> np.ndarray:
        d = np.atleast_1d(theta).size
        return np.zeros((d, d))


@dataclass(frozen=True)
class GaussianPrior:
    mean: tuple
    cov: tuple

    def _mc(self):
        return np.atleast_1d(np.asarray(self.mean, float)), np.atleast_2d(np.asarray(self.cov, float))

    def log_density(self, theta) -> float:
        mu, cov = self._mc()
        r = np.atleast_1d(theta) - mu
        _, logdet = np.linalg.slogdet(2 * np.pi * cov)
        return float(-0.5 * (r @ np.linalg.solve(cov, r)) - 0.5 * logdet)

    def grad(self, theta) -> np.ndarray:
        mu, cov = self._mc()
        return -np.linalg.solve(cov, np.atleast_1d(theta) - mu)

    def hessian(self, theta) -> np.ndarray:
        return -np.linalg.inv(self._mc()[1])


_FLAT = UniformPrior()


# -- moments --------------------------------------------------------------


@dataclass
class MomentEstimates:
    """Mean and covariance of a statistic vector.

    ``n_draws`` is ``None`` when the moments are exact.
    """

    mean: np.ndarray
    covariance: np.ndarray
    n_draws: Optional[int] = None

    @classmethod
    def from_draws(cls, stats) -> "MomentEstimates":
        stats = np.asarray(stats, dtype=float)
        if stats.ndim != 2 or stats.shape[0] < 2:
            raise ValueError("need a (n_draws >= 2, d) array of statistics")
        cov = np.atleast_2d(np.cov(stats, rowvar=False, ddof=1))
        return cls(stats.mean(axis=0), cov, stats.shape[0])

    @property
    def mean_se(self) -> np.ndarray:
        """Monte Carlo standard error of ``mean`` (zeros when exact)."""
        if self.n_draws is None:
            return np.zeros_like(self.mean)
        return np.sqrt(np.diag(self.covariance) / self.n_draws)


@dataclass
class BlockMoments:
    """Per-block moments of the conditional statistics, summed over blocks."""

    mean_sum: np.ndarray
    covariance_sum: np.ndarray
    n_draws: Optional[int] = None
    mean_se: np.ndarray = None

    def __post_init__(self):
        if self.mean_se is None:
            self.mean_se = np.zeros_like(self.mean_sum)


def mc_full_moments(theta, model: ModelSpec, m: int, mc: int, n_draws: int, rng) -> MomentEstimates:
    """Sample moments of ``s(y)`` over ``n_draws`` exact draws."""
    if n_draws < 2:
        raise ValueError("need at least two draws")
    draws = exact_samples(theta, model, m, mc, n_draws, rng)
    return MomentEstimates.from_draws(model.project(raw_statistics_batch(draws, m, mc)))


def exact_full_moments(theta, model: ModelSpec, m: int, mc: int) -> MomentEstimates:
    _, cov = exact_stat_moments(theta, model, m, mc)
    return MomentEstimates(exact_mean_stats(theta, model, m, mc), cov, None)


def mc_block_moments(cl: CompositeLikelihood, theta, n_draws: int, rng) -> BlockMoments:
    """Per-block sample moments, summed in canonical corner order."""
    stats = cl.stat_draws(theta, n_draws, rng)  # (C, D, d)
    order = np.argsort(cl.blocks.corners, kind="stable")
    stats = stats[order]
    means = stats.mean(axis=1)
    dev = stats - means[:, None, :]
    covs = np.einsum("cni,cnj->cij", dev, dev) / (n_draws - 1)
    cov_sum = covs.sum(axis=0)
    se = np.sqrt(np.diag(covs.sum(axis=0)) / n_draws)
    return BlockMoments(means.sum(axis=0), cov_sum, n_draws, se)


def exact_block_moment_sums(cl: CompositeLikelihood, theta, h: float = 1e-4,
                            h_mean: float = 1e-4) -> BlockMoments:
    """Summed block means and covariances by differencing the block log partitions.

    Means use central differences with step ``h_mean``; covariances use the
    second-difference stencil with step ``h``.
    """
    theta = cl.model.check_theta(theta)
    d = theta.size
    E = np.eye(d)
    pts = [theta]
    for a in range(d):
        pts += [theta + h * E[a], theta - h * E[a]]
        for b in range(a + 1, d):
            pts += [theta + h * (E[a] + E[b]), theta + h * (E[a] - E[b]),
                    theta - h * (E[a] - E[b]), theta - h * (E[a] + E[b])]
    for a in range(d):
        pts += [theta + h_mean * E[a], theta - h_mean * E[a]]
    lz = cl.block_log_partitions(np.array(pts)).sum(axis=1)
    f0 = lz[0]
    mean = np.empty(d)
    cov = np.empty((d, d))
    idx = 1
    for a in range(d):
        fp, fm = lz[idx], lz[idx + 1]
        idx += 2
        mean[a] = (fp - fm) / (2 * h)
        cov[a, a] = (fp - 2 * f0 + fm) / h**2
        for b in range(a + 1, d):
            pp, pm, mp, mm = lz[idx:idx + 4]
            idx += 4
            cov[a, b] = cov[b, a] = (pp - pm - mp + mm) / (4 * h**2)
    for a in range(d):
        mean[a] = (lz[idx] - lz[idx + 1]) / (2 * h_mean)
        idx += 2
    return BlockMoments(mean, cov, None)


def _check_len(vec, d, what):
    vec = np.atleast_1d(np.asarray(vec, dtype=float))
    if vec.shape != (d,):
        raise ValueError(f"{what} has shape {vec.shape}, expected ({d},)")
    return vec


def grad_log_posterior(theta, s_obs, moments: MomentEstimates, prior=None) -> np.ndarray:
    """``s(y) - E[s(y)] + grad log p(theta)``."""
    prior = prior or _FLAT
    d = np.asarray(moments.mean).size
    theta = _check_len(theta, d, "theta")
    s_obs = _check_len(s_obs, d, "observed statistics")
    return s_obs - moments.mean + prior.grad(theta)


def hessian_log_posterior(theta, moments: MomentEstimates, prior=None) -> np.ndarray:
    """``-Cov[s(y)] + hess log p(theta)``."""
    prior = prior or _FLAT
    d = np.asarray(moments.mean).size
    theta = _check_len(theta, d, "theta")
    cov = np.atleast_2d(moments.covariance)
    if cov.shape != (d, d):
        raise ValueError("covariance has the wrong shape")
    H = -cov + prior.hessian(theta)
    return 0.5 * (H + H.T)


def grad_log_cl_posterior(theta, s_blocks_total, moments: BlockMoments, prior=None) -> np.ndarray:
    """``sum_i [s(y_Ai | y_-Ai) - E s(y_Ai | y_-Ai)] + grad log p(theta)``."""
    prior = prior or _FLAT
    d = np.asarray(moments.mean_sum).size
    theta = _check_len(theta, d, "theta")
    s = _check_len(s_blocks_total, d, "block statistics")
    return s - moments.mean_sum + prior.grad(theta)


def hessian_log_cl_posterior(theta, moments: BlockMoments, prior=None) -> np.ndarray:
    prior = prior or _FLAT
    d = np.asarray(moments.mean_sum).size
    theta = _check_len(theta, d, "theta")
    H = -np.atleast_2d(moments.covariance_sum) + prior.hessian(theta)
    return 0.5 * (H + H.T)


# -- stochastic BFGS --------------------------------------------------------


class ConvergenceError(RuntimeError):
    pass


@dataclass
class BFGSConfig:
    """Settings for the stochastic-gradient BFGS search.

    The search stops once the gradient norm falls below ``stop_factor`` times
    the norm of its Monte Carlo standard error (or below ``grad_tol`` when the
    moments are exact).
    """

    n_grad_draws: int = 100
    max_iter: int = 200
    stop_factor: float = 2.0
    grad_tol: float = 1e-6
    max_step: float = 0.25
    moment_mode: str = "mc"  # "mc" or "exact"
    strict: bool = False

    def __post_init__(self):
        if self.moment_mode not in ("mc", "exact"):
            raise ValueError("moment_mode must be 'mc' or 'exact'")
        if self.n_grad_draws < 2 or self.max_iter < 1:
            raise ValueError("draw and iteration counts must be positive")


@dataclass
class OptimResult:
    theta: np.ndarray
    grad: np.ndarray
    grad_norm: float
    threshold: float
    n_iter: int
    converged: bool
    n_skipped_updates: int = 0


# gradient oracle: theta, rng -> (gradient, standard error, covariance estimate)
GradientOracle = Callable[[np.ndarray, np.random.Generator], tuple]


def stochastic_bfgs(oracle: GradientOracle, theta0, config: BFGSConfig, rng, label: str = "") -> OptimResult:
    """Maximise a concave function from noisy gradients with BFGS updates.

    The inverse curvature starts from the inverse of the covariance returned
    by the first oracle call.  Curvature pairs that are not consistent with a
    concave objective are skipped; steps are capped at ``config.max_step``.
    """
    rng = as_generator(rng)
    theta = np.array(theta0, dtype=float)
    d = theta.size
    g, se, K = oracle(theta, rng)
    try:
        Binv = np.linalg.inv(K)
        if np.any(np.linalg.eigvalsh(0.5 * (Binv + Binv.T)) <= 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        Binv = np.eye(d) / max(float(np.trace(np.atleast_2d(K))) / d, 1.0)
    skipped = 0

    def threshold(se_vec):
        return max(config.stop_factor * float(np.linalg.norm(se_vec)), config.grad_tol)

    for it in range(config.max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < threshold(se):
            return OptimResult(theta, g, gnorm, threshold(se), it, True, skipped)
        step = Binv @ g
        snorm = np.linalg.norm(step)
        if snorm > config.max_step:
            step *= config.max_step / snorm
        theta_new = theta + step
        g_new, se_new, _ = oracle(theta_new, rng)
        s = theta_new - theta
        yv = g - g_new  # gradient change of the minimised negative objective
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            I = np.eye(d)
            V = I - rho * np.outer(s, yv)
            Binv = V @ Binv @ V.T + rho * np.outer(s, s)
        else:
            skipped += 1
        theta, g, se = theta_new, g_new, se_new
    gnorm = float(np.linalg.norm(g))
    converged = gnorm < threshold(se)
    if not converged:
        msg = (f"{label or 'BFGS'} did not converge in {config.max_iter} iterations "
               f"(|grad| = {gnorm:.3g}, threshold {threshold(se):.3g})")
        if config.strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return OptimResult(theta, g, gnorm, threshold(se), config.max_iter, converged, skipped)


@dataclass
class MapEstimates:
    """Estimated modes of the composite and full posteriors."""

    theta_cl: np.ndarray
    theta_full: np.ndarray
    cl: OptimResult
    full: OptimResult

    @property
    def converged(self) -> bool:
        return self.cl.converged and self.full.converged


def _cl_oracle(cl: CompositeLikelihood, config: BFGSConfig, prior):
    def oracle(theta, rng):
        if config.moment_mode == "exact":
            mom = exact_block_moment_sums(cl, theta)
        else:
            mom = mc_block_moments(cl, theta, config.n_grad_draws, rng)
        g = grad_log_cl_posterior(theta, cl.stat_total, mom, prior)
        return g, mom.mean_se, mom.covariance_sum - prior.hessian(theta)
    return oracle


def _full_oracle(s_obs, model, m, mc, config: BFGSConfig, prior):
    def oracle(theta, rng):
        if config.moment_mode == "exact":
            mom = exact_full_moments(theta, model, m, mc)
        else:
            mom = mc_full_moments(theta, model, m, mc, config.n_grad_draws, rng)
        g = grad_log_posterior(theta, s_obs, mom, prior)
        return g, mom.mean_se, mom.covariance - prior.hessian(theta)
    return oracle


def bfgs_map(y: Lattice, model: ModelSpec, blocks, config: BFGSConfig = None, rng=None,
             prior=None, theta0=None) -> MapEstimates:
    """Two-stage MAP search: composite posterior first, then the full one from there."""
    config = config or BFGSConfig()
    prior = prior or _FLAT
    rng = as_generator(rng)
    cl = blocks if isinstance(blocks, CompositeLikelihood) else CompositeLikelihood(y, blocks, model)
    start = np.zeros(model.d) if theta0 is None else model.check_theta(theta0)
    res_cl = stochastic_bfgs(_cl_oracle(cl, config, prior), start, config, rng, "composite MAP search")
    s_obs = sufficient_statistics(y, model).astype(float)
    res_full = stochastic_bfgs(_full_oracle(s_obs, model, y.rows, y.cols, config, prior),
                               res_cl.theta, config, rng, "full MAP search")
    return MapEstimates(res_cl.theta, res_full.theta, res_cl, res_full)


# -- magnitude adjustment ---------------------------------------------------

WEIGHT_OPTIONS = (1, 2, 3, 4, 5)


def scalar_magnitude_weight(K_full, K_cl_sum) -> float:
    """``Var(s(y)) / sum_i Var(s(y_Ai | y_-Ai))`` for a scalar parameter."""
    kf = np.asarray(K_full, dtype=float).reshape(-1)
    kc = np.asarray(K_cl_sum, dtype=float).reshape(-1)
    if kf.size != 1 or kc.size != 1:
        raise ValueError("scalar weight needs 1x1 variances")
    if not kc[0] > 0:
        raise ZeroDivisionError("block variance sum is not positive")
    w = kf[0] / kc[0]
    if not (np.isfinite(w) and w > 0):
        raise ValueError(f"nonpositive magnitude weight {w}")
    return float(w)


def matrix_magnitude_weight(K_full, K_cl_sum, option: int) -> float:
    """Scalar weight ``w`` summarising ``K_full ~ w * K_cl_sum``.

    1: determinant ratio to the power 1/d; 2: tr(K Kcl^-1)/d; 3: mean of the
    diagonal ratios; 4: trace ratio; 5: sqrt(tr K^2 / tr Kcl^2).
    """
    K = np.atleast_2d(np.asarray(K_full, dtype=float))
    Kc = np.atleast_2d(np.asarray(K_cl_sum, dtype=float))
    if K.shape != Kc.shape or K.shape[0] != K.shape[1]:
        raise ValueError("covariance matrices must be square and of equal size")
    d = K.shape[0]
    if option in (1, 2, 5):
        if np.linalg.cond(Kc) > 1e14:
            raise np.linalg.LinAlgError("summed block covariance is singular")
    if option == 1:
        w = (np.linalg.det(K) / np.linalg.det(Kc)) ** (1.0 / d)
    elif option == 2:
        w = np.trace(np.linalg.solve(Kc.T, K.T).T) / d
    elif option == 3:
        w = np.mean(np.diag(K) / np.diag(Kc))
    elif option == 4:
        w = np.trace(K) / np.trace(Kc)
    elif option == 5:
        w = np.sqrt(np.trace(K @ K) / np.trace(Kc @ Kc))
    else:
        raise ValueError(f"weight option must be one of {WEIGHT_OPTIONS}, got {option}")
    if not (np.isfinite(w) and w > 0):
        raise ValueError(f"option {option} gave nonpositive weight {w}; check the covariance estimates")
    return float(w)


def all_magnitude_weights(K_full, K_cl_sum) -> dict[int, float]:
    return {opt: matrix_magnitude_weight(K_full, K_cl_sum, opt) for opt in WEIGHT_OPTIONS}


# -- curvature adjustment ---------------------------------------------------


class NotNegativeDefiniteError(ValueError):
    """A Hessian estimate is not negative definite (increase the draw count)."""


@dataclass
class CurvatureMatrix:
    W: np.ndarray
    residual: float
    orientation: str


def _neg_cholesky(H, name):
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Hs = 0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(Hs)
    if np.any(eig >= 0):
        raise NotNegativeDefiniteError(
            f"{name} has a nonnegative eigenvalue ({eig.max():.3g}); the covariance "
            "estimate is too noisy, increase the number of draws"
        )
    return np.linalg.cholesky(-Hs)


def curvature_matrix(H_full, H_cl, orientation: str = "upper") -> CurvatureMatrix:
    """Triangular ``W`` with ``W^T H_cl W = H_full``.

    With ``-H_full = L L^T`` and ``-H_cl = M M^T`` (lower Cholesky factors)
    the default choice ``W = M^-T L^T`` is upper triangular.  ``orientation =
    "lower"`` uses the reversed-order factorisation instead, which gives a
    lower triangular solution of the same identity.
    """
    H_full = np.atleast_2d(np.asarray(H_full, dtype=float))
    H_cl = np.atleast_2d(np.asarray(H_cl, dtype=float))
    if H_full.shape != H_cl.shape:
        raise ValueError("Hessians must have the same shape")
    if orientation == "upper":
        L = _neg_cholesky(H_full, "full Hessian")
        M = _neg_cholesky(H_cl, "composite Hessian")
        W = np.linalg.solve(M.T, L.T)
        W = np.triu(W)
    elif orientation == "lower":
        J = np.eye(H_full.shape[0])[::-1]
        L = J @ _neg_cholesky(J @ H_full @ J, "full Hessian") @ J  # upper, -H = L L^T
        M = J @ _neg_cholesky(J @ H_cl @ J, "composite Hessian") @ J
        W = np.tril(np.linalg.solve(M.T, L.T))
    else:
        raise ValueError("orientation must be 'upper' or 'lower'")
    resid = np.linalg.norm(W.T @ H_cl @ W - H_full) / np.linalg.norm(H_full)
    return CurvatureMatrix(W, float(resid), orientation)


# -- adjusted posteriors ----------------------------------------------------


def mean_adjusted_log_posterior(theta, maps: MapEstimates, cl_log_posterior) -> float:
    """Composite log posterior shifted so that its mode sits at ``theta_full``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return cl_log_posterior(theta - maps.theta_full + maps.theta_cl)


def magnitude_adjusted_log_posterior(theta, maps: MapEstimates, weight: float, cl_log_likelihood,
                                     prior=None) -> float:
    """Mean shift plus tempering of the composite likelihood by ``weight``."""
    prior = prior or _FLAT
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    shifted = theta - maps.theta_full + maps.theta_cl
    return weight * cl_log_likelihood(shifted) + prior.log_density(theta)


def curvature_adjusted_log_posterior(theta, maps: MapEstimates, W, cl_log_posterior,
                                     mean_shift: bool = True) -> float:
    """Composite log posterior at ``theta_cl + W (theta - centre)``.

    The centre is ``theta_full`` with the mean shift (mode moves to
    ``theta_full``) and ``theta_cl`` without it.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    W = getattr(W, "W", W)
    centre = maps.theta_full if mean_shift else maps.theta_cl
    return cl_log_posterior(maps.theta_cl + np.atleast_2d(W) @ (theta - centre))


# -- full calibration -------------------------------------------------------


@dataclass
class CalibrationResult:
    theta_full: np.ndarray
    theta_cl: np.ndarray
    K_full: np.ndarray
    K_cl_sum: np.ndarray
    H_full: np.ndarray
    H_cl: np.ndarray
    weights: dict
    W: Optional[np.ndarray]
    W_residual: Optional[float]
    n_grad_draws: int
    n_cov_draws: int
    map_iterations: tuple
    converged: bool
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, np.ndarray):
                val = val.tolist()
            if key == "weights":
                val = {str(k): float(v) for k, v in val.items()}
            out[key] = val
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def calibrate(y: Lattice, model: ModelSpec, blocks, n_cov_draws: int = 50_000,
              config: BFGSConfig = None, rng=None, prior=None, seed=None,
              orientation: str = "upper") -> CalibrationResult:
    """MAP pair, covariance estimates at each mode, magnitude weights and ``W``.

    The full covariance is estimated at the full-posterior mode and the summed
    block covariance at the composite mode.
    """
    config = config or BFGSConfig()
    prior = prior or _FLAT
    rng = as_generator(rng if rng is not None else seed)
    cl = blocks if isinstance(blocks, CompositeLikelihood) else CompositeLikelihood(y, blocks, model)
    maps = bfgs_map(y, model, cl, config, rng, prior)
    if config.moment_mode == "exact":
        full = exact_full_moments(maps.theta_full, model, y.rows, y.cols)
        blk = exact_block_moment_sums(cl, maps.theta_cl)
    else:
        full = mc_full_moments(maps.theta_full, model, y.rows, y.cols, n_cov_draws, rng)
        blk = mc_block_moments(cl, maps.theta_cl, n_cov_draws, rng)
    H_full = hessian_log_posterior(maps.theta_full, full, prior)
    H_cl = hessian_log_cl_posterior(maps.theta_cl, blk, prior)
    K_full = np.atleast_2d(full.covariance)
    K_cl = np.atleast_2d(blk.covariance_sum)
    if model.d == 1:
        weights = {0: scalar_magnitude_weight(K_full, K_cl)}
        weights.update(all_magnitude_weights(K_full, K_cl))
    else:
        weights = all_magnitude_weights(K_full, K_cl)
    try:
        cm = curvature_matrix(H_full, H_cl, orientation)
        W, resid = cm.W, cm.residual
    except NotNegativeDefiniteError:
        W, resid = None, None
    return CalibrationResult(
        theta_full=maps.theta_full, theta_cl=maps.theta_cl,
        K_full=K_full, K_cl_sum=K_cl, H_full=H_full, H_cl=H_cl,
        weights=weights, W=W, W_residual=resid,
        n_grad_draws=config.n_grad_draws, n_cov_draws=n_cov_draws,
        map_iterations=(maps.cl.n_iter, maps.full.n_iter),
        converged=maps.converged, seed=seed,
    )
