"""Gibbs samplers for the drift weights under t and Horseshoe-type shrinkage priors.

Each sweep draws, in order, the weights ``beta``, the diffusion parameter
``S S^T``, the local scales and, for the Horseshoe-type prior, the global
scale and the rate hyperparameters.  Every step is an exact draw from its
full conditional.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .errors import DivergenceError, NumericalError, ParameterError
from .randdist import (
    RngStream,
    check_symmetric,
    cholesky_jitter,
    sample_gamma,
    sample_inv_gamma,
    sample_inv_wishart,
    sample_inv_wishart_batch,
    sample_mvnormal,
)
from .rkhs import DriftExpansion, MatrixKernel, diffusion_precisions, gram_matrix
from .sde import Trajectory, _identity_base

log = logging.getLogger(__name__)

BETA_DIVERGENCE = 1e8
SVD_RTOL = 1e-9


def _spd(m, name):
    m = check_symmetric(np.atleast_2d(np.asarray(m, dtype=float)), name, rtol=1e-10)
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ParameterError(f"{name} must be positive definite")
    return m


@dataclass(frozen=True)
class TPriorConfig:
    """Multivariate t prior on each weight, as a normal mixture over local covariances.

    Matrix mode: ``Lambda_i ~ IW_d(dof + d - 1, scale)``.  Scalar mode:
    ``Lambda_i = lambda_i I`` with ``lambda_i ~ IG(dof/2, u/2)``, where ``u`` is
    ``trace(scale)/d``; in one dimension both modes coincide.  The diffusion
    parameter has prior ``S S^T ~ IW_d(sigma_dof, sigma_scale)``.

    ``paper_literal_scale`` replaces the conjugate posterior scale
    ``U + beta_i beta_i^T`` by ``U^{-1} + beta_i beta_i^T``.
    """

    dof: float
    scale: np.ndarray
    sigma_dof: float
    sigma_scale: np.ndarray
    scalar_mode: bool = False
    paper_literal_scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scale", _spd(self.scale, "prior.scale"))
        object.__setattr__(self, "sigma_scale", _spd(self.sigma_scale, "prior.sigma_scale"))
        d = self.sigma_scale.shape[0]
        if not self.dof > 0:
            raise ParameterError("prior.dof must be positive")
        if not self.sigma_dof > d - 1:
            raise ParameterError("prior.sigma_dof must exceed d - 1")
        if not self.scalar_mode and self.scale.shape[0] != d:
            raise ParameterError("prior.scale must be d x d in matrix mode")

    kind = "t"

    @property
    def scalar_shape(self):
        return 0.5 * self.dof

    @property
    def scalar_scale(self):
        return 0.5 * float(np.trace(self.scale)) / self.scale.shape[0]


@dataclass(frozen=True)
class HsPriorConfig:
    """Global-local prior ``beta_i ~ N(0, lambda_i tau I)``.

    ``lambda_i ~ IG(local_shape, theta_i)``, ``theta_i ~ Gamma(a, rate b)`` with
    ``(a, b) = local_rate_hypers``; ``tau ~ IG(global_shape, theta0)``,
    ``theta0 ~ Gamma(a0, rate b0)`` with ``(a0, b0) = global_rate_hypers``.
    The defaults give the classical Horseshoe.
    """

    sigma_dof: float
    sigma_scale: np.ndarray
    local_shape: float = 0.5
    global_shape: float = 0.5
    local_rate_hypers: tuple = (0.5, 1.0)
    global_rate_hypers: tuple = (0.5, 1.0)

    kind = "hs"

    def __post_init__(self):
        object.__setattr__(self, "sigma_scale", _spd(self.sigma_scale, "prior.sigma_scale"))
        object.__setattr__(self, "local_rate_hypers", tuple(float(v) for v in self.local_rate_hypers))
        object.__setattr__(self, "global_rate_hypers", tuple(float(v) for v in self.global_rate_hypers))
        vals = (self.local_shape, self.global_shape) + self.local_rate_hypers + self.global_rate_hypers
        if len(self.local_rate_hypers) != 2 or len(self.global_rate_hypers) != 2:
            raise ParameterError("rate hyperparameters are (shape, rate) pairs")
        if not all(v > 0 for v in vals):
            raise ParameterError("Horseshoe hyperparameters must be positive")
        d = self.sigma_scale.shape[0]
        if not self.sigma_dof > d - 1:
            raise ParameterError("prior.sigma_dof must exceed d - 1")


@dataclass
class ChainState:
    """Parameters of one Gibbs sweep."""

    beta: np.ndarray
    sigma_sq: np.ndarray
    local_scales: np.ndarray
    global_scale: Optional[float] = None
    theta: Optional[np.ndarray] = None
    theta0: Optional[float] = None

    def copy(self):
        return ChainState(
            self.beta.copy(),
            self.sigma_sq.copy(),
            self.local_scales.copy(),
            self.global_scale,
            None if self.theta is None else self.theta.copy(),
            self.theta0,
        )


@dataclass
class PosteriorSamples:
    """Stored post-burn-in states together with what is needed to rebuild expansions."""

    states: list
    burn_in: int
    thin: int
    kernel: MatrixKernel
    centers: np.ndarray
    delta: float
    prior_kind: str = ""

    def __post_init__(self):
        if not self.states:
            raise ParameterError("posterior samples must be nonempty")

    def __len__(self):
        return len(self.states)

    @property
    def betas(self):
        return np.array([s.beta for s in self.states])

    @property
    def sigmas(self):
        return np.array([s.sigma_sq for s in self.states])

    def expansion(self, i):
        return DriftExpansion(self.kernel, self.centers, self.states[i].beta)


# ---------------------------------------------------------------- conditionals


def _prior_precision(prior_cov, md, d):
    prior_cov = np.asarray(prior_cov, dtype=float)
    if prior_cov.ndim == 1:
        if np.any(prior_cov <= 0):
            raise ParameterError("prior variances must be positive")
        return np.diag(1.0 / prior_cov)
    if prior_cov.ndim == 3:
        return linalg.block_diag(*[np.linalg.inv(b) for b in prior_cov])
    if prior_cov.shape != (md, md):
        raise ParameterError("prior covariance has the wrong shape")
    return np.linalg.inv(prior_cov)


def beta_conditional_params(traj, gram, sigma_sq, prior_cov, model=None):
    """Mean and covariance of the Gaussian full conditional of the weights.

    ``C^{-1} = delta K0^T D K0 + eta^{-1}`` and ``mu = C K0^T D theta``, where
    ``D`` holds the inverse step covariances at the left endpoints.

    Parameters
    ----------
    traj : Trajectory
        Its ``x0`` must match the first evaluation point of ``gram``.
    gram : GramSystem
        Evaluation points are the left endpoints, centers the observations.
    sigma_sq : array_like, shape (d, d)
    prior_cov : array_like
        Block-diagonal prior covariance ``eta``: a full ``(md, md)`` matrix, an
        ``(m, d, d)`` stack of blocks, or a vector of diagonal variances.
    model : ModelSpec, optional
        Supplies ``sigma0``; identity when omitted.
    """
    d = gram.out_dim
    m = gram.eval_points.shape[0]
    sigma_sq = np.atleast_2d(np.asarray(sigma_sq, dtype=float))
    base = _identity_base(d) if model is None else model.diffusion_base
    b = base(gram.eval_points)
    cov = b @ sigma_sq @ np.swapaxes(b, -1, -2)
    try:
        prec = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("diffusion covariance is singular") from exc
    k0 = gram.K
    dk = np.einsum("kab,kbj->kaj", prec, k0.reshape(m, d, -1)).reshape(m * d, -1)
    h = k0.T @ dk
    h = 0.5 * (h + h.T)
    r = dk.T @ traj.increments
    precision = traj.delta * h + _prior_precision(prior_cov, k0.shape[1], d)
    precision = 0.5 * (precision + precision.T)
    chol = cholesky_jitter(precision, "weight posterior precision")
    mean = linalg.cho_solve((chol, True), r)
    inv_l = linalg.solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    cov_post = inv_l.T @ inv_l
    return mean, 0.5 * (cov_post + cov_post.T)


def sample_beta(params, rng):
    """Draw ``beta ~ N(mu, C)`` from ``params = (mu, C)``."""
    mu, cov = params
    return sample_mvnormal(mu, cov, rng)


def sigma_posterior_scale(traj, expansion, config, model=None):
    """``V_post = delta^{-1} sum_k sigma0^{-1} e_k e_k^T sigma0^{-T} + V`` with residuals at left endpoints."""
    left = traj.left_endpoints
    d = traj.dim
    base = _identity_base(d) if model is None else model.diffusion_base
    b = np.asarray(expansion.evaluate(left)).reshape(left.shape)
    resid = traj.increment_matrix - traj.delta * b
    try:
        z = np.linalg.solve(base(left), resid[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("sigma0 is singular at a left endpoint") from exc
    return z.T @ z / traj.delta + config.sigma_scale


def sample_sigma(traj, expansion, config, rng, model=None):
    """Draw ``S S^T ~ IW_d(n + m, V_post)``."""
    v_post = sigma_posterior_scale(traj, expansion, config, model)
    return sample_inv_wishart(config.sigma_dof + traj.m, 0.5 * (v_post + v_post.T), rng)


def sample_local_scales_t(beta, config, rng, dim=None):
    """Local covariances under the t prior.

    Matrix mode draws ``Lambda_i ~ IW_d(dof + d, U + beta_i beta_i^T)``; scalar mode
    draws ``lambda_i ~ IG(dof/2 + d/2, u/2 + |beta_i|^2/2)``.
    """
    d = config.sigma_scale.shape[0] if dim is None else dim
    bm = np.asarray(beta, dtype=float).reshape(-1, d)
    if config.scalar_mode:
        shape = config.scalar_shape + 0.5 * d
        scale = config.scalar_scale + 0.5 * np.sum(bm * bm, axis=1)
        return sample_inv_gamma(shape, scale, rng)
    base = np.linalg.inv(config.scale) if config.paper_literal_scale else config.scale
    scales = base[None, :, :] + bm[:, :, None] * bm[:, None, :]
    return sample_inv_wishart_batch(config.dof + d, scales, rng)


def sample_local_scales_hs(beta, tau, theta, config, rng, dim=1):
    """``lambda_k ~ IG((d + 2 alpha)/2, |beta_k|^2 / (2 tau) + theta_k)``."""
    bm = np.asarray(beta, dtype=float).reshape(-1, dim)
    shape = 0.5 * (dim + 2.0 * config.local_shape)
    scale = 0.5 * np.sum(bm * bm, axis=1) / tau + np.asarray(theta, dtype=float)
    return sample_inv_gamma(shape, scale, rng)


def sample_global_scale_hs(beta, local_scales, theta0, config, rng, dim=1):
    """``tau ~ IG((m d + 2 alpha0)/2, theta0 + sum_k |beta_k|^2 / (2 lambda_k))``."""
    bm = np.asarray(beta, dtype=float).reshape(-1, dim)
    m = bm.shape[0]
    shape = 0.5 * (m * dim + 2.0 * config.global_shape)
    scale = theta0 + 0.5 * np.sum(np.sum(bm * bm, axis=1) / np.asarray(local_scales, dtype=float))
    return float(sample_inv_gamma(shape, scale, rng))


def sample_rate_hypers_hs(local_scales, tau, config, rng):
    """``theta_k ~ Gamma(alpha + a, b + 1/lambda_k)`` and ``theta0 ~ Gamma(alpha0 + a0, b0 + 1/tau)``."""
    lam = np.asarray(local_scales, dtype=float)
    a, b = config.local_rate_hypers
    a0, b0 = config.global_rate_hypers
    theta = sample_gamma(config.local_shape + a, b + 1.0 / lam, rng)
    theta0 = float(sample_gamma(config.global_shape + a0, b0 + 1.0 / tau, rng))
    return np.atleast_1d(theta), theta0


# ------------------------------------------------------------- weight sampler


class WeightSampler:
    """Exact draws from the weight full conditional, reusing fixed structure.

    When the kernel is ``k(x, y) B`` with ``B`` positive definite and
    ``sigma0(x) = g(x) M`` for a scalar ``g``, the likelihood precision is
    ``delta (Kt^T Kt) (x) (B A B)`` with ``Kt = diag(1/g) K`` and ``A`` the
    inverse of ``M S S^T M^T``.  A truncated SVD of ``Kt`` (singular values
    below ``1e-9`` of the largest are dropped, which changes the precision by
    less than double rounding) turns each draw into a small dense problem
    solved with the sampler of Bhattacharya, Chakraborty and Mallick (2016).
    Other models fall back to a dense Cholesky of the full precision.
    """

    def __init__(self, traj, kernel, model=None):
        self.traj = traj
        self.kernel = kernel
        d = traj.dim
        self.d = d
        self.m = traj.m
        self.delta = traj.delta
        self.base_fn = _identity_base(d) if model is None else model.diffusion_base
        left = traj.left_endpoints
        self.left = left
        self.term_grams = [(k.matrix(left, traj.states), b) for k, b in kernel.terms]
        self.theta = traj.increment_matrix
        self.bases = self.base_fn(left)
        self.structured = self._detect_structure()
        if self.structured:
            kt = self.term_grams[0][0] / self.g[:, None]
            theta_t = self.theta / self.g[:, None]
            u, s, vt = linalg.svd(kt, full_matrices=False)
            keep = s > SVD_RTOL * s[0]
            self.rank = int(keep.sum())
            self.sv = s[keep]
            self.vt = vt[keep]
            self.ut_theta = u[:, keep].T @ theta_t
        else:
            self.rank = None
            self.gram = gram_matrix(kernel, left, traj.states)

    def _detect_structure(self):
        if len(self.kernel.terms) != 1:
            return False
        b = self.kernel.terms[0][1]
        if np.linalg.eigvalsh(b).min() <= 1e-12 * np.abs(b).max():
            return False
        m0 = self.bases[0]
        norm0 = np.sum(m0 * m0)
        if norm0 == 0:
            return False
        g = np.einsum("kab,ab->k", self.bases, m0) / norm0
        if np.any(g <= 0):
            return False
        err = np.max(np.abs(self.bases - g[:, None, None] * m0))
        if err > 1e-12 * np.sqrt(norm0):
            return False
        self.g = g
        self.m0 = m0
        return True

    def drift_at_left(self, beta):
        bm = beta.reshape(self.m, self.d)
        return sum(k @ bm @ b.T for k, b in self.term_grams)

    def sample(self, sigma_sq, prior_cov, rng):
        """Draw weights given ``S S^T`` and the prior covariance.

        ``prior_cov`` is a length-``m`` vector (isotropic ``p_i I`` blocks) or an
        ``(m, d, d)`` stack.
        """
        prior_cov = np.asarray(prior_cov, dtype=float)
        if self.structured:
            if prior_cov.ndim == 1:
                return self._sample_isotropic(sigma_sq, prior_cov, rng)
            return self._sample_blocks(sigma_sq, prior_cov, rng)
        return self._sample_dense(sigma_sq, prior_cov, rng)

    def _scaled_precision(self, sigma_sq):
        b = self.kernel.terms[0][1]
        a = np.linalg.inv(self.m0 @ sigma_sq @ self.m0.T)
        a = 0.5 * (a + a.T)
        return a, b

    def _sample_isotropic(self, sigma_sq, p, rng):
        a, b = self._scaled_precision(sigma_sq)
        bab = b @ a @ b
        evals, q = np.linalg.eigh(0.5 * (bab + bab.T))
        rhs_rot = self.ut_theta @ a @ b @ q
        d, m, r = self.d, self.m, self.rank
        sp = np.sqrt(p)
        gamma = np.empty((m, d))
        for j in range(d):
            u = sp * rng.standard_normal(m)
            if evals[j] <= 0:
                gamma[:, j] = u
                continue
            scale = np.sqrt(self.delta * evals[j])
            phi = (scale * self.sv)[:, None] * self.vt
            alpha = rhs_rot[:, j] / scale
            v = phi @ u + rng.standard_normal(r)
            phi_p = phi * p
            mat = phi_p @ phi.T
            mat[np.diag_indices(r)] += 1.0
            w = linalg.cho_solve((cholesky_jitter(mat, "weight system"), True), alpha - v)
            gamma[:, j] = u + phi_p.T @ w
        return (gamma @ q.T).reshape(-1)

    def _sample_blocks(self, sigma_sq, blocks, rng):
        a, b = self._scaled_precision(sigma_sq)
        d, m, r = self.d, self.m, self.rank
        bab = b @ a @ b
        lchol = cholesky_jitter(0.5 * (bab + bab.T), "kernel-weighted precision")
        phi = np.sqrt(self.delta) * np.kron(self.sv[:, None] * self.vt, lchol.T)
        alpha_mat = linalg.solve_triangular(lchol, (self.ut_theta @ a @ b).T, lower=True).T
        alpha = alpha_mat.reshape(-1) / np.sqrt(self.delta)
        chols = np.linalg.cholesky(blocks)
        u = (chols @ rng.standard_normal((m, d))[:, :, None])[:, :, 0].reshape(-1)
        v = phi @ u + rng.standard_normal(r * d)
        phi_p = (phi.reshape(r * d, m, d).transpose(1, 0, 2) @ blocks).transpose(1, 0, 2).reshape(r * d, m * d)
        mat = phi_p @ phi.T
        mat = 0.5 * (mat + mat.T)
        mat[np.diag_indices(r * d)] += 1.0
        w = linalg.cho_solve((cholesky_jitter(mat, "weight system"), True), alpha - v)
        return u + phi_p.T @ w

    def _sample_dense(self, sigma_sq, prior_cov, rng):
        if prior_cov.ndim == 1:
            prior_cov = np.repeat(prior_cov, self.d)
        mu, cov = beta_conditional_params(self.traj, self.gram, sigma_sq, prior_cov, _BaseOnly(self.base_fn))
        return sample_mvnormal(mu, cov, rng)


class _BaseOnly:
    def __init__(self, base):
        self.diffusion_base = base


# -------------------------------------------------------------------- chains


def initial_state(prior, m, d):
    """Neutral start: zero weights, unit scales, ``S S^T`` at the prior mean or mode."""
    n, v = prior.sigma_dof, prior.sigma_scale
    sigma = v / (n - d - 1) if n - d - 1 > 0 else v / (n + d + 1)
    if prior.kind == "t":
        local = np.ones(m) if prior.scalar_mode else np.tile(np.eye(d), (m, 1, 1))
        return ChainState(np.zeros(m * d), sigma, local)
    return ChainState(np.zeros(m * d), sigma, np.ones(m), 1.0, np.ones(m), 1.0)


def _prior_cov(state, prior):
    if prior.kind == "hs":
        return state.local_scales * state.global_scale
    return state.local_scales


def run_chain(
    traj,
    kernel,
    prior,
    iters=2000,
    burn_in=500,
    thin=1,
    rng=None,
    model=None,
    x0=None,
    init=None,
    store_local_scales=True,
):
    """Run one Gibbs chain and return the stored post-burn-in states.

    Parameters
    ----------
    traj : Trajectory
    kernel : MatrixKernel
    prior : TPriorConfig or HsPriorConfig
    iters, burn_in, thin : int
        Sweep ``l`` (0-based) is stored when ``l >= burn_in`` and
        ``(l - burn_in) % thin == 0``.
    rng : RngStream
    model : ModelSpec, optional
        Source of the known ``sigma0``; its drift is not used.
    x0 : array_like, optional
        State at ``t_1 - delta``; defaults to the first observation.
    init : ChainState, optional
    """
    iters, burn_in, thin = int(iters), int(burn_in), int(thin)
    if not iters > burn_in >= 0 or thin < 1:
        raise ParameterError("need iters > burn_in >= 0 and thin >= 1")
    if rng is None:
        rng = RngStream(0)
    if prior.sigma_scale.shape[0] != traj.dim:
        raise ParameterError("prior dimension does not match the trajectory")
    if kernel.out_dim != traj.dim:
        raise ParameterError("kernel output dimension does not match the trajectory")
    traj = traj.with_x0(traj.states[0] if x0 is None else x0)
    m, d = traj.m, traj.dim
    sampler = WeightSampler(traj, kernel, model)
    state = initial_state(prior, m, d) if init is None else init.copy()
    stored = []
    for sweep in range(iters):
        try:
            state.beta = sampler.sample(state.sigma_sq, _prior_cov(state, prior), rng)
            if not np.all(np.isfinite(state.beta)) or np.linalg.norm(state.beta) > BETA_DIVERGENCE:
                raise DivergenceError(f"weights diverged at sweep {sweep}", index=sweep)
            expansion = _LeftDrift(sampler, state.beta)
            state.sigma_sq = sample_sigma(traj, expansion, prior, rng, model)
            if prior.kind == "t":
                state.local_scales = sample_local_scales_t(state.beta, prior, rng, dim=d)
            else:
                state.local_scales = np.atleast_1d(
                    sample_local_scales_hs(state.beta, state.global_scale, state.theta, prior, rng, dim=d)
                )
                state.global_scale = sample_global_scale_hs(
                    state.beta, state.local_scales, state.theta0, prior, rng, dim=d
                )
                state.theta, state.theta0 = sample_rate_hypers_hs(state.local_scales, state.global_scale, prior, rng)
        except DivergenceError:
            raise
        except NumericalError as exc:
            raise NumericalError(f"sweep {sweep}: {exc}") from exc
        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            kept = state.copy()
            if not store_local_scales:
                kept.local_scales = np.empty(0)
            stored.append(kept)
    return PosteriorSamples(stored, burn_in, thin, kernel, traj.states.copy(), traj.delta, prior.kind)


class _LeftDrift:
    """Drift values at the left endpoints without re-evaluating the kernel."""

    def __init__(self, sampler, beta):
        self._values = sampler.drift_at_left(beta)
        self._left = sampler.left

    def evaluate(self, x):
        if x is self._left or (x.shape == self._left.shape and np.array_equal(x, self._left)):
            return self._values
        raise ParameterError("left-endpoint drift only available at the left endpoints")


# ------------------------------------------------------------------ summaries


@dataclass
class PosteriorSummary:
    """Posterior means, weight magnitudes and pointwise credible bands."""

    mean_expansion: DriftExpansion
    mean_sigma_sq: np.ndarray
    weight_magnitudes: np.ndarray
    grid: Optional[np.ndarray] = None
    mean_curve: Optional[np.ndarray] = None
    band_lower: Optional[np.ndarray] = None
    band_upper: Optional[np.ndarray] = None
    mean_global_scale: Optional[float] = None


def summarize_posterior(samples, grid=None, level=0.95):
    """Average stored states and, on ``grid``, form equal-tailed credible bands."""
    if samples is None or len(samples.states) == 0:
        raise ParameterError("cannot summarize empty samples")
    betas = samples.betas
    mean_beta = betas.mean(axis=0)
    d = samples.kernel.out_dim
    mean_exp = DriftExpansion(samples.kernel, samples.centers, mean_beta)
    mags = np.linalg.norm(mean_beta.reshape(-1, d), axis=1)
    taus = [s.global_scale for s in samples.states if s.global_scale is not None]
    summary = PosteriorSummary(
        mean_exp,
        samples.sigmas.mean(axis=0),
        mags,
        mean_global_scale=float(np.mean(taus)) if taus else None,
    )
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        pts = grid.reshape(-1, d) if grid.ndim == 1 and d == 1 else np.atleast_2d(grid)
        m = samples.centers.shape[0]
        curves = np.zeros((betas.shape[0], pts.shape[0], d))
        bm = betas.reshape(betas.shape[0], m, d)
        for k, b in samples.kernel.terms:
            kg = k.matrix(pts, samples.centers)
            curves += np.einsum("gm,smd,ed->sge", kg, bm, b)
        tail = 50.0 * (1.0 - level)
        summary.grid = pts
        summary.mean_curve = mean_exp.evaluate(pts).reshape(pts.shape[0], d)
        summary.band_lower = np.percentile(curves, tail, axis=0)
        summary.band_upper = np.percentile(curves, 100.0 - tail, axis=0)
    return summary
