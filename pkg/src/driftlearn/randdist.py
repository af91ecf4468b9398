"""Seeded random variates and log-densities used by the samplers.

Conventions
-----------
* ``Gamma(a, b)`` is parameterized by shape ``a`` and *rate* ``b`` (mean ``a/b``).
* ``IG(a, s)`` is parameterized by shape ``a`` and *scale* ``s``, with density
  proportional to ``x**-(a+1) * exp(-s/x)``; equivalently ``1 / Gamma(a, rate=s)``.
* ``IW_d(nu, Psi)`` has density proportional to
  ``det(L)**(-(nu+d+1)/2) * exp(-tr(Psi L^{-1}) / 2)`` and mean ``Psi/(nu-d-1)``.
  In one dimension ``IW_1(nu, psi) == IG(nu/2, psi/2)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .errors import DomainError, NumericalError, ParameterError

_JITTER = 1e-10


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with the same pair produce bit-identical draws; distinct
    ``stream_id`` values are spawned children of the same seed sequence and
    are statistically independent.
    """

    def __init__(self, seed, stream_id=0):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def standard_gamma(self, shape, size=None):
        """Unit-rate gamma draws; shapes below one use the boost-by-one transform."""
        shape = np.asarray(shape, dtype=float)
        small = shape < 1.0
        if not np.any(small):
            return self.generator.standard_gamma(shape, size)
        boosted = np.where(small, shape + 1.0, shape)
        g = self.generator.standard_gamma(boosted, size)
        u = self.generator.random(np.shape(g))
        with np.errstate(divide="ignore"):
            factor = np.where(small, u ** (1.0 / np.where(small, shape, 1.0)), 1.0)
        return g * factor

    def spawn(self, stream_id):
        return RngStream(self.seed, stream_id)


def as_rng(rng):
    """Accept an :class:`RngStream`, an integer seed, or ``None``."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


def check_symmetric(m, name="matrix", rtol=1e-12):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"{name} must be square, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > rtol * scale:
        raise ParameterError(f"{name} is not symmetric")
    return m


def cholesky_jitter(m, name="matrix"):
    """Lower Cholesky factor, retrying once with ``1e-10*trace/d`` added to the diagonal."""
    m = np.asarray(m, dtype=float)
    try:
        return linalg.cholesky(m, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        pass
    d = m.shape[0]
    bump = _JITTER * np.trace(m) / d
    if not np.isfinite(bump) or bump <= 0:
        raise NumericalError(f"Cholesky factorization of {name} failed")
    try:
        return linalg.cholesky(m + bump * np.eye(d), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of {name} failed after jitter") from exc


def _psd_factor(cov):
    """Square-root factor ``F`` with ``F F^T = cov`` for symmetric psd ``cov``."""
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return cholesky_jitter(cov, "covariance")
    except NumericalError:
        w, v = np.linalg.eigh(cov)
        if w.min() < -np.sqrt(np.finfo(float).eps) * np.abs(w).max():
            raise
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_mvnormal(mean, cov, rng, size=None):
    """Draw from ``N_d(mean, cov)``.

    Parameters
    ----------
    mean : array_like, shape (d,)
    cov : array_like, shape (d, d)
        Symmetric positive semi-definite covariance.
    rng : RngStream
    size : int, optional
        Number of draws; the result then has shape ``(size, d)``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = check_symmetric(np.atleast_2d(np.asarray(cov, dtype=float)), "cov", rtol=1e-10)
    if cov.shape[0] != mean.shape[0]:
        raise ParameterError("mean and cov dimensions disagree")
    factor = _psd_factor(cov)
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, mean.shape[0]))
    out = mean + z @ factor.T
    return out[0] if size is None else out


def sample_mvnormal_precision(rhs, precision_chol, rng):
    """Draw from ``N(P^{-1} rhs, P^{-1})`` given the lower Cholesky factor of ``P``."""
    mu = linalg.cho_solve((precision_chol, True), rhs)
    z = rng.standard_normal(rhs.shape[0])
    return mu + linalg.solve_triangular(precision_chol, z, lower=True, trans="T")


def sample_gamma(shape, rate, rng, size=None):
    """Gamma draws with shape ``a`` and rate ``b``."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0) or not (np.all(np.isfinite(shape)) and np.all(np.isfinite(rate))):
        raise ParameterError("gamma shape and rate must be positive and finite")
    if size is None:
        size = np.broadcast(shape, rate).shape or None
    return rng.standard_gamma(shape, size) / rate


def sample_inv_gamma(shape, scale, rng, size=None):
    """Inverse-gamma draws ``1 / Gamma(shape, rate=scale)``."""
    shape = np.asarray(shape, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if np.any(shape <= 0) or np.any(scale <= 0) or not (np.all(np.isfinite(shape)) and np.all(np.isfinite(scale))):
        raise ParameterError("inverse-gamma shape and scale must be positive and finite")
    return 1.0 / sample_gamma(shape, scale, rng, size)


def _bartlett_inverse_wishart(dof, scale_chol, rng):
    d = scale_chol.shape[0]
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(2.0 * rng.standard_gamma(0.5 * (dof - np.arange(d))))
    rows, cols = np.tril_indices(d, -1)
    a[rows, cols] = rng.standard_normal(rows.size)
    # W = R^{-T} A A^T R^{-1} ~ Wishart(dof, Psi^{-1}); the draw is W^{-1} = X^T X.
    x = linalg.solve_triangular(a, scale_chol.T, lower=True)
    return x.T @ x


def sample_inv_wishart(dof, scale, rng, size=None):
    """Inverse-Wishart draws ``IW_d(dof, scale)`` via the Bartlett decomposition.

    Parameters
    ----------
    dof : float
        Degrees of freedom, must exceed ``d - 1``.
    scale : array_like, shape (d, d)
        Symmetric positive-definite scale matrix ``Psi``.
    rng : RngStream
    size : int, optional
        Number of draws; the result then has shape ``(size, d, d)``.
    """
    scale = check_symmetric(np.atleast_2d(np.asarray(scale, dtype=float)), "scale", rtol=1e-10)
    d = scale.shape[0]
    if not dof > d - 1:
        raise ParameterError(f"inverse-Wishart dof must exceed d-1={d - 1}, got {dof}")
    r = cholesky_jitter(scale, "inverse-Wishart scale")
    if size is None:
        return _bartlett_inverse_wishart(dof, r, rng)
    return np.stack([_bartlett_inverse_wishart(dof, r, rng) for _ in range(int(size))])


def sample_inv_wishart_batch(dof, scales, rng):
    """One ``IW_d(dof, scales[k])`` draw per scale matrix in a ``(k, d, d)`` stack."""
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 3 or scales.shape[1] != scales.shape[2]:
        raise ParameterError("scales must have shape (k, d, d)")
    k, d, _ = scales.shape
    if not dof > d - 1:
        raise ParameterError(f"inverse-Wishart dof must exceed d-1={d - 1}, got {dof}")
    try:
        r = np.linalg.cholesky(0.5 * (scales + np.swapaxes(scales, 1, 2)))
    except np.linalg.LinAlgError:
        return np.stack([sample_inv_wishart(dof, s, rng) for s in scales])
    a = np.zeros((k, d, d))
    idx = np.arange(d)
    a[:, idx, idx] = np.sqrt(2.0 * rng.standard_gamma(np.broadcast_to(0.5 * (dof - idx), (k, d))))
    rows, cols = np.tril_indices(d, -1)
    a[:, rows, cols] = rng.standard_normal((k, rows.size))
    x = np.linalg.solve(a, np.swapaxes(r, 1, 2))
    return np.swapaxes(x, 1, 2) @ x


@dataclass(frozen=True)
class MvtParams:
    """Multivariate t parameters: degrees of freedom, location and scale matrix."""

    dof: float
    mean: np.ndarray
    scale: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        scale = check_symmetric(np.atleast_2d(np.asarray(self.scale, dtype=float)), "scale")
        if not self.dof > 0:
            raise ParameterError("t dof must be positive")
        if scale.shape[0] != mean.shape[0]:
            raise ParameterError("mean and scale dimensions disagree")
        try:
            chol = linalg.cholesky(scale, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("t scale matrix is singular") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "_chol", chol)


@dataclass(frozen=True)
class ScaledFParams:
    """Scaled F (beta-prime) parameters ``(nu1, nu2, c)``."""

    dof1: float
    dof2: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.dof1 > 0 and self.dof2 > 0 and self.scale > 0):
            raise ParameterError("scaled-F parameters must be strictly positive")


def mvt_logdensity(x, p):
    """Log-density of the multivariate t distribution at ``x`` (last axis is ``d``)."""
    x = np.asarray(x, dtype=float)
    d = p.mean.shape[0]
    diff = np.atleast_2d(x - p.mean)
    z = linalg.solve_triangular(p._chol, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(p._chol)))
    nu = float(p.dof)
    out = (
        gammaln(0.5 * (nu + d))
        - gammaln(0.5 * nu)
        - 0.5 * logdet
        - 0.5 * d * np.log(nu * np.pi)
        - 0.5 * (nu + d) * np.log1p(maha / nu)
    )
    return out[0] if x.ndim <= 1 else out


def scaled_f_logdensity(z, p):
    """Log-density of the scaled F distribution.

    ``f(z) = G((n1+n2)/2) / (G(n2/2) G(n1/2) c^(n1/2)) z^(n1/2-1) (1+z/c)^(-(n1+n2)/2)``.
    It is the mixture of ``IG(z | n2/2, theta)`` over ``theta ~ Gamma(n1/2, rate=1/c)``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("scaled-F density is supported on z > 0")
    n1, n2, c = float(p.dof1), float(p.dof2), float(p.scale)
    return (
        gammaln(0.5 * (n1 + n2))
        - gammaln(0.5 * n2)
        - gammaln(0.5 * n1)
        - 0.5 * n1 * np.log(c)
        + (0.5 * n1 - 1.0) * np.log(z)
        - 0.5 * (n1 + n2) * np.log1p(z / c)
    )


def inv_gamma_logdensity(x, shape, scale):
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(x) - scale / x


def gamma_logdensity(x, shape, rate):
    x = np.asarray(x, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
