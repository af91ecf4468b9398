"""Ground-truth comparisons: MSE grids, 1-D stationary laws and the Kolmogorov metric."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, trapezoid

from .errors import NumericalError, ParameterError

TAIL_MASS_TOL = 1e-4


@dataclass(frozen=True)
class DensityGrid:
    """A density tabulated on an increasing grid together with its CDF."""

    xs: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    tail_mass: float = 0.0

    @classmethod
    def from_log_pdf(cls, xs, log_pdf, tail_mass=0.0):
        """Normalize ``exp(log_pdf)`` on ``xs`` with the trapezoid rule."""
        xs = np.asarray(xs, dtype=float)
        log_pdf = np.asarray(log_pdf, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ParameterError("grid must be strictly increasing with at least two points")
        bad = ~np.isfinite(log_pdf)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise NumericalError(f"log-density is not finite at grid point x={xs[i]:.6g} (index {i})")
        pdf = np.exp(log_pdf - log_pdf.max())
        pdf /= trapezoid(pdf, xs)
        cdf = np.concatenate([[0.0], cumulative_trapezoid(pdf, xs)])
        cdf /= cdf[-1]
        return cls(xs, pdf, cdf, float(tail_mass))

    @classmethod
    def from_pdf(cls, xs, pdf):
        with np.errstate(divide="ignore"):
            return cls.from_log_pdf(xs, np.log(np.clip(np.asarray(pdf, dtype=float), 1e-300, None)))


def _dw_log_density(x, sigma):
    # exp(-2 U(x) / s^2) with potential U(x) = x^4 - 2 x^2, i.e. drift 4x(1-x^2)
    return (4.0 * x**2 - 2.0 * x**4) / sigma**2


def _dw_variant_log_density(x, sigma):
    s2 = sigma**2
    return -np.log(s2) + (2.0 / s2 - 1.0) * np.log1p(x**2) - x**2 / s2


STATIONARY_LOG_DENSITIES = {
    "double_well": _dw_log_density,
    "double_well_variant": _dw_variant_log_density,
}


def true_stationary_density(model_name, sigma, grid):
    """Closed-form stationary density of a 1-D benchmark model, normalized on ``grid``.

    ``tail_mass`` on the result is the probability outside the grid; a warning is
    issued when it exceeds ``1e-4``.
    """
    try:
        logf = STATIONARY_LOG_DENSITIES[model_name]
    except KeyError:
        raise ParameterError(f"no closed-form stationary density for model {model_name!r}") from None
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    grid = np.asarray(grid, dtype=float)
    span = max(abs(grid[0]), abs(grid[-1]), 1.0)
    wide = np.linspace(-20.0 * span, 20.0 * span, 200001)
    lw = logf(wide, sigma)
    top = lw.max()
    total = trapezoid(np.exp(lw - top), wide)
    inside = (wide >= grid[0]) & (wide <= grid[-1])
    tail = 1.0 - trapezoid(np.exp(lw[inside] - top), wide[inside]) / total
    tail = max(tail, 0.0)
    if tail > TAIL_MASS_TOL:
        warnings.warn(f"grid [{grid[0]:.3g}, {grid[-1]:.3g}] misses stationary mass {tail:.2e}", RuntimeWarning)
    return DensityGrid.from_log_pdf(grid, logf(grid, sigma), tail_mass=tail)


def stationary_density_from_drift_1d(drift, diffusion_sq, grid):
    """Speed-measure density ``sigma^{-2}(x) exp(int^x 2 b / sigma^2)`` on ``grid``.

    The exponent is accumulated with the composite Simpson rule from the left
    end of the grid.
    """
    grid = np.asarray(grid, dtype=float)
    b = np.asarray(drift(grid[:, None]), dtype=float).reshape(-1)
    s2 = np.asarray(diffusion_sq(grid), dtype=float).reshape(-1) * np.ones_like(grid)
    if np.any(s2 <= 0):
        i = int(np.argmax(s2 <= 0))
        raise ParameterError(f"diffusion must be positive; fails at x={grid[i]:.6g}")
    if not np.all(np.isfinite(b)):
        i = int(np.argmax(~np.isfinite(b)))
        raise NumericalError(f"drift is not finite at grid point x={grid[i]:.6g} (index {i})")
    integrand = 2.0 * b / s2
    exponent = np.concatenate([[0.0], cumulative_simpson(integrand, x=grid)])
    return DensityGrid.from_log_pdf(grid, exponent - np.log(s2))


def kolmogorov_metric(a, b):
    """``sup_x |F_a(x) - F_b(x)|`` on the union of both grids (linear interpolation)."""
    if a.xs.shape == b.xs.shape and np.array_equal(a.xs, b.xs):
        return float(np.max(np.abs(a.cdf - b.cdf)))
    xs = np.union1d(a.xs, b.xs)
    fa = np.interp(xs, a.xs, a.cdf, left=0.0, right=1.0)
    fb = np.interp(xs, b.xs, b.cdf, left=0.0, right=1.0)
    return float(np.max(np.abs(fa - fb)))


def mse_grid(estimate, truth, grid):
    """``(1/G) sum_g |b_hat(x_g) - b(x_g)|^2`` over grid points ``(G, d)``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("grid must be nonempty")
    pts = grid[:, None] if grid.ndim == 1 else grid
    est = np.asarray(estimate(pts), dtype=float).reshape(pts.shape[0], -1)
    tru = np.asarray(truth(pts), dtype=float).reshape(pts.shape[0], -1)
    return float(np.mean(np.sum((est - tru) ** 2, axis=1)))


def default_mse_grid(states, size=200, trim=0.0):
    """Evaluation points spanning the observed range.

    In one dimension, ``size`` equispaced points on ``[min, max]``.  In higher
    dimensions, one slice of ``size`` points per coordinate with the other
    coordinates held at their path medians; the slices are stacked.  A
    positive ``trim`` replaces ``min`` and ``max`` by the ``trim`` and
    ``1 - trim`` quantiles of each coordinate.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if not 0.0 <= trim < 0.5:
        raise ParameterError("trim must lie in [0, 0.5)")
    lo, hi = np.quantile(states, [trim, 1.0 - trim], axis=0) if trim > 0 else (states.min(axis=0), states.max(axis=0))
    d = states.shape[1]
    if d == 1:
        return np.linspace(lo[0], hi[0], size)[:, None]
    med = np.median(states, axis=0)
    slices = []
    for j in range(d):
        pts = np.tile(med, (size, 1))
        pts[:, j] = np.linspace(lo[j], hi[j], size)
        slices.append(pts)
    return np.vstack(slices)


def density_domain(states, extension=0.2, size=2001):
    """Observed range widened by ``extension`` of its length on each side."""
    states = np.asarray(states, dtype=float).reshape(-1)
    lo, hi = states.min(), states.max()
    pad = extension * (hi - lo)
    return np.linspace(lo - pad, hi + pad, size)


def pp_points(a, b):
    """P-P pairs ``(F_a(x), F_b(x))`` on the union grid."""
    xs = np.union1d(a.xs, b.xs)
    return (
        np.interp(xs, a.xs, a.cdf, left=0.0, right=1.0),
        np.interp(xs, b.xs, b.cdf, left=0.0, right=1.0),
    )


def weight_histogram(weights, bins=50):
    counts, edges = np.histogram(np.asarray(weights, dtype=float).reshape(-1), bins=bins)
    return counts, edges


def near_zero_fraction(magnitudes, rel=1e-3):
    """Fraction of weights with magnitude below ``rel`` times the largest."""
    magnitudes = np.abs(np.asarray(magnitudes, dtype=float))
    return float(np.mean(magnitudes < rel * magnitudes.max()))


def estimated_stationary_density(summary, model, grid, use_estimated_sigma=True):
    """Stationary law of ``dX = b_hat dt + sigma0(X) S dW`` with ``S S^T`` estimated or true."""
    ss = float(summary.mean_sigma_sq[0, 0]) if use_estimated_sigma else float(model.sigma_sq[0, 0])

    def diffusion_sq(x):
        base = model.diffusion_base(np.asarray(x)[:, None])
        return base[:, 0, 0] ** 2 * ss

    return stationary_density_from_drift_1d(summary.mean_expansion.evaluate, diffusion_sq, grid)


def evaluate_fit(summary, traj, model, mse_points=200, density_points=2001, extension=0.2, use_estimated_sigma=True):
    """Metrics for a fitted drift against the generating model.

    Returns a dict with ``mse``, ``sigma_sq`` and, for 1-D models with a closed
    form stationary law, ``kolmogorov`` and ``tail_mass``.
    """
    grid = default_mse_grid(traj.states, mse_points)
    out = {
        "mse": mse_grid(summary.mean_expansion.evaluate, model.drift, grid),
        "sigma_sq": np.asarray(summary.mean_sigma_sq).tolist(),
    }
    if model.dim == 1 and model.name in STATIONARY_LOG_DENSITIES:
        xs = density_domain(traj.states, extension, density_points)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            truth = true_stationary_density(model.name, float(model.diffusion_param[0, 0]), xs)
        est = estimated_stationary_density(summary, model, xs, use_estimated_sigma)
        out["kolmogorov"] = kolmogorov_metric(truth, est)
        out["tail_mass"] = truth.tail_mass
    return out


def figure_data(summary, traj, model, mse_points=200, density_points=2001, extension=0.2, bins=50, use_estimated_sigma=True):
    """Arrays behind the four figure panels.

    ``drift``: grid, true drift, posterior-mean drift and credible band (the
    band is present when ``summary`` was built on the same grid).
    ``hist``: counts and edges of the posterior-mean weights.
    ``stationary`` and ``pp``: only for 1-D models with a closed-form law.
    """
    grid = default_mse_grid(traj.states, mse_points)
    d = model.dim
    drift = {
        "grid": grid,
        "truth": np.asarray(model.drift(grid)).reshape(grid.shape[0], d),
        "estimate": summary.mean_expansion.evaluate(grid).reshape(grid.shape[0], d),
    }
    if summary.grid is not None and summary.grid.shape == grid.shape and np.allclose(summary.grid, grid):
        drift["lower"] = summary.band_lower
        drift["upper"] = summary.band_upper
    counts, edges = weight_histogram(summary.mean_expansion.weights, bins)
    out = {"drift": drift, "hist": {"counts": counts, "edges": edges}, "stationary": None, "pp": None}
    if d == 1 and model.name in STATIONARY_LOG_DENSITIES:
        xs = density_domain(traj.states, extension, density_points)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            truth = true_stationary_density(model.name, float(model.diffusion_param[0, 0]), xs)
        est = estimated_stationary_density(summary, model, xs, use_estimated_sigma)
        out["stationary"] = {"xs": xs, "true": truth.pdf, "estimate": est.pdf}
        f_true, f_est = pp_points(truth, est)
        out["pp"] = {"true": f_true, "estimate": f_est}
    return out
