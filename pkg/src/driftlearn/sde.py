"""SDE models, Euler-Maruyama simulation and the Euler-Maruyama likelihood.

Models have the form ``dX = b(X) dt + sigma0(X) S dW`` where ``sigma0`` is a
known matrix function and ``S`` an unknown constant matrix.  Drift and
diffusion callables act on the last axis, so they accept a single state of
shape ``(d,)`` as well as a batch of shape ``(n, d)``.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, NumericalError, ParameterError

DIVERGENCE_BOUND = 1e6

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ModelSpec:
    """An SDE ``dX = b(X) dt + sigma0(X) S dW`` in dimension ``dim``.

    ``diffusion_base`` maps states ``(..., d)`` to matrices ``(..., d, d)``.
    """

    dim: int
    drift: Callable
    diffusion_base: Callable
    diffusion_param: np.ndarray
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.diffusion_param, dtype=float))
        if s.shape != (self.dim, self.dim):
            raise ParameterError(f"diffusion_param must be {self.dim}x{self.dim}, got {s.shape}")
        object.__setattr__(self, "diffusion_param", s)

    @property
    def sigma_sq(self):
        """The diffusion parameter product ``S S^T``."""
        return self.diffusion_param @ self.diffusion_param.T

    def diffusion(self, x):
        return self.diffusion_base(x) @ self.diffusion_param

    def diffusion_cov(self, x, sigma_sq=None):
        """``sigma0(x) S S^T sigma0(x)^T`` for the model's or a supplied ``S S^T``."""
        ss = self.sigma_sq if sigma_sq is None else np.atleast_2d(sigma_sq)
        base = self.diffusion_base(x)
        return base @ ss @ np.swapaxes(base, -1, -2)

    def with_sigma(self, diffusion_param):
        return ModelSpec(self.dim, self.drift, self.diffusion_base, diffusion_param, self.name, dict(self.params))


@dataclass(frozen=True)
class Trajectory:
    """Observations ``X(t_1..t_m)`` on a uniform grid, plus the initial state at ``t_0``."""

    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    delta: float

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        times = np.asarray(self.times, dtype=float)
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        delta = float(self.delta)
        if delta <= 0:
            raise ParameterError("delta must be positive")
        if states.shape[0] != times.shape[0]:
            raise ParameterError("times and states lengths differ")
        if x0.shape[0] != states.shape[1]:
            raise ParameterError("x0 dimension differs from state dimension")
        if times.shape[0] >= 2:
            gaps = np.diff(times)
            if np.any(gaps <= 0):
                raise ParameterError("times must be strictly increasing")
            if np.max(np.abs(gaps - delta)) > 1e-9 * delta:
                raise ParameterError("observation times are not uniform with step delta")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "delta", delta)

    @property
    def m(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def left_endpoints(self):
        """States at ``t_0..t_{m-1}``, where each increment's coefficients are evaluated."""
        return np.vstack([self.x0[None, :], self.states[:-1]])

    @property
    def increment_matrix(self):
        """Increments as an ``(m, d)`` array, row ``k`` being ``X(t_k) - X(t_{k-1})``."""
        return np.diff(np.vstack([self.x0[None, :], self.states]), axis=0)

    @property
    def increments(self):
        """Stacked increments ``(X(t_1)-x0, X(t_2)-X(t_1), ...)`` of length ``m*d``."""
        return self.increment_matrix.reshape(-1)

    def with_x0(self, x0):
        return Trajectory(x0, self.times, self.states, self.delta)

    def split(self, k):
        """Two trajectories covering observations ``[:k]`` and ``[k:]``."""
        first = Trajectory(self.x0, self.times[:k], self.states[:k], self.delta)
        second = Trajectory(self.states[k - 1], self.times[k:], self.states[k:], self.delta)
        return first, second


def euler_maruyama_simulate(model, x0, delta, steps, rng, discard=0):
    """Simulate ``steps`` Euler-Maruyama steps from ``x0`` at ``t_0 = 0``.

    ``X(t_i) = X(t_{i-1}) + b(X(t_{i-1})) delta + sigma0(X(t_{i-1})) S sqrt(delta) Z_i``.
    The first ``discard`` steps are simulated and then dropped; the state at
    the end of the discard window becomes the returned ``x0``.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    steps = int(steps)
    discard = int(discard)
    if steps < 1 or discard < 0:
        raise ParameterError("steps must be >= 1 and discard >= 0")
    d = model.dim
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if x.shape != (d,):
        raise ParameterError(f"x0 must have shape ({d},)")
    total = steps + discard
    noise = rng.standard_normal((total, d))
    path = np.empty((total + 1, d))
    path[0] = x
    sqdt = np.sqrt(delta)
    s = model.diffusion_param
    for i in range(1, total + 1):
        prev = path[i - 1]
        step = model.drift(prev) * delta + model.diffusion_base(prev) @ (s @ noise[i - 1]) * sqdt
        nxt = prev + step
        if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > DIVERGENCE_BOUND:
            raise DivergenceError(f"Euler-Maruyama path diverged at step {i}", index=i)
        path[i] = nxt
    start = discard
    times = delta * np.arange(1, steps + 1)
    return Trajectory(path[start], times, path[start + 1:], delta)


def _gaussian_logpdf_batch(resid, cov):
    """Log N(resid | 0, cov) for batches ``resid (n, d)`` and ``cov (n, d, d)``."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Euler-Maruyama step covariance is singular") from exc
    z = np.linalg.solve(chol, resid[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    d = resid.shape[-1]
    return -0.5 * (d * LOG_2PI + logdet + np.sum(z * z, axis=-1))


def _drift_fn(model, beta_expansion):
    if beta_expansion is None:
        return model.drift
    return beta_expansion.evaluate


def em_step_logdensity(model, x, x_next, delta, beta_expansion=None):
    """Log of ``N_d(x_next | x + b(x) delta, sigma0(x) S S^T sigma0(x)^T delta)``.

    With ``beta_expansion`` the drift is the kernel expansion, otherwise the
    model's own drift.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_next = np.atleast_1d(np.asarray(x_next, dtype=float))
    b = np.asarray(_drift_fn(model, beta_expansion)(x[None, :]))[0]
    cov = model.diffusion_cov(x) * delta
    return float(_gaussian_logpdf_batch((x_next - x - b * delta)[None, :], cov[None])[0])


def em_path_loglik(traj, model, beta_expansion=None):
    """Sum of Euler-Maruyama transition log-densities along ``traj``, starting from ``x0``."""
    left = traj.left_endpoints
    b = np.asarray(_drift_fn(model, beta_expansion)(left)).reshape(left.shape)
    cov = model.diffusion_cov(left) * traj.delta
    resid = traj.increment_matrix - b * traj.delta
    return float(np.sum(_gaussian_logpdf_batch(resid, cov)))


def _identity_base(d):
    eye = np.eye(d)

    def base(x):
        x = np.asarray(x)
        return np.broadcast_to(eye, x.shape[:-1] + (d, d)).copy()

    return base


def double_well_drift(x):
    x = np.asarray(x, dtype=float)
    return 4.0 * x * (1.0 - x**2)


def double_well_variant_drift(x):
    x = np.asarray(x, dtype=float)
    return x * (1.0 - x**2)


def _variant_base(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x**2)[..., None]


def michaelis_menten_drift(k1, km1, k2, km2, c_tot):
    """Reduced drift on ``(x_E, x_S, x_P)`` with ``x_ES = c_tot - x_E`` substituted."""

    def drift(x):
        x = np.asarray(x, dtype=float)
        xe, xs, xp = x[..., 0], x[..., 1], x[..., 2]
        xes = c_tot - xe
        return np.stack(
            [
                -k1 * xe * xs - km2 * xe * xp + (km1 + k2) * xes,
                -k1 * xe * xs + km1 * xes,
                k2 * xes - km2 * xe * xp,
            ],
            axis=-1,
        )

    return drift


MM_DEFAULTS = {"k1": 1.0, "km1": 1.0, "k2": 1.0, "km2": 0.5, "c_tot": 2.0, "sigma": 0.1}

DEFAULT_X0 = {
    "double_well": [0.5],
    "double_well_variant": [0.5],
    "michaelis_menten": [1.0, 5.0, 0.0],
}

BUILTIN_MODELS = ("double_well", "double_well_variant", "michaelis_menten")


def builtin_model(name, params=None):
    """Construct one of the benchmark models.

    ``double_well``: ``b(x) = 4x(1-x^2)``, ``sigma(x) = s``.
    ``double_well_variant``: ``b(x) = x(1-x^2)``, ``sigma(x) = s sqrt(1+x^2)``.
    ``michaelis_menten``: reduced 3-D enzyme kinetics with additive noise ``s I``;
    rate constants ``k1, km1, k2, km2`` and conservation total ``c_tot``.
    """
    params = dict(params or {})
    if name == "double_well":
        sigma = float(params.get("sigma", 1.0))
        return ModelSpec(1, double_well_drift, _identity_base(1), [[sigma]], name, {"sigma": sigma})
    if name == "double_well_variant":
        sigma = float(params.get("sigma", 1.0))
        return ModelSpec(1, double_well_variant_drift, _variant_base, [[sigma]], name, {"sigma": sigma})
    if name == "michaelis_menten":
        merged = dict(MM_DEFAULTS)
        unknown = set(params) - set(MM_DEFAULTS)
        if unknown:
            raise ParameterError(f"unknown michaelis_menten parameters: {sorted(unknown)}")
        merged.update({k: None if v is None else float(v) for k, v in params.items()})
        missing = [k for k in ("k1", "km1", "k2", "km2", "c_tot") if merged.get(k) is None]
        if missing:
            raise ParameterError(f"michaelis_menten requires {missing}")
        drift = michaelis_menten_drift(merged["k1"], merged["km1"], merged["k2"], merged["km2"], merged["c_tot"])
        sigma = merged["sigma"]
        return ModelSpec(3, drift, _identity_base(3), sigma * np.eye(3), name, merged)
    raise ParameterError(f"unknown model {name!r}; expected one of {BUILTIN_MODELS}")


def constant_diffusion_model(drift, sigma, dim=1, name="custom"):
    """Model with additive noise ``sigma`` (scalar or ``dim x dim`` matrix)."""
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        s = float(s) * np.eye(dim)
    return ModelSpec(dim, drift, _identity_base(dim), s, name)
