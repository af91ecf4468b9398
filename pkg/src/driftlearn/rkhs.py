"""Kernels, Gram systems, finite drift expansions and quadrature representer bases."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import NumericalError, ParameterError
from .randdist import check_symmetric, cholesky_jitter


@dataclass(frozen=True)
class ScalarKernel:
    """Gaussian kernel ``k(x, y) = exp(-|x - y|^2 / (2 l^2))``."""

    kind: str = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ParameterError(f"unsupported kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise ParameterError("kernel bandwidth must be positive")

    def matrix(self, xs, ys):
        """Pairwise kernel values between point sets ``(p, d)`` and ``(m, d)``."""
        xs = _as_points(xs)
        ys = _as_points(ys)
        sq = (
            np.sum(xs**2, axis=1)[:, None]
            + np.sum(ys**2, axis=1)[None, :]
            - 2.0 * xs @ ys.T
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.bandwidth**2))

    def __call__(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * self.bandwidth**2)))


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    return x


@dataclass(frozen=True)
class MatrixKernel:
    """Separable matrix-valued kernel ``kappa(u, v) = sum_r k_r(u, v) B_r``."""

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ParameterError("a matrix kernel needs at least one term")
        fixed = []
        n = None
        for k, b in self.terms:
            b = check_symmetric(np.atleast_2d(np.asarray(b, dtype=float)), "kernel matrix B", rtol=1e-10)
            if np.linalg.eigvalsh(b).min() < -1e-10 * max(1.0, np.abs(b).max()):
                raise ParameterError("kernel matrix B must be positive semi-definite")
            if n is None:
                n = b.shape[0]
            elif b.shape[0] != n:
                raise ParameterError("kernel matrices have inconsistent sizes")
            fixed.append((k, b))
        object.__setattr__(self, "terms", tuple(fixed))

    @classmethod
    def scalar_times_identity(cls, dim, bandwidth=1.0):
        """``k(u, v) I_d`` with a Gaussian ``k``."""
        return cls(((ScalarKernel("gaussian", bandwidth), np.eye(dim)),))

    @property
    def out_dim(self):
        return self.terms[0][1].shape[0]

    @property
    def is_separable_single(self):
        return len(self.terms) == 1

    def evaluate(self, u, v):
        return sum(k(u, v) * b for k, b in self.terms)


def kernel_eval(kernel, u, v):
    """``kappa(u, v) = sum_r k_r(u, v) B_r`` as an ``n x n`` matrix."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise ParameterError("kernel arguments have different dimensions")
    return kernel.evaluate(u, v)


@dataclass(frozen=True)
class GramSystem:
    """Block Gram matrix with block ``(i, j) = kappa(eval_points[i], centers[j])``."""

    eval_points: np.ndarray
    centers: np.ndarray
    K: np.ndarray
    scalar_blocks: tuple = field(default=(), repr=False)

    @property
    def out_dim(self):
        return self.K.shape[0] // self.eval_points.shape[0]


def gram_matrix(kernel, eval_points, centers):
    """Assemble ``sum_r K_r (x) B_r`` between ``eval_points`` and ``centers``.

    Square Grams on identical point sets are symmetrized.
    """
    eval_points = _as_points(eval_points)
    centers = _as_points(centers)
    if eval_points.shape[0] == 0 or centers.shape[0] == 0:
        raise ParameterError("point lists must be nonempty")
    blocks = []
    total = None
    same = eval_points.shape == centers.shape and np.array_equal(eval_points, centers)
    for k, b in kernel.terms:
        ks = k.matrix(eval_points, centers)
        if same:
            ks = 0.5 * (ks + ks.T)
        blocks.append((ks, b))
        term = np.kron(ks, b)
        total = term if total is None else total + term
    return GramSystem(eval_points, centers, total, tuple(blocks))


@dataclass(frozen=True)
class DriftExpansion:
    """``b(x) = sum_i kappa(x, c_i) beta_i`` with weights stacked as ``(m*d,)``."""

    kernel: MatrixKernel
    centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        centers = _as_points(self.centers)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if centers.shape[0] * self.kernel.out_dim != weights.shape[0]:
            raise ParameterError("weights length must equal number of centers times output dimension")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @property
    def weight_matrix(self):
        """Weights as an ``(m, n)`` array; row ``i`` is ``beta_i``."""
        return self.weights.reshape(self.centers.shape[0], self.kernel.out_dim)

    def evaluate(self, x):
        """Evaluate at one point ``(d,)`` or a batch ``(p, d)``."""
        x = np.asarray(x, dtype=float)
        d = self.centers.shape[1]
        single = x.ndim == 0 or (x.ndim == 1 and x.shape[0] == d)
        pts = x.reshape(1, d) if single else _as_points(x)
        w = self.weight_matrix
        out = sum(k.matrix(pts, self.centers) @ w @ b.T for k, b in self.kernel.terms)
        return out[0] if single else out

    __call__ = evaluate


def expansion_eval(exp, x):
    return exp.evaluate(x)


def diffusion_precisions(model, points, sigma_sq):
    """Inverse step covariances ``(sigma0(x) S S^T sigma0(x)^T)^{-1}`` at each point."""
    cov = model.diffusion_cov(points, sigma_sq)
    try:
        return np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("diffusion covariance is singular at a left endpoint") from exc


def drift_normal_equations(traj, kernel, model, sigma_sq=None, x0=None):
    """Quadratic-form pieces of the Euler-Maruyama log-likelihood in the weights.

    Returns ``(gram, H, r)`` where ``H = K0^T D K0`` and ``r = K0^T D theta``, so
    that the log-likelihood is ``-beta^T (delta H) beta / 2 + beta^T r`` up to
    constants.  Rows of ``K0`` are the left endpoints ``x0, X(t_1..t_{m-1})``;
    columns are the centers ``X(t_1..t_m)``.
    """
    if x0 is not None:
        traj = traj.with_x0(x0)
    gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
    prec = diffusion_precisions(model, traj.left_endpoints, model.sigma_sq if sigma_sq is None else sigma_sq)
    n = kernel.out_dim
    m = traj.m
    k0 = gram.K
    dk = np.einsum("kab,kbj->kaj", prec, k0.reshape(m, n, -1)).reshape(m * n, -1)
    h = k0.T @ dk
    h = 0.5 * (h + h.T)
    r = dk.T @ traj.increments
    return gram, h, r


def ridge_map_estimate(traj, kernel, sigma_model, ridge, sigma_sq=None, x0=None):
    """No-shrinkage baseline: ``beta = (delta K0^T D K0 + ridge I)^{-1} K0^T D theta``."""
    if not ridge > 0:
        raise ParameterError("ridge must be positive")
    gram, h, r = drift_normal_equations(traj, kernel, sigma_model, sigma_sq, x0)
    a = traj.delta * h + ridge * np.eye(h.shape[0])
    chol = cholesky_jitter(a, "ridge system")
    beta = linalg.cho_solve((chol, True), r)
    return DriftExpansion(kernel, gram.centers, beta)


def ridge_objective(beta, traj, kernel, model, ridge, sigma_sq=None, x0=None):
    """``E0/2 + ridge |beta|^2 / 2`` with ``E0`` the Euler-Maruyama energy."""
    if x0 is not None:
        traj = traj.with_x0(x0)
    exp = DriftExpansion(kernel, traj.states, beta)
    left = traj.left_endpoints
    resid = traj.increment_matrix - traj.delta * exp.evaluate(left).reshape(left.shape)
    prec = diffusion_precisions(model, left, model.sigma_sq if sigma_sq is None else sigma_sq)
    energy = np.einsum("ka,kab,kb->", resid, prec, resid) / traj.delta
    return 0.5 * energy + 0.5 * ridge * float(np.dot(beta, beta))


def mle_weights(traj, kernel, model, sigma_sq=None, x0=None):
    """Unpenalized minimizer ``delta^{-1} H^{-1} K0^T D theta`` of the energy."""
    _, h, r = drift_normal_equations(traj, kernel, model, sigma_sq, x0)
    return np.linalg.solve(h, r) / traj.delta


QUAD_BLOCK = 2048


def trapezoid_weights(a, b, nodes):
    if nodes < 2:
        raise ParameterError("quadrature needs at least two nodes")
    if not b > a:
        raise ParameterError("interval must satisfy a < b")
    z = np.linspace(a, b, nodes)
    w = np.full(nodes, (b - a) / (nodes - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return z, w


@dataclass(frozen=True)
class RepresenterBasis:
    """Basis ``f_i(u) = int_a^b k(u, z) rho_i(z) dz`` evaluated by composite trapezoid.

    ``system_matrix[i, j]`` applies functional ``i`` to basis function ``j`` with
    the same quadrature, which is the Gram matrix of the representers.
    """

    kernel: ScalarKernel
    nodes: np.ndarray
    weights: np.ndarray
    rho_values: np.ndarray
    system_matrix: np.ndarray

    def __call__(self, u):
        """Basis values, shape ``(len(u), m)``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self.kernel.matrix(u, self.nodes) @ (self.weights[:, None] * self.rho_values)

    def fit(self, y, ridge):
        """Coefficients minimizing ``|y - M c|^2 + ridge c^T M c`` (``M`` the system matrix)."""
        y = np.asarray(y, dtype=float)
        if not ridge > 0:
            raise ParameterError("ridge must be positive")
        m = self.system_matrix
        return np.linalg.solve(m + ridge * np.eye(m.shape[0]), y)

    def predict(self, u, coef):
        return self(u) @ np.asarray(coef, dtype=float)


def representer_basis_quadrature(kernel, functionals, interval, nodes):
    """Representer basis for data observed through integral functionals.

    Parameters
    ----------
    kernel : ScalarKernel
    functionals : sequence of callables
        ``rho_i(z)``, vectorized over ``z``; for a Fredholm operator with kernel
        ``R`` these are ``z -> R(x_i, z)``, for functional regression the
        conditional densities ``z -> g(z | x_i)``.
    interval : (float, float)
        Integration domain ``[a, b]``.
    nodes : int
        Number of trapezoid nodes, at least 2.
    """
    a, b = map(float, interval)
    z, w = trapezoid_weights(a, b, int(nodes))
    rho = np.column_stack([np.asarray(f(z), dtype=float) * np.ones_like(z) for f in functionals])
    wr = w[:, None] * rho
    # row blocks keep memory linear in the node count
    system = np.zeros((rho.shape[1], rho.shape[1]))
    for start in range(0, z.size, QUAD_BLOCK):
        rows = slice(start, start + QUAD_BLOCK)
        system += wr[rows].T @ (kernel.matrix(z[rows], z) @ wr)
    system = 0.5 * (system + system.T)
    return RepresenterBasis(kernel, z, w, rho, system)


def integral_operator_functionals(operator_kernel, xs):
    """Functionals ``z -> R(x_i, z)`` for each data location ``x_i``."""
    return [lambda z, x=x: operator_kernel(x, z) for x in xs]
