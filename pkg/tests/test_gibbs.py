import numpy as np
import pytest

from driftlearn import gibbs
from driftlearn.errors import ParameterError
from driftlearn.gibbs import (
    ChainState,
    HsPriorConfig,
    PosteriorSamples,
    TPriorConfig,
    WeightSampler,
    beta_conditional_params,
    run_chain,
    sample_beta,
    sample_global_scale_hs,
    sample_local_scales_hs,
    sample_local_scales_t,
    sample_rate_hypers_hs,
    sample_sigma,
    sigma_posterior_scale,
    summarize_posterior,
)
from driftlearn.randdist import RngStream, sample_mvnormal
from driftlearn.rkhs import DriftExpansion, MatrixKernel, ScalarKernel, gram_matrix, ridge_map_estimate
from driftlearn.sde import Trajectory, builtin_model, constant_diffusion_model, euler_maruyama_simulate

N = 100_000
K1 = MatrixKernel.scalar_times_identity(1)


class ZeroNoise:
    """RNG stub whose normal draws are all zero, so exact samplers return their mean."""

    def standard_normal(self, size=None):
        return np.zeros(size if size is not None else ())


class Capture:
    def __init__(self):
        self.calls = []

    def __call__(self, *args, **kwargs):
        self.calls.append(args[:2])
        shape = np.broadcast(*[np.asarray(a) for a in args[:2]]).shape
        return np.ones(shape)


def t_prior(**kw):
    base = dict(dof=2.0, scale=[[4.0]], sigma_dof=2.0, sigma_scale=[[4.0]], scalar_mode=True)
    base.update(kw)
    return TPriorConfig(**base)


def hs_prior(d=1, **kw):
    return HsPriorConfig(sigma_dof=2.0 + d, sigma_scale=np.eye(d), **kw)


def zero_drift(x):
    return np.zeros_like(np.asarray(x, dtype=float))


# ------------------------------------------------------------ weight conditional


def test_one_by_one_hand_case():
    traj = Trajectory([0.0], [1.0], [[1.0]], 1.0)
    # gaussian kernel with an infinite bandwidth is identically one
    kernel = MatrixKernel(((ScalarKernel(bandwidth=1e12), np.eye(1)),))
    gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
    mu, cov = beta_conditional_params(traj, gram, [[1.0]], [1.0])
    assert mu[0] == pytest.approx(0.5, abs=1e-12)
    assert cov[0, 0] == pytest.approx(0.5, abs=1e-12)


def test_diffuse_limit_and_delta_scaling():
    kernel = MatrixKernel(((ScalarKernel(bandwidth=1e12), np.eye(1)),))
    mus = []
    for delta in (0.5, 1.0):
        traj = Trajectory([0.0], [delta], [[1.0]], delta)
        gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
        mus.append(beta_conditional_params(traj, gram, [[1.0]], [1e14])[0][0])
    # diffuse: delta * mu = theta
    assert mus[1] == pytest.approx(1.0, rel=1e-10)
    assert mus[1] == pytest.approx(mus[0] / 2, rel=1e-10)


def test_sample_beta_delegates_and_degenerates():
    mu, cov = np.array([1.0, -2.0, 0.5]), np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])
    assert np.array_equal(sample_beta((mu, cov), RngStream(1)), sample_mvnormal(mu, cov, RngStream(1)))
    assert np.allclose(sample_beta((mu, np.zeros((3, 3))), RngStream(2)), mu)


def test_sample_beta_moments():
    mu, cov = np.array([1.0, -2.0, 0.5]), np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])
    rng = RngStream(3)
    draws = np.array([sample_beta((mu, cov), rng) for _ in range(N)])
    se = np.sqrt(np.diag(cov) / N)
    assert np.all(np.abs(draws.mean(axis=0) - mu) < 3 * se)
    emp = np.cov(draws, rowvar=False)
    assert np.linalg.norm(emp - cov) < 0.05 * np.linalg.norm(cov)


def _weight_problem(d=1, model=None, m=30, seed=0):
    model = model or constant_diffusion_model(zero_drift, 0.7 * np.eye(d) if d > 1 else 0.7, dim=d)
    traj = euler_maruyama_simulate(
        constant_diffusion_model(lambda x: -np.asarray(x), 0.7 * np.eye(d) if d > 1 else 0.7, dim=d),
        np.full(d, 0.3), 0.05, m, RngStream(seed),
    )
    traj = traj.with_x0(traj.states[0])
    kernel = MatrixKernel.scalar_times_identity(d)
    return traj, kernel, model


@pytest.mark.parametrize("d", [1, 3])
def test_fast_isotropic_sampler_mean_matches_dense(d):
    traj, kernel, model = _weight_problem(d)
    p = np.linspace(0.5, 2.0, traj.m)
    sampler = WeightSampler(traj, kernel, model)
    assert sampler.structured
    sig = np.diag(np.linspace(0.3, 0.6, d)) + 0.05
    got = sampler.sample(sig, p, ZeroNoise())
    gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
    mu, _ = beta_conditional_params(traj, gram, sig, np.repeat(p, d), model)
    assert np.allclose(got, mu, atol=1e-8 * max(1.0, np.abs(mu).max()))


def test_fast_block_sampler_mean_matches_dense():
    traj, kernel, model = _weight_problem(3)
    rng = np.random.default_rng(0)
    blocks = []
    for _ in range(traj.m):
        a = rng.normal(size=(3, 3))
        blocks.append(a @ a.T + 0.5 * np.eye(3))
    blocks = np.array(blocks)
    sig = np.array([[0.4, 0.1, 0.0], [0.1, 0.3, 0.05], [0.0, 0.05, 0.5]])
    got = WeightSampler(traj, kernel, model).sample(sig, blocks, ZeroNoise())
    gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
    mu, _ = beta_conditional_params(traj, gram, sig, blocks, model)
    assert np.allclose(got, mu, atol=1e-8 * max(1.0, np.abs(mu).max()))


def test_multiplicative_noise_uses_structured_path():
    model = builtin_model("double_well_variant", {"sigma": 0.5})
    traj = euler_maruyama_simulate(model, [0.5], 0.05, 40, RngStream(4))
    traj = traj.with_x0(traj.states[0])
    sampler = WeightSampler(traj, K1, model)
    assert sampler.structured
    p = np.full(traj.m, 1.3)
    gram = gram_matrix(K1, traj.left_endpoints, traj.states)
    mu, _ = beta_conditional_params(traj, gram, [[0.25]], p, model)
    assert np.allclose(sampler.sample(np.array([[0.25]]), p, ZeroNoise()), mu, atol=1e-8)


def test_dense_fallback_for_two_term_kernels():
    traj, _, model = _weight_problem(1)
    kernel = MatrixKernel(((ScalarKernel(bandwidth=1.0), np.eye(1)), (ScalarKernel(bandwidth=0.3), np.eye(1))))
    sampler = WeightSampler(traj, kernel, model)
    assert not sampler.structured
    gram = gram_matrix(kernel, traj.left_endpoints, traj.states)
    p = np.full(traj.m, 0.8)
    mu, _ = beta_conditional_params(traj, gram, [[0.5]], p, model)
    assert np.allclose(sampler.sample(np.array([[0.5]]), p, ZeroNoise()), mu, atol=1e-10)


def test_weight_sampler_matches_analytic_moments():
    traj = Trajectory([0.1], [0.1, 0.2], [[0.4], [0.2]], 0.1)
    model = constant_diffusion_model(zero_drift, 0.5)
    p = np.array([0.7, 1.5])
    sigma = np.array([[0.25]])
    gram = gram_matrix(K1, traj.left_endpoints, traj.states)
    mu, cov = beta_conditional_params(traj, gram, sigma, p, model)
    sampler = WeightSampler(traj, K1, model)
    rng = RngStream(5)
    draws = np.array([sampler.sample(sigma, p, rng) for _ in range(N)])
    se = np.sqrt(np.diag(cov) / N)
    assert np.all(np.abs(draws.mean(axis=0) - mu) < 3 * se)
    emp = np.cov(draws, rowvar=False)
    # entrywise SE of a sample covariance: sqrt((C_ii C_jj + C_ij^2) / N)
    se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / N)
    assert np.all(np.abs(emp - cov) < 3 * se_cov)


# ------------------------------------------------------------- sigma conditional


def test_sigma_scale_substitutions():
    traj = Trajectory([0.0], [0.1, 0.2, 0.3], [[0.2], [0.1], [0.4]], 0.1)
    cfg = t_prior()
    zero = DriftExpansion(K1, traj.states, np.zeros(3))
    inc = traj.increment_matrix
    assert np.allclose(sigma_posterior_scale(traj, zero, cfg), inc.T @ inc / 0.1 + 4.0)

    class Exact:
        def evaluate(self, x):
            return traj.increment_matrix / traj.delta

    assert np.allclose(sigma_posterior_scale(traj, Exact(), cfg), [[4.0]], atol=1e-12)


def test_sigma_posterior_concentrates():
    traj = euler_maruyama_simulate(constant_diffusion_model(zero_drift, 2.0), [0.0], 0.01, 2000, RngStream(6))

    class Zero:
        def evaluate(self, x):
            return np.zeros_like(x)

    rng = RngStream(7)
    draws = [sample_sigma(traj, Zero(), t_prior(), rng)[0, 0] for _ in range(2000)]
    assert abs(np.mean(draws) / 4 - 1) < 0.1


# ------------------------------------------------------------------ t scales


def test_t_scalar_conjugate_update():
    lam = sample_local_scales_t(np.zeros(N), t_prior(), RngStream(8), dim=1)
    # prior IG(1, 2) with beta = 0 gives IG(1.5, 2); the reciprocal is Gamma(1.5, rate 2)
    r = 1 / lam
    assert abs(r.mean() - 0.75) < 3 * np.sqrt(1.5 / 4 / N)
    assert abs(r.var() / (1.5 / 4) - 1) < 0.05


def test_t_matrix_mode_mean():
    cfg = TPriorConfig(4.0, [[2.0, 0.5], [0.5, 1.0]], 5.0, np.eye(2))
    lam = sample_local_scales_t(np.zeros(2 * N), cfg, RngStream(9))
    assert lam.shape == (N, 2, 2)
    assert np.allclose(lam.mean(axis=0), cfg.scale / 3, rtol=0.05, atol=0.05 * 0.5 / 3)


def test_t_scales_grow_with_weights():
    cfg = t_prior()
    small = sample_local_scales_t(np.zeros(10_000), cfg, RngStream(10), dim=1)
    big = sample_local_scales_t(np.full(10_000, 3.0), cfg, RngStream(11), dim=1)
    assert np.median(big) > np.median(small)


def test_t_paper_literal_scale_switch(monkeypatch):
    cap = Capture()
    monkeypatch.setattr(gibbs, "sample_inv_wishart_batch", cap)
    u = np.array([[2.0, 0.5], [0.5, 1.0]])
    beta = np.array([1.0, 2.0])
    for literal in (False, True):
        cfg = TPriorConfig(4.0, u, 5.0, np.eye(2), paper_literal_scale=literal)
        sample_local_scales_t(beta, cfg, RngStream(0))
    dof, scales = cap.calls[0][0], cap.calls[0][1]
    assert dof == 6.0
    assert np.allclose(scales[0], u + np.outer(beta, beta))
    assert np.allclose(cap.calls[1][1][0], np.linalg.inv(u) + np.outer(beta, beta))


# ----------------------------------------------------------------- HS scales


def test_hs_local_reciprocal_mean():
    lam = sample_local_scales_hs(np.full(N, 2.0), 1.0, np.ones(N), hs_prior(), RngStream(12))
    r = 1 / lam
    assert abs(r.mean() - 1 / 3) < 3 * np.sqrt(1 / 9 / N)


@pytest.mark.parametrize("d", [1, 3])
def test_hs_local_parameters(monkeypatch, d):
    cap = Capture()
    monkeypatch.setattr(gibbs, "sample_inv_gamma", cap)
    cfg = hs_prior(d, local_shape=0.3)
    theta = np.array([0.5, 2.0])
    for beta in (np.zeros(2 * d), np.arange(2 * d, dtype=float)):
        sample_local_scales_hs(beta, 2.0, theta, cfg, RngStream(0), dim=d)
    (shape0, scale0), (shape1, scale1) = cap.calls
    assert shape0 == shape1 == pytest.approx((d + 0.6) / 2)
    assert np.allclose(scale0, theta)
    bm = np.arange(2 * d, dtype=float).reshape(2, d)
    assert np.allclose(scale1, 0.5 * np.sum(bm**2, axis=1) / 2.0 + theta)


def test_hs_global_parameters(monkeypatch):
    cap = Capture()
    monkeypatch.setattr(gibbs, "sample_inv_gamma", cap)
    cfg = hs_prior()
    sample_global_scale_hs(np.zeros(4), np.ones(4), 0.7, cfg, RngStream(0))
    sample_global_scale_hs(np.array([1.0]), np.array([1.0]), 1.0, cfg, RngStream(0))
    beta = np.array([0.5, -1.0, 2.0])
    lam = np.array([1.0, 2.0, 0.5])
    sample_global_scale_hs(beta, lam, 0.0 + 1e-300, cfg, RngStream(0))
    sample_global_scale_hs(3 * beta, lam, 0.0 + 1e-300, cfg, RngStream(0))
    assert cap.calls[0] == pytest.approx((2.5, 0.7))
    # shape (m d + 2 alpha0) / 2 = 1 and scale 1 + 1/2
    assert cap.calls[1] == pytest.approx((1.0, 1.5))
    assert cap.calls[3][1] == pytest.approx(9 * cap.calls[2][1])


def test_hs_global_moment():
    cfg = hs_prior()
    rng = RngStream(13)
    r = np.array([1 / sample_global_scale_hs(np.array([1.0]), np.array([1.0]), 1.0, cfg, rng) for _ in range(N)])
    # IG(1, 1.5): the reciprocal is Gamma(1, rate 1.5) with mean 2/3 and variance 4/9
    assert abs(r.mean() - 2 / 3) < 3 * np.sqrt(4 / 9 / N)


def test_hs_rate_hyper_parameters(monkeypatch):
    cap = Capture()
    monkeypatch.setattr(gibbs, "sample_gamma", cap)
    cfg = hs_prior(local_rate_hypers=(0.5, 1.0), global_rate_hypers=(0.7, 2.0))
    sample_rate_hypers_hs(np.array([1e300]), 4.0, cfg, RngStream(0))
    assert cap.calls[0][0] == 1.0 and np.allclose(cap.calls[0][1], 1.0)
    assert cap.calls[1] == pytest.approx((1.2, 2.25))


def test_hs_rate_hyper_moments_and_independence():
    cfg = hs_prior()
    theta, _ = sample_rate_hypers_hs(np.ones(N), 1.0, cfg, RngStream(14))
    assert abs(theta.mean() - 0.5) < 3 * np.sqrt(0.25 / N)
    rng = RngStream(15)
    joint = []
    for _ in range(N):
        th, th0 = sample_rate_hypers_hs(np.ones(1), 1.0, cfg, rng)
        joint.append((th[0], th0))
    joint = np.array(joint)
    assert abs(np.corrcoef(joint.T)[0, 1]) < 0.01


# ------------------------------------------------------------------- chains


@pytest.fixture(scope="module")
def dw_traj():
    return euler_maruyama_simulate(builtin_model("double_well"), [0.5], 0.05, 200, RngStream(16))


def test_single_stored_state(dw_traj):
    samples = run_chain(dw_traj, K1, t_prior(), iters=6, burn_in=5, rng=RngStream(0))
    assert len(samples) == 1


def test_thinning_bookkeeping(dw_traj):
    samples = run_chain(dw_traj, K1, hs_prior(), iters=20, burn_in=5, thin=4, rng=RngStream(0))
    assert len(samples) == 4


def test_chain_preconditions(dw_traj):
    with pytest.raises(ParameterError):
        run_chain(dw_traj, K1, t_prior(), iters=5, burn_in=5)
    with pytest.raises(ParameterError):
        run_chain(dw_traj, MatrixKernel.scalar_times_identity(2), t_prior())


def test_pinned_scales_give_fixed_gaussian():
    traj = euler_maruyama_simulate(builtin_model("double_well"), [0.5], 0.1, 10, RngStream(17))
    big = 1e9
    prior = TPriorConfig(big, [[big]], big, [[big]], scalar_mode=True)
    samples = run_chain(traj, K1, prior, iters=20_200, burn_in=200, rng=RngStream(18))
    traj0 = traj.with_x0(traj.states[0])
    gram = gram_matrix(K1, traj0.left_endpoints, traj0.states)
    mu, cov = beta_conditional_params(traj0, gram, [[1.0]], np.ones(traj.m))
    se = np.sqrt(np.diag(cov) / len(samples))
    assert np.all(np.abs(samples.betas.mean(axis=0) - mu) < 4 * se)


def test_linear_drift_recovery_matches_ridge_oracle():
    # at T = 40 the sampling error of an OU slope is about 0.2, so the oracle is
    # the ridge estimate on the same path rather than the true drift
    model = constant_diffusion_model(lambda x: -np.asarray(x), 1.0)
    traj = euler_maruyama_simulate(model, [0.5], 0.05, 800, RngStream(19))
    samples = run_chain(traj, K1, t_prior(), iters=1000, burn_in=300, rng=RngStream(20))
    x = np.array([[-1.0], [0.0], [1.0]])
    est = summarize_posterior(samples).mean_expansion.evaluate(x)[:, 0]
    oracle = ridge_map_estimate(traj, K1, model, 1.0, x0=traj.states[0]).evaluate(x)[:, 0]
    assert np.all(np.abs(est - oracle) < 0.3)
    assert est[0] > est[1] > est[2]


def test_positivity_and_determinism(dw_traj):
    kwargs = dict(iters=60, burn_in=10, rng=None)
    a = run_chain(dw_traj, K1, hs_prior(), **dict(kwargs, rng=RngStream(21)))
    b = run_chain(dw_traj, K1, hs_prior(), **dict(kwargs, rng=RngStream(21)))
    assert np.array_equal(a.betas, b.betas)
    for s in a.states:
        assert np.all(s.local_scales > 0) and s.global_scale > 0
        assert np.all(s.theta > 0) and s.theta0 > 0
        assert np.all(np.linalg.eigvalsh(s.sigma_sq) > 0)
    mm = builtin_model("michaelis_menten")
    traj = euler_maruyama_simulate(mm, [1.0, 5.0, 0.0], 0.04, 60, RngStream(22))
    prior = TPriorConfig(5.0, 8 * np.eye(3), 4.0, 2 * np.eye(3))
    for s in run_chain(traj, MatrixKernel.scalar_times_identity(3), prior, 30, 10, rng=RngStream(23), model=mm).states:
        assert np.all(np.linalg.eigvalsh(s.local_scales) > 0)
        assert np.all(np.linalg.eigvalsh(s.sigma_sq) > 0)


def test_sigma_posterior_covers_truth():
    model = constant_diffusion_model(lambda x: -np.asarray(x), 0.8)
    hits = 0
    for rep in range(10):
        traj = euler_maruyama_simulate(model, [0.0], 0.05, 500, RngStream(100 + rep))
        s2 = run_chain(traj, K1, t_prior(), iters=2000, burn_in=500, rng=RngStream(200 + rep)).sigmas[:, 0, 0]
        lo, hi = np.percentile(s2, [2.5, 97.5])
        hits += lo <= 0.64 <= hi
    assert hits >= 8


# ---------------------------------------------------------------- summaries


def _samples(betas):
    states = [ChainState(np.asarray(b, dtype=float), np.eye(1), np.ones(2)) for b in betas]
    return PosteriorSamples(states, 0, 1, K1, np.array([[0.0], [1.0]]), 0.1)


def test_summary_of_single_state():
    s = summarize_posterior(_samples([[1.0, -2.0]]), grid=np.linspace(-1, 2, 7))
    assert np.array_equal(s.mean_expansion.weights, [1.0, -2.0])
    assert np.allclose(s.band_lower, s.mean_curve) and np.allclose(s.band_upper, s.mean_curve)


def test_summary_of_opposite_states_is_zero():
    s = summarize_posterior(_samples([[1.0, -2.0], [-1.0, 2.0]]))
    assert np.all(s.mean_expansion.evaluate(np.linspace(-3, 3, 11)[:, None]) == 0)


def test_bands_bracket_the_mean(dw_traj):
    samples = run_chain(dw_traj, K1, hs_prior(), iters=300, burn_in=100, rng=RngStream(24))
    s = summarize_posterior(samples, grid=np.linspace(-1.5, 1.5, 31))
    assert np.all(s.band_lower <= s.mean_curve + 1e-12) and np.all(s.mean_curve <= s.band_upper + 1e-12)


def test_summary_requires_samples():
    with pytest.raises(ParameterError):
        summarize_posterior(None)
