"""Acceptance suite: one test, and one PASS/FAIL line, per criterion.

Lines are printed as each test finishes and again in the terminal summary.
Criteria that take a median over three seeds use master seeds 1, 2 and 3; the
others use master seed 1.  Run directly with ``python3 tests/test_acceptance.py``.
"""

import sys
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy import special

from driftlearn.cli import run
from driftlearn.evaluation import default_mse_grid, mse_grid, stationary_density_from_drift_1d, true_stationary_density
from driftlearn.experiments import fit_cell, target_raw
from driftlearn.gibbs import (
    HsPriorConfig,
    TPriorConfig,
    WeightSampler,
    beta_conditional_params,
    sample_global_scale_hs,
    sample_local_scales_hs,
    sample_local_scales_t,
    sample_rate_hypers_hs,
    sample_sigma,
    sigma_posterior_scale,
)
from driftlearn.randdist import RngStream, sample_inv_wishart
from driftlearn.rkhs import DriftExpansion, MatrixKernel, ScalarKernel, gram_matrix, representer_basis_quadrature
from driftlearn.sde import Trajectory, constant_diffusion_model, double_well_drift, double_well_variant_drift

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3)
N = 100_000


@lru_cache(maxsize=None)
def cell(target, T, delta, seed):
    return fit_cell(target_raw(target), T, delta, seed)


def medians(target, T, delta, key):
    values = [cell(target, T, delta, s).row[key] for s in SEEDS]
    return float(np.median(values)), values


def interior_mse(fit, name, trim=0.01):
    grid = default_mse_grid(fit.traj.states, fit.cfg.eval.mse_points, trim=trim)
    return mse_grid(fit.summaries[name].mean_expansion.evaluate, fit.cfg.model().drift, grid)


def fmt(values):
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"


# ------------------------------------------------------------ double well


def test_01_double_well_t_mse(acceptance):
    med, vals = medians("table1", 40.0, 0.05, "mse_t_prior")
    secs = max(cell("table1", 40.0, 0.05, s).seconds["t"] for s in SEEDS)
    inner = np.median([interior_mse(cell("table1", 40.0, 0.05, s), "t") for s in SEEDS])
    ok = 0.05 <= med <= 0.9 and secs < 300
    acceptance(1, ok, f"double-well t-prior MSE median {med:.4f} in [0.05, 0.9] (seeds {fmt(vals)}); "
                      f"slowest chain {secs:.1f}s < 300s; diagnostic 1-99% interior MSE median {inner:.4f}")
    assert ok


def test_02_double_well_hs_mse(acceptance):
    med, vals = medians("table1", 40.0, 0.05, "mse_hs_prior")
    inner = np.median([interior_mse(cell("table1", 40.0, 0.05, s), "hs") for s in SEEDS])
    ok = 0.05 <= med <= 1.0
    acceptance(2, ok, f"double-well HS MSE median {med:.4f} in [0.05, 1.0] (seeds {fmt(vals)}); "
                      f"diagnostic interior MSE median {inner:.4f}")
    assert ok


def test_03_double_well_kolmogorov(acceptance):
    kt, vt = medians("table1", 40.0, 0.05, "kolmogorov_t_prior")
    kh, vh = medians("table1", 40.0, 0.05, "kolmogorov_hs_prior")
    ok = kt <= 0.35 and kh <= 0.35
    acceptance(3, ok, f"Kolmogorov medians t {kt:.4f} {fmt(vt)}, HS {kh:.4f} {fmt(vh)}; both <= 0.35")
    assert ok


def test_04_sample_size_trend(acceptance):
    parts, ok = [], True
    for name in ("t", "hs"):
        short, _ = medians("table1", 20.0, 0.05, f"mse_{name}_prior")
        long, _ = medians("table1", 80.0, 0.05, f"mse_{name}_prior")
        inner_s = np.median([interior_mse(cell("table1", 20.0, 0.05, s), name) for s in SEEDS])
        inner_l = np.median([interior_mse(cell("table1", 80.0, 0.05, s), name) for s in SEEDS])
        ok &= long < short
        parts.append(f"{name}: T80 {long:.4f} vs T20 {short:.4f} (interior {inner_l:.4f} vs {inner_s:.4f})")
    acceptance(4, ok, "MSE median decreases with T; " + "; ".join(parts))
    assert ok


# ------------------------------------------------------------ variant model


def test_05_diffusion_recovery(acceptance):
    parts, ok = [], True
    for target, lo, hi in (("table3", 0.85, 1.15), ("fig3", 0.21, 0.30)):
        row = cell(target, 40.0, 0.05, 1).row
        got = {p: row[f"sigma_sq_{p}_prior"][0][0] for p in ("t", "hs", "hs_alpha015")}
        ok &= all(lo <= got[p] <= hi for p in ("t", "hs"))
        sigma = 1.0 if target == "table3" else 0.5
        parts.append(f"sigma={sigma}: t {got['t']:.4f}, HS {got['hs']:.4f} in [{lo}, {hi}] "
                     f"(HS alpha=0.15 reported: {got['hs_alpha015']:.4f})")
    acceptance(5, ok, "variant sigma^2 recovery; " + "; ".join(parts))
    assert ok


def test_06_bimodal_stress_kolmogorov(acceptance):
    row = cell("fig3", 40.0, 0.05, 1).row
    kt, kh = row["kolmogorov_t_prior"], row["kolmogorov_hs_prior"]
    ok = kt <= 0.12
    acceptance(6, ok, f"variant sigma=0.5 t-prior Kolmogorov {kt:.4f} <= 0.12 "
                      f"(HS {kh:.4f}, HS alpha=0.15 {row['kolmogorov_hs_alpha015_prior']:.4f}, not gated)")
    assert ok


# ---------------------------------------------------------- Michaelis-Menten


def test_07_michaelis_menten(acceptance):
    fit = cell("fig4", 40.0, 0.04, 1)
    parts, ok = [], True
    for name in fit.summaries:
        s = np.asarray(fit.row[f"sigma_sq_{name}_prior"])
        diag, off = np.diag(s), s[~np.eye(3, dtype=bool)]
        mse = fit.row[f"mse_{name}_prior"]
        good = np.all((diag >= 0.005) & (diag <= 0.02)) and np.all(np.abs(off) <= 0.002) and mse <= 0.05
        ok &= bool(good)
        parts.append(f"{name}: diag {fmt(diag)}, max|off| {np.abs(off).max():.2e}, MSE {mse:.4f} "
                     f"(interior {interior_mse(fit, name):.4f})")
    acceptance(7, ok, "MM diag in [0.005, 0.02], |off| <= 0.002, MSE <= 0.05; " + "; ".join(parts))
    assert ok


# ------------------------------------------------------------ oracle suite


def _z(draws, mean):
    draws = np.asarray(draws, dtype=float).reshape(len(draws), -1)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    return np.max(np.abs(draws.mean(axis=0) - mean) / se)


def _gamma_z(reciprocals, shape, rate):
    # reciprocals of inverse-gamma draws are Gamma(shape, rate) with known mean and variance
    se = np.sqrt(shape / rate**2 / len(reciprocals))
    return abs(np.mean(reciprocals) - shape / rate) / se


def oracle_suite():
    zs = {}
    rng = RngStream(2024)

    traj = Trajectory([0.0], [1.0], [[1.0]], 1.0)
    flat = MatrixKernel(((ScalarKernel(bandwidth=1e12), np.eye(1)),))
    mu, cov = beta_conditional_params(traj, gram_matrix(flat, traj.left_endpoints, traj.states), [[1.0]], [1.0])
    hand = max(abs(mu[0] - 0.5), abs(cov[0, 0] - 0.5))

    # weights: the fast sampler against the dense conditional
    traj = Trajectory([0.1], [0.1, 0.2], [[0.4], [0.2]], 0.1)
    k1 = MatrixKernel.scalar_times_identity(1)
    model = constant_diffusion_model(lambda x: np.zeros_like(x), 0.5)
    p, sigma = np.array([0.7, 1.5]), np.array([[0.25]])
    mu, cov = beta_conditional_params(traj, gram_matrix(k1, traj.left_endpoints, traj.states), sigma, p, model)
    sampler = WeightSampler(traj, k1, model)
    zs["beta"] = _z([sampler.sample(sigma, p, rng) for _ in range(N)], mu)

    # sigma: IW_1(n + m, V_post) = IG((n + m)/2, V_post/2)
    prior = TPriorConfig(2.0, [[4.0]], 2.0, [[4.0]], scalar_mode=True)
    exp = DriftExpansion(k1, traj.states, [0.3, -0.1])
    v = float(sigma_posterior_scale(traj, exp, prior)[0, 0])
    draws = np.array([sample_sigma(traj, exp, prior, rng)[0, 0] for _ in range(N)])
    zs["sigma"] = _gamma_z(1.0 / draws, (2.0 + traj.m) / 2, v / 2)

    # t local scales, scalar and matrix modes
    beta = np.full(N, 0.7)
    zs["t_scalar"] = _gamma_z(1.0 / sample_local_scales_t(beta, prior, rng), 1.5, 2.0 + 0.245)
    u = 8 * np.eye(3)
    tm = TPriorConfig(5.0, u, 4.0, 2 * np.eye(3))
    b3 = np.array([0.5, -1.0, 0.2])
    lam = sample_local_scales_t(np.tile(b3, N), tm, rng)
    zs["t_matrix"] = _z(lam.reshape(N, -1), ((u + np.outer(b3, b3)) / (5.0 + 3 - 3 - 1)).ravel())

    # horseshoe blocks
    hs = HsPriorConfig(2.0, [[4.0]])
    theta = np.full(N, 0.8)
    zs["hs_local"] = _gamma_z(1.0 / sample_local_scales_hs(beta, 1.3, theta, hs, rng), 0.5 + 0.5, 0.245 / 1.3 + 0.8)
    bg, lg = np.array([0.4, -0.3, 1.1]), np.array([0.5, 2.0, 1.0])
    draws = np.array([sample_global_scale_hs(bg, lg, 0.6, hs, rng) for _ in range(N)])
    zs["hs_global"] = _gamma_z(1.0 / draws, 0.5 * (3 + 1.0), 0.6 + 0.5 * np.sum(bg**2 / lg))
    pairs = [sample_rate_hypers_hs(np.array([0.9]), 1.7, hs, rng) for _ in range(N)]
    theta = np.array([t[0] for t, _ in pairs])
    theta0 = np.array([t0 for _, t0 in pairs])
    a, b = hs.local_rate_hypers
    a0, b0 = hs.global_rate_hypers
    zs["hs_theta"] = _gamma_z(theta, hs.local_shape + a, b + 1 / 0.9)
    zs["hs_theta0"] = _gamma_z(theta0, hs.global_shape + a0, b0 + 1 / 1.7)

    psi = np.array([[2.0, 0.3], [0.3, 1.0]])
    iw = sample_inv_wishart(9.0, psi, rng, size=N)
    iw_rel = np.max(np.abs(iw.mean(axis=0) - psi / (9.0 - 2 - 1))) / np.max(np.abs(psi / 6.0))
    return hand, zs, iw_rel


def test_08_conditional_oracles(acceptance):
    start = time.perf_counter()
    hand, zs, iw_rel = oracle_suite()
    secs = time.perf_counter() - start
    worst = max(zs, key=zs.get)
    ok = hand < 1e-12 and max(zs.values()) < 3 and iw_rel < 0.05 and secs < 120
    acceptance(8, ok, f"hand case error {hand:.1e}; {len(zs)} samplers, worst |z| {zs[worst]:.2f} ({worst}) < 3; "
                      f"IW mean rel error {iw_rel:.4f} < 0.05; {secs:.1f}s < 120s")
    assert ok


# ----------------------------------------------------- deterministic checks


def test_09_speed_measure(acceptance):
    grid = np.linspace(-3, 3, 2001)
    dw = stationary_density_from_drift_1d(lambda x: double_well_drift(x[:, 0]), lambda x: np.ones_like(x), grid)
    e1 = np.max(np.abs(dw.pdf - true_stationary_density("double_well", 1.0, grid).pdf))
    grid = np.linspace(-5, 5, 2001)
    var = stationary_density_from_drift_1d(lambda x: double_well_variant_drift(x[:, 0]), lambda x: 1 + x**2, grid)
    e2 = np.max(np.abs(var.pdf - true_stationary_density("double_well_variant", 1.0, grid).pdf))
    ok = e1 < 1e-6 and e2 < 1e-4
    acceptance(9, ok, f"speed measure sup error: double well {e1:.2e} < 1e-6, variant {e2:.2e} < 1e-4")
    assert ok


def test_10_shrinkage_near_zero(acceptance):
    hs = [cell("table1", 40.0, 0.05, s).row["near_zero_hs_prior"] for s in SEEDS]
    t = [cell("table1", 40.0, 0.05, s).row["near_zero_t_prior"] for s in SEEDS]
    wins = sum(h >= v for h, v in zip(hs, t))
    ok = wins >= 2
    acceptance(10, ok, f"HS near-zero fraction >= t in {wins}/3 seeds (HS {fmt(hs)}, t {fmt(t)})")
    assert ok


def test_11_representer_quadrature(acceptance):
    basis = representer_basis_quadrature(ScalarKernel(), [np.ones_like], (0.0, 1.0), 1001)
    want = np.sqrt(np.pi / 2) * special.erf(1 / np.sqrt(2))
    e1 = abs(basis([0.0])[0, 0] - want)
    width, xi = 1e-3, 0.3

    def bump(z):
        return np.exp(-((z - xi) ** 2) / (2 * width**2)) / (width * np.sqrt(2 * np.pi))

    u = np.linspace(-1, 2, 101)
    basis = representer_basis_quadrature(ScalarKernel(), [bump], (-1.0, 2.0), 30001)
    e2 = np.max(np.abs(basis(u)[:, 0] - np.exp(-((u - xi) ** 2) / 2)))
    ok = e1 < 1e-4 and e2 < 1e-3
    acceptance(11, ok, f"representer value {want:.5f} error {e1:.1e} < 1e-4; bump limit sup error {e2:.1e} < 1e-3")
    assert ok


def test_12_reproduce_is_byte_identical(acceptance, tmp_path):
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = run(["reproduce", "table1", "--cells", "T=40,delta=0.05", "--seed", "7", "--out", str(out)])
        assert code == 0
        blobs.append((out / "metrics.json").read_bytes())
    ok = blobs[0] == blobs[1]
    acceptance(12, ok, f"reproduce table1 T=40,delta=0.05 --seed 7 twice: metrics.json identical ({len(blobs[0])} bytes)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
