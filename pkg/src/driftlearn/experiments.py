"""Reproduction harness: simulate, fit every configured prior, evaluate, and tabulate cells.

A cell is one ``(T, delta)`` setting.  Its trajectory seed is
``master ^ H(T, delta)`` and each prior's chain seed is
``master ^ H(T, delta, prior)``, with ``H`` the first 8 bytes of a SHA-256
digest, so cells are reproducible one at a time and in any order.
"""

import hashlib
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RidgeConfig, load_preset, parse_config
from .evaluation import default_mse_grid, evaluate_fit, figure_data, near_zero_fraction
from .gibbs import PosteriorSamples, PosteriorSummary, run_chain, summarize_posterior
from .io import write_table_csv
from .randdist import RngStream
from .rkhs import ridge_map_estimate
from .sde import Trajectory, euler_maruyama_simulate

TABLE_COLUMNS = ((40.0, 0.025), (40.0, 0.05), (40.0, 0.1), (80.0, 0.05), (60.0, 0.05), (20.0, 0.05))
RIDGE_BASELINE = {"ridge": {"kind": "ridge", "ridge": 1.0}}


@dataclass(frozen=True)
class Target:
    presets: tuple
    cells: tuple
    metric: str
    figures: bool = False
    extra_priors: tuple = ()


TARGETS = {
    "table1": Target(("double_well_t", "double_well_hs"), TABLE_COLUMNS, "mse"),
    "table2": Target(("double_well_t", "double_well_hs"), TABLE_COLUMNS, "kolmogorov"),
    "table3": Target(("dw_variant_s1",), TABLE_COLUMNS, "mse"),
    "table4": Target(("dw_variant_s1",), TABLE_COLUMNS, "kolmogorov"),
    "fig1": Target(("double_well_t", "double_well_hs", "double_well_ridge"), ((40.0, 0.05),), "mse", True),
    "fig2": Target(("dw_variant_s1",), ((40.0, 0.05),), "mse", True, ("ridge",)),
    "fig3": Target(("dw_variant_s05",), ((40.0, 0.05),), "mse", True),
    "fig4": Target(("michaelis_menten",), ((40.0, 0.04),), "mse", True),
}


def stable_hash(*parts):
    text = "|".join(repr(float(p)) if isinstance(p, (int, float)) else str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def cell_seed(master, *parts):
    return (int(master) ^ stable_hash(*parts)) % 2**64


def target_raw(name):
    """Resolved raw config of a reproduction target: its presets' priors combined."""
    try:
        target = TARGETS[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; expected one of {sorted(TARGETS)}") from None
    raw = load_preset(target.presets[0])
    priors = {}
    for p in target.presets:
        priors.update(load_preset(p)["priors"])
    for extra in target.extra_priors:
        priors[extra] = RIDGE_BASELINE[extra]
    raw["priors"] = priors
    return raw


def parse_cells(text):
    """``"T=40,delta=0.05;T=80,delta=0.05"`` -> ``[(40.0, 0.05), (80.0, 0.05)]``."""
    cells = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        kv = {}
        for item in chunk.split(","):
            k, sep, v = item.partition("=")
            if not sep:
                raise ValueError(f"cell spec {chunk!r}: expected key=value pairs")
            kv[k.strip().lower()] = float(v)
        if set(kv) != {"t", "delta"}:
            raise ValueError(f"cell spec {chunk!r}: need exactly T and delta")
        cells.append((kv["t"], kv["delta"]))
    if not cells:
        raise ValueError("no cells given")
    return cells


# -------------------------------------------------------------------- stages


def simulate(cfg, seed=None):
    sim = cfg.simulation
    rng = RngStream(sim.seed if seed is None else seed)
    return euler_maruyama_simulate(cfg.model(), sim.x0, sim.delta, sim.m, rng, discard=sim.discard)


def _chain_worker(args):
    raw, name, arrays, seed, stream = args
    cfg = parse_config(raw)
    traj = Trajectory(*arrays)
    ch = cfg.chain
    return run_chain(
        traj, cfg.kernel(), cfg.priors[name], ch.iters, ch.burn_in, ch.thin,
        RngStream(seed, stream), model=cfg.model(),
    ).states


def fit_prior(cfg, name, traj, seed, jobs=1):
    """Fit one configured prior; returns ``(samples or None, summary)``.

    Chains use streams ``0..n_chains-1`` of ``seed`` and are pooled in stream
    order, so the result does not depend on ``jobs``.
    """
    prior = cfg.priors[name]
    model = cfg.model()
    kernel = cfg.kernel()
    grid = default_mse_grid(traj.states, cfg.eval.mse_points)
    if isinstance(prior, RidgeConfig):
        exp = ridge_map_estimate(traj, kernel, model, prior.ridge, x0=traj.states[0])
        mags = np.linalg.norm(exp.weight_matrix, axis=1)
        curve = exp.evaluate(grid).reshape(grid.shape[0], -1)
        return None, PosteriorSummary(exp, model.sigma_sq, mags, grid, curve)
    ch = cfg.chain
    arrays = (traj.x0, traj.times, traj.states, traj.delta)
    jobs_args = [(cfg.raw, name, arrays, seed, c) for c in range(ch.n_chains)]
    if jobs > 1 and ch.n_chains > 1:
        with ProcessPoolExecutor(min(jobs, ch.n_chains)) as pool:
            parts = list(pool.map(_chain_worker, jobs_args))
    else:
        parts = [
            run_chain(traj, kernel, prior, ch.iters, ch.burn_in, ch.thin, RngStream(seed, c), model=model).states
            for c in range(ch.n_chains)
        ]
    states = [s for part in parts for s in part]
    samples = PosteriorSamples(states, ch.burn_in, ch.thin, kernel, traj.states.copy(), traj.delta, prior.kind)
    return samples, summarize_posterior(samples, grid)


def prior_metrics(name, summary, traj, cfg):
    ev = cfg.eval
    out = evaluate_fit(summary, traj, cfg.model(), ev.mse_points, ev.density_points, ev.extension, ev.use_estimated_sigma)
    metrics = {
        f"mse_{name}_prior": out["mse"],
        f"sigma_sq_{name}_prior": out["sigma_sq"],
        f"near_zero_{name}_prior": near_zero_fraction(summary.weight_magnitudes),
    }
    if "kolmogorov" in out:
        metrics[f"kolmogorov_{name}_prior"] = out["kolmogorov"]
    if summary.mean_global_scale is not None:
        metrics[f"tau_{name}_prior"] = summary.mean_global_scale
    return metrics


def figures(cfg, traj, summaries):
    ev = cfg.eval
    model = cfg.model()
    return {
        name: figure_data(s, traj, model, ev.mse_points, ev.density_points, ev.extension, 50, ev.use_estimated_sigma)
        for name, s in summaries.items()
    }


def write_figure_csvs(out_dir, figs):
    """Write ``fig_drift.csv``, ``fig_hist.csv`` and, in one dimension, the stationary and PP files."""
    names = list(figs)
    first = figs[names[0]]
    grid = first["drift"]["grid"]
    d = grid.shape[1]
    g = grid.shape[0] // d if d > 1 else grid.shape[0]
    cols = [(f"x{j + 1}", grid[:, j]) for j in range(d)]
    cols.append(("slice", np.repeat(np.arange(1 if d == 1 else d), g)))
    cols += [(f"true_{j + 1}", first["drift"]["truth"][:, j]) for j in range(d)]
    for n in names:
        dr = figs[n]["drift"]
        cols += [(f"{n}_{j + 1}", dr["estimate"][:, j]) for j in range(d)]
        if "lower" in dr:
            cols += [(f"{n}_lower_{j + 1}", dr["lower"][:, j]) for j in range(d)]
            cols += [(f"{n}_upper_{j + 1}", dr["upper"][:, j]) for j in range(d)]
    paths = [os.path.join(out_dir, "fig_drift.csv")]
    write_table_csv(paths[-1], cols)

    prior_col, left, right, counts = [], [], [], []
    for n in names:
        h = figs[n]["hist"]
        prior_col += [n] * h["counts"].size
        left.append(h["edges"][:-1])
        right.append(h["edges"][1:])
        counts.append(h["counts"])
    paths.append(os.path.join(out_dir, "fig_hist.csv"))
    write_table_csv(paths[-1], [
        ("prior", np.array(prior_col, dtype=object)),
        ("bin_left", np.concatenate(left)),
        ("bin_right", np.concatenate(right)),
        ("count", np.concatenate(counts)),
    ])

    if first["stationary"] is not None:
        st = first["stationary"]
        cols = [("x", st["xs"]), ("true", st["true"])] + [(n, figs[n]["stationary"]["estimate"]) for n in names]
        paths.append(os.path.join(out_dir, "fig_stationary.csv"))
        write_table_csv(paths[-1], cols)
        cols = [("F_true", first["pp"]["true"])] + [(f"F_{n}", figs[n]["pp"]["estimate"]) for n in names]
        paths.append(os.path.join(out_dir, "fig_pp.csv"))
        write_table_csv(paths[-1], cols)
    return paths


def _cell_worker(args):
    raw, T, delta, master, want_figures = args
    return run_cell(raw, T, delta, master, want_figures)


@dataclass
class CellFit:
    cfg: object
    traj: Trajectory
    row: dict
    summaries: dict
    seconds: dict


def fit_cell(raw, T, delta, master_seed):
    """Simulate one ``(T, delta)`` cell and fit every prior in ``raw``.

    ``row`` holds the cell coordinates, seeds and per-prior metrics; wall-clock
    times are kept apart in ``seconds`` so rows stay deterministic.
    """
    m = int(round(T / delta))
    raw = dict(raw, simulation=dict(raw["simulation"], delta=float(delta), m=m, T=m * float(delta)))
    cfg = parse_config(raw)
    data_seed = cell_seed(master_seed, T, delta)
    traj = simulate(cfg, data_seed)
    row = {"T": float(T), "delta": float(delta), "m": m, "data_seed": data_seed}
    summaries, seconds = {}, {}
    for name in cfg.priors:
        seed = cell_seed(master_seed, T, delta, name)
        start = time.perf_counter()
        _, summary = fit_prior(cfg, name, traj, seed)
        seconds[name] = time.perf_counter() - start
        summaries[name] = summary
        row.update(prior_metrics(name, summary, traj, cfg))
    return CellFit(cfg, traj, row, summaries, seconds)


def run_cell(raw, T, delta, master_seed, want_figures=False):
    """Returns ``(row, figs)`` for one cell; ``figs`` is ``None`` unless requested."""
    fit = fit_cell(raw, T, delta, master_seed)
    return fit.row, (figures(fit.cfg, fit.traj, fit.summaries) if want_figures else None)


def reproduce(target, master_seed=0, cells=None, jobs=1, out_dir=None):
    """Run a table or figure target; returns the metrics dict written to ``metrics.json``.

    Figure CSVs for ``fig*`` targets are written to ``out_dir`` (one cell only).
    """
    spec = TARGETS[target]
    raw = target_raw(target)
    cells = list(spec.cells if cells is None else cells)
    args = [(raw, T, delta, master_seed, spec.figures) for T, delta in cells]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(min(jobs, len(args))) as pool:
            results = list(pool.map(_cell_worker, args))
    else:
        results = [_cell_worker(a) for a in args]
    files = []
    if spec.figures and out_dir is not None:
        files = write_figure_csvs(out_dir, results[0][1])
    metrics = {
        "target": target,
        "metric": spec.metric,
        "model": raw["model"],
        "priors": sorted(raw["priors"]),
        "master_seed": int(master_seed),
        "rows": [r for r, _ in results],
    }
    return metrics, files
