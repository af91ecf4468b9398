"""Command-line entry points: ``simulate``, ``fit``, ``evaluate`` and ``reproduce``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""

import argparse
import logging
import os
import sys
import time
import traceback

import numpy as np

from . import experiments
from .config import load_config
from .errors import ConfigError, FormatError, NumericalError, ParameterError
from .gibbs import PosteriorSummary
from .io import (
    read_expansion_csv,
    read_json,
    read_trajectory_csv,
    write_expansion_csv,
    write_json,
    write_samples_csv,
    write_trajectory_csv,
)

log = logging.getLogger("driftlearn")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 1, 2, 3


def _origin(exc):
    """``module.function`` of the innermost package frame that raised ``exc``."""
    pkg = os.path.dirname(os.path.abspath(__file__))
    where = "driftlearn"
    for frame in traceback.extract_tb(exc.__traceback__):
        if os.path.abspath(frame.filename).startswith(pkg):
            mod = os.path.splitext(os.path.basename(frame.filename))[0]
            where = f"{mod}.{frame.name}"
    return where


def _update_manifest(out, cfg, command, files, seconds, metrics=None):
    path = os.path.join(out, "manifest.json")
    manifest = read_json(path) if os.path.exists(path) else {}
    if cfg is not None:
        manifest["config_sha256"] = cfg.digest()
    manifest.setdefault("files", {})[command] = sorted(os.path.relpath(f, out) for f in files)
    manifest.setdefault("wall_clock_seconds", {})[command] = round(seconds, 3)
    if metrics is not None:
        manifest["metrics"] = metrics
    write_json(path, manifest)


def _config(args, extra=()):
    return load_config(args.config, list(args.set or ()) + list(extra))


def _trajectory(args, cfg, out):
    path = args.data or os.path.join(out, "trajectory.csv")
    if os.path.exists(path):
        return read_trajectory_csv(path)
    if args.data:
        raise FileNotFoundError(path)
    return experiments.simulate(cfg)


def cmd_simulate(args, out):
    extra = [f"simulation.seed={args.seed}"] if args.seed is not None else []
    cfg = _config(args, extra)
    traj = experiments.simulate(cfg)
    path = os.path.join(out, "trajectory.csv")
    write_trajectory_csv(path, traj)
    return cfg, [path], None


def cmd_fit(args, out):
    extra = [f"chain.seed={args.seed}"] if args.seed is not None else []
    cfg = _config(args, extra)
    traj = _trajectory(args, cfg, out)
    files, summary_json = [], {}
    for name in cfg.priors:
        samples, summary = experiments.fit_prior(cfg, name, traj, cfg.chain.seed, args.jobs)
        if samples is not None:
            files.append(os.path.join(out, f"samples_{name}.csv"))
            write_samples_csv(files[-1], samples)
        files.append(os.path.join(out, f"expansion_{name}.csv"))
        write_expansion_csv(files[-1], summary.mean_expansion)
        summary_json[name] = {
            "n_samples": 0 if samples is None else len(samples),
            "mean_sigma_sq": summary.mean_sigma_sq,
            "mean_global_scale": summary.mean_global_scale,
            "weight_magnitudes": summary.weight_magnitudes,
            "grid": summary.grid,
            "mean_curve": summary.mean_curve,
            "band_lower": summary.band_lower,
            "band_upper": summary.band_upper,
        }
    files.append(os.path.join(out, "summary.json"))
    write_json(files[-1], summary_json)
    return cfg, files, None


def _load_summary(out, name, entry, kernel):
    exp = read_expansion_csv(os.path.join(out, f"expansion_{name}.csv"), kernel)

    def arr(key):
        return None if entry.get(key) is None else np.asarray(entry[key], dtype=float)

    return PosteriorSummary(
        exp,
        arr("mean_sigma_sq"),
        arr("weight_magnitudes"),
        arr("grid"),
        arr("mean_curve"),
        arr("band_lower"),
        arr("band_upper"),
        entry.get("mean_global_scale"),
    )


def cmd_evaluate(args, out):
    cfg = _config(args)
    traj = _trajectory(args, cfg, out)
    summary_path = os.path.join(out, "summary.json")
    if not os.path.exists(summary_path):
        raise FileNotFoundError(f"{summary_path} (run 'fit' first)")
    stored = read_json(summary_path)
    kernel = cfg.kernel()
    summaries, metrics = {}, {}
    for name in cfg.priors:
        if name not in stored:
            raise FormatError(f"{summary_path}: no entry for prior {name!r}")
        summaries[name] = _load_summary(out, name, stored[name], kernel)
        metrics.update(experiments.prior_metrics(name, summaries[name], traj, cfg))
    path = os.path.join(out, "metrics.json")
    write_json(path, metrics)
    figs = experiments.figures(cfg, traj, summaries)
    files = [path] + experiments.write_figure_csvs(out, figs)
    return cfg, files, metrics


def cmd_reproduce(args, out):
    cells = experiments.parse_cells(args.cells) if args.cells else None
    seed = 0 if args.seed is None else args.seed
    metrics, files = experiments.reproduce(args.target, seed, cells, args.jobs, out)
    path = os.path.join(out, "metrics.json")
    write_json(path, metrics)
    return None, [path] + files, metrics


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate, "reproduce": cmd_reproduce}


def build_parser():
    parser = argparse.ArgumentParser(prog="driftlearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="config JSON file or bundled preset name")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", help="simulate a trajectory CSV")
    common(p)
    for name, helptext in (("fit", "fit every configured prior"), ("evaluate", "metrics and figure CSVs")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--data", help="trajectory CSV (default: OUT/trajectory.csv, else simulate)")
    p = sub.add_parser("reproduce", help="tables 1-4 and figures 1-4")
    p.add_argument("target", choices=sorted(experiments.TARGETS))
    p.add_argument("--cells", help='e.g. "T=40,delta=0.05;T=80,delta=0.05"')
    common(p, config=False)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    try:
        if out is None:
            out = "out" if args.command == "reproduce" else load_config(args.config, args.set or ()).output_dir
        os.makedirs(out, exist_ok=True)
        start = time.perf_counter()
        cfg, files, metrics = COMMANDS[args.command](args, out)
        _update_manifest(out, cfg, args.command, files, time.perf_counter() - start, metrics)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if isinstance(exc, FormatError):
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
        if isinstance(exc, ParameterError) and _origin(exc).split(".")[0] in ("config", "cli"):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if isinstance(exc, ParameterError):
            print(f"numerical error in {_origin(exc)}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
