"""CSV and JSON interchange formats.

Floats are written with 17 significant digits so files round-trip exactly and
repeated runs produce byte-identical output.
"""

import csv
import json

import numpy as np

from .errors import FormatError
from .rkhs import DriftExpansion
from .sde import Trajectory


def _fmt(x):
    return format(float(x), ".17g")


def _row(values):
    return ",".join(_fmt(v) for v in values)


def write_trajectory_csv(path, traj):
    """``# x0=...`` and ``# delta=...`` comment lines, then ``t,x1,...,xd`` rows."""
    d = traj.dim
    with open(path, "w", newline="") as fh:
        fh.write(f"# x0={_row(traj.x0)}\n")
        fh.write(f"# delta={_fmt(traj.delta)}\n")
        fh.write(",".join(["t"] + [f"x{j + 1}" for j in range(d)]) + "\n")
        for t, x in zip(traj.times, traj.states):
            fh.write(f"{_fmt(t)},{_row(x)}\n")


def read_trajectory_csv(path):
    meta = {}
    rows = []
    header = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif header is None:
                header = line.split(",")
            else:
                try:
                    rows.append([float(v) for v in line.split(",")])
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if header is None or header[0] != "t" or "x0" not in meta or "delta" not in meta:
        raise FormatError(f"{path}: expected '# x0=', '# delta=' lines and a 't,x1,...' header")
    if not rows or any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: rows must match the header width")
    data = np.array(rows)
    try:
        x0 = [float(v) for v in meta["x0"].split(",")]
        delta = float(meta["delta"])
    except ValueError:
        raise FormatError(f"{path}: malformed metadata") from None
    return Trajectory(x0, data[:, 0], data[:, 1:], delta)


def samples_columns(samples):
    d = samples.kernel.out_dim
    md = samples.states[0].beta.shape[0]
    cols = ["iter"] + [f"beta_{i + 1}" for i in range(md)]
    cols += [f"sigma_{a + 1}{b + 1}" for a in range(d) for b in range(d)]
    cols += ["tau", "theta0"]
    first = samples.states[0]
    scalar_scales = first.local_scales.ndim == 1 and first.local_scales.size > 0
    if scalar_scales:
        cols += [f"lambda_{i + 1}" for i in range(first.local_scales.size)]
    if first.theta is not None:
        cols += [f"theta_{i + 1}" for i in range(first.theta.size)]
    return cols, scalar_scales


def write_samples_csv(path, samples):
    """One row per stored state.

    ``tau`` and ``theta0`` are empty for the t prior.  Per-center ``lambda_i``
    columns are written when the local scales are scalars; matrix-valued
    local covariances are not exported.
    """
    cols, scalar_scales = samples_columns(samples)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k, s in enumerate(samples.states):
            it = samples.burn_in + k * samples.thin
            parts = [str(it), _row(s.beta), _row(np.asarray(s.sigma_sq).reshape(-1))]
            parts.append("" if s.global_scale is None else _fmt(s.global_scale))
            parts.append("" if s.theta0 is None else _fmt(s.theta0))
            if scalar_scales:
                parts.append(_row(s.local_scales))
            if s.theta is not None:
                parts.append(_row(s.theta))
            fh.write(",".join(parts) + "\n")


def read_samples_csv(path):
    """Parse a samples CSV into a dict of arrays keyed by column group."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not header or header[0] != "iter":
        raise FormatError(f"{path}: header must start with 'iter'")

    def col(prefix):
        return [i for i, c in enumerate(header) if c.startswith(prefix)]

    def grab(idx):
        out = np.full((len(rows), len(idx)), np.nan)
        for r, row in enumerate(rows):
            for j, i in enumerate(idx):
                if row[i] != "":
                    out[r, j] = float(row[i])
        return out

    try:
        sig = grab(col("sigma_"))
        d = int(round(np.sqrt(sig.shape[1])))
        return {
            "iter": np.array([int(r[0]) for r in rows]),
            "beta": grab(col("beta_")),
            "sigma_sq": sig.reshape(len(rows), d, d),
            "tau": grab([header.index("tau")])[:, 0],
            "theta0": grab([header.index("theta0")])[:, 0],
            "lambda": grab(col("lambda_")),
            "theta": grab([i for i, c in enumerate(header) if c.startswith("theta_")]),
        }
    except (ValueError, IndexError):
        raise FormatError(f"{path}: malformed samples file") from None


def write_expansion_csv(path, expansion):
    """Rows ``center_1..center_d,beta_1..beta_n``."""
    d = expansion.centers.shape[1]
    n = expansion.kernel.out_dim
    with open(path, "w", newline="") as fh:
        fh.write(",".join([f"center_{j + 1}" for j in range(d)] + [f"beta_{j + 1}" for j in range(n)]) + "\n")
        for c, b in zip(expansion.centers, expansion.weight_matrix):
            fh.write(f"{_row(c)},{_row(b)}\n")


def read_expansion_csv(path, kernel):
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError:
            raise FormatError(f"{path}: malformed expansion file") from None
    d = sum(1 for c in header if c.startswith("center_"))
    if d == 0 or data.shape[1] != len(header):
        raise FormatError(f"{path}: header does not match the data")
    return DriftExpansion(kernel, data[:, :d], data[:, d:].reshape(-1))


def write_table_csv(path, columns):
    """Write equal-length named columns; ``columns`` is a list of ``(name, values)``."""
    names = [c for c, _ in columns]
    arrays = [np.asarray(v).reshape(-1) for _, v in columns]
    n = arrays[0].shape[0]
    if any(a.shape[0] != n for a in arrays):
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(str(a[i]) if a.dtype.kind in "iuUO" else _fmt(a[i]) for a in arrays) + "\n")


def read_table_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    out = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
