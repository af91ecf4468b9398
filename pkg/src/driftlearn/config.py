"""Run configuration: JSON files, bundled presets, ``key=value`` overrides and validation."""

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, ParameterError
from .gibbs import HsPriorConfig, TPriorConfig
from .rkhs import MatrixKernel
from .sde import BUILTIN_MODELS, DEFAULT_X0, builtin_model

SECTIONS = ("preset", "model", "simulation", "kernel", "prior", "priors", "chain", "eval", "output_dir")

DEFAULTS = {
    "kernel": {"kind": "gaussian", "bandwidth": 1.0},
    "chain": {"iters": 2000, "burn_in": 500, "thin": 1, "n_chains": 1, "seed": 0},
    "eval": {"mse_points": 200, "density_points": 2001, "extension": 0.2, "use_estimated_sigma": True},
    "output_dir": "out",
}


@dataclass(frozen=True)
class RidgeConfig:
    """Fixed prior covariance ``ridge^{-1} I`` with the diffusion held at its true value."""

    ridge: float
    kind = "ridge"


@dataclass(frozen=True)
class SimulationConfig:
    x0: tuple
    delta: float
    m: int
    seed: int
    discard: int = 0

    @property
    def T(self):
        return self.m * self.delta


@dataclass(frozen=True)
class ChainConfig:
    iters: int = 2000
    burn_in: int = 500
    thin: int = 1
    n_chains: int = 1
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    mse_points: int = 200
    density_points: int = 2001
    extension: float = 0.2
    use_estimated_sigma: bool = True


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration; ``raw`` keeps the resolved JSON form."""

    model_name: str
    model_params: dict
    simulation: SimulationConfig
    bandwidth: float
    priors: dict
    chain: ChainConfig
    eval: EvalConfig
    output_dir: str
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def model(self):
        return builtin_model(self.model_name, self.model_params)

    def kernel(self):
        return MatrixKernel.scalar_times_identity(self.model().dim, self.bandwidth)

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def preset_names():
    root = resources.files("driftlearn") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name):
    path = resources.files("driftlearn") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"preset: unknown preset {name!r}; available: {preset_names()}")
    return json.loads(path.read_text())


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_raw(source):
    """Read a config file, or a bundled preset when ``source`` is a preset name.

    A ``"preset"`` key inside a file names a base preset that the file's other
    keys are merged into.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    elif os.path.exists(source):
        with open(source) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: {source} is not valid JSON ({exc})") from None
    elif os.sep not in str(source) and not str(source).endswith(".json"):
        raw = load_preset(source)
    else:
        raise FileNotFoundError(source)
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    if "preset" in raw:
        base = load_preset(raw["preset"])
        if "prior" in raw:
            base.pop("priors", None)
        raw = _merge(base, {k: v for k, v in raw.items() if k != "preset"})
    return raw


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw, overrides):
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set: expected key=value, got {item!r}")
        parts = key.strip().split(".")
        node = raw
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(value.strip())
    return raw


# ----------------------------------------------------------------- validation


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _check_spd(diags, name, value, d=None):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        diags.append(f"{name}: must be a numeric matrix")
        return None
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        diags.append(f"{name}: must be a square matrix")
        return None
    if d is not None and a.shape[0] != d:
        diags.append(f"{name}: must be {d}x{d}")
        return None
    if not np.all(np.isfinite(a)) or np.max(np.abs(a - a.T)) > 1e-10 * max(np.abs(a).max(), 1e-300):
        diags.append(f"{name}: must be symmetric")
        return None
    if np.linalg.eigvalsh(a).min() <= 0:
        diags.append(f"{name}: must be positive definite")
        return None
    return a


def _positive(diags, name, value):
    if not (_is_number(value) and value > 0):
        diags.append(f"{name}: must be a positive number, got {value!r}")
        return False
    return True


def _check_pair(diags, name, value):
    ok = isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_number(v) and v > 0 for v in value)
    if not ok:
        diags.append(f"{name}: must be a pair of positive numbers (shape, rate), got {value!r}")


def _prior_entries(raw):
    if "prior" in raw and "priors" in raw:
        return None, ["prior: give either 'prior' or 'priors', not both"]
    if "prior" in raw:
        p = raw["prior"]
        if not isinstance(p, dict):
            return None, ["prior: must be an object"]
        return [(str(p.get("name", p.get("kind", "prior"))), "prior", p)], []
    priors = raw.get("priors")
    if not isinstance(priors, dict) or not priors:
        return None, ["priors: at least one prior is required"]
    out, diags = [], []
    for name, p in priors.items():
        if not isinstance(p, dict):
            diags.append(f"priors.{name}: must be an object")
        else:
            out.append((name, f"priors.{name}", p))
    return out, diags


def _check_prior(diags, where, p, d):
    kind = p.get("kind")
    if kind == "ridge":
        _positive(diags, f"{where}.ridge", p.get("ridge"))
        return
    if kind not in ("t", "hs"):
        diags.append(f"{where}.kind: must be 't', 'hs' or 'ridge', got {kind!r}")
        return
    if not (_is_number(p.get("sigma_dof")) and p["sigma_dof"] > d - 1):
        diags.append(f"{where}.sigma_dof: must exceed d - 1 = {d - 1}")
    _check_spd(diags, f"{where}.sigma_scale", p.get("sigma_scale"), d)
    if kind == "t":
        _positive(diags, f"{where}.dof", p.get("dof"))
        scalar = bool(p.get("scalar_mode", False))
        _check_spd(diags, f"{where}.scale", p.get("scale"), None if scalar else d)
        allowed = {"kind", "name", "dof", "scale", "sigma_dof", "sigma_scale", "scalar_mode", "paper_literal_scale"}
    else:
        _positive(diags, f"{where}.local_shape", p.get("local_shape", 0.5))
        _positive(diags, f"{where}.global_shape", p.get("global_shape", 0.5))
        _check_pair(diags, f"{where}.local_rate_hypers", p.get("local_rate_hypers", [0.5, 1.0]))
        _check_pair(diags, f"{where}.global_rate_hypers", p.get("global_rate_hypers", [0.5, 1.0]))
        allowed = {"kind", "name", "sigma_dof", "sigma_scale", "local_shape", "global_shape",
                   "local_rate_hypers", "global_rate_hypers"}
    for k in sorted(set(p) - allowed):
        diags.append(f"{where}.{k}: unknown field")


def collect_diagnostics(raw):
    """Every violated invariant as ``"field: message"``; empty when the config is valid."""
    diags = []
    for k in sorted(set(raw) - set(SECTIONS)):
        diags.append(f"{k}: unknown section")

    model = raw.get("model")
    dim = None
    if not isinstance(model, dict) or "name" not in model:
        diags.append("model.name: required")
    elif model["name"] not in BUILTIN_MODELS:
        diags.append(f"model.name: unknown model {model['name']!r}; expected one of {list(BUILTIN_MODELS)}")
    else:
        params = model.get("params", {}) or {}
        try:
            spec = builtin_model(model["name"], params)
            dim = spec.dim
            if "sigma" in params and not (_is_number(params["sigma"]) and params["sigma"] > 0):
                diags.append("model.params.sigma: must be a positive number")
        except (ParameterError, TypeError, ValueError) as exc:
            diags.append(f"model.params: {exc}")

    sim = raw.get("simulation")
    if not isinstance(sim, dict):
        diags.append("simulation: required")
    else:
        delta = sim.get("delta")
        ok_delta = _positive(diags, "simulation.delta", delta)
        m, T = sim.get("m"), sim.get("T")
        if m is None and T is None:
            diags.append("simulation.m: give m or T")
        if m is not None and not (_is_int(m) and m >= 2):
            diags.append("simulation.m: must be an integer >= 2")
        if T is not None and _positive(diags, "simulation.T", T) and ok_delta:
            steps = T / delta
            if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
                diags.append("simulation.T: must be a whole number of steps of simulation.delta")
            elif m is not None and _is_int(m) and int(round(steps)) != m:
                diags.append(f"simulation.T: T = {T} disagrees with m * delta = {m * delta}")
            elif round(steps) < 2:
                diags.append("simulation.T: must cover at least two steps")
        x0 = sim.get("x0")
        if x0 is not None:
            try:
                x0a = np.atleast_1d(np.asarray(x0, dtype=float))
                if x0a.ndim != 1 or (dim is not None and x0a.shape[0] != dim) or not np.all(np.isfinite(x0a)):
                    diags.append(f"simulation.x0: must be a finite vector of length {dim}")
            except (TypeError, ValueError):
                diags.append("simulation.x0: must be numeric")
        seed = sim.get("seed", 0)
        if not (_is_int(seed) and 0 <= seed < 2**64):
            diags.append("simulation.seed: must be an integer in [0, 2^64)")
        discard = sim.get("discard", 0)
        if not (_is_int(discard) and discard >= 0):
            diags.append("simulation.discard: must be a nonnegative integer")
        for k in sorted(set(sim) - {"x0", "delta", "m", "T", "seed", "discard"}):
            diags.append(f"simulation.{k}: unknown field")

    kern = raw.get("kernel", DEFAULTS["kernel"])
    if not isinstance(kern, dict):
        diags.append("kernel: must be an object")
    else:
        if kern.get("kind", "gaussian") != "gaussian":
            diags.append(f"kernel.kind: only 'gaussian' is supported, got {kern.get('kind')!r}")
        _positive(diags, "kernel.bandwidth", kern.get("bandwidth", 1.0))

    entries, pdiags = _prior_entries(raw)
    diags.extend(pdiags)
    if entries and dim is not None:
        for _, where, p in entries:
            _check_prior(diags, where, p, dim)

    chain = raw.get("chain", DEFAULTS["chain"])
    if not isinstance(chain, dict):
        diags.append("chain: must be an object")
    else:
        c = dict(DEFAULTS["chain"], **chain)
        for k in ("iters", "burn_in", "thin", "n_chains", "seed"):
            if not (_is_int(c[k]) and c[k] >= 0):
                diags.append(f"chain.{k}: must be a nonnegative integer")
        if all(_is_int(c[k]) for k in ("iters", "burn_in", "thin", "n_chains")):
            if not c["iters"] > c["burn_in"]:
                diags.append("chain.iters: must exceed chain.burn_in")
            if c["thin"] < 1:
                diags.append("chain.thin: must be at least 1")
            if c["n_chains"] < 1:
                diags.append("chain.n_chains: must be at least 1")
        if _is_int(c["seed"]) and c["seed"] >= 2**64:
            diags.append("chain.seed: must be below 2^64")
        for k in sorted(set(chain) - set(DEFAULTS["chain"])):
            diags.append(f"chain.{k}: unknown field")

    ev = raw.get("eval", DEFAULTS["eval"])
    if not isinstance(ev, dict):
        diags.append("eval: must be an object")
    else:
        e = dict(DEFAULTS["eval"], **ev)
        if not (_is_int(e["mse_points"]) and e["mse_points"] >= 2):
            diags.append("eval.mse_points: must be an integer >= 2")
        if not (_is_int(e["density_points"]) and e["density_points"] >= 3):
            diags.append("eval.density_points: must be an integer >= 3")
        if not (_is_number(e["extension"]) and e["extension"] >= 0):
            diags.append("eval.extension: must be a nonnegative number")
        if not isinstance(e["use_estimated_sigma"], bool):
            diags.append("eval.use_estimated_sigma: must be true or false")
        for k in sorted(set(ev) - set(DEFAULTS["eval"])):
            diags.append(f"eval.{k}: unknown field")

    if not isinstance(raw.get("output_dir", "out"), str):
        diags.append("output_dir: must be a string")
    return diags


def build_prior(p, d):
    kind = p["kind"]
    if kind == "ridge":
        return RidgeConfig(float(p["ridge"]))
    if kind == "t":
        return TPriorConfig(
            float(p["dof"]),
            np.asarray(p["scale"], dtype=float),
            float(p["sigma_dof"]),
            np.asarray(p["sigma_scale"], dtype=float),
            scalar_mode=bool(p.get("scalar_mode", False)),
            paper_literal_scale=bool(p.get("paper_literal_scale", False)),
        )
    return HsPriorConfig(
        float(p["sigma_dof"]),
        np.asarray(p["sigma_scale"], dtype=float),
        local_shape=float(p.get("local_shape", 0.5)),
        global_shape=float(p.get("global_shape", 0.5)),
        local_rate_hypers=tuple(p.get("local_rate_hypers", (0.5, 1.0))),
        global_rate_hypers=tuple(p.get("global_rate_hypers", (0.5, 1.0))),
    )


def parse_config(raw):
    """Validate and convert a raw config dict; raises :class:`ConfigError` listing every problem."""
    diags = collect_diagnostics(raw)
    if diags:
        raise ConfigError(diags)
    model = builtin_model(raw["model"]["name"], raw["model"].get("params", {}) or {})
    d = model.dim
    sim = raw["simulation"]
    delta = float(sim["delta"])
    m = int(sim["m"]) if sim.get("m") is not None else int(round(sim["T"] / delta))
    x0 = tuple(float(v) for v in np.atleast_1d(sim.get("x0", DEFAULT_X0[model.name])))
    simulation = SimulationConfig(x0, delta, m, int(sim.get("seed", 0)), int(sim.get("discard", 0)))
    entries, _ = _prior_entries(raw)
    try:
        priors = {name: build_prior(p, d) for name, _, p in entries}
    except ParameterError as exc:
        raise ConfigError(f"prior: {exc}") from None
    chain = ChainConfig(**dict(DEFAULTS["chain"], **raw.get("chain", {})))
    ev = EvalConfig(**dict(DEFAULTS["eval"], **raw.get("eval", {})))
    kern = dict(DEFAULTS["kernel"], **raw.get("kernel", {}))
    resolved = copy.deepcopy(raw)
    resolved["simulation"] = dict(sim, m=m, x0=list(x0))
    return RunConfig(
        model.name,
        dict(model.params),
        simulation,
        float(kern["bandwidth"]),
        priors,
        chain,
        ev,
        str(raw.get("output_dir", DEFAULTS["output_dir"])),
        resolved,
    )


def load_config(source, overrides=()):
    return parse_config(apply_overrides(load_raw(source), overrides))


def validate_config(path):
    """Diagnostics for the config at ``path`` (or a preset name); empty when valid."""
    try:
        raw = load_raw(path)
    except ConfigError as exc:
        return exc.diagnostics
    return collect_diagnostics(raw)
