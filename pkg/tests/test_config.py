import json

import numpy as np
import pytest

from driftlearn.config import (
    RidgeConfig,
    apply_overrides,
    collect_diagnostics,
    load_config,
    load_preset,
    load_raw,
    parse_config,
    preset_names,
    validate_config,
)
from driftlearn.errors import ConfigError
from driftlearn.gibbs import HsPriorConfig, TPriorConfig

PRESETS = ("double_well_t", "double_well_hs", "double_well_ridge", "dw_variant_s1", "dw_variant_s05", "michaelis_menten")


def test_all_presets_ship_and_validate():
    assert set(PRESETS) <= set(preset_names())
    for name in PRESETS:
        assert validate_config(name) == []


def test_model1_preset_hyperparameters():
    cfg = load_config("double_well_t")
    t = cfg.priors["t"]
    # lambda ~ IG(1, 2) and sigma^2 ~ IG(1, 2)
    assert isinstance(t, TPriorConfig) and t.scalar_shape == 1.0 and t.scalar_scale == 2.0
    assert t.sigma_dof == 2.0 and np.array_equal(t.sigma_scale, [[4.0]])
    hs = load_config("double_well_hs").priors["hs"]
    assert (hs.local_shape, hs.global_shape, hs.local_rate_hypers, hs.global_rate_hypers) == (0.5, 0.5, (0.5, 1.0), (0.5, 1.0))
    assert cfg.simulation.m == 800 and cfg.simulation.T == pytest.approx(40.0)


def test_variant_and_mm_presets():
    var = load_config("dw_variant_s1")
    assert var.priors["hs"].local_shape == 0.5 and var.priors["hs_alpha015"].local_shape == 0.15
    assert load_config("dw_variant_s05").model_params["sigma"] == 0.5
    mm = load_config("michaelis_menten")
    t = mm.priors["t"]
    assert t.dof == 5.0 and np.array_equal(t.scale, 8 * np.eye(3)) and not t.scalar_mode
    assert t.sigma_dof == 4.0 and np.array_equal(t.sigma_scale, 2 * np.eye(3))
    assert isinstance(mm.priors["hs"], HsPriorConfig)
    assert isinstance(load_config("double_well_ridge").priors["ridge"], RidgeConfig)


def test_negative_delta_names_the_field(tmp_path):
    raw = load_preset("double_well_t")
    raw["simulation"]["delta"] = -0.1
    diags = collect_diagnostics(raw)
    assert len(diags) == 1 and diags[0].startswith("simulation.delta")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    assert validate_config(str(path)) == diags


def test_hs_zero_rate_names_the_field():
    raw = {"preset": "double_well_hs", "prior": {"kind": "hs", "sigma_dof": 2.0, "sigma_scale": [[4.0]], "local_rate_hypers": [0.5, 0.0]}}
    diags = collect_diagnostics(load_raw(raw))
    assert any(d.startswith("prior.local_rate_hypers") for d in diags)
    raw = load_preset("double_well_hs")
    raw["priors"]["hs"]["local_rate_hypers"] = [0.5, 0]
    assert any(d.startswith("priors.hs.local_rate_hypers") for d in collect_diagnostics(raw))


def test_t_and_m_must_agree():
    raw = load_preset("double_well_t")
    raw["simulation"]["m"] = 10
    assert any(d.startswith("simulation") for d in collect_diagnostics(raw))


def test_every_problem_is_reported():
    raw = load_preset("michaelis_menten")
    raw["simulation"]["delta"] = 0
    raw["chain"]["burn_in"] = 5000
    raw["model"]["params"]["k1"] = "fast"
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert len(info.value.diagnostics) >= 3


def test_overrides_and_preset_merge(tmp_path):
    raw = apply_overrides(load_preset("double_well_t"), ["chain.iters=10", "chain.burn_in=2", "output_dir=elsewhere"])
    cfg = parse_config(raw)
    assert (cfg.chain.iters, cfg.chain.burn_in, cfg.output_dir) == (10, 2, "elsewhere")
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["novalue"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "double_well_t", "chain": {"seed": 9}}))
    cfg = load_config(str(path))
    assert cfg.chain.seed == 9 and cfg.chain.iters == 2000


def test_digest_tracks_content():
    a = load_config("double_well_t")
    assert a.digest() == load_config("double_well_t").digest()
    assert a.digest() != load_config("double_well_t", ["chain.seed=3"]).digest()


def test_unknown_preset_and_missing_file(tmp_path):
    assert validate_config("no_such_preset")
    with pytest.raises(FileNotFoundError):
        load_raw(str(tmp_path / "missing.json"))
    (tmp_path / "bad.json").write_text("{")
    assert validate_config(str(tmp_path / "bad.json"))
