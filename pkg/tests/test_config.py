import json
from argparse import Namespace

import numpy as np
import pytest

from darktraj.channel import dump_ensemble
from darktraj.config import DEFAULT_OUT_DIR, ExperimentConfig, apply_overrides, load_config, load_preset
from darktraj.errors import ConfigError
from darktraj.presets import build_example, list_presets, load_preset_document, preset_name


def overrides(**kwargs):
    defaults = {"seed": None, "out": None, "format": None, "theta_x": None, "theta_z": None,
                "theta": None, "phi": None, "q": None, "with_v3": False}
    for name in ("stochasticity", "darkness", "dedup", "rank", "peripheral"):
        defaults[f"tol_{name}"] = None
    defaults.update(kwargs)
    return Namespace(**defaults)


def test_every_preset_loads():
    names = list_presets()
    assert len(names) == 11
    assert load_preset_document("2", "4b")["name"] == "example2_4b"
    config = load_preset("1", "6b")
    assert config.family.kind == "embedding"
    assert config.twist_angles() == [([2, 3], "z", float(np.pi / 2))]
    assert preset_name("single") == "single"
    assert preset_name("2") == "example2_4a"


def test_preset_configs_build_ensembles():
    for name in list_presets():
        if name == "single":
            config = load_preset("single")
        else:
            example_id, variant = name.replace("example", "").split("_")
            config = load_preset(example_id, variant)
        e = config.build_ensemble()
        assert e.dim in (2, 3, 4)
        assert config.name == name


def test_build_example_errors():
    with pytest.raises(ConfigError):
        build_example("7")
    with pytest.raises(ConfigError):
        build_example("1", "4a")
    with pytest.raises(ConfigError):
        build_example("2", "4a", {"theta": "not a number"})
    with pytest.raises(ConfigError):
        load_preset("1", "zz")


def test_build_example_params_override_variant():
    e = build_example("3", "base", {"q": 0.5})
    assert e.name == "example3-base"
    assert build_example("3", "v3").size == build_example("3").size + 1


def test_load_config_resolves_relative_ensemble(tmp_path):
    dump_ensemble(build_example("2", "4b"), tmp_path / "kraus.json")
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"ensemble": "kraus.json", "seeds": [3, 4]}))
    config = load_config(path)
    assert config.name == "exp"
    assert config.seed == 3
    assert config.build_ensemble().dim == 3


def test_config_validation_errors(tmp_path):
    base = {"ensemble": {"example": {"id": 1}}}
    ExperimentConfig.from_dict(base)
    bad_docs = [
        {},
        {**base, "seeds": []},
        {**base, "seeds": [2 ** 64]},
        {**base, "seeds": [True]},
        {**base, "format": "xml"},
        {**base, "tolerances": {"darkness": 0}},
        {**base, "tolerances": {"unknown": 1.0}},
        {**base, "family": {"kind": "other"}},
        {**base, "family": {"twists": [{"coords": [2, 3], "axis": "w", "angle": 1.0}]}},
        {**base, "convergence": {"s_mode": "guess"}},
        {**base, "discovery": {"n_probes": 0}},
        {**base, "ergodic": {"base": "uniform"}},
        {**base, "chi": []},
        {"ensemble": {"example": {"variant": "5a"}}},
        {"ensemble": {"dim": 2}},
        {"ensemble": str(tmp_path / "nowhere.json")},
    ]
    for doc in bad_docs:
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(doc)


def test_apply_overrides():
    config = load_preset("2", "4a")
    config = apply_overrides(config, overrides(seed=99, theta=0.3, tol_darkness=1e-6, format="json"))
    assert config.seeds == [99]
    assert config.example["params"]["theta"] == 0.3
    assert config.tolerances.darkness == 1e-6
    assert config.format == "json"
    assert config.out_dir == f"{DEFAULT_OUT_DIR}/example2_4a"

    config = apply_overrides(load_preset("3"), overrides(with_v3=True, out="elsewhere"))
    assert config.example["params"]["with_v3"] is True
    assert config.out_dir == "elsewhere"
    assert config.build_ensemble().size == 3

    with pytest.raises(ConfigError):
        apply_overrides(load_preset("3"), overrides(phi=0.1))
    with pytest.raises(ConfigError):
        apply_overrides(load_preset("1"), overrides(seed=-5))


def test_to_dict_round_trip():
    config = load_preset("1", "6a")
    again = ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again.to_dict() == config.to_dict()
