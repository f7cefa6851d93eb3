import pytest

from expo.config import PUBLISHED_SETTINGS, ConfigError, ExperimentConfig, from_dict, load_config, published_config

SNAPSHOT = {
    "lr_2_30": (50, 8, 100.0, [0, 1, 2, 3, 4], 1),
    "lr_36_-1": (50, 8, 100.0, [0, 1, 2, 3, 4], 1),
    "tsp_10": (100, 8, 100.0, [0, 1, 2], 1),
    "tsp_15": (200, 8, 100.0, [0, 1, 2], 1),
    "tsp_20": (300, 8, 100.0, [0, 1, 2], 1),
    "mab_easy_bssnd": (100, 1, 10.0, [0, 1], 3),
    "mab_easy_bsscd": (100, 1, 10.0, [0, 1], 3),
    "mab_hard_bssnd": (100, 1, 10.0, [0, 1], 3),
    "mab_hard_bsscd": (100, 1, 10.0, [0, 1], 3),
}


@pytest.mark.parametrize("setting", PUBLISHED_SETTINGS)
def test_published_settings_snapshot(setting):
    c = published_config(setting)
    assert (c.T, c.B, c.eta_desc, c.seeds, c.repeats) == SNAPSHOT[setting]
    assert (c.eta_exemplar, c.L, c.kES, c.pool_cap, c.exemplar_cap) == (10.0, 20, 257, 30, 20)
    assert (c.estimator.hidden_width, c.estimator.hidden_width_es) == (1536, 512)
    assert (c.estimator.epochs, c.estimator.learning_rate) == (500, 1e-3)
    assert c.embedding.dim == 3072 and c.domain.n_rephrase == 100


def test_published_instances():
    assert (published_config("lr_36_-1").task_params.w_true, published_config("lr_36_-1").task_params.b_true) == (36, -1)
    hard = published_config("mab_hard_bsscd").task_params
    assert (hard.K, hard.gap, hard.prompt_design) == (5, 0.2, "bsscd")
    assert published_config("mab_easy_bssnd").task_params.K == 4
    assert published_config("mab_hard_bsscd").repetitions == 6
    with pytest.raises(ConfigError):
        published_config("lr_1")


def test_round_trip_through_yaml(tmp_path):
    c = published_config("tsp_15", "expo_es")
    path = tmp_path / "c.yaml"
    path.write_text(c.dump())
    assert load_config(path) == c


def test_overrides_and_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("task: lr\nT: 5\n")
    c = load_config(path, {"seeds": [4, 5], "method": None, "T": 7})
    assert c.seeds == [4, 5] and c.method == "expo" and c.T == 7
    with pytest.raises(ConfigError, match="unknown config keys"):
        from_dict({"Tee": 3})
    with pytest.raises(ConfigError, match="unknown keys in provider"):
        from_dict({"provider": {"kind": "scripted", "colour": 1}})


@pytest.mark.parametrize("bad", [
    {"task": "chess"}, {"method": "sgd"}, {"T": 0}, {"seeds": []}, {"seeds": [1, 1]}, {"eta_desc": 0},
    {"kES": 0}, {"beta": -1}, {"method": "fixed_prompt_replay"}, {"task": "tsp", "task_params": {"n_nodes": 21}},
    {"task": "mab", "task_params": {"prompt_design": "xyz"}}, {"provider": {"kind": "remote"}},
    {"domain": {"source": "file"}}, {"embedding": {"kind": "magic"}},
])
def test_validation_errors(bad):
    with pytest.raises(ConfigError):
        from_dict(bad).validate()


def test_template_name():
    assert ExperimentConfig(task="tsp", method="opro_enhanced").template_name == "opro_tsp_enhanced"
    assert ExperimentConfig(task="mab").template_name == "bsscd"
