from pathlib import Path

import pytest
import yaml

from engine import toydata
from engine.trainers import ConfigError, TrainConfig
from ganlab.experiment import (
    Experiment,
    experiment_from_dict,
    load_experiment,
    load_sweep,
    parse_config,
    parse_experiment,
    parse_sweep,
    print_experiment,
    set_key,
)

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


def test_minimal_document_takes_defaults():
    config = parse_config("version: 1\nexperiment:\n  algorithm: vanilla\n")
    assert config == TrainConfig()
    assert config.model.z_dim == 100
    assert config.optim.lr_g == pytest.approx(0.0002)
    assert (config.optim.beta1, config.optim.beta2) == (0.5, 0.999)
    assert isinstance(config.data, toydata.Gaussian1D)


def test_empty_document_is_the_default_experiment():
    assert parse_experiment("") == Experiment(TrainConfig())


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as info:
        parse_config("version: 1\nexperiment:\n  algorithm: vanilla\n  foo: 1\n")
    assert info.value.key == "experiment.foo"
    assert "steps" in info.value.accepted


def test_unknown_section_is_named():
    with pytest.raises(ConfigError) as info:
        parse_config("version: 1\ntraining: {}\n")
    assert info.value.key == "training"


def test_pack_must_divide_batch():
    text = "version: 1\nexperiment:\n  batch: 33\nmodel:\n  pack_k: 2\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == "experiment.batch"


def test_wrong_types_are_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("experiment:\n  steps: many\n")
    assert info.value.key == "experiment.steps"
    with pytest.raises(ConfigError):
        parse_config("regularizers:\n  spectral_norm: 1\n")


def test_unsupported_version():
    with pytest.raises(ConfigError) as info:
        parse_config("version: 2\n")
    assert info.value.key == "version"


def test_bad_data_kind_maps_to_config_error():
    with pytest.raises(ConfigError) as info:
        parse_config("data:\n  kind: spiral\n")
    assert info.value.key == "data.kind"


def test_syntax_error_is_a_config_error():
    with pytest.raises(ConfigError):
        parse_config("experiment: [unclosed\n")


def test_printed_experiment_parses_back_equal():
    experiment = load_experiment(EXPERIMENTS / "compare_ring.yaml")
    text = print_experiment(experiment)
    assert parse_experiment(text) == experiment
    doc = yaml.safe_load(text)
    assert doc["version"] == 1
    assert doc["model"]["hidden"] == [64, 64]
    assert doc["diffusion"]["T"] == 200


def test_labeled_data_round_trips():
    doc = {"experiment": {"algorithm": "cgan"}, "data": {"kind": "labeled", "k": 3}}
    experiment = experiment_from_dict(doc)
    assert experiment.train.data.num_classes == 3
    assert parse_experiment(print_experiment(experiment)) == experiment


@pytest.mark.parametrize("name", ["vanilla_gaussian.yaml", "wgan_gp_ring.yaml", "compare_ring.yaml"])
def test_shipped_experiments_load(name):
    assert load_experiment(EXPERIMENTS / name).train.steps > 0


def test_weight_clipped_critic_defaults_to_rmsprop():
    optim = parse_config("experiment:\n  algorithm: wgan_clip\n").optim
    assert optim.kind == "rmsprop"
    assert optim.lr_g == optim.lr_d == pytest.approx(5e-5)


def test_weight_clipped_defaults_yield_to_explicit_keys():
    optim = parse_config("experiment:\n  algorithm: wgan_clip\noptim:\n  kind: adam\n").optim
    assert optim.kind == "adam"
    assert optim.lr_d == pytest.approx(5e-5)
    assert parse_config("experiment:\n  algorithm: wgan_gp\n").optim.kind == "adam"


def test_weight_clipped_config_survives_round_trip():
    config = parse_config("experiment:\n  algorithm: wgan_clip\n")
    assert parse_config(print_experiment(config)) == config


WGAN_GP_RING_TOML = """\
version = 1

[experiment]
algorithm = "wgan_gp"
steps = 2000
batch = 64
n_critic = 5
eval_every = 200

[data]
kind = "ring"
k = 8
radius = 2.0
std = 0.05

[model]
z_dim = 2
hidden = [64, 64]

[optim]
kind = "adam"
lr_g = 1e-4
lr_d = 1e-4
beta1 = 0.5
beta2 = 0.9

[regularizers]
gp_lambda = 10.0
"""


class TestTomlDocuments:
    def test_toml_experiment_matches_yaml(self, tmp_path):
        path = tmp_path / "wgan_gp_ring.toml"
        path.write_text(WGAN_GP_RING_TOML, encoding="utf-8")
        assert load_experiment(path) == load_experiment(EXPERIMENTS / "wgan_gp_ring.yaml")

    def test_toml_sweep(self, tmp_path):
        path = tmp_path / "sweep.toml"
        path.write_text('seeds = 2\n[axes]\n"model.pack_k" = [1, 4]\n', encoding="utf-8")
        spec = load_sweep(path)
        assert [c.experiment.train.model.pack_k for c in spec.cells()] == [1, 1, 4, 4]

    def test_toml_errors_name_the_key(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[experiment]\nfoo = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            load_experiment(path)
        assert info.value.key == "experiment.foo"

    def test_toml_syntax_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[experiment\n", encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            load_experiment(path)
        assert info.value.key == "document"

    def test_unknown_suffix_rejected(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            load_experiment(path)
        assert ".toml" in info.value.accepted


def test_set_key_copies():
    doc = {"experiment": {"steps": 10}}
    out = set_key(doc, "experiment.steps", 20)
    assert doc["experiment"]["steps"] == 10
    assert out["experiment"]["steps"] == 20
    with pytest.raises(ConfigError):
        set_key(doc, "steps", 1)


class TestSweep:
    def test_grid_size(self):
        text = (
            "version: 1\n"
            "base:\n  experiment:\n    steps: 10\n"
            "axes:\n"
            "  experiment.unroll_k: [0, 1]\n"
            "  model.pack_k: [1, 2, 4]\n"
            "seeds: 5\n"
        )
        spec = parse_sweep(text)
        cells = list(spec.cells())
        assert len(spec) == 30
        assert len(cells) == 30
        assert [c.index for c in cells] == list(range(30))

    def test_order_is_axes_then_seeds(self):
        spec = parse_sweep("axes:\n  model.pack_k: [1, 2]\nseeds: [7, 9]\n")
        cells = list(spec.cells())
        assert [(c.experiment.train.model.pack_k, c.seed) for c in cells] == [(1, 7), (1, 9), (2, 7), (2, 9)]
        assert cells[1].experiment.train.seed == 9
        assert cells[3].label == "model.pack_k=2,seed=9"

    def test_shipped_sweep(self):
        spec = load_sweep(EXPERIMENTS / "mode_collapse_sweep.yaml")
        assert len(spec) == 20
        assert {c.experiment.train.unroll_k for c in spec.cells()} == {0, 5}

    def test_bad_axis_value_surfaces_on_expansion(self):
        spec = parse_sweep("axes:\n  experiment.algorithm: [vanilla, stylegan]\n")
        with pytest.raises(ConfigError):
            list(spec.cells())

    @pytest.mark.parametrize(
        "text",
        [
            "axes:\n  model.pack_k: []\n",
            "axes:\n  pack_k: [1]\n",
            "seeds: []\n",
            "grid: {}\n",
        ],
    )
    def test_invalid_sweeps(self, text):
        with pytest.raises(ConfigError):
            parse_sweep(text)
