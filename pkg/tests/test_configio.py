"""Config document round trips and strict key checking."""

import pytest

from specsal.configio import (
    load_json_document,
    model_config_from_dict,
    model_config_to_dict,
    train_config_from_dict,
    train_config_to_dict,
)
from specsal.exceptions import ConfigError
from specsal.model import demo_model_config, default_model_config, tiny_model_config
from specsal.training import TrainConfig


@pytest.mark.parametrize(
    "config",
    [tiny_model_config(), demo_model_config(), default_model_config()],
    ids=["tiny", "demo", "default"],
)
def test_model_config_round_trip(config):
    assert model_config_from_dict(model_config_to_dict(config)) == config


def test_model_config_partial_documents_use_defaults():
    config = model_config_from_dict({"input_size": 128})
    assert config.input_size == 128
    assert config.encoder == default_model_config().encoder


def test_model_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown keys"):
        model_config_from_dict({"input_sze": 64})
    with pytest.raises(ConfigError, match="encoder"):
        model_config_from_dict({"encoder": {"band": 8}})


def test_model_config_rejects_wrong_shapes():
    with pytest.raises(ConfigError, match="expected an object"):
        model_config_from_dict([1, 2])
    with pytest.raises(ConfigError, match="expected an object"):
        model_config_from_dict({"decoder": 7})


def test_model_config_values_still_validated():
    with pytest.raises(ConfigError, match="input size"):
        model_config_from_dict({"input_size": 7})


def test_train_config_round_trip():
    config = TrainConfig(seed=3, steps=7, learning_rate=0.01, level_weights=(1, 2, 0, 1))
    assert train_config_from_dict(train_config_to_dict(config)) == config


def test_train_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown keys"):
        train_config_from_dict({"step": 5})


def test_load_json_document_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError, match="nope.json"):
        load_json_document(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_json_document(bad)
    array = tmp_path / "array.json"
    array.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="object"):
        load_json_document(array)


def test_load_json_document_reads_objects(tmp_path):
    path = tmp_path / "ok.json"
    path.write_text('{"steps": 5}')
    assert load_json_document(path) == {"steps": 5}
