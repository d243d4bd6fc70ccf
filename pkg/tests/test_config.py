import json

import pytest

from posecrop.config import DEFAULT_SCALE_TARGET, GenerationConfig
from posecrop.errors import SchemaError


def test_defaults_are_valid_and_round_trip():
    cfg = GenerationConfig()
    again = GenerationConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert cfg.scale_target == DEFAULT_SCALE_TARGET
    assert cfg.reduced_aspect() == (4, 3)


def test_bundled_reference_config_loads():
    from importlib import resources

    text = resources.files("posecrop").joinpath("configs", "panda_pose.json").read_text()
    cfg = GenerationConfig.from_json(text)
    assert cfg.aspect_ratio == (4, 3)
    assert cfg.min_res == (480, 360)
    assert cfg.max_res == (3840, 2880)
    assert cfg.persons_max == 30
    assert cfg.persons_mean_target == 9.33
    assert cfg.target_avg_iou == 0.33
    assert cfg.empty_fraction_target == 0.04
    assert cfg.split_fractions == {"train": 0.8, "val": 0.2}
    assert cfg.scale_target == (0.007, 0.126, 0.216, 0.373, 1.0)


@pytest.mark.parametrize("overrides,message", [
    ({"min_res": (500, 360)}, "aspect"),
    ({"min_res": (4000, 3000)}, "exceeds max_res"),
    ({"persons_mean_target": 50.0}, "persons_mean_target"),
    ({"target_avg_iou": 1.5}, "target_avg_iou"),
    ({"scale_target": (0.1, 0.2, 0.2, 0.4, 1.0)}, "increasing"),
    ({"scale_target": (0.0, 0.2, 0.3, 0.4, 1.0)}, "scale_target"),
    ({"empty_fraction_target": -0.1}, "empty_fraction"),
    ({"dataset_size": 0}, "dataset_size"),
    ({"split_fractions": {"train": 0.5, "val": 0.2}}, "sum to 1"),
    ({"seed": -1}, "seed"),
    ({"seed": 2 ** 64}, "seed"),
    ({"anchor_prob": 1.5}, "anchor_prob"),
    ({"proposal_budget": 0}, "proposal_budget"),
    ({"tolerances": {"persons_mean": -1.0}}, "positive"),
    ({"tolerances": {"bogus": 0.1}}, "unknown tolerance"),
    ({"downscale_to": (100, 90)}, "downscale_to"),
])
def test_invalid_configs_rejected(overrides, message):
    with pytest.raises(SchemaError, match=message):
        GenerationConfig(**overrides)


def test_unknown_json_field_rejected():
    with pytest.raises(SchemaError, match="unknown config field"):
        GenerationConfig.from_json(json.dumps({"persons_maximum": 3}))


def test_scale_target_may_be_disabled():
    cfg = GenerationConfig(scale_target=None)
    assert cfg.scale_target is None


def test_aspect_tolerates_one_pixel():
    GenerationConfig(min_res=(481, 360), max_res=(3840, 2880))
