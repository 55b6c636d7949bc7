"""Run configuration: defaults, INI round trip, and error reporting."""

import dataclasses

import pytest

from tilefusion import RunConfig, load_config, save_config


def test_defaults_are_valid():
    assert RunConfig().validate() == []


def test_derived_objects_reflect_fields():
    config = RunConfig(fx=200.0, width=320, truncation_scale=6.0, max_angle_deg=15.0)
    intr = config.intrinsics()
    assert intr.fx == 200.0 and intr.width == 320
    assert config.fusion_params(0.01).truncation == pytest.approx(0.06)
    assert config.tracking_params().max_angle_deg == 15.0
    assert config.allocation_policy().max_volumes == config.max_volumes


def test_validate_collects_every_error():
    config = RunConfig(fx=-1.0, resolution=0, max_resident=0, hysteresis=0.2)
    errors = config.validate()
    assert len(errors) >= 4
    joined = "\n".join(errors)
    for fragment in ["focal", "resolution", "max_resident", "hysteresis"]:
        assert fragment in joined


def test_save_load_roundtrip(tmp_path):
    config = RunConfig(
        width=160,
        height=120,
        fx=131.25,
        fy=131.25,
        cx=80.0,
        cy=60.0,
        dynamic=True,
        max_volumes=5,
        iterations=(8, 4),
        seed=42,
    )
    path = tmp_path / "run.ini"
    save_config(path, config)
    assert load_config(path) == config


def test_roundtrip_preserves_every_field(tmp_path):
    # nudge each field away from its default so a dropped key cannot hide
    config = RunConfig()
    changed = {}
    for field in dataclasses.fields(RunConfig):
        value = getattr(config, field.name)
        if isinstance(value, bool):
            changed[field.name] = not value
        elif isinstance(value, int):
            changed[field.name] = value + 1
        elif isinstance(value, float):
            changed[field.name] = value + 0.5
        elif isinstance(value, tuple):
            changed[field.name] = tuple(v + 1 for v in value)
    config = dataclasses.replace(config, **changed)
    path = tmp_path / "run.ini"
    save_config(path, config)
    assert load_config(path) == config


def test_unknown_key_is_an_error(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[camera]\nzoom = 2\n")
    with pytest.raises(ValueError, match="zoom"):
        load_config(path)


def test_unknown_section_is_an_error(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[lighting]\ngain = 2\n")
    with pytest.raises(ValueError, match="lighting"):
        load_config(path)


def test_bad_values_are_reported_together(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[camera]\nfx = fast\nwidth = wide\n")
    with pytest.raises(ValueError) as info:
        load_config(path)
    assert "fx" in str(info.value) and "width" in str(info.value)
