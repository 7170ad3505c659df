import dataclasses

import pytest

from feshscan.config import (ConfigError, CouplingSpec, ModelConfig, Tolerances, load_config,
                             parse_config, serialize_config)

MINIMAL = """
[potential_U]
shape = "square-well"
depth = 10.0
range = 1.0

[potential_V]
shape = "gaussian"
amplitude = 0.0
range = 1.0

[coupling]
kind = "separable"
shape = "gaussian"
amplitude = 0.5
range = 1.0
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.potential_U.amplitude == -10.0
    assert cfg.potential_U.shape == "square-well"
    assert cfg.potential_V.is_zero
    assert cfg.coupling.kind == "separable"
    assert cfg.r_max == 5.0
    assert cfg.panels == 40 and cfg.nodes_per_panel == 10
    assert cfg.lambda_range == (0.5, 20.0)
    assert cfg.points == 200
    assert cfg.magnetic_map is None
    assert cfg.tolerances == Tolerances()


def test_round_trip_identity():
    cfg = parse_config(MINIMAL)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)
    assert again.digest() == cfg.digest()


def test_negative_lambda_min_names_key_and_line():
    text = MINIMAL + "\n[scan]\nlambda_min = -1.0\n"
    with pytest.raises(ConfigError, match="lambda_range must be positive") as exc:
        parse_config(text)
    line = text.splitlines().index("lambda_min = -1.0") + 1
    assert "scan.lambda_min" in str(exc.value)
    assert f"line {line}" in str(exc.value)


def test_depth_sign_and_width_aliases():
    text = MINIMAL.replace('depth = 10.0', 'depth = 4.0\nsign = "repulsive"').replace(
        "[potential_V]\nshape = \"gaussian\"\namplitude = 0.0\nrange = 1.0",
        "[potential_V]\nshape = \"exponential\"\namplitude = 1.5\nwidth = 0.5")
    cfg = parse_config(text)
    assert cfg.potential_U.amplitude == 4.0
    assert cfg.potential_V.range == 0.5


@pytest.mark.parametrize("snippet, key", [
    ("[grid]\npanels = 2\n", "grid.panels"),
    ("[grid]\nbogus = 1\n", "grid.bogus"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[magnetic_map]\nlambda_ref = 1.0\nslope = 0.0\nb_ref = 0.0\n", "magnetic_map.slope"),
])
def test_schema_violations_name_the_key(snippet, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(MINIMAL + "\n" + snippet)


def test_bad_shape_and_missing_section():
    with pytest.raises(ConfigError, match="shape"):
        parse_config(MINIMAL.replace('"square-well"', '"triangle"'))
    with pytest.raises(ConfigError, match="coupling"):
        parse_config(MINIMAL.split("[coupling]")[0])
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("[potential_U\n")


def test_r_max_must_exceed_ranges():
    with pytest.raises(ConfigError, match="r_max"):
        parse_config(MINIMAL + "\n[grid]\nr_max = 0.5\n")


def test_separable_profile_must_not_vanish():
    with pytest.raises(ConfigError, match="vanish"):
        parse_config(MINIMAL.replace("amplitude = 0.5", "amplitude = 0.0"))


def test_coupling_scaling_convention():
    cfg = parse_config(MINIMAL)
    # W -> eps W: the rank-one profile scales by sqrt(eps), a local W by eps
    assert cfg.coupling.scaled(0.25).profile.amplitude == pytest.approx(0.25)
    loc = CouplingSpec("local", cfg.coupling.profile)
    assert loc.scaled(0.25).profile.amplitude == pytest.approx(0.125)


def test_magnetic_map_and_file_loading(tmp_path):
    text = MINIMAL + "\n[magnetic_map]\nlambda_ref = 5.0\nslope = 0.1\nb_ref = 800.0\n"
    path = tmp_path / "m.toml"
    path.write_text(text)
    cfg = load_config(path)
    mm = cfg.magnetic_map
    assert mm.to_lambda(810.0) == pytest.approx(6.0)
    assert mm.to_field(mm.to_lambda(812.5)) == pytest.approx(812.5)
    assert parse_config(serialize_config(cfg)) == cfg


def test_tolerance_overrides_keep_types():
    cfg = parse_config(MINIMAL + "\n[tolerances]\nmax_refinements = 2\ncond_max = 1e10\n")
    assert cfg.tolerances.max_refinements == 2
    assert isinstance(cfg.tolerances.max_refinements, int)
    assert cfg.tolerances.cond_max == 1e10
