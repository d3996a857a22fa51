import pytest

from gespfactor.config import RunConfig, apply_overrides, parse_config, validate_config
from gespfactor.errors import ConfigValidationError, ParseError, TooManyModes, ValidationError
from gespfactor.presets import available_presets, load_preset


def test_defaults_fill_in():
    config = validate_config({"kernel": "gaussian"})
    assert isinstance(config, RunConfig)
    assert (config.dimension, config.halfwidth, config.points_per_axis, config.rule) == (1, 20.0, 256,
                                                                                          "gauss-legendre")
    assert (config.N, config.M, config.modes, config.realizations) == (0, 0, 64, 10000)
    assert config.K_target == config.bank_size == 8
    assert config.coefficient_law == "gaussian"
    assert not config.lebesgue


def test_default_adjoint_checks_follow_the_rule():
    gl = validate_config({"kernel": "gaussian"})
    assert {c[0]["stage"] for c in gl.adjoint_checks} == {"weight"}
    uniform = validate_config({"kernel": "gaussian", "domain": {"rule": "trapezoid"}})
    assert len(uniform.adjoint_checks) == 4


def test_kernel_is_required():
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config({"modes": 8})
    assert excinfo.value.field == "kernel"


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config({"kernel": "gaussian", "mode": 8})
    assert excinfo.value.field == "mode"
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config({"kernel": "gaussian", "domain": {"radius": 3}})
    assert excinfo.value.field == "domain.radius"


def test_modes_cannot_exceed_nodes():
    with pytest.raises(TooManyModes):
        validate_config({"kernel": "gaussian", "modes": 300})
    config = validate_config({"kernel": "gaussian", "dimension": 2, "domain": {"points_per_axis": 16},
                              "modes": 256})
    assert config.modes == 256


def test_unknown_kernel():
    with pytest.raises(ValidationError):
        validate_config({"kernel": "matern"})


def test_regularity_needs_a_uniform_grid():
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config({"kernel": "gaussian", "N": 2})
    assert excinfo.value.field == "N"
    assert validate_config({"kernel": "gaussian", "N": 2, "domain": {"rule": "trapezoid"}}).N == 2


@pytest.mark.parametrize("raw, field", [
    ({"kernel": "gaussian", "realizations": 1}, "realizations"),
    ({"kernel": "gaussian", "dimension": 4}, "dimension"),
    ({"kernel": "gaussian", "domain": {"halfwidth": -1}}, "domain.halfwidth"),
    ({"kernel": "gaussian", "coefficient_law": "cauchy"}, "coefficient_law"),
    ({"kernel": "gaussian", "seed": -3}, "seed"),
    ({"kernel": "gaussian", "modes": True}, "modes"),
    ({"kernel": "gaussian", "adjoint_checks": [[{"stage": "fourier"}]]}, "adjoint_checks[0]"),
])
def test_field_errors(raw, field):
    with pytest.raises(ConfigValidationError) as excinfo:
        validate_config(raw)
    assert excinfo.value.field == field


def test_parse_error_reports_the_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "kernel": "gaussian",\n  "modes": ,\n}\n')
    with pytest.raises(ParseError) as excinfo:
        parse_config(path)
    assert excinfo.value.line == 3


def test_missing_config_file(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "absent.json")


def test_overrides_beat_the_file(write_config):
    config = parse_config(write_config({"kernel": "gaussian", "seed": 1, "modes": 16}))
    updated = apply_overrides(config, seed=9, modes=None, output="elsewhere")
    assert (updated.seed, updated.modes, updated.output) == (9, 16, "elsewhere")
    assert apply_overrides(config) is config


def test_grid_file_paths_resolve_next_to_the_config(tmp_path, write_config):
    (tmp_path / "k.csv").write_text("1.0,0.0\n0.0,1.0\n")
    config = parse_config(write_config({"kernel": {"name": "grid-file", "path": "k.csv"},
                                        "domain": {"points_per_axis": 2}, "modes": 2}))
    kernel = config.build_kernel()
    assert kernel.params["path"] == str(tmp_path / "k.csv")
    assert config.to_dict()["kernel"]["path"] == "k.csv"


def test_canonical_form_round_trips():
    config = validate_config({"kernel": "gaussian", "domain": {"rule": "trapezoid"}, "N": 2})
    again = validate_config(config.to_dict())
    assert again == config


@pytest.mark.parametrize("name", available_presets())
def test_bundled_presets_validate(name):
    config = validate_config(load_preset(name))
    assert config.output.startswith("out/")


def test_unknown_preset():
    with pytest.raises(ConfigValidationError):
        load_preset("matern")


def test_kl_only_preset_refuses_bank_subcommands():
    assert load_preset("brownian", "kl")["kernel"] == "brownian"
    with pytest.raises(ConfigValidationError) as excinfo:
        load_preset("brownian", "roundtrip")
    assert excinfo.value.field == "preset"
    assert "kl" in excinfo.value.message
