import textwrap

import numpy as np
import pytest

from hometpa.config import ConfigError, default_delays, load_config, parse_config

BUNDLED = ["paper_rhb.cfg", "solvent_ladder.cfg", "nanoparticle.cfg", "etpa_demo.cfg"]

MINIMAL = """\
name: tiny
seed: 3
references:
  - label: Solvent
    sample: {kind: flat, transmission: 0.9}
ladder:
  - label: Dye
    reference: Solvent
    concentration: 0.01
    sample: {kind: flat, transmission: 0.95}
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_parse(data_dir, name):
    cfg = load_config(data_dir / name)
    assert cfg.ladder
    assert set(cfg.delay_settings) <= set(cfg.delays)
    assert cfg.powers[0] >= 0.25 and cfg.powers[-1] <= 43.9


def test_rhb_config_structure(data_dir):
    cfg = load_config(data_dir / "paper_rhb.cfg")
    assert len(cfg.ladder) == 10
    assert len(cfg.references) == 4
    assert cfg.nuisance
    assert all(e.reference == "Methanol" for e in cfg.ladder)


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL))
    assert cfg.seed == 3
    assert cfg.delay_settings == (0.0, 167.0)
    assert np.array_equal(cfg.delays, default_delays())
    assert cfg.powers.size == 10
    assert not cfg.nuisance
    assert cfg.ladder[0].experiments == ("power", "delay")


def test_default_delays_include_plateau_reference():
    d = default_delays()
    assert 167.0 in d and -167.0 in d and 0.0 in d


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.cfg")


def test_invalid_yaml_reports_line(tmp_path):
    p = write(tmp_path, "name: x\nladder:\n  - label: [unclosed\n")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.line is not None


def test_type_error_names_key_and_line(tmp_path):
    p = write(tmp_path, MINIMAL + "acquisition_time: soon\n")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.key == "acquisition_time"
    assert exc.value.line == 11
    assert f"{p}:11" in str(exc.value)


def test_nested_error_line(tmp_path):
    text = MINIMAL.replace("transmission: 0.95", "transmission: 1.5")
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, text))
    assert exc.value.key == "ladder.0.sample"
    assert exc.value.line == 10


@pytest.mark.parametrize("extra,match", [
    ("colour: blue\n", "unknown keys"),
    ("delay_settings: [0, 33]\n", "not on the delay grid"),
    ("powers: [1, 0.5]\n", "strictly increasing"),
    ("powers: [1, 100]\n", "within"),
    ("delays: [-50, 0, 50]\n", "plateau"),
    ("source:\n  pump: {regime: Pulsed, fwhm_bandwidth: 5, power: 3}\n", "unknown keys"),
])
def test_validation_errors(tmp_path, extra, match):
    with pytest.raises(ConfigError, match=match):
        load_config(write(tmp_path, MINIMAL + extra))


def test_unknown_reference():
    data = {"ladder": [{"label": "x", "reference": "ghost", "sample": {"kind": "identity"}}]}
    with pytest.raises(ConfigError, match="unknown reference"):
        parse_config(data)


def test_duplicate_label():
    data = {"references": [{"label": "a"}], "ladder": [{"label": "a", "sample": {"kind": "identity"},
                                                        "experiments": ["delay"]}]}
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(data)


def test_hash_and_seed_override(tmp_path):
    cfg = load_config(write(tmp_path, MINIMAL))
    again = load_config(write(tmp_path, MINIMAL, "d.cfg"))
    assert cfg.config_hash == again.config_hash
    other = cfg.with_seed(99)
    assert other.seed == 99
    assert other.config_hash != cfg.config_hash


def test_brightness_from_reference_rate():
    cfg = parse_config({"source": {"rate": {"reference_rate": 6035.0, "reference_power": 43.9}}})
    assert cfg.rate_model.brightness == pytest.approx(6035.0 / 43.9)
