import json

import numpy as np
import pytest

from photonstats.config import DEFAULTS, load_config, parse_config
from photonstats.errors import ValidationError


def test_defaults():
    rc = parse_config({})
    assert rc.thetas == (1.0,) and not rc.is_sweep and rc.source == "tls"
    e = rc.emitters[0]
    assert e.pulse_area == pytest.approx(np.pi) and e.lifetime == 204.0 and e.pulse_duration == 15.0
    assert rc.detection.eta_t == DEFAULTS["eta_t"]


def test_sweep_is_stop_inclusive():
    rc = parse_config({"pulse_area_pi": {"start": 0, "stop": 6, "step": 0.125}})
    assert len(rc.thetas) == 49 and rc.thetas[0] == 0.0 and rc.thetas[-1] == 6.0
    assert rc.is_sweep


def test_list_and_overrides():
    rc = parse_config({"pulse_area_pi": [1, 2], "seed": 3}, {"seed": 9})
    assert rc.thetas == (1.0, 2.0) and rc.raw["seed"] == 9
    assert all(e.seed == 9 for e in rc.emitters)


@pytest.mark.parametrize("data, key", [
    ({"eta_t": 1.5}, "eta_t"),
    ({"n_pulses": 1.5}, "n_pulses"),
    ({"pulse_area_pi": -1}, "pulse_area_pi"),
    ({"pulse_area_pi": {"start": 0, "stop": 1}}, "pulse_area_pi"),
    ({"pulse_shape": "sech"}, "pulse_shape"),
    ({"n_detectors": 2, "splitting": [0.5, 0.6]}, "splitting"),
    ({"source": "laser"}, "source"),
    ({"lifetime_ps": "long"}, "lifetime_ps"),
    ({"pulse_duration_ps": 2000}, "pulse_duration_ps"),
    ({"colour": "blue"}, "colour"),
])
def test_errors_name_the_key(data, key):
    with pytest.raises(ValidationError, match=f"^{key}:"):
        parse_config(data)


def test_yaml_and_json_files_agree(tmp_path):
    (tmp_path / "a.yaml").write_text("pulse_area_pi: 2.0\nn_pulses: 500\nseed: 4\n")
    (tmp_path / "a.json").write_text(json.dumps({"pulse_area_pi": 2.0, "n_pulses": 500, "seed": 4}))
    a, b = load_config(tmp_path / "a.yaml"), load_config(tmp_path / "a.json")
    assert a.raw == b.raw and a.emitters == b.emitters
