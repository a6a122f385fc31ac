from importlib import resources
from pathlib import Path
import json

import numpy as np
import pytest

from hometpa.biphoton import PULSED, FrequencyGrid, PhaseMatch, PumpEnvelope, build_jsa

DATA = Path(resources.files("hometpa") / "data")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def targets():
    return json.loads((DATA / "paper_targets.json").read_text())


@pytest.fixture(scope="session")
def cw_jsa():
    pump, pm = PumpEnvelope(), PhaseMatch()
    return build_jsa(pump, pm, FrequencyGrid.for_source(pump, pm))


@pytest.fixture(scope="session")
def pulsed_jsa():
    pump, pm = PumpEnvelope(403.0, 5.0, PULSED), PhaseMatch()
    return build_jsa(pump, pm, FrequencyGrid.for_source(pump, pm))


@pytest.fixture(scope="session")
def delays():
    return np.unique(np.concatenate([np.arange(-250.0, 251.0, 5.0), [-167.0, 167.0]]))


_RUNS = {}


@pytest.fixture(scope="session")
def scenario():
    """Run a bundled scenario once per session: ``scenario("paper_rhb.cfg")``."""
    from hometpa.config import load_config
    from hometpa.protocols import run_scenario

    def get(name):
        if name not in _RUNS:
            _RUNS[name] = run_scenario(load_config(DATA / name), workers=4)
        return _RUNS[name]

    return get
