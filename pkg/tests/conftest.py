import math
import sys

import pytest

from pclaser.config import load_config
from pclaser.model import GainModel, LaserParams


@pytest.fixture(scope="session")
def passivated():
    return load_config("passivated")


@pytest.fixture(scope="session")
def unpassivated():
    return load_config("unpassivated")


def make_params(**overrides) -> LaserParams:
    """Generic, physically plausible parameter set in SI units."""
    base = dict(tau_r=600e-12, tau_pc_nr=100e-12, tau_p=2e-12, f_cav=20.0, f_pc=0.2,
                gamma_conf=0.16, eta=0.1, tau_ef=6e-12, tau_er=1e-9, tau_enr=math.inf,
                v_a=1e-18, v_mode=1.2e-19, lambda_cav=950e-9, n_tr=1e24,
                gain=GainModel(g0=5e12))
    base.update(overrides)
    return LaserParams(**base)


@pytest.fixture
def params():
    return make_params()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
