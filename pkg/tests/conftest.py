import math

import pytest

from sqbilliard import BilliardConfig
from sqbilliard.classical import GaussianEnsembleParams, return_period
from sqbilliard.cli import presets
from sqbilliard.quantum import PacketSpec, project


@pytest.fixture(scope="session")
def cfg():
    return BilliardConfig(L=10.0, m=1.0, hbar=1.0)


@pytest.fixture(scope="session")
def slow_params():
    """A modest packet: cheap basis, used by unit tests."""
    return GaussianEnsembleParams(x0=(4.0, 5.5), p0=(4.0, 8.0), d=0.5, Delta=0.5)


@pytest.fixture(scope="session")
def slow_state(slow_params, cfg):
    return project([PacketSpec(slow_params)], cfg)


@pytest.fixture(scope="session")
def packet_m():
    return GaussianEnsembleParams(presets.X_M, (presets.P_X, -presets.P_Y), presets.WIDTH, presets.WIDTH)


@pytest.fixture(scope="session")
def packet_n():
    return GaussianEnsembleParams(presets.X_N, (presets.P_X, presets.P_Y), presets.WIDTH, presets.WIDTH)


@pytest.fixture(scope="session")
def t_po(cfg):
    return return_period((presets.P_X, presets.P_Y), cfg)


@pytest.fixture(scope="session")
def single_state(packet_m, cfg):
    return project([PacketSpec(packet_m)], cfg)


@pytest.fixture(scope="session")
def pair_state(packet_m, packet_n, cfg):
    s = 1.0 / math.sqrt(2.0)
    return project([PacketSpec(packet_m, s), PacketSpec(packet_n, -s)], cfg)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
