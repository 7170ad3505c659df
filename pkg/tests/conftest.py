import numpy as np
import pytest

from feshscan.config import CouplingSpec, MagneticMap, ModelConfig
from feshscan.model import Model
from feshscan.potentials import gaussian, square_well, PotentialSpec

# two-level closed channel, repulsive open channel, gaussian couplings.
# r_max = 8 with 40 panels puts the well edge on a panel boundary: N = 400.
U_TWO = square_well(-30.0, 1.0)
V_REP = gaussian(2.0, 1.0)


def make_config(kind="separable", amp=0.3, width=1.0, U=U_TWO, V=V_REP, r_max=8.0,
                panels=40, lam=(0.5, 60.0), points=200, magnetic_map=None, **kw):
    coupling = CouplingSpec(kind, gaussian(amp, width))
    return ModelConfig(U, V, coupling, r_max, panels, 10, lam, points, magnetic_map, **kw)


@pytest.fixture(scope="session")
def sep_model():
    return Model(make_config("separable", 0.3))


@pytest.fixture(scope="session")
def local_model():
    return Model(make_config("local", 1.0))


@pytest.fixture(scope="session")
def sep_ctx(sep_model):
    from feshscan.separable import separable_context

    return separable_context(sep_model)


@pytest.fixture(scope="session")
def sep_reports(sep_model):
    from feshscan.coupled import find_resonances_general

    return find_resonances_general(sep_model)


@pytest.fixture(scope="session")
def local_reports(local_model):
    from feshscan.coupled import find_resonances_general

    return find_resonances_general(local_model)


# PASS/FAIL lines from test_acceptance.py, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
