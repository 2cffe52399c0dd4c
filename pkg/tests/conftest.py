import math

import numpy as np
import pytest

from cgolab.geometry import Profile, TransversalManifold, build_fermi_chart, shoot_geodesic
from cgolab.quasimode import QuasimodeConfig, make_beam, make_spectral_parameter
from cgolab.spectral import band_grid, dirichlet_eigensystem


@pytest.fixture(scope="session")
def flat():
    return TransversalManifold()


@pytest.fixture(scope="session")
def bump():
    return TransversalManifold(Profile("gaussian_bump", 0.1, 0.5))


@pytest.fixture(scope="session")
def flat_beam_10(flat):
    """Beam along the x axis of the flat disk at varsigma = 10 with its band basis."""
    sp = make_spectral_parameter(math.sqrt(99.0), 1.0, 0.0)
    geo = shoot_geodesic(flat, (0.0, 0.0), (1.0, 0.0), extend=1.0)
    beam = make_beam(build_fermi_chart(geo, 1.0), sp, QuasimodeConfig(delta=1.0))
    om = abs(sp.s) + 25
    basis = dirichlet_eigensystem(band_grid(flat, om), omega2_max=om * om)
    return sp, beam, basis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
