import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from quenchwork.fock import enumerate_sector  # noqa: E402
from quenchwork.hamiltonian import ImpurityConfig, LatticeSpec, build_hamiltonian  # noqa: E402
from quenchwork.spectra import diagonalize  # noqa: E402

# shared with the acceptance suite so L=8 profiles are computed once
CACHE_DIR = os.environ.get(
    "QUENCHWORK_CACHE",
    os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), ".cache", "quenchwork"))


@pytest.fixture(scope="session")
def cache_dir():
    return CACHE_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def dimer():
    basis = enumerate_sector(2, 1, 1)
    lattice = LatticeSpec(2, 1.0, -5.0)
    H = build_hamiltonian(lattice, None, basis)
    return lattice, basis, H, diagonalize(H)


def random_instance(rng, L=None, boundary=None):
    """Random small lattice, sector and pair of impurity configurations."""
    L = L or int(rng.integers(2, 5))
    n_up, n_dn = int(rng.integers(1, L + 1)), int(rng.integers(0, L + 1))
    lattice = LatticeSpec(L, 1.0, float(-rng.uniform(0.5, 8.0)),
                          boundary=boundary or str(rng.choice(["open", "periodic"])))
    basis = enumerate_sector(L, n_up, n_dn)

    def sites():
        return tuple(sorted(int(s) for s in rng.choice(L, size=int(rng.integers(0, L + 1)),
                                                       replace=False)))
    initial = ImpurityConfig(sites(), float(-rng.uniform(0.5, 10.0)), L)
    final = ImpurityConfig(sites(), float(-rng.uniform(0.5, 10.0)), L)
    return lattice, basis, initial, final


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
