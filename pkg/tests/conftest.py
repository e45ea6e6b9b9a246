import sys
from pathlib import Path

import pytest

from hubbard_pert.model import ModelParams
from hubbard_pert.propagator import Propagator

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def chain_params():
    """d=1, L=2 workhorse: dispersion {-2, 2}, Fock dimension 16."""
    return ModelParams(d=1, L=2, t=1.0, tprime=0.0, mu=0.0, beta=1.0)


@pytest.fixture(scope="session")
def chain_prop(chain_params):
    return Propagator(chain_params)


@pytest.fixture(scope="session")
def skew_params():
    """Asymmetric parameters so no accidental symmetry hides sign bugs."""
    return ModelParams(d=1, L=2, t=1.0, tprime=0.0, mu=0.3, beta=1.2)


@pytest.fixture(scope="session")
def skew_prop(skew_params):
    return Propagator(skew_params)


@pytest.fixture(scope="session")
def paper_params():
    """The d=2 parameter point of the numerical study."""
    return ModelParams(d=2, L=10, t=0.01, tprime=0.01, mu=0.01, beta=1.0)


@pytest.fixture(scope="session")
def paper_prop(paper_params):
    return Propagator(paper_params)
