import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import levydrawdown as ld

settings.register_profile(
    "ci",
    max_examples=30,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def bm():
    """Drifted Brownian motion, unbounded variation."""
    return ld.LevyModel(mu=1.0, sigma=1.0)


@pytest.fixture(scope="session")
def bm_sym():
    """psi(lam) = lam^2: the W(x) = x reference case at q = 0."""
    return ld.LevyModel(mu=0.0, sigma=np.sqrt(2.0))


@pytest.fixture(scope="session")
def cpp():
    """Classical risk process, bounded variation."""
    return ld.LevyModel(mu=2.0, sigma=0.0, jumps=ld.JumpSpec.exponential(1.0, 1.0))


@pytest.fixture(scope="session")
def mix():
    """Gaussian part plus a two-component exponential mixture."""
    return ld.LevyModel(mu=0.5, sigma=0.8,
                        jumps=ld.JumpSpec.mixed(1.2, [(0.4, 1.0), (0.6, 2.5)]))


@pytest.fixture(scope="session")
def all_models(bm, cpp, mix):
    return {"bm": bm, "cpp": cpp, "mix": mix}


def rel_err(got, want, floor=1e-12):
    return abs(got - want) / max(abs(want), floor)
