import os

import numpy as np
import pytest

from optidamp import build_problem, modal_transform
from optidamp.model import PRESET_S, CustomSpec, ModalModel

SLOW = os.environ.get("OPTIDAMP_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if SLOW:
        return
    skip = pytest.mark.skip(reason="set OPTIDAMP_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def preset_modal(name, s=None):
    return modal_transform(build_problem(name), s if s is not None else PRESET_S[name])


@pytest.fixture(scope="session")
def toy():
    return preset_modal("toy")


@pytest.fixture(scope="session")
def damp1a():
    return preset_modal("damp1-a")


@pytest.fixture(scope="session")
def damp1b():
    return preset_modal("damp1-b")


@pytest.fixture(scope="session")
def damp1c():
    return preset_modal("damp1-c")


@pytest.fixture(scope="session")
def beama():
    return preset_modal("beam-a")


def scalar_modal(omega, gamma, R, s=None):
    """Modal model given directly by its diagonal data and damper matrix."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = omega.size
    return ModalModel(phi=np.eye(n), omega=omega, gamma=np.atleast_1d(np.asarray(gamma, float)),
                      R=R, block_sizes=(1,) * R.shape[1], s=s or n)


def random_spd(rng, n, shift=1.0):
    X = rng.standard_normal((n, n))
    return X @ X.T + shift * n * np.eye(n)


def random_custom(rng, n=5, k=2, alpha=0.05):
    """Small random model with critical internal damping."""
    from optidamp.model import Critical
    M = np.diag(rng.uniform(1.0, 3.0, n))
    K = random_spd(rng, n)
    dampers = tuple(rng.standard_normal((n, 1)) for _ in range(k))
    return CustomSpec(M=M, K=K, dampers=dampers, D_int=Critical(alpha), name="random")


# acceptance lines, printed after the run so they survive output capture
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
