import functools

import numpy as np
import pytest

from belavkin.algebra import projector
from belavkin.lindblad import EXCITED, GROUND, HomodyneSpec, resonance_fluorescence

ACCEPTANCE = {}  # criterion -> (passed, message), filled by test_acceptance

CHECKPOINTS = (0.5, 1.0, 2.0, 5.0)
N_TRAJ = 10_000


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture
def ground():
    return projector(GROUND)


@pytest.fixture
def excited():
    return projector(EXCITED)


@pytest.fixture
def rf():
    return resonance_fluorescence(rabi=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_state(gen, n=2):
    a = gen.normal(size=(n, n)) + 1j * gen.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@functools.lru_cache(maxsize=None)
def big_ensemble(kind):
    """Shared 1e4-path runs of the resonance-fluorescence setting."""
    from belavkin.ensemble import counting_ensemble, homodyne_ensemble, scaled_counting_ensemble

    m, g = resonance_fluorescence(rabi=1.0), projector(GROUND)
    if kind == "count":
        return counting_ensemble(m, g, CHECKPOINTS, N_TRAJ, seed=11)
    if kind == "homodyne":
        return homodyne_ensemble(m, HomodyneSpec(0.0), g, CHECKPOINTS, N_TRAJ, seed=12)
    if kind == "scaled":
        return scaled_counting_ensemble(m, HomodyneSpec(0.25), g, (0.5, 1.0, 2.0), N_TRAJ, seed=13)
    raise KeyError(kind)
