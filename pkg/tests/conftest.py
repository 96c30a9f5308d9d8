import pytest

from kppbbm.pde import r_infinity
from kppbbm.profiles import box_profile
from kppbbm.wave import normalize_wave, solve_wave


@pytest.fixture(scope="session")
def wave_fine():
    return normalize_wave(solve_wave(h=0.005))


@pytest.fixture(scope="session")
def rinf6():
    # shared moderate-cost moving-frame run; several tests read different
    # pieces of it (plateau, decomposition identity, wall behavior)
    return r_infinity(6.0, box_profile(-1.0, 0.0), h=0.04, plateau_tol=2e-3)
