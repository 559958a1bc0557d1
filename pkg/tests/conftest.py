import numpy as np
import pytest

from se3diffuse import schedules


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def trans_sched():
    return schedules.TranslationSchedule()


@pytest.fixture(scope="session")
def rot_sched():
    return schedules.RotationSchedule()
