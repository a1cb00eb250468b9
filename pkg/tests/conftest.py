import pytest

from onfscatter import modes as M
from onfscatter.profile import TaperProfile


@pytest.fixture(scope="session")
def fiber():
    return M.GLASS_AIR_795


@pytest.fixture(scope="session")
def waist360():
    return TaperProfile(omega=1e-3, a_w=360e-9, L_w=5e-3)


@pytest.fixture(scope="session")
def waist370():
    return TaperProfile(omega=1e-3, a_w=370e-9, L_w=5e-3)


@pytest.fixture(scope="session")
def waist300():
    return TaperProfile(omega=1e-3, a_w=300e-9, L_w=10e-3)
