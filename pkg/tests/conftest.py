import pytest

from leafavg import TorusModel
from leafavg.cli import _CONFIG_DIR, load_config


@pytest.fixture(scope="session")
def b2_model():
    return load_config(_CONFIG_DIR / "b2.json").build_model()


@pytest.fixture(scope="session")
def b3_model():
    return load_config(_CONFIG_DIR / "b3.json").build_model()


@pytest.fixture(scope="session")
def c4_model():
    return load_config(_CONFIG_DIR / "c4.json").build_model()


@pytest.fixture(scope="session")
def t2_model():
    return TorusModel([[1, 0], [0, 1]], name="full T^2 on R^4")


@pytest.fixture(scope="session")
def hopf_model():
    return TorusModel([[1], [1]], name="Hopf circle on R^4")


@pytest.fixture(scope="session")
def circle12_model():
    return TorusModel([[1], [2]], name="weighted circle (1,2) on R^4")


@pytest.fixture(scope="session")
def iso_g2_model():
    return load_config(_CONFIG_DIR / "iso_g2.json").build_model()


@pytest.fixture(scope="session")
def iso_g3_model():
    return load_config(_CONFIG_DIR / "iso_g3.json").build_model()
