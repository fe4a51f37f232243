import pytest

from wbmpc.models import BUILTIN_MODELS, mini_scorpio, mini_scorpio_nl, pendulum, two_link_arm


@pytest.fixture(scope="session")
def pend():
    return pendulum()


@pytest.fixture(scope="session")
def arm():
    return two_link_arm()


@pytest.fixture(scope="session")
def scorpio():
    return mini_scorpio()


@pytest.fixture(scope="session")
def scorpio_nl():
    return mini_scorpio_nl()


@pytest.fixture(scope="session")
def all_models():
    return {key: build() for key, build in BUILTIN_MODELS.items()}
