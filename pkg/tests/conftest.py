import pytest

from egx.generate import motivating_example


@pytest.fixture
def fig2():
    return motivating_example()
