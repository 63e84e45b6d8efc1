import pytest

from handtwin import model


@pytest.fixture(scope="session")
def desc() -> model.HandDescription:
    return model.default_hand()
