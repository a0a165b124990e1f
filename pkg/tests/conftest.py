import pytest


@pytest.fixture(scope="session")
def source_cache():
    """Source GAN trainings shared by the long end-to-end tests."""
    return {}
