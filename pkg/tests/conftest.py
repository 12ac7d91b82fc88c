from pathlib import Path

import pytest

from covreg.history import History

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="function")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="function")
def load_history():
    """Load a forged history from tests/fixtures by file name"""
    def load(name: str) -> History:
        return History.load(FIXTURES / name)
    return load
