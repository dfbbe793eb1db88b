import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: synthetic end-to-end runs that take minutes")


@pytest.fixture
def etp_caplog(caplog):
    """``caplog`` wired to the package logger, which does not propagate."""
    from logs import logger
    logger.addHandler(caplog.handler)
    yield caplog
    logger.removeHandler(caplog.handler)
