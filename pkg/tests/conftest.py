import sys
from pathlib import Path

import pytest

# test-local helpers (oracles.py) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

from fleetstream.broker import Broker


@pytest.fixture
def broker(tmp_path):
    b = Broker(tmp_path / "data", {"carta": "s3cret", "mta": "hunter2"}, fsync_each=False)
    yield b
    b.close()


@pytest.fixture
def carta(broker):
    return broker.authenticate("carta", "s3cret")
