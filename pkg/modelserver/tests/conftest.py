import sys
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from modelserver import ServerConfig, create_app

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture()
def client():
    return TestClient(create_app())


@pytest.fixture()
def small_limit_client():
    return TestClient(create_app(ServerConfig(max_frames=3)))
