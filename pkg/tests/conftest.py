from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).parent.parent
CONFIGS = REPO_ROOT / "configs"


@pytest.fixture(scope="session")
def content_creation_path() -> Path:
    return CONFIGS / "content_creation.yaml"


@pytest.fixture(scope="session")
def content_creation_sim_path() -> Path:
    return CONFIGS / "content_creation_sim.yaml"


@pytest.fixture()
def stub_server():
    from stubserver import start_stub

    server = start_stub()
    yield server
    server.shutdown()
