import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from main import app

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="module")
def client():
    yield TestClient(app)


@pytest.fixture(scope="module")
def scenario():
    def load(name: str) -> dict:
        return json.loads((SCENARIOS / f"{name}.json").read_text(encoding="utf-8"))

    return load


@pytest.fixture()
def xor_ring3():
    return {
        "name": "xor-ring3",
        "protocol": "xor-consensus",
        "topology": {"kind": "ring", "n": 3},
    }
