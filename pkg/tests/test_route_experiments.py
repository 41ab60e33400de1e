import json

from src.errors import EnumerationCapExceeded


def test_read_root(client):
    response = client.get("/")
    assert response.status_code == 200, response.text
    data = response.json()
    assert "xor-consensus" in data["protocols"]
    assert "algorithm1" in data["protocols"]


def test_run_xor_ring3(client, xor_ring3):
    response = client.post("/api/experiments/run", json=xor_ring3)
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["runs"] == 64
    assert data["legal"] == 64
    assert data["erroneous"] == 0
    assert data["decision_distribution"] == {"0": "1/2", "1": "1/2"}
    assert data["met"] is True


def test_run_even_ring_is_erroneous(client, scenario):
    response = client.post("/api/experiments/run", json=scenario("xor-ring4-erroneous"))
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["runs"] == 256
    assert data["reasons"] == {"validity": 16}
    assert data["met"] is True


def test_equilibrium_biased_inputs(client, scenario):
    response = client.post("/api/experiments/equilibrium", json=scenario("xor-ring3-biased-deviation"))
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["verdict"] == "deviation-found"
    report = data["reports"][0]
    assert report["honest_eu"] == "9/16"
    assert report["best_deviation"]["eu"] == "3/4"
    assert data["met"] is True


def test_equilibrium_needs_a_coalition(client, xor_ring3):
    response = client.post("/api/experiments/equilibrium", json=xor_ring3)
    assert response.status_code == 422, response.text
    assert response.json()["detail"]["kind"] == "config-invalid"


def test_verify_lossy_encoding(client, scenario):
    response = client.post("/api/experiments/verify", json=scenario("lossy-xor-encoding"))
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["report"]["result"] == "FAIL"
    assert data["report"]["witness"]["inputs_a"] == [0, 0, 0]
    assert data["met"] is True


def test_verify_needs_a_check(client, xor_ring3):
    response = client.post("/api/experiments/verify", json=xor_ring3)
    assert response.status_code == 422, response.text


def test_invalid_distribution(client, xor_ring3):
    response = client.post(
        "/api/experiments/run", json={**xor_ring3, "distribution": ["1/2", "1/3"]}
    )
    assert response.status_code == 422, response.text


def test_unknown_protocol(client, xor_ring3):
    response = client.post("/api/experiments/run", json={**xor_ring3, "protocol": "paxos"})
    assert response.status_code == 422, response.text
    assert "paxos" in response.json()["detail"]["message"]


def test_unsupported_topology(client, xor_ring3):
    chorded = {"kind": "custom", "n": 4, "edges": [[0, 1], [1, 2], [2, 3], [0, 3], [0, 2]]}
    response = client.post("/api/experiments/run", json={**xor_ring3, "topology": chorded})
    assert response.status_code == 400, response.text
    assert response.json()["detail"]["kind"] == "unsupported-topology"


def test_cap_exceeded(client, xor_ring3, mocker):
    mocker.patch(
        "src.routes.experiments.experiments.cmd_run",
        side_effect=EnumerationCapExceeded(1024, 100),
    )
    response = client.post("/api/experiments/run", json=xor_ring3)
    assert response.status_code == 400, response.text
    detail = response.json()["detail"]
    assert detail["kind"] == "enumeration-cap-exceeded"
    assert "1024" in detail["message"]


def test_topology_from_file(client, xor_ring3, tmp_path):
    path = tmp_path / "triangle.json"
    path.write_text(json.dumps({"n": 3, "edges": [[0, 1], [1, 2], [0, 2]]}))
    topology = {"kind": "custom", "path": str(path)}
    response = client.post("/api/experiments/run", json={**xor_ring3, "topology": topology})
    assert response.status_code == 200, response.text
    data = response.json()
    assert data["topology"]["n"] == 3
    assert data["runs"] == 64
    assert data["legal"] == 64


def test_missing_topology_file(client, xor_ring3, tmp_path):
    topology = {"kind": "custom", "path": str(tmp_path / "nowhere.json")}
    response = client.post("/api/experiments/run", json={**xor_ring3, "topology": topology})
    assert response.status_code == 422, response.text


def test_topology_file_needs_custom_kind(client, xor_ring3, tmp_path):
    topology = {"kind": "ring", "n": 3, "path": str(tmp_path / "ring.json")}
    response = client.post("/api/experiments/run", json={**xor_ring3, "topology": topology})
    assert response.status_code == 422, response.text
