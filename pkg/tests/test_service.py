import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from iris import distfield, nn, service
from iris.env import EpisodeConfig
from iris.interaction import RobotConfig
from iris.volume import (
    SynthSpec,
    generate_synthetic,
    mask_from_bytes,
    mask_to_bytes,
    volume_to_bytes,
)

DIMS = (1, 16, 16)


def episode_cfg():
    return EpisodeConfig(
        T=3,
        distance=distfield.Euclidean(),
        robot=RobotConfig(clicks_per_iteration=3),
        region_policy="fixed:12",
    )


@pytest.fixture(scope="module")
def client():
    params = nn.init_params(0, nn.NetConfig.for_dims(DIMS, channels=2, actions=6))
    app = service.create_app(params, episode_cfg())
    with TestClient(app) as c:
        yield c


def make_session(client, with_gt=True, seed=0):
    v, m = generate_synthetic(SynthSpec(seed=seed, dims=DIMS))
    body = {"volume_b64": base64.b64encode(volume_to_bytes(v)).decode()}
    if with_gt:
        body["gt_b64"] = base64.b64encode(mask_to_bytes(m)).decode()
    res = client.post("/sessions", json=body)
    assert res.status_code == 201, res.text
    return res.json(), v, m


def test_create_session(client):
    info, v, _ = make_session(client)
    assert info["dims"] == list(DIMS)
    assert info["iteration"] == 0
    assert info["T"] == 3
    assert info["has_gt"] is True


def test_create_session_requires_volume(client):
    assert client.post("/sessions", json={}).status_code == 400
    assert client.post("/sessions", json={"volume_b64": "!!!"}).status_code == 400
    blob = base64.b64encode(b"garbage").decode()
    assert client.post("/sessions", json={"volume_b64": blob}).status_code == 400


def test_create_session_payload_cap(client, monkeypatch):
    monkeypatch.setattr(service, "MAX_PAYLOAD", 64)
    v, _ = generate_synthetic(SynthSpec(seed=1, dims=DIMS))
    body = {"volume_b64": base64.b64encode(volume_to_bytes(v)).decode()}
    assert client.post("/sessions", json=body).status_code == 413


def test_unknown_session_404(client):
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.post("/sessions/deadbeef/refine").status_code == 404


def test_slice_layers_and_errors(client):
    info, v, _ = make_session(client)
    sid = info["id"]
    for layer in service._LAYERS:
        res = client.get(f"/sessions/{sid}/slice", params={"layer": layer})
        assert res.status_code == 200, layer
        body = res.json()
        assert body["shape"] == [16, 16]
        assert len(body["values"]) == 256
    res = client.get(f"/sessions/{sid}/slice", params={"layer": "intensity", "axis": "y", "index": 3})
    assert res.json()["shape"] == [1, 16]
    assert client.get(f"/sessions/{sid}/slice", params={"index": 5}).status_code == 416
    assert client.get(f"/sessions/{sid}/slice", params={"layer": "nope"}).status_code == 422
    assert client.get(f"/sessions/{sid}/slice", params={"axis": "w"}).status_code == 422


def test_click_refine_cycle(client):
    info, v, m = make_session(client, seed=2)
    sid = info["id"]
    fg = np.argwhere(m.labels)
    z, y, x = map(int, fg[len(fg) // 2])
    res = client.post(f"/sessions/{sid}/clicks", json={
        "clicks": [{"pos": [z, y, x], "polarity": "object"}]
    })
    assert res.status_code == 200
    assert res.json()["object_added"] > 0
    res = client.post(f"/sessions/{sid}/refine")
    assert res.status_code == 200
    body = res.json()
    assert body["iteration"] == 1
    assert body["changed_voxels"] > 0
    assert "dsc" in body
    info2 = client.get(f"/sessions/{sid}").json()
    assert info2["iteration"] == 1
    assert info2["object_hints"] > 0


def test_click_validation(client):
    info, _, _ = make_session(client, seed=3)
    sid = info["id"]
    res = client.post(f"/sessions/{sid}/clicks", json={
        "clicks": [{"pos": [0, 99, 0], "polarity": "object"}]
    })
    assert res.status_code == 422
    res = client.post(f"/sessions/{sid}/clicks", json={
        "clicks": [{"pos": [0, 0, 0], "polarity": "sideways"}]
    })
    assert res.status_code == 422


def test_refine_past_end_needs_allow_extra(client):
    info, _, _ = make_session(client, seed=4)
    sid = info["id"]
    for _ in range(3):
        assert client.post(f"/sessions/{sid}/refine").status_code == 200
    assert client.post(f"/sessions/{sid}/refine").status_code == 409
    res = client.post(f"/sessions/{sid}/refine", json={"allow_extra": True})
    assert res.status_code == 200
    assert res.json()["done"] is True


def test_mask_export_roundtrip(client):
    info, v, m = make_session(client, seed=5)
    sid = info["id"]
    fg = np.argwhere(m.labels)
    z, y, x = map(int, fg[0])
    client.post(f"/sessions/{sid}/clicks", json={
        "clicks": [{"pos": [z, y, x], "polarity": "object"}]
    })
    client.post(f"/sessions/{sid}/refine")
    res = client.get(f"/sessions/{sid}/mask")
    assert res.status_code == 200
    exported = mask_from_bytes(res.content)
    assert exported.dims == DIMS
    assert set(np.unique(exported.labels)) <= {0, 1}


def test_session_without_gt_omits_dsc(client):
    info, _, _ = make_session(client, with_gt=False, seed=6)
    sid = info["id"]
    assert info["has_gt"] is False
    body = client.post(f"/sessions/{sid}/refine").json()
    assert "dsc" not in body


def test_delete_session(client):
    info, _, _ = make_session(client, seed=7)
    sid = info["id"]
    assert client.delete(f"/sessions/{sid}").status_code == 200
    assert client.get(f"/sessions/{sid}").status_code == 404


def test_session_expiry(client):
    info, _, _ = make_session(client, seed=8)
    sid = info["id"]
    app = client.app
    app.state.sessions[sid].touched -= service.SESSION_TTL + 1
    assert client.get(f"/sessions/{sid}").status_code == 404
