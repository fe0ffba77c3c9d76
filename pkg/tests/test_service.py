import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from nrv.morph import compute_morph_field, intermediate_volume
from nrv.phantom import (
    DegenerationParams,
    SyntheticOracle,
    TubeSpec,
    degenerate,
    predict,
    rasterize_tubes,
)
from nrv.render import slice_png
from nrv.service import create_app
from nrv.vesselness import (
    Domain,
    VesselnessParams,
    connected_components,
    jerman_response,
    threshold_response,
)
from nrv.views import default_tf, extract_isosurface, fiber_density, mesh_to_obj
from nrv.volume import (
    Direction,
    foreground_mask,
    histogram,
    volume_bytes,
)

SPEC = TubeSpec(((3.0, 12.0, 8.0), (28.0, 12.0, 8.0)), (2.0, 2.0))
PARAMS = DegenerationParams(fragment_fraction=0.5, gap_length_um=6.0,
                            thinning_factor=0.6, seed=1)
DIMS = (32, 24, 16)


@pytest.fixture(scope="module")
def volumes():
    young = rasterize_tubes([SPEC], DIMS, (1.0, 1.0, 1.0))
    old = degenerate(young, [SPEC], PARAMS)
    pred = predict(old, Direction.OLD_TO_YOUNG,
                   SyntheticOracle(specs=(SPEC,), params=PARAMS))
    return {"young": young, "old": old, "pred": pred}


@pytest.fixture()
def client(volumes):
    app = create_app()
    c = TestClient(app)
    for vid, vol in volumes.items():
        r = c.post(f"/volumes?id={vid}", content=volume_bytes(vol))
        assert r.status_code == 200, r.text
    return c


def wait_for_job(client, job_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/morph/jobs/{job_id}").json()
        if job["status"] != "pending":
            return job
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} still pending")


def test_volume_listing(client, volumes):
    listing = client.get("/volumes").json()["volumes"]
    assert [v["id"] for v in listing] == ["old", "pred", "young"]
    by_id = {v["id"]: v for v in listing}
    assert by_id["young"]["dims"] == list(DIMS)
    assert by_id["young"]["provenance"] == "real"
    assert by_id["pred"]["provenance"] == "predicted"
    assert by_id["old"]["kind"] == "normalized"

    info = client.get("/volumes/young").json()["volume"]
    assert info == by_id["young"]
    missing = client.get("/volumes/nope")
    assert missing.status_code == 404
    assert missing.json()["error"]["code"] == "volume_not_found"


def test_upload_rejects_garbage(client):
    r = client.post("/volumes?id=bad", content=b"not a volume")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "malformed_volume"
    r = client.post("/volumes?id=/evil", content=b"")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_volume_id"


def test_slice_bytes_match_library(client, volumes):
    r = client.get("/volumes/young/slice?axis=z&index=8")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.headers["x-provenance"] == "real"
    assert r.content == slice_png(volumes["young"], "z", 8)

    tf = default_tf(Domain.OLD, histogram(volumes["old"]))
    r = client.get("/volumes/old/slice?axis=y&index=12&tf=default&domain=old")
    assert r.content == slice_png(volumes["old"], "y", 12, tf=tf)

    r = client.get("/volumes/pred/slice?axis=x&index=3&gamma=0.5")
    assert r.headers["x-provenance"] == "predicted"
    assert r.content == slice_png(volumes["pred"], "x", 3, gamma=0.5)


def test_slice_errors(client):
    r = client.get("/volumes/young/slice?axis=z&index=99")
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "index_out_of_range"
    r = client.get("/volumes/young/slice?axis=w&index=0")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_axis"
    r = client.get("/volumes/young/slice?axis=z&index=0&tf=fancy")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_tf"
    r = client.get("/volumes/young/slice?axis=z&index=0&gamma=0")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_gamma"


def test_histogram_matches_library(client, volumes):
    r = client.get("/volumes/young/histogram").json()
    assert r["provenance"] == "real"
    assert r["histogram"] == histogram(volumes["young"]).to_dict()


def test_vesselness_roundtrip(client, volumes):
    r = client.post("/vesselness", json={"volume_id": "young",
                                         "sigmas": [1.0, 2.0], "tau": 0.5})
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["volume_id"] == "young.vesselness"
    assert body["provenance"] == "real"

    expected = jerman_response(volumes["young"],
                               VesselnessParams(sigmas_um=(1.0, 2.0), tau=0.5))
    got = client.get("/volumes/young.vesselness/histogram").json()["histogram"]
    assert got == histogram(expected).to_dict()

    r = client.post("/vesselness", json={"volume_id": "young",
                                         "sigmas": [2.0, 1.0]})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_params"


def test_components_match_library(client, volumes):
    r = client.post("/vesselness", json={"volume_id": "old",
                                         "sigmas": [1.0, 2.0]})
    vid = r.json()["volume_id"]
    got = client.get(f"/components/{vid}?threshold=0.2&domain=old").json()
    resp = jerman_response(volumes["old"],
                           VesselnessParams(sigmas_um=(1.0, 2.0)))
    comps = connected_components(threshold_response(resp, 0.2),
                                 domain=Domain.OLD,
                                 provenance=resp.provenance)
    assert got["count"] == len(comps)
    assert got["components"] == [c.to_dict() for c in comps]
    assert got["provenance"] == "real"


def test_mesh_matches_library(client, volumes):
    r = client.get("/mesh/young?iso=0.4&domain=young")
    assert r.status_code == 200
    expected = mesh_to_obj(extract_isosurface(volumes["young"], 0.4,
                                              domain=Domain.YOUNG))
    assert r.text == expected
    r = client.get("/mesh/young?iso=1.5")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_iso"


def test_density_matches_library(client, volumes):
    r = client.get("/metrics/density/old?threshold=0.15").json()
    expected = fiber_density(foreground_mask(volumes["old"], 0.15))
    assert r["density_percent"] == expected
    assert r["provenance"] == "real"


def test_morph_frames_bit_exact_and_cached(client, volumes):
    young, old = volumes["young"], volumes["old"]
    stats = client.get("/stats").json()
    assert stats["morph_cache_entries"] == 0

    r = client.get("/morph/young/old?sigma=0.5&dir=y2o")
    assert r.status_code == 200
    assert r.headers["x-provenance"] == "morphed"
    field = compute_morph_field(young, old, 0.1)
    frame = intermediate_volume(field, young, old, 0.5,
                                Direction.YOUNG_TO_OLD)
    assert r.content == volume_bytes(frame)

    stats = client.get("/stats").json()
    assert stats["morph_cache_entries"] == 1
    assert stats["morph_cache_misses"] == 1
    assert stats["morph_cache_hits"] == 0

    r = client.get("/morph/young/old?sigma=0.25&dir=y2o")
    frame = intermediate_volume(field, young, old, 0.25,
                                Direction.YOUNG_TO_OLD)
    assert r.content == volume_bytes(frame)
    stats = client.get("/stats").json()
    assert stats["morph_cache_hits"] == 1
    assert stats["morph_cache_misses"] == 1

    r = client.get("/morph/young/old?sigma=0.5&dir=y2o&format=png&axis=z&index=8")
    assert r.content == slice_png(
        intermediate_volume(field, young, old, 0.5, Direction.YOUNG_TO_OLD),
        "z", 8)


def test_morph_prepare_job_then_cache_hit(client):
    r = client.post("/morph/prepare", json={"young_id": "young",
                                            "old_id": "old", "dir": "o2y"})
    assert r.status_code == 200
    job = wait_for_job(client, r.json()["job_id"])
    assert job["status"] == "done", job
    misses_before = client.get("/stats").json()["morph_cache_misses"]
    r = client.get("/morph/young/old?sigma=0.75&dir=o2y")
    assert r.status_code == 200
    stats = client.get("/stats").json()
    assert stats["morph_cache_misses"] == misses_before
    assert stats["morph_cache_hits"] >= 1


def test_cache_invalidated_when_volume_replaced(client, volumes):
    client.get("/morph/young/old?sigma=0.5&dir=y2o")
    assert client.get("/stats").json()["morph_cache_entries"] == 1
    r = client.post("/volumes?id=young",
                    content=volume_bytes(volumes["young"]))
    assert r.status_code == 200
    assert client.get("/stats").json()["morph_cache_entries"] == 0


def test_morph_validation(client):
    r = client.get("/morph/young/old?sigma=1.5")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_sigma"
    r = client.get("/morph/young/old?sigma=0.5&dir=sideways")
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "invalid_direction"
    r = client.get("/morph/young/nope?sigma=0.5")
    assert r.status_code == 404
    assert r.json()["error"]["code"] == "volume_not_found"
    r = client.post("/morph/prepare", json={"young_id": "young"})
    assert r.status_code == 422
    assert r.json()["error"]["code"] == "missing_volume_id"


def test_data_dir_loading(tmp_path, volumes):
    from nrv.volume import save_volume

    save_volume(volumes["young"], tmp_path / "young.nrv")
    save_volume(volumes["old"], tmp_path / "old.nrv")
    app = create_app(tmp_path)
    c = TestClient(app)
    listing = c.get("/volumes").json()["volumes"]
    assert [v["id"] for v in listing] == ["old", "young"]
    body = c.get("/volumes/young/slice?axis=z&index=8").content
    assert body == slice_png(volumes["young"], "z", 8)
    with pytest.raises(FileNotFoundError):
        create_app(tmp_path / "absent")
