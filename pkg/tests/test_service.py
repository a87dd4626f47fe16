import json
import sys
import time

import numpy as np
import pytest
import requests

from voxkit import (ChannelSpec, NormalizationSpec, ScalarField, pack_atlas,
                    save_cube, write_atlas)
from voxkit.service import AnalysisServer, ServerConfig, SubmitError, parse_request

from conftest import radial_distance_field


def make_dataset(root, name="demo", n=16):
    ds = root / name
    ds.mkdir(parents=True)
    field = radial_distance_field(n, name="rho")
    save_cube(field, ds / "rho.json")
    peak = field.with_values(1.0 - field.values, name="peak")
    save_cube(peak, ds / "peak.json")
    image, meta = pack_atlas(
        {"rho": field}, [ChannelSpec("R", "rho", NormalizationSpec("linear", 0.0, 1.0))],
        bit_depth=16)
    write_atlas(image, meta, ds / "atlas")
    return ds


@pytest.fixture
def server(tmp_path):
    make_dataset(tmp_path / "data")
    config = ServerConfig(
        dataset_dir=str(tmp_path / "data"),
        external_command=(
            f"{sys.executable} -m voxkit.cli iso {{input_cube}} "
            f"--value {{iso}} --format obj --out {{output_mesh}}"),
        external_timeout_s=120.0)
    srv = AnalysisServer(config).start()
    yield srv
    srv.shutdown()


def poll_job(base, job_id, timeout=60.0):
    statuses = []
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        doc = requests.get(f"{base}/jobs/{job_id}").json()
        if not statuses or statuses[-1] != doc["status"]:
            statuses.append(doc["status"])
        if doc["status"] in ("done", "failed"):
            return doc, statuses
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not finish; saw {statuses}")


class TestCatalog:
    def test_list_datasets(self, server):
        docs = requests.get(f"{server.url}/datasets").json()
        assert len(docs) == 1
        assert docs[0]["name"] == "demo"
        assert docs[0]["dims"] == [16, 16, 16]
        assert docs[0]["fields"] == ["peak", "rho"]

    def test_dataset_detail(self, server):
        doc = requests.get(f"{server.url}/datasets/demo").json()
        assert doc["spacing"] == [1 / 16] * 3
        assert doc["atlases"] == ["atlas"]
        assert {f["name"] for f in doc["fields"]} == {"rho", "peak"}

    def test_unknown_dataset_404(self, server):
        r = requests.get(f"{server.url}/datasets/nope")
        assert r.status_code == 404

    def test_atlas_served_byte_identical(self, server, tmp_path):
        served = requests.get(f"{server.url}/datasets/demo/atlas")
        assert served.status_code == 200
        assert served.headers["Content-Type"] == "image/png"
        on_disk = (tmp_path / "data" / "demo" / "atlas.png").read_bytes()
        assert served.content == on_disk

    def test_atlas_meta_served(self, server):
        doc = requests.get(f"{server.url}/datasets/demo/atlas-meta").json()
        assert doc["bit_depth"] == 16
        assert doc["channels"][0]["channel"] == "R"

    def test_cors_headers(self, server):
        r = requests.get(f"{server.url}/datasets")
        assert r.headers["Access-Control-Allow-Origin"] == "*"
        r = requests.options(f"{server.url}/jobs")
        assert r.status_code == 204
        assert "POST" in r.headers["Access-Control-Allow-Methods"]


class TestJobs:
    def test_submit_and_poll_isosurface(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "isosurface", "dataset": "demo", "field": "rho",
            "iso": 0.3, "format": "obj"})
        assert r.status_code == 200
        job_id = r.json()["id"]
        doc, statuses = poll_job(server.url, job_id)
        assert doc["status"] == "done"
        assert set(statuses) <= {"queued", "running", "done"}
        assert doc["timing_ms"] > 0
        asset = requests.get(f"{server.url}/assets/{doc['asset']}")
        assert asset.status_code == 200
        assert asset.text.startswith("o surface")

    def test_unknown_field_rejected_without_job(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "isosurface", "dataset": "demo", "field": "nope", "iso": 0.3})
        assert r.status_code == 400
        assert "no field" in r.json()["error"]

    def test_malformed_request_rejected(self, server):
        r = requests.post(f"{server.url}/jobs", json={"kind": "isosurface"})
        assert r.status_code == 400
        r = requests.post(f"{server.url}/jobs", data=b"{not json",
                          headers={"Content-Type": "application/json"})
        assert r.status_code == 400

    def test_unknown_job_id_404(self, server):
        assert requests.get(f"{server.url}/jobs/zzz").status_code == 404

    def test_two_submissions_distinct_ids_fifo(self, server):
        body = {"kind": "isosurface", "dataset": "demo", "field": "rho",
                "format": "obj"}
        id1 = requests.post(f"{server.url}/jobs", json={**body, "iso": 0.25}).json()["id"]
        id2 = requests.post(f"{server.url}/jobs", json={**body, "iso": 0.35}).json()["id"]
        assert id1 != id2
        # under worker width 1, job 2 can only run after job 1 finished
        deadline = time.monotonic() + 60
        while time.monotonic() < deadline:
            s2 = requests.get(f"{server.url}/jobs/{id2}").json()["status"]
            s1 = requests.get(f"{server.url}/jobs/{id1}").json()["status"]
            if s2 in ("running", "done"):
                assert s1 == "done"
            if s2 == "done":
                break
            time.sleep(0.02)
        assert requests.get(f"{server.url}/jobs/{id1}").json()["status"] == "done"

    def test_iso_above_max_yields_empty_mesh_asset(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "isosurface", "dataset": "demo", "field": "rho",
            "iso": 99.0, "format": "obj"})
        doc, _ = poll_job(server.url, r.json()["id"])
        assert doc["status"] == "done"
        asset = requests.get(f"{server.url}/assets/{doc['asset']}").text
        assert "f " not in asset  # zero faces

    def test_multilayer_gltf(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "multilayer", "dataset": "demo", "field": "rho",
            "isos": [0.2, 0.3, 0.4], "format": "gltf"})
        doc, _ = poll_job(server.url, r.json()["id"])
        assert doc["status"] == "done"
        tree = requests.get(f"{server.url}/assets/{doc['asset']}").json()
        assert len(tree["nodes"]) == 3
        opacities = [m["pbrMetallicRoughness"]["baseColorFactor"][3]
                     for m in tree["materials"]]
        assert opacities == pytest.approx([1 / 3, 2 / 3, 1.0])
        # companion buffer is served under the same content hash
        stem = doc["asset"].rsplit(".", 1)[0]
        buf = requests.get(f"{server.url}/assets/{stem}.bin")
        assert buf.status_code == 200
        assert tree["buffers"][0]["uri"] == f"{stem}.bin"

    def test_asset_immutable_across_fetches(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "isosurface", "dataset": "demo", "field": "rho", "iso": 0.3})
        doc, _ = poll_job(server.url, r.json()["id"])
        a = requests.get(f"{server.url}/assets/{doc['asset']}").content
        b = requests.get(f"{server.url}/assets/{doc['asset']}").content
        assert a == b

    def test_repeat_request_served_from_cache(self, server):
        body = {"kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.31, "format": "obj"}
        first, _ = poll_job(server.url,
                            requests.post(f"{server.url}/jobs", json=body).json()["id"])
        second, _ = poll_job(server.url,
                             requests.post(f"{server.url}/jobs", json=body).json()["id"])
        assert not first["cached"]
        assert second["cached"]
        assert second["asset"] == first["asset"]
        assert second["timing_ms"] == first["timing_ms"]

    def test_done_job_snapshot_stable(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "isosurface", "dataset": "demo", "field": "rho", "iso": 0.3})
        doc, _ = poll_job(server.url, r.json()["id"])
        again = requests.get(f"{server.url}/jobs/{doc['id']}").json()
        assert again == doc


class TestExternalBackend:
    def test_external_equals_internal_byte_for_byte(self, server):
        body = {"kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.3, "format": "obj"}
        internal, _ = poll_job(server.url, requests.post(
            f"{server.url}/jobs", json={**body, "backend": "internal"}).json()["id"])
        external, _ = poll_job(server.url, requests.post(
            f"{server.url}/jobs", json={**body, "backend": "external"}).json()["id"])
        assert internal["status"] == "done"
        assert external["status"] == "done", external["error"]
        a = requests.get(f"{server.url}/assets/{internal['asset']}").content
        b = requests.get(f"{server.url}/assets/{external['asset']}").content
        assert a == b

    def test_external_failure_reports_exit_status(self, tmp_path):
        make_dataset(tmp_path / "data")
        config = ServerConfig(
            dataset_dir=str(tmp_path / "data"),
            external_command="sh -c 'echo {input_cube} {iso} {output_mesh}; exit 3'")
        srv = AnalysisServer(config).start()
        try:
            r = requests.post(f"{srv.url}/jobs", json={
                "kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.3, "backend": "external"})
            doc, _ = poll_job(srv.url, r.json()["id"])
            assert doc["status"] == "failed"
            assert "status 3" in doc["error"]
            # failure isolation: the server keeps serving and running jobs
            r2 = requests.post(f"{srv.url}/jobs", json={
                "kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.3, "backend": "internal"})
            doc2, _ = poll_job(srv.url, r2.json()["id"])
            assert doc2["status"] == "done"
        finally:
            srv.shutdown()

    def test_external_timeout(self, tmp_path):
        make_dataset(tmp_path / "data")
        config = ServerConfig(
            dataset_dir=str(tmp_path / "data"), external_timeout_s=0.5,
            external_command="sh -c 'sleep 30; echo {input_cube} {iso} {output_mesh}'")
        srv = AnalysisServer(config).start()
        try:
            r = requests.post(f"{srv.url}/jobs", json={
                "kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.3, "backend": "external"})
            doc, _ = poll_job(srv.url, r.json()["id"], timeout=30)
            assert doc["status"] == "failed"
            assert "timed out" in doc["error"]
        finally:
            srv.shutdown()

    def test_external_multilayer_rejected_at_submission(self, server):
        r = requests.post(f"{server.url}/jobs", json={
            "kind": "multilayer", "dataset": "demo", "field": "rho",
            "isos": [0.2, 0.3], "backend": "external"})
        assert r.status_code == 400
        assert "isosurface" in r.json()["error"]

    def test_external_without_configuration_rejected(self, tmp_path):
        make_dataset(tmp_path / "data")
        srv = AnalysisServer(ServerConfig(dataset_dir=str(tmp_path / "data"))).start()
        try:
            r = requests.post(f"{srv.url}/jobs", json={
                "kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.3, "backend": "external"})
            assert r.status_code == 400
        finally:
            srv.shutdown()


class TestWorkerWidth:
    def test_wider_pool_completes_all_jobs(self, tmp_path):
        make_dataset(tmp_path / "data")
        config = ServerConfig(dataset_dir=str(tmp_path / "data"), worker_width=3)
        srv = AnalysisServer(config).start()
        try:
            ids = [requests.post(f"{srv.url}/jobs", json={
                "kind": "isosurface", "dataset": "demo", "field": "rho",
                "iso": 0.2 + 0.02 * i, "format": "obj"}).json()["id"]
                for i in range(6)]
            assert len(set(ids)) == 6
            for job_id in ids:
                doc, _ = poll_job(srv.url, job_id)
                assert doc["status"] == "done"
        finally:
            srv.shutdown()


class TestConfig:
    def test_from_file(self, tmp_path):
        make_dataset(tmp_path / "data")
        cfg = tmp_path / "server.json"
        cfg.write_text(json.dumps({
            "listen": "127.0.0.1:0", "dataset_dir": str(tmp_path / "data"),
            "worker_width": 2, "external_timeout_s": 7.5}))
        config = ServerConfig.from_file(cfg)
        assert config.worker_width == 2
        assert config.external_timeout_s == 7.5
        assert config.port == 0

    def test_template_placeholder_validation(self, tmp_path):
        make_dataset(tmp_path / "data")
        with pytest.raises(ValueError, match="placeholder"):
            ServerConfig(dataset_dir=str(tmp_path / "data"),
                         external_command="paraview-extract {input_cube}")

    def test_parse_request_validation(self):
        with pytest.raises(SubmitError, match="kind"):
            parse_request({"kind": "slice", "dataset": "d", "field": "f"})
        with pytest.raises(SubmitError, match="iso"):
            parse_request({"kind": "isosurface", "dataset": "d", "field": "f",
                           "iso": float("nan")})
        with pytest.raises(SubmitError, match="format"):
            parse_request({"kind": "isosurface", "dataset": "d", "field": "f",
                           "iso": 1.0, "format": "stl"})
