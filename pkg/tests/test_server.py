import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from curato import cluster as cl
from curato import dataset as dm
from curato import reduce as red
from curato import server as srv


@pytest.fixture
def embedding():
    gen = np.random.default_rng(42)
    pts = np.vstack([
        gen.normal((0, 0), 0.8, (70, 2)),
        gen.normal((8, 8), 0.8, (70, 2)),
        gen.normal((-8, 8), 0.8, (70, 2)),
    ])
    pts[0] = (30.0, -30.0)  # one obvious stray
    labels = np.array([0] * 70 + [1] * 70 + [2] * 70)
    return red.Embedding(points=pts, labels=labels, config=red.TsneConfig(), seed=0)


@pytest.fixture
def session(embedding, tmp_path):
    return srv.CurationSession(embedding, ds_hash="12" * 8, out_dir=tmp_path)


@pytest.fixture
def client(session):
    return TestClient(srv.create_app(session))


class TestEmbeddingEndpoint:
    def test_point_count_matches_class(self, client, embedding):
        for c in (0, 1, 2):
            r = client.get("/api/embedding", params={"class": c})
            assert r.status_code == 200
            assert len(r.json()["points"]) == 70

    def test_unknown_class_404(self, client):
        assert client.get("/api/embedding", params={"class": 9}).status_code == 404

    def test_matches_library_clustering(self, client, embedding, session):
        r = client.get("/api/embedding", params={"class": 0}).json()
        ref = cl.cluster_per_class(embedding)  # same defaults as session init
        labels = embedding.labels
        idx = np.flatnonzero(labels == 0)
        by_idx = {p["idx"]: p for p in r["points"]}
        for i in idx:
            assert by_idx[int(i)]["cluster"] == int(ref.cluster_ids[i])
            assert by_idx[int(i)]["role"] == cl.ROLE_NAMES[int(ref.roles[i])]

    def test_single_point_class_is_noise(self, tmp_path):
        pts = np.array([[0.0, 0.0], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]])
        labels = np.array([0, 1, 1, 1])
        emb = red.Embedding(points=pts, labels=labels, config=red.TsneConfig(), seed=0)
        session = srv.CurationSession(emb, ds_hash="34" * 8, out_dir=tmp_path,
                                      overrides={0: cl.DbscanConfig(1.0, 2),
                                                 1: cl.DbscanConfig(1.0, 2)})
        client = TestClient(srv.create_app(session))
        r = client.get("/api/embedding", params={"class": 0}).json()
        assert r["points"][0]["role"] == "noise"


class TestReclusterEndpoint:
    def test_idempotent(self, client):
        body = {"class": 1, "eps": 1.0, "min_pts": 5}
        a = client.post("/api/cluster", json=body).json()
        b = client.post("/api/cluster", json=body).json()
        assert a == b

    def test_huge_eps_min_pts_one_no_noise(self, client):
        r = client.post("/api/cluster",
                        json={"class": 0, "eps": 1e6, "min_pts": 1}).json()
        assert r["noise_count"] == 0

    def test_matches_brute_force_oracle(self, client, embedding):
        eps, min_pts = 0.9, 6
        r = client.post("/api/cluster",
                        json={"class": 2, "eps": eps, "min_pts": min_pts}).json()
        pts = embedding.points[embedding.labels == 2]
        d2 = ((pts[:, None] - pts[None, :]) ** 2).sum(-1)
        neighbor_counts = (d2 <= eps * eps).sum(axis=1)
        core = neighbor_counts >= min_pts
        reachable = (d2[:, core] <= eps * eps).any(axis=1) if core.any() else core
        assert r["noise_count"] == int(np.count_nonzero(~(core | reachable)))

    def test_only_target_class_changes(self, client):
        before = {c: client.get("/api/embedding", params={"class": c}).json()
                  for c in (0, 2)}
        client.post("/api/cluster", json={"class": 1, "eps": 0.1, "min_pts": 30})
        after = {c: client.get("/api/embedding", params={"class": c}).json()
                 for c in (0, 2)}
        assert before == after

    def test_invalid_params_422(self, client):
        assert client.post("/api/cluster",
                           json={"class": 0, "eps": -1.0, "min_pts": 5}).status_code == 422
        assert client.post("/api/cluster",
                           json={"class": 0, "eps": 1.0, "min_pts": 0}).status_code == 422

    def test_unknown_class_404(self, client):
        assert client.post("/api/cluster",
                           json={"class": 7, "eps": 1.0, "min_pts": 5}).status_code == 404


class TestCommitEndpoint:
    def test_commit_matches_library_manifest(self, client, session, embedding):
        r = client.post("/api/commit")
        assert r.status_code == 200
        manifest = dm.load_manifest(r.json()["manifest_path"])
        ref = cl.build_manifest(cl.cluster_per_class(embedding), session.ds_hash)
        assert manifest.kept_indices == ref.kept_indices
        assert manifest.removed_indices == ref.removed_indices
        assert manifest.source_hash == ref.source_hash

    def test_commit_twice_same_content_new_file(self, client):
        a = client.post("/api/commit").json()
        b = client.post("/api/commit").json()
        assert a["summary"] == b["summary"]
        ma = dm.load_manifest(a["manifest_path"])
        mb = dm.load_manifest(b["manifest_path"])
        assert ma.kept_indices == mb.kept_indices and ma.removed_indices == mb.removed_indices

    def test_all_noise_409(self, client):
        for c in (0, 1, 2):
            client.post("/api/cluster", json={"class": c, "eps": 1e-9, "min_pts": 50})
        assert client.post("/api/commit").status_code == 409


class TestSummaryEndpoint:
    def test_totals_conserve(self, client):
        s = client.get("/api/summary").json()
        assert s["total"]["n"] == 210
        assert s["total"]["kept"] + s["total"]["removed"] == 210
        assert sum(row["total"] for row in s["classes"]) == 210

    def test_only_reclustered_row_changes(self, client):
        before = client.get("/api/summary").json()
        client.post("/api/cluster", json={"class": 1, "eps": 0.05, "min_pts": 40})
        after = client.get("/api/summary").json()
        for brow, arow in zip(before["classes"], after["classes"]):
            if brow["class"] == 1:
                assert arow["removed"] > brow["removed"]
            else:
                assert brow == arow

    def test_percentages_match_reduction_report(self, client, session):
        s = client.get("/api/summary").json()
        manifest = cl.build_manifest(session.state.assignment, session.ds_hash)
        ref = cl.reduction_report(manifest)
        assert abs(s["total"]["kept_pct"] - ref.kept_pct) < 1e-9


class TestConcurrency:
    def test_readers_see_consistent_snapshots(self, session):
        client = TestClient(srv.create_app(session))
        errors = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                r = client.get("/api/embedding", params={"class": 1}).json()
                clusters = {p["cluster"] for p in r["points"]}
                roles = {p["role"] for p in r["points"]}
                # internal consistency: noise role <=> cluster -1 per point
                for p in r["points"]:
                    if (p["cluster"] == -1) != (p["role"] == "noise"):
                        errors.append(p)
                        return

        threads = [threading.Thread(target=reader) for _ in range(3)]
        for t in threads:
            t.start()
        for i in range(15):
            eps = 0.2 + 0.2 * (i % 5)
            client.post("/api/cluster", json={"class": 1, "eps": eps, "min_pts": 5})
        stop.set()
        for t in threads:
            t.join(timeout=5)
        assert not errors


def test_root_without_ui(client):
    r = client.get("/")
    assert r.status_code == 200
    assert "curato" in r.text


def test_static_ui_mount(embedding, tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>ui-bundle</body></html>")
    session = srv.CurationSession(embedding, ds_hash="56" * 8, out_dir=tmp_path)
    client = TestClient(srv.create_app(session, ui_dir=ui))
    r = client.get("/")
    assert r.status_code == 200
    assert "ui-bundle" in r.text
    assert client.get("/api/summary").status_code == 200
