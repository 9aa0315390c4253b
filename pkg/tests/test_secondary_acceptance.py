"""Secondary acceptance: server/UI equivalence with the CLI pipeline.

The browser UI is a thin client (its vitest suite pins that commit sends a
bare POST /api/commit and renders response fields verbatim), so committing
"through the UI" is exactly the request issued here. None of this needs
the UI bundle built.
"""

import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from curato import cli
from curato import cluster as clustermod
from curato import dataset as dm
from curato import pipeline as pl
from curato import reduce as red
from curato import server as srv

CONFIG_TOML = """
out_dir = "{out}"

[dataset.synthetic]
class_count = 5
points_per_class = 80
dim = 2
contamination = 0.06
cov_scale = 0.7
seed = 21

[extractor]
input_shape = [2]
class_count = 5

[[extractor.arch]]
kind = "dense"
n_in = 2
n_out = 24
[[extractor.arch]]
kind = "relu"
[[extractor.arch]]
kind = "dense"
n_in = 24
n_out = 5
[[extractor.arch]]
kind = "head"

[extractor.train]
learning_rate = 0.05
momentum = 0.9
epochs = 8
batch_size = 32

[reducer.tsne]
perplexity = 15
iterations = 200
exaggeration_iters = 80
momentum_switch = 80

[cluster]
min_pts = 8

[experiment]
seeds = [0]
"""


@contextmanager
def criterion(number: int, description: str):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number:2d} FAIL  {description} "
              f"({time.perf_counter() - start:.1f}s)")
        raise
    print(f"[acceptance] criterion {number:2d} PASS  {description} "
          f"({time.perf_counter() - start:.1f}s)")


def test_criterion_11_server_ui_equivalence(tmp_path):
    with criterion(11, "UI commit and re-cluster match CLI pipeline and library"):
        out = tmp_path / "run"
        config = tmp_path / "cfg.toml"
        config.write_text(CONFIG_TOML.format(out=out))

        # CLI pipeline up to the manifest
        for command in ("synth", "train-extractor", "extract", "reduce", "filter"):
            assert cli.main([command, "--config", str(config)]) == 0, command
        cli_manifest = dm.load_manifest(out / "manifest.json")

        # a session over the same artifacts, defaults untouched
        cfg = pl.load_pipeline_config(config)
        ds_train = dm.load_fvec(out / "train.fvec")
        emb = red.load_embedding(out / "embedding.csv")
        session = srv.CurationSession(
            embedding=emb, ds_hash=dm.dataset_hash(ds_train), out_dir=out,
            overrides=cfg.cluster_overrides, default_min_pts=cfg.cluster_min_pts)
        client = TestClient(srv.create_app(session))

        # the UI commit button issues exactly this request
        response = client.post("/api/commit")
        assert response.status_code == 200
        ui_manifest = dm.load_manifest(response.json()["manifest_path"])
        assert ui_manifest.kept_indices == cli_manifest.kept_indices
        assert ui_manifest.removed_indices == cli_manifest.removed_indices
        assert ui_manifest.source_hash == cli_manifest.source_hash

        # re-cluster responses equal direct library calls on the same inputs
        labels = np.asarray(emb.labels)
        pts = np.asarray(emb.points, dtype=np.float64)
        for cls, eps, min_pts in [(0, 0.9, 4), (3, 1.7, 6), (0, 0.9, 4)]:
            got = client.post("/api/cluster",
                              json={"class": cls, "eps": eps, "min_pts": min_pts}).json()
            ref = clustermod.dbscan(pts[labels == cls],
                                    clustermod.DbscanConfig(eps, min_pts))
            assert got["noise_count"] == int(np.count_nonzero(ref.cluster_ids < 0))
            assert got["clusters"] == int(ref.cluster_ids.max() + 1)
            point_rows = client.get("/api/embedding", params={"class": cls}).json()["points"]
            served = np.array([p["cluster"] for p in point_rows])
            assert np.array_equal(served, ref.cluster_ids)


def test_primary_suite_is_ui_free():
    # the primary acceptance module must not touch the frontend
    source = Path(__file__).with_name("test_acceptance.py").read_text()
    assert "frontend" not in source
    assert "server" not in source
