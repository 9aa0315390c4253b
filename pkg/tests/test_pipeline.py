import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from curato import cli
from curato import dataset as dm
from curato import nnet
from curato import pipeline as pl
from curato import reduce as red
from curato.errors import ValidationError

CONFIG_TOML = """
out_dir = "{out}"

[dataset.synthetic]
class_count = 4
points_per_class = 60
dim = 2
contamination = 0.05
cov_scale = 0.6
seed = 3

[extractor]
input_shape = [2]
class_count = 4

[[extractor.arch]]
kind = "dense"
n_in = 2
n_out = 24
[[extractor.arch]]
kind = "batchnorm"
[[extractor.arch]]
kind = "relu"
[[extractor.arch]]
kind = "dense"
n_in = 24
n_out = 4
[[extractor.arch]]
kind = "head"

[extractor.train]
learning_rate = 0.05
momentum = 0.9
epochs = 8
batch_size = 32

[reducer]
pca_dims = 50

[reducer.tsne]
perplexity = 15
iterations = 250

[cluster]
min_pts = 8

[experiment]
arms = ["full", "random", "network"]
seeds = [0, 1]
test_fraction = 0.2

[sweep]
batch_sizes = [8, 32, 128]
learning_rates = [0.05]
epochs = 4
seeds = [0]

[commsim]
workers = 16
scheduler = "static_bucket"
worker_counts = [2, 4, 8]
"""


@pytest.fixture
def config_path(tmp_path):
    out = tmp_path / "out"
    path = tmp_path / "cfg.toml"
    path.write_text(CONFIG_TOML.format(out=out))
    return path


@pytest.fixture
def pipeline_cfg(config_path):
    return pl.load_pipeline_config(config_path)


class TestConfig:
    def test_toml_parse(self, pipeline_cfg):
        cfg = pipeline_cfg
        assert cfg.synthetic.class_count == 4
        assert cfg.extractor_train.epochs == 8
        assert cfg.tsne.perplexity == 15
        assert cfg.cluster_min_pts == 8
        assert cfg.arms == ("full", "random", "network")
        assert len(cfg.extractor_arch) == 5

    def test_arm_validation(self, pipeline_cfg):
        with pytest.raises(ValidationError):
            replace(pipeline_cfg, arms=())
        with pytest.raises(ValidationError):
            replace(pipeline_cfg, arms=("bogus",))

    def test_needs_source(self, pipeline_cfg):
        with pytest.raises(ValidationError):
            replace(pipeline_cfg, synthetic=None, source_path=None)


class TestSplit:
    def test_isolation_and_coverage(self):
        train, test = pl.split_train_test(100, seed=0, test_fraction=0.2)
        assert len(train) == 80 and len(test) == 20
        assert np.intersect1d(train, test).size == 0
        assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(100))

    def test_deterministic(self):
        a = pl.split_train_test(50, seed=7)
        b = pl.split_train_test(50, seed=7)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_different_seeds_differ(self):
        a = pl.split_train_test(50, seed=1)
        b = pl.split_train_test(50, seed=2)
        assert not np.array_equal(a[1], b[1])


class TestShrink:
    def test_dense_widths_halved(self):
        arch = (nnet.dense(2, 32), nnet.relu(), nnet.dense(32, 10), nnet.softmax_xent_head())
        small = pl.shrink_architecture(arch, (2,), 10)
        assert small[0].n_out == 16
        assert small[2].n_in == 16 and small[2].n_out == 10  # classifier width kept
        nnet.Model(layers=small, input_shape=(2,), class_count=10)  # composes

    def test_conv_channels_halved(self):
        arch = (nnet.conv2d(1, 8, 3, pad=1), nnet.relu(), nnet.flatten(),
                nnet.dense(8 * 16, 5), nnet.softmax_xent_head())
        small = pl.shrink_architecture(arch, (1, 4, 4), 5)
        assert small[0].out_ch == 4
        assert small[3].n_in == 4 * 16
        nnet.Model(layers=small, input_shape=(1, 4, 4), class_count=5)


class TestRunPipeline:
    def test_full_arm_only(self, pipeline_cfg):
        cfg = replace(pipeline_cfg, arms=("full",), seeds=(0,))
        report = pl.run_pipeline(cfg)
        assert len(report.results) == 1
        assert report.results[0].arm == "full"
        assert report.artifacts[0].manifest is None  # no curation needed

    def test_three_arms_matched_removal(self, pipeline_cfg):
        cfg = replace(pipeline_cfg, seeds=(0,))
        report = pl.run_pipeline(cfg)
        art = report.artifacts[0]
        assert art.manifest is not None and art.random_manifest is not None
        assert len(art.manifest.removed_indices) == len(art.random_manifest.removed_indices)
        assert {r.arm for r in report.results} == {"full", "random", "network"}
        for r in report.results:
            assert 0.0 <= r.test_accuracy <= 1.0
            assert 0.0 <= r.train_accuracy <= 1.0

    def test_manifest_conservation(self, pipeline_cfg):
        report = pl.run_pipeline(replace(pipeline_cfg, seeds=(0,)))
        art = report.artifacts[0]
        n_train = len(art.train_indices)
        assert len(art.manifest.kept_indices) + len(art.manifest.removed_indices) == n_train

    def test_outlier_recall_oracle(self, pipeline_cfg):
        report = pl.run_pipeline(replace(pipeline_cfg, seeds=(0,)))
        recall, clean_removal = pl.outlier_recall(report, seed=0)
        assert 0.0 <= recall <= 1.0
        assert 0.0 <= clean_removal <= 1.0

    def test_determinism(self, pipeline_cfg):
        cfg = replace(pipeline_cfg, seeds=(1,))
        a = pl.run_pipeline(cfg)
        b = pl.run_pipeline(cfg)
        assert [r.test_accuracy for r in a.results] == [r.test_accuracy for r in b.results]
        assert a.artifacts[0].manifest.kept_indices == b.artifacts[0].manifest.kept_indices


class TestSweep:
    def test_grid_shape_and_determinism(self, pipeline_cfg):
        ds, _ = pl.resolve_dataset(pipeline_cfg)
        arch = pipeline_cfg.extractor_arch
        rows = pl.batch_sweep(arch, (2,), 4, ds, [8, 32], [0.05, 0.1], epochs=3, seeds=[0])
        assert len(rows) == 4
        again = pl.batch_sweep(arch, (2,), 4, ds, [8, 32], [0.05, 0.1], epochs=3, seeds=[0])
        assert rows == again

    def test_batch_too_large(self, pipeline_cfg):
        ds, _ = pl.resolve_dataset(pipeline_cfg)
        with pytest.raises(ValidationError):
            pl.batch_sweep(pipeline_cfg.extractor_arch, (2,), 4, ds,
                           [4096], [0.1], epochs=1, seeds=[0])

    def test_interior_helper(self):
        rows = [pl.SweepRow(b, 0.1, 0, acc, acc)
                for b, acc in [(8, 0.5), (16, 0.9), (32, 0.6)]]
        assert pl.sweep_argmax_interior(rows) == {0.1: True}
        rows = [pl.SweepRow(b, 0.1, 0, acc, acc)
                for b, acc in [(8, 0.95), (16, 0.9), (32, 0.6)]]
        assert pl.sweep_argmax_interior(rows) == {0.1: False}


class TestReportRender:
    def test_render_and_reparse(self, pipeline_cfg, tmp_path):
        report = pl.run_pipeline(replace(pipeline_cfg, seeds=(0,)))
        out = tmp_path / "render"
        path = pl.report_render(report, out)
        assert path.exists()
        rows = pl.load_results_csv(out / "results.csv")
        assert len(rows) == len(report.results)
        for row, r in zip(rows, report.results):
            assert row["arm"] == r.arm
            assert abs(row["test_accuracy"] - r.test_accuracy) < 1e-12
            assert abs(row["generalization_gap"] - r.generalization_gap) < 1e-12

    def test_summary_formats_two_decimals(self, pipeline_cfg, tmp_path):
        report = pl.run_pipeline(replace(pipeline_cfg, seeds=(0,)))
        path = pl.report_render(report, tmp_path / "render2")
        text = path.read_text()
        assert "%" in text
        import re
        assert re.search(r"\(\d+\.\d{2}%\)", text)

    def test_empty_report_rejected(self, tmp_path):
        report = pl.ExperimentReport(results=[], artifacts=[], config_snapshot={})
        with pytest.raises(ValidationError):
            pl.report_render(report, tmp_path)


class TestCli:
    def test_stagewise_chain(self, config_path, tmp_path):
        argv = lambda *parts: [*parts, "--config", str(config_path)]
        assert cli.main(argv("synth")) == 0
        assert cli.main(argv("train-extractor")) == 0
        assert cli.main(argv("extract")) == 0
        assert cli.main(argv("reduce")) == 0
        assert cli.main(argv("cluster")) == 0
        assert cli.main(argv("filter")) == 0
        assert cli.main(argv("retrain")) == 0
        out = Path(pl.load_pipeline_config(config_path).out_dir)
        for artifact in ["dataset.fvec", "train.fvec", "test.fvec", "extractor.nnp",
                         "features.fvec", "embedding.csv", "assignment.csv",
                         "manifest.json", "retrained.nnp", "retrain.json"]:
            assert (out / artifact).exists(), artifact
        manifest = dm.load_manifest(out / "manifest.json")
        train_ds = dm.load_fvec(out / "train.fvec")
        assert manifest.n == train_ds.n

    def test_run_command(self, config_path):
        assert cli.main(["run", "--config", str(config_path)]) == 0
        out = Path(pl.load_pipeline_config(config_path).out_dir)
        assert (out / "report.md").exists()
        assert (out / "results.csv").exists()
        assert (out / "manifest_seed0.json").exists()

    def test_sweep_command(self, config_path):
        assert cli.main(["sweep-batch", "--config", str(config_path)]) == 0
        out = Path(pl.load_pipeline_config(config_path).out_dir)
        assert (out / "sweep.csv").exists()
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 3 * 1 * 1  # header + grid

    def test_commsim_command(self, config_path, tmp_path):
        out = tmp_path / "comm"
        assert cli.main(["commsim", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "trace.csv").exists()
        assert (out / "efficiency.csv").exists()

    def test_ingest_command(self, tmp_path):
        csv_in = tmp_path / "in.csv"
        csv_in.write_text("1,2,0\n3,4,1\n5,6,0\n")
        out = tmp_path / "ing"
        rc = cli.main(["ingest", "--csv", str(csv_in), "--label-column", "2",
                       "--out", str(out)])
        assert rc == 0
        ds = dm.load_fvec(out / "dataset.fvec")
        assert ds.n == 3 and ds.d == 2

    def test_missing_config_is_validation_error(self):
        assert cli.main(["synth"]) == 1

    def test_missing_artifact_exit_code(self, config_path):
        # extract before train-extractor: missing checkpoint
        assert cli.main(["extract", "--config", str(config_path)]) == 1

    def test_bad_subcommand_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["not-a-command"])
        assert exc.value.code == 1

    def test_seed_override(self, config_path):
        assert cli.main(["synth", "--config", str(config_path), "--seed", "5"]) == 0
