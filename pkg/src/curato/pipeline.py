"""Pipeline orchestration: train, extract, embed, cluster, filter, retrain.

Runs the five-stage curation loop end to end, the three-arm experiment
(full / randomly filtered / network filtered, matched removal sizes, one
shared held-out test set), and the batch-size sweep. Configuration comes
from a TOML document mirroring PipelineConfig.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import cluster as clustermod
from . import dataset as datamod
from . import nnet
from . import reduce as reducemod
from . import rng
from .errors import ValidationError

ARM_FULL = "full"
ARM_RANDOM = "random"
ARM_NETWORK = "network"
_ARMS = (ARM_FULL, ARM_RANDOM, ARM_NETWORK)

PCA_THRESHOLD = 50  # apply PCA to this many dims first whenever d exceeds it


@dataclass(frozen=True)
class PipelineConfig:
    extractor_arch: tuple[nnet.LayerSpec, ...]
    extractor_train: nnet.TrainConfig
    input_shape: tuple[int, ...]
    class_count: int
    source_path: str | None = None
    synthetic: datamod.SyntheticSpec | None = None
    pca_dims: int = PCA_THRESHOLD
    tsne: reducemod.TsneConfig = field(default_factory=reducemod.TsneConfig)
    cluster_overrides: dict[int, clustermod.DbscanConfig] = field(default_factory=dict)
    cluster_min_pts: int = clustermod.DEFAULT_MIN_PTS
    retrain_arch: tuple[nnet.LayerSpec, ...] | None = None  # default: half-width extractor
    retrain_train: nnet.TrainConfig | None = None
    extractor_checkpoint: str | None = None  # pretrained path, skips stage-1 training
    arms: tuple[str, ...] = (ARM_FULL, ARM_RANDOM, ARM_NETWORK)
    seeds: tuple[int, ...] = (0,)
    test_fraction: float = 0.2
    out_dir: str = "out"

    def __post_init__(self):
        if not self.arms:
            raise ValidationError("at least one experiment arm required")
        for arm in self.arms:
            if arm not in _ARMS:
                raise ValidationError(f"unknown arm {arm!r}")
        if self.source_path is None and self.synthetic is None:
            raise ValidationError("config needs a dataset source (path or synthetic spec)")
        if not self.seeds:
            raise ValidationError("at least one seed required")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must lie in (0, 1)")


def extractor_model(cfg: PipelineConfig) -> nnet.Model:
    return nnet.Model(layers=cfg.extractor_arch, input_shape=cfg.input_shape,
                      class_count=cfg.class_count)


def retrain_model(cfg: PipelineConfig) -> nnet.Model:
    arch = cfg.retrain_arch
    if arch is None:
        arch = shrink_architecture(cfg.extractor_arch, cfg.input_shape, cfg.class_count)
    return nnet.Model(layers=arch, input_shape=cfg.input_shape, class_count=cfg.class_count)


def shrink_architecture(arch, input_shape, class_count, factor: float = 0.5):
    """Half-width copy of an architecture: hidden dense widths and conv
    channel counts scale by `factor`; the input and the classifier output
    stay fixed. This is the default 'smaller network' for stage 5."""
    shapes = nnet.infer_shapes(arch, input_shape)
    out: list[nnet.LayerSpec] = []
    shape = tuple(input_shape)
    for i, layer in enumerate(arch):
        is_classifier = i == len(arch) - 2
        if layer.kind == nnet.DENSE:
            n_in = shape[0]
            n_out = layer.n_out if is_classifier else max(1, int(layer.n_out * factor))
            out.append(nnet.dense(n_in, n_out))
            shape = (n_out,)
        elif layer.kind == nnet.CONV2D:
            in_ch = shape[0]
            out_ch = max(1, int(layer.out_ch * factor))
            out.append(nnet.conv2d(in_ch, out_ch, layer.kernel, layer.stride, layer.pad))
            _, h, w = shapes[i + 1]
            shape = (out_ch, h, w)
        elif layer.kind == nnet.MAXPOOL2D:
            out.append(layer)
            c = shape[0]
            _, h, w = shapes[i + 1]
            shape = (c, h, w)
        elif layer.kind == nnet.FLATTEN:
            out.append(layer)
            shape = (int(np.prod(shape)),)
        else:
            out.append(layer)
    return tuple(out)


def split_train_test(n: int, seed: int, test_fraction: float = 0.2):
    """Deterministic shuffled split; both index arrays come back sorted."""
    perm = rng.seeded(seed, "split").permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise ValidationError("test fraction leaves no training data")
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return train, test


@dataclass(frozen=True)
class ArmResult:
    arm: str
    seed: int
    test_accuracy: float
    train_accuracy: float
    epochs: int
    wall_time_s: float

    @property
    def generalization_gap(self) -> float:
        return self.train_accuracy - self.test_accuracy


@dataclass
class SeedArtifacts:
    seed: int
    train_indices: np.ndarray
    test_indices: np.ndarray
    manifest: datamod.FilterManifest | None
    random_manifest: datamod.FilterManifest | None
    reduction: clustermod.ReductionSummary | None
    embedding: reducemod.Embedding | None = None


@dataclass
class ExperimentReport:
    results: list[ArmResult]
    artifacts: list[SeedArtifacts]
    config_snapshot: dict
    synthetic_outliers: np.ndarray | None = None

    def arm_mean(self, arm: str) -> float:
        accs = [r.test_accuracy for r in self.results if r.arm == arm]
        if not accs:
            raise ValidationError(f"no results for arm {arm!r}")
        return float(np.mean(accs))


def resolve_dataset(cfg: PipelineConfig):
    """(dataset, ground-truth outlier indices or None)."""
    if cfg.source_path is not None:
        return datamod.load_fvec(cfg.source_path), None
    ds, outliers = datamod.make_synthetic(cfg.synthetic)
    return ds, outliers


def curate(cfg: PipelineConfig, ds_train: datamod.FeatureDataset, seed: int):
    """Stages 1-4 on the training split: train (or load) the extractor,
    extract features, reduce, cluster per class, build the manifest."""
    model = extractor_model(cfg)
    if cfg.extractor_checkpoint:
        params = nnet.load_checkpoint(model, cfg.extractor_checkpoint)
    else:
        params, _ = nnet.train(model, ds_train, replace(cfg.extractor_train, seed=seed))
    features = nnet.extract_features(model, params, ds_train)
    stage_params = {"tsne_seed": seed, "tsne_perplexity": cfg.tsne.perplexity}
    if features.shape[1] > PCA_THRESHOLD:
        _, features = reducemod.pca_fit_transform(features, cfg.pca_dims)
        stage_params["pca_dims"] = cfg.pca_dims
    emb = reducemod.tsne(features, replace(cfg.tsne, seed=seed), labels=ds_train.labels)
    assignment = clustermod.cluster_per_class(emb, cfg.cluster_overrides,
                                              default_min_pts=cfg.cluster_min_pts)
    manifest = clustermod.build_manifest(assignment, datamod.dataset_hash(ds_train),
                                         stage_params=stage_params)
    return manifest, emb, assignment


def _train_arm(arm: str, cfg: PipelineConfig, ds_arm, ds_test, seed: int) -> ArmResult:
    model = retrain_model(cfg)
    tc = cfg.retrain_train or cfg.extractor_train
    tc = replace(tc, seed=seed)
    t0 = time.perf_counter()
    params, _ = nnet.train(model, ds_arm, tc)
    wall = time.perf_counter() - t0
    _, train_acc = nnet.evaluate(model, params, ds_arm)
    _, test_acc = nnet.evaluate(model, params, ds_test)
    return ArmResult(arm=arm, seed=seed, test_accuracy=test_acc, train_accuracy=train_acc,
                     epochs=tc.epochs, wall_time_s=wall)


def run_pipeline(cfg: PipelineConfig, keep_embeddings: bool = False) -> ExperimentReport:
    ds, outliers = resolve_dataset(cfg)
    results: list[ArmResult] = []
    artifacts: list[SeedArtifacts] = []
    for seed in cfg.seeds:
        train_idx, test_idx = split_train_test(ds.n, seed, cfg.test_fraction)
        assert not np.intersect1d(train_idx, test_idx).size, "test-set isolation violated"
        ds_train = ds.take(train_idx)
        ds_test = ds.take(test_idx)

        manifest = random_manifest = reduction = emb = None
        needs_curation = ARM_NETWORK in cfg.arms or ARM_RANDOM in cfg.arms
        if needs_curation:
            manifest, emb, _ = curate(cfg, ds_train, seed)
            reduction = clustermod.reduction_report(manifest)

        for arm in cfg.arms:
            if arm == ARM_FULL:
                ds_arm = ds_train
            elif arm == ARM_NETWORK:
                ds_arm = datamod.apply_manifest(ds_train, manifest)
            else:
                random_manifest = datamod.random_filter(
                    ds_train, len(manifest.removed_indices), seed)
                assert len(random_manifest.removed_indices) == len(manifest.removed_indices)
                ds_arm = datamod.apply_manifest(ds_train, random_manifest)
            results.append(_train_arm(arm, cfg, ds_arm, ds_test, seed))

        artifacts.append(SeedArtifacts(
            seed=seed, train_indices=train_idx, test_indices=test_idx,
            manifest=manifest, random_manifest=random_manifest, reduction=reduction,
            embedding=emb if keep_embeddings else None))
    snapshot = {
        "arms": list(cfg.arms), "seeds": list(cfg.seeds),
        "test_fraction": cfg.test_fraction, "pca_dims": cfg.pca_dims,
        "tsne": asdict(cfg.tsne), "cluster_min_pts": cfg.cluster_min_pts,
    }
    return ExperimentReport(results=results, artifacts=artifacts, config_snapshot=snapshot,
                            synthetic_outliers=outliers)


def outlier_recall(report: ExperimentReport, seed: int) -> tuple[float, float]:
    """(outlier recall, clean-point removal rate) for one seed's network
    manifest, judged against the synthetic ground truth."""
    if report.synthetic_outliers is None:
        raise ValidationError("ground-truth outliers only exist for synthetic sources")
    art = next(a for a in report.artifacts if a.seed == seed)
    if art.manifest is None:
        raise ValidationError("seed has no network manifest")
    outliers = set(int(i) for i in report.synthetic_outliers)
    train_ids = [int(i) for i in art.train_indices]
    removed_rows = set(art.manifest.removed_indices)
    out_rows = {row for row, orig in enumerate(train_ids) if orig in outliers}
    clean_rows = set(range(len(train_ids))) - out_rows
    recall = len(removed_rows & out_rows) / max(len(out_rows), 1)
    clean_removal = len(removed_rows & clean_rows) / max(len(clean_rows), 1)
    return recall, clean_removal


@dataclass(frozen=True)
class SweepRow:
    batch_size: int
    learning_rate: float
    seed: int
    test_accuracy: float
    train_accuracy: float


def batch_sweep(arch, input_shape, class_count, ds: datamod.FeatureDataset,
                batch_sizes, learning_rates, epochs: int, seeds,
                momentum: float = 0.9, weight_decay: float = 0.0,
                test_fraction: float = 0.2) -> list[SweepRow]:
    """Fixed-epoch-budget accuracy grid over (batch size, learning rate, seed)."""
    model = nnet.Model(layers=tuple(arch), input_shape=tuple(input_shape),
                       class_count=class_count)
    rows: list[SweepRow] = []
    for seed in seeds:
        train_idx, test_idx = split_train_test(ds.n, seed, test_fraction)
        ds_train = ds.take(train_idx)
        ds_test = ds.take(test_idx)
        for b in batch_sizes:
            if b > ds_train.n:
                raise ValidationError(f"batch size {b} exceeds training set {ds_train.n}")
            for lr in learning_rates:
                tc = nnet.TrainConfig(learning_rate=lr, momentum=momentum,
                                      weight_decay=weight_decay, epochs=epochs,
                                      batch_size=b, seed=seed)
                params, _ = nnet.train(model, ds_train, tc)
                _, train_acc = nnet.evaluate(model, params, ds_train)
                _, test_acc = nnet.evaluate(model, params, ds_test)
                rows.append(SweepRow(batch_size=b, learning_rate=lr, seed=seed,
                                     test_accuracy=test_acc, train_accuracy=train_acc))
    return rows


def sweep_argmax_interior(rows: list[SweepRow]) -> dict[float, bool]:
    """Per learning rate: is the accuracy-maximizing batch size (over
    seed-mean accuracy) interior to the sweep grid?"""
    lrs = sorted({r.learning_rate for r in rows})
    sizes = sorted({r.batch_size for r in rows})
    verdict = {}
    for lr in lrs:
        means = []
        for b in sizes:
            accs = [r.test_accuracy for r in rows if r.learning_rate == lr and r.batch_size == b]
            means.append(np.mean(accs))
        best = int(np.argmax(means))
        verdict[lr] = 0 < best < len(sizes) - 1
    return verdict


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch_size", "learning_rate", "seed",
                         "test_accuracy", "train_accuracy"])
        for r in rows:
            writer.writerow([r.batch_size, repr(r.learning_rate), r.seed,
                             repr(r.test_accuracy), repr(r.train_accuracy)])


RESULT_COLUMNS = ["arm", "seed", "test_accuracy", "train_accuracy", "epochs",
                  "wall_time_s", "generalization_gap"]


def write_results_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in report.results:
            writer.writerow([r.arm, r.seed, repr(r.test_accuracy), repr(r.train_accuracy),
                             r.epochs, repr(r.wall_time_s), repr(r.generalization_gap)])


def load_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            rows.append({
                "arm": row["arm"], "seed": int(row["seed"]),
                "test_accuracy": float(row["test_accuracy"]),
                "train_accuracy": float(row["train_accuracy"]),
                "epochs": int(row["epochs"]),
                "wall_time_s": float(row["wall_time_s"]),
                "generalization_gap": float(row["generalization_gap"]),
            })
    return rows


def report_render(report: ExperimentReport, out_dir) -> Path:
    """Write results.csv plus a Markdown summary; returns the summary path."""
    if not report.results:
        raise ValidationError("cannot render an empty report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(report, out / "results.csv")

    lines = ["# Curation experiment report", ""]
    arms = sorted({r.arm for r in report.results})
    lines.append("| arm | seeds | mean test acc | mean train acc | mean gap |")
    lines.append("|-----|-------|---------------|----------------|----------|")
    for arm in arms:
        rs = [r for r in report.results if r.arm == arm]
        lines.append(
            f"| {arm} | {len(rs)} | {np.mean([r.test_accuracy for r in rs]):.4f} "
            f"| {np.mean([r.train_accuracy for r in rs]):.4f} "
            f"| {np.mean([r.generalization_gap for r in rs]):.4f} |")
    lines.append("")
    for art in report.artifacts:
        if art.reduction is not None:
            lines.append(f"## Seed {art.seed} data reduction")
            lines.extend(art.reduction.format_lines())
            lines.append("")
    path = out / "report.md"
    path.write_text("\n".join(lines))
    return path


# -- TOML configuration ------------------------------------------------------

def parse_architecture(items) -> tuple[nnet.LayerSpec, ...]:
    layers = []
    for item in items:
        kind = item.get("kind")
        if kind == "dense":
            layers.append(nnet.dense(int(item["n_in"]), int(item["n_out"])))
        elif kind == "conv2d":
            layers.append(nnet.conv2d(int(item["in_ch"]), int(item["out_ch"]),
                                      int(item["kernel"]), int(item.get("stride", 1)),
                                      int(item.get("pad", 0))))
        elif kind == "batchnorm":
            layers.append(nnet.batchnorm())
        elif kind == "relu":
            layers.append(nnet.relu())
        elif kind == "maxpool2d":
            layers.append(nnet.maxpool2d(int(item["window"]),
                                         int(item["stride"]) if "stride" in item else None))
        elif kind == "flatten":
            layers.append(nnet.flatten())
        elif kind in ("head", "softmax_xent_head"):
            layers.append(nnet.softmax_xent_head())
        else:
            raise ValidationError(f"unknown layer kind {kind!r} in architecture")
    return tuple(layers)


def _parse_train(doc: dict, default_seed: int = 0) -> nnet.TrainConfig:
    return nnet.TrainConfig(
        learning_rate=float(doc.get("learning_rate", 0.1)),
        momentum=float(doc.get("momentum", 0.9)),
        weight_decay=float(doc.get("weight_decay", 0.0)),
        epochs=int(doc.get("epochs", 10)),
        batch_size=int(doc.get("batch_size", 32)),
        seed=int(doc.get("seed", default_seed)),
    )


def parse_pipeline_config(doc: dict) -> PipelineConfig:
    ds_doc = doc.get("dataset", {})
    synthetic = None
    if "synthetic" in ds_doc:
        s = ds_doc["synthetic"]
        synthetic = datamod.SyntheticSpec(
            class_count=int(s["class_count"]),
            points_per_class=int(s["points_per_class"]),
            dim=int(s.get("dim", 2)),
            centers=tuple(tuple(c) for c in s["centers"]) if "centers" in s else None,
            center_spread=float(s.get("center_spread", 10.0)),
            cov_scale=float(s.get("cov_scale", 1.0)),
            contamination=float(s.get("contamination", 0.0)),
            outlier_margin=float(s.get("outlier_margin", 0.25)),
            seed=int(s.get("seed", 0)),
        )
    ext = doc.get("extractor", {})
    if "arch" not in ext:
        raise ValidationError("config needs [[extractor.arch]] layer tables")
    red = doc.get("reducer", {})
    tsne_doc = red.get("tsne", {})
    tsne_cfg = reducemod.TsneConfig(**{k: v for k, v in tsne_doc.items()})
    clu = doc.get("cluster", {})
    overrides = {}
    for key, val in clu.get("per_class", {}).items():
        overrides[int(key)] = clustermod.DbscanConfig(
            eps=float(val["eps"]), min_pts=int(val["min_pts"]))
    ret = doc.get("retrain", {})
    exp = doc.get("experiment", {})
    return PipelineConfig(
        extractor_arch=parse_architecture(ext["arch"]),
        extractor_train=_parse_train(ext.get("train", {})),
        input_shape=tuple(int(v) for v in ext["input_shape"]),
        class_count=int(ext["class_count"]),
        source_path=ds_doc.get("source"),
        synthetic=synthetic,
        pca_dims=int(red.get("pca_dims", PCA_THRESHOLD)),
        tsne=tsne_cfg,
        cluster_overrides=overrides,
        cluster_min_pts=int(clu.get("min_pts", clustermod.DEFAULT_MIN_PTS)),
        retrain_arch=parse_architecture(ret["arch"]) if "arch" in ret else None,
        retrain_train=_parse_train(ret["train"]) if "train" in ret else None,
        extractor_checkpoint=ext.get("checkpoint"),
        arms=tuple(exp.get("arms", list(_ARMS))),
        seeds=tuple(int(s) for s in exp.get("seeds", [0])),
        test_fraction=float(exp.get("test_fraction", 0.2)),
        out_dir=doc.get("out_dir", "out"),
    )


def load_pipeline_config(path) -> PipelineConfig:
    with open(path, "rb") as fh:
        return parse_pipeline_config(tomllib.load(fh))


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)
