"""Command-line interface.

Stage commands share a TOML config (--config) and an artifact directory
(--out); each stage reads its predecessors' artifacts from there:

    dataset.fvec / outliers.json   <- synth | ingest
    train.fvec / test.fvec         <- train-extractor (split)
    extractor.nnp                  <- train-extractor
    features.fvec                  <- extract
    embedding.csv(+.json)          <- reduce
    assignment.csv                 <- cluster
    manifest.json                  <- filter
    retrained.nnp / retrain.json   <- retrain

Exit codes: 0 success, 1 validation/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cluster as clustermod
from . import commsim
from . import dataset as datamod
from . import nnet
from . import pipeline as pl
from . import reduce as reducemod
from .errors import ValidationError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed list")
    p.add_argument("--out", type=Path, default=None, help="artifact directory")


def _load_cfg(args) -> pl.PipelineConfig:
    if args.config is None:
        raise ValidationError("this command needs --config")
    cfg = pl.load_pipeline_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    return cfg


def _out_dir(cfg: pl.PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stage_seed(cfg: pl.PipelineConfig) -> int:
    return cfg.seeds[0]


def _load_split(cfg: pl.PipelineConfig, out: Path):
    """Load train/test splits, computing and caching them if absent."""
    train_p, test_p = out / "train.fvec", out / "test.fvec"
    if train_p.exists() and test_p.exists():
        return datamod.load_fvec(train_p), datamod.load_fvec(test_p)
    ds, _ = pl.resolve_dataset(cfg)
    train_idx, test_idx = pl.split_train_test(ds.n, _stage_seed(cfg), cfg.test_fraction)
    ds_train, ds_test = ds.take(train_idx), ds.take(test_idx)
    datamod.save_fvec(ds_train, train_p)
    datamod.save_fvec(ds_test, test_p)
    return ds_train, ds_test


def cmd_synth(args):
    cfg = _load_cfg(args)
    if cfg.synthetic is None:
        raise ValidationError("config has no [dataset.synthetic] table")
    out = _out_dir(cfg)
    ds, outliers = datamod.make_synthetic(cfg.synthetic)
    datamod.save_fvec(ds, out / "dataset.fvec")
    (out / "outliers.json").write_text(json.dumps([int(i) for i in outliers]))
    print(f"wrote {out / 'dataset.fvec'} (n={ds.n}, d={ds.d}, "
          f"{len(outliers)} injected outliers)")


def cmd_ingest(args):
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    ds = datamod.load_csv(args.csv, has_header=args.has_header,
                          label_column=args.label_column)
    datamod.save_fvec(ds, out / "dataset.fvec")
    print(f"wrote {out / 'dataset.fvec'} (n={ds.n}, d={ds.d})")


def cmd_train_extractor(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    ds_train, _ = _load_split(cfg, out)
    model = pl.extractor_model(cfg)
    seed = _stage_seed(cfg)
    params, history = nnet.train(model, ds_train, replace(cfg.extractor_train, seed=seed))
    nnet.save_checkpoint(params, model, out / "extractor.nnp")
    last = history[-1] if history else None
    print(f"wrote {out / 'extractor.nnp'}"
          + (f" (final loss {last.loss:.4f}, train acc {last.accuracy:.4f})" if last else ""))


def cmd_extract(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    ds_train, _ = _load_split(cfg, out)
    model = pl.extractor_model(cfg)
    ckpt = cfg.extractor_checkpoint or out / "extractor.nnp"
    params = nnet.load_checkpoint(model, ckpt)
    features = nnet.extract_features(model, params, ds_train)
    fds = datamod.FeatureDataset(values=features.astype(np.float32), labels=ds_train.labels,
                                 class_count=ds_train.class_count, provenance="features")
    datamod.save_fvec(fds, out / "features.fvec")
    print(f"wrote {out / 'features.fvec'} (n={fds.n}, d={fds.d})")


def cmd_reduce(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    fds = datamod.load_fvec(out / "features.fvec")
    features = fds.values.astype(np.float64)
    if features.shape[1] > pl.PCA_THRESHOLD:
        _, features = reducemod.pca_fit_transform(features, cfg.pca_dims)
    seed = _stage_seed(cfg)
    emb = reducemod.tsne(features, replace(cfg.tsne, seed=seed), labels=fds.labels)
    reducemod.export_embedding(emb, out / "embedding.csv")
    print(f"wrote {out / 'embedding.csv'} (KL {emb.kl_initial:.3f} -> {emb.kl_final:.3f})")


def _cluster_stage(cfg: pl.PipelineConfig, out: Path):
    emb = reducemod.load_embedding(out / "embedding.csv")
    assignment = clustermod.cluster_per_class(emb, cfg.cluster_overrides,
                                              default_min_pts=cfg.cluster_min_pts)
    return emb, assignment


def cmd_cluster(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    _, assignment = _cluster_stage(cfg, out)
    clustermod.export_assignment(assignment, out / "assignment.csv")
    noise = int(np.count_nonzero(assignment.cluster_ids < 0))
    print(f"wrote {out / 'assignment.csv'} ({noise} noise points of {assignment.n})")


def cmd_filter(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    ds_train, _ = _load_split(cfg, out)
    _, assignment = _cluster_stage(cfg, out)
    manifest = clustermod.build_manifest(
        assignment, datamod.dataset_hash(ds_train),
        stage_params={"tsne_seed": _stage_seed(cfg), "tsne_perplexity": cfg.tsne.perplexity})
    datamod.save_manifest(manifest, out / "manifest.json")
    summary = clustermod.reduction_report(manifest)
    print(f"wrote {out / 'manifest.json'}")
    for line in summary.format_lines():
        print(line)


def cmd_retrain(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    ds_train, ds_test = _load_split(cfg, out)
    manifest = datamod.load_manifest(out / "manifest.json")
    ds_kept = datamod.apply_manifest(ds_train, manifest)
    model = pl.retrain_model(cfg)
    tc = replace(cfg.retrain_train or cfg.extractor_train, seed=_stage_seed(cfg))
    params, _ = nnet.train(model, ds_kept, tc)
    nnet.save_checkpoint(params, model, out / "retrained.nnp")
    _, train_acc = nnet.evaluate(model, params, ds_kept)
    _, test_acc = nnet.evaluate(model, params, ds_test)
    (out / "retrain.json").write_text(json.dumps(
        {"train_accuracy": train_acc, "test_accuracy": test_acc, "epochs": tc.epochs}))
    print(f"wrote {out / 'retrained.nnp'} (test acc {test_acc:.4f})")


def cmd_run(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    report = pl.run_pipeline(cfg)
    path = pl.report_render(report, out)
    for art in report.artifacts:
        if art.manifest is not None:
            datamod.save_manifest(art.manifest, out / f"manifest_seed{art.seed}.json")
    print(f"wrote {path}")
    for arm in sorted({r.arm for r in report.results}):
        print(f"  {arm}: mean test accuracy {report.arm_mean(arm):.4f}")


def cmd_sweep_batch(args):
    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    doc = pl.load_toml(args.config).get("sweep", {})
    ds, _ = pl.resolve_dataset(cfg)
    rows = pl.batch_sweep(
        cfg.extractor_arch, cfg.input_shape, cfg.class_count, ds,
        batch_sizes=[int(b) for b in doc.get("batch_sizes", [8, 16, 32, 64, 128, 256, 512])],
        learning_rates=[float(lr) for lr in doc.get("learning_rates", [0.05, 0.1])],
        epochs=int(doc.get("epochs", 30)),
        seeds=[int(s) for s in doc.get("seeds", list(cfg.seeds))],
        momentum=float(doc.get("momentum", 0.9)),
        weight_decay=float(doc.get("weight_decay", 0.0)),
        test_fraction=cfg.test_fraction,
    )
    pl.write_sweep_csv(rows, out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")


def cmd_commsim(args):
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    doc = pl.load_toml(args.config).get("commsim", {}) if args.config else {}
    cfg = commsim.config_from_dict(doc)
    trace = commsim.simulate_step(cfg)
    commsim.write_trace_csv(trace, out / "trace.csv")
    counts = [int(k) for k in doc.get("worker_counts", [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024])]
    rows = commsim.scaling_curve(cfg, counts, float(doc.get("samples_per_step", 32)))
    commsim.write_efficiency_csv(rows, out / "efficiency.csv")
    print(f"wrote {out / 'trace.csv'} and {out / 'efficiency.csv'} "
          f"(step {trace.step_time * 1e3:.3f} ms at K={cfg.workers})")


def cmd_serve(args):
    from . import server  # deferred: pulls in fastapi/uvicorn

    cfg = _load_cfg(args)
    out = _out_dir(cfg)
    ds_train, _ = _load_split(cfg, out)
    emb = reducemod.load_embedding(out / "embedding.csv")
    session = server.CurationSession(
        embedding=emb, ds_hash=datamod.dataset_hash(ds_train), out_dir=out,
        overrides=cfg.cluster_overrides, default_min_pts=cfg.cluster_min_pts)
    port = int(os.environ.get("CURATO_PORT", args.port))
    server.serve(session, port=port, ui_dir=args.ui_dir)


def main(argv=None) -> int:
    parser = _Parser(prog="curato", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    handlers = {}

    def register(name, fn, configure=None):
        p = sub.add_parser(name)
        _add_common(p)
        if configure:
            configure(p)
        handlers[name] = fn

    register("synth", cmd_synth)
    register("ingest", cmd_ingest, lambda p: (
        p.add_argument("--csv", type=Path, required=True),
        p.add_argument("--has-header", action="store_true"),
        p.add_argument("--label-column", type=int, default=None)))
    register("train-extractor", cmd_train_extractor)
    register("extract", cmd_extract)
    register("reduce", cmd_reduce)
    register("cluster", cmd_cluster)
    register("filter", cmd_filter)
    register("retrain", cmd_retrain)
    register("run", cmd_run)
    register("sweep-batch", cmd_sweep_batch)
    register("commsim", cmd_commsim)
    register("serve", cmd_serve, lambda p: (
        p.add_argument("--port", type=int, default=8787),
        p.add_argument("--ui-dir", type=Path, default=None)))

    args = parser.parse_args(argv)
    try:
        handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing artifact or file: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
