"""Local HTTP service for interactive curation oversight.

Serves the embedding, re-clusters single classes on demand, and commits
filter manifests. All clustering goes through the cluster module, so
server responses are bit-identical to library calls with the same inputs.
The published assignment is an immutable snapshot swapped atomically;
mutations serialize through one lock.

Single-session, localhost-oriented tool: one curator, no auth.
"""

from __future__ import annotations

import datetime
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import cluster as clustermod
from . import dataset as datamod
from . import reduce as reducemod
from .errors import EmptyFilterError

DEFAULT_PORT = 8787


@dataclass(frozen=True)
class SessionState:
    """Immutable snapshot published to readers."""

    assignment: clustermod.ClusterAssignment
    configs: dict[int, clustermod.DbscanConfig]


class CurationSession:
    """One loaded embedding plus the current per-class clustering state."""

    def __init__(self, embedding: reducemod.Embedding, ds_hash: str, out_dir,
                 overrides: dict[int, clustermod.DbscanConfig] | None = None,
                 default_min_pts: int = clustermod.DEFAULT_MIN_PTS,
                 stage_params: dict | None = None):
        if embedding.labels is None:
            raise ValueError("curation needs a labeled embedding")
        self.embedding = embedding
        self.ds_hash = ds_hash
        self.out_dir = Path(out_dir)
        self.default_min_pts = default_min_pts
        self.stage_params = stage_params or {}
        self._lock = threading.Lock()
        assignment = clustermod.cluster_per_class(
            embedding, overrides, default_min_pts=default_min_pts)
        self._state = SessionState(assignment=assignment, configs=dict(assignment.configs))

    @property
    def state(self) -> SessionState:
        return self._state  # atomic reference read

    @property
    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.embedding.labels))

    def recluster(self, cls: int, cfg: clustermod.DbscanConfig) -> SessionState:
        """Re-cluster one class; other classes keep their assignment."""
        with self._lock:
            old = self._state
            labels = np.asarray(self.embedding.labels, dtype=np.int64)
            idx = np.flatnonzero(labels == cls)
            ids, roles = clustermod._dbscan_core(
                np.asarray(self.embedding.points, dtype=np.float64)[idx], cfg)
            new_ids = old.assignment.cluster_ids.copy()
            new_roles = old.assignment.roles.copy()
            new_ids[idx] = ids
            new_roles[idx] = roles
            configs = dict(old.configs)
            configs[cls] = cfg
            assignment = clustermod.ClusterAssignment(
                labels=labels, cluster_ids=new_ids, roles=new_roles, configs=configs)
            self._state = SessionState(assignment=assignment, configs=configs)
            return self._state

    def commit(self) -> tuple[Path, clustermod.ReductionSummary]:
        with self._lock:
            state = self._state
            manifest = clustermod.build_manifest(state.assignment, self.ds_hash,
                                                 stage_params=self.stage_params)
            stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%S%f")
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path = self.out_dir / f"manifest_{stamp}.json"
            datamod.save_manifest(manifest, path)
            return path, clustermod.reduction_report(manifest)


class ReclusterRequest(BaseModel):
    cls: int = Field(alias="class")
    eps: float = Field(gt=0)
    min_pts: int = Field(ge=1)


def _summary_rows(session: CurationSession, state: SessionState) -> dict:
    labels = np.asarray(session.embedding.labels, dtype=np.int64)
    noise = state.assignment.cluster_ids < 0
    rows = []
    total_kept = total_removed = 0
    for c in session.classes:
        mask = labels == c
        kept = int(np.count_nonzero(mask & ~noise))
        removed = int(np.count_nonzero(mask & noise))
        total = kept + removed
        rows.append({"class": c, "total": total, "kept": kept, "removed": removed,
                     "kept_pct": 100.0 * kept / total if total else 0.0})
        total_kept += kept
        total_removed += removed
    n = total_kept + total_removed
    return {"classes": rows,
            "total": {"n": n, "kept": total_kept, "removed": total_removed,
                      "kept_pct": 100.0 * total_kept / n if n else 0.0}}


def create_app(session: CurationSession, ui_dir=None) -> FastAPI:
    app = FastAPI(title="curato curation server")

    @app.get("/api/classes")
    def classes():
        state = session.state
        return {"classes": session.classes,
                "configs": {str(c): {"eps": cfg.eps, "min_pts": cfg.min_pts}
                            for c, cfg in sorted(state.configs.items())}}

    @app.get("/api/embedding")
    def embedding(cls: int = Query(alias="class")):
        if cls not in session.classes:
            raise HTTPException(status_code=404, detail=f"unknown class {cls}")
        state = session.state
        labels = np.asarray(session.embedding.labels, dtype=np.int64)
        idx = np.flatnonzero(labels == cls)
        pts = session.embedding.points
        a = state.assignment
        return {"class": cls, "points": [
            {"idx": int(i), "x": float(pts[i, 0]), "y": float(pts[i, 1]),
             "cluster": int(a.cluster_ids[i]),
             "role": clustermod.ROLE_NAMES[int(a.roles[i])]}
            for i in idx]}

    @app.post("/api/cluster")
    def recluster(req: ReclusterRequest):
        if req.cls not in session.classes:
            raise HTTPException(status_code=404, detail=f"unknown class {req.cls}")
        try:
            cfg = clustermod.DbscanConfig(eps=req.eps, min_pts=req.min_pts)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        state = session.recluster(req.cls, cfg)
        labels = np.asarray(session.embedding.labels, dtype=np.int64)
        idx = labels == req.cls
        ids = state.assignment.cluster_ids[idx]
        return {"class": req.cls,
                "clusters": int(len(set(int(v) for v in ids if v >= 0))),
                "noise_count": int(np.count_nonzero(ids < 0))}

    @app.post("/api/commit")
    def commit():
        state = session.state
        present = set(int(c) for c in state.configs)
        missing = [c for c in session.classes if c not in present]
        if missing:
            raise HTTPException(status_code=409, detail=f"classes not clustered: {missing}")
        try:
            path, summary = session.commit()
        except EmptyFilterError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"manifest_path": str(path),
                "summary": {"total": summary.total, "kept": summary.kept,
                            "removed": summary.removed, "kept_pct": summary.kept_pct}}

    @app.get("/api/summary")
    def summary():
        return _summary_rows(session, session.state)

    if ui_dir is not None and Path(ui_dir).is_dir() and (Path(ui_dir) / "index.html").exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def root():
            return ("<html><body><h1>curato curation server</h1>"
                    "<p>UI bundle not built; the JSON API lives under /api/.</p>"
                    "</body></html>")

    return app


def serve(session: CurationSession, port: int = DEFAULT_PORT, ui_dir=None):
    import uvicorn

    app = create_app(session, ui_dir=ui_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
