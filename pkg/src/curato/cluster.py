"""Per-class DBSCAN over the 2-D embedding and manifest construction.

DBSCAN semantics: a point is core when its eps-neighborhood (the point
itself included) holds at least min_pts points; clusters grow from core
points in ascending-index visit order, so cluster ids and border
attachment are deterministic. Noise points map to cluster id -1.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    METHOD_NETWORK,
    FilterManifest,
    per_class_counts,
)
from .errors import EmptyFilterError, NonFiniteValueError, ValidationError
from .reduce import Embedding

NOISE, BORDER, CORE = 0, 1, 2
ROLE_NAMES = {NOISE: "noise", BORDER: "border", CORE: "core"}

BRUTE_FORCE_LIMIT = 1024  # above this the grid-bucket index takes over
DEFAULT_MIN_PTS = 10
DEFAULT_EPS_PERCENTILE = 90.0


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_pts: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValidationError("eps must be > 0")
        if self.min_pts < 1:
            raise ValidationError("min_pts must be >= 1")


@dataclass
class ClusterAssignment:
    """Per-point class, cluster id (-1 = noise, ids are class-local), and role."""

    labels: np.ndarray
    cluster_ids: np.ndarray
    roles: np.ndarray
    configs: dict[int, DbscanConfig] = field(default_factory=dict)

    @property
    def alpha(self) -> np.ndarray:
        """1 for kept points, 0 for noise."""
        return (self.cluster_ids >= 0).astype(np.uint8)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def _neighbors_brute(pts: np.ndarray, eps: float) -> list[np.ndarray]:
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    eps2 = eps * eps
    return [np.flatnonzero(row <= eps2) for row in d2]


def _neighbors_grid(pts: np.ndarray, eps: float) -> list[np.ndarray]:
    """Grid-bucket index with cell size eps; candidates come from the 3x3
    cell neighborhood, then get filtered by true distance."""
    cells = np.floor(pts / eps).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, (gx, gy) in enumerate(cells):
        buckets.setdefault((int(gx), int(gy)), []).append(i)
    eps2 = eps * eps
    out = []
    for i, (gx, gy) in enumerate(cells):
        cand: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cand.extend(buckets.get((int(gx) + dx, int(gy) + dy), ()))
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d2 = ((pts[cand] - pts[i]) ** 2).sum(axis=1)
        out.append(cand[d2 <= eps2])
    return out


def _dbscan_core(pts: np.ndarray, cfg: DbscanConfig):
    n = pts.shape[0]
    neighbors = (_neighbors_brute if n <= BRUTE_FORCE_LIMIT else _neighbors_grid)(pts, cfg.eps)
    is_core = np.array([len(nb) >= cfg.min_pts for nb in neighbors])
    ids = np.full(n, -1, dtype=np.int64)
    roles = np.full(n, NOISE, dtype=np.uint8)
    cid = 0
    for seed in range(n):
        if not is_core[seed] or ids[seed] != -1:
            continue
        ids[seed] = cid
        roles[seed] = CORE
        queue = deque(int(j) for j in neighbors[seed])
        while queue:
            j = queue.popleft()
            if ids[j] != -1:
                continue
            ids[j] = cid
            if is_core[j]:
                roles[j] = CORE
                queue.extend(int(k) for k in neighbors[j])
            else:
                roles[j] = BORDER
        cid += 1
    return ids, roles


def dbscan(points: np.ndarray, cfg: DbscanConfig,
           labels: np.ndarray | None = None) -> ClusterAssignment:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValidationError("points must be a non-empty (n, 2) matrix")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteValueError("non-finite coordinates")
    ids, roles = _dbscan_core(pts, cfg)
    if labels is None:
        labels = np.zeros(pts.shape[0], dtype=np.int64)
    return ClusterAssignment(labels=np.asarray(labels, dtype=np.int64),
                             cluster_ids=ids, roles=roles, configs={0: cfg})


def knn_distance(pts: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor (self excluded)."""
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    k = min(k, pts.shape[0] - 1)
    if k < 1:
        return np.zeros(pts.shape[0])
    part = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return np.sqrt(part)


def default_config(pts: np.ndarray, min_pts: int = DEFAULT_MIN_PTS) -> DbscanConfig:
    """Data-driven default: eps is the 90th percentile of each point's
    distance to its (min_pts-1)-th nearest neighbor."""
    kdist = knn_distance(np.asarray(pts, dtype=np.float64), min_pts - 1)
    eps = float(np.percentile(kdist, DEFAULT_EPS_PERCENTILE))
    return DbscanConfig(eps=max(eps, 1e-12), min_pts=min_pts)


def cluster_per_class(emb: Embedding, cfgs: dict[int, DbscanConfig] | None = None,
                      default: DbscanConfig | None = None,
                      default_min_pts: int = DEFAULT_MIN_PTS) -> ClusterAssignment:
    """Cluster each class on its own point subset; merge by global index.

    Classes missing from cfgs fall back to `default`, or to the percentile
    rule computed on that class's points. Cluster ids are class-local.
    """
    if emb.labels is None:
        raise ValidationError("per-class clustering needs a labeled embedding")
    labels = np.asarray(emb.labels, dtype=np.int64)
    pts = np.asarray(emb.points, dtype=np.float64)
    if not np.all(np.isfinite(pts)):
        raise NonFiniteValueError("non-finite coordinates")
    cfgs = dict(cfgs or {})
    ids = np.full(labels.shape[0], -1, dtype=np.int64)
    roles = np.full(labels.shape[0], NOISE, dtype=np.uint8)
    used: dict[int, DbscanConfig] = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 1:
            raise ValidationError(f"class {c} has no points")
        cfg = cfgs.get(int(c)) or default or default_config(pts[idx], default_min_pts)
        cls_ids, cls_roles = _dbscan_core(pts[idx], cfg)
        ids[idx] = cls_ids
        roles[idx] = cls_roles
        used[int(c)] = cfg
    return ClusterAssignment(labels=labels, cluster_ids=ids, roles=roles, configs=used)


def build_manifest(ca: ClusterAssignment, ds_hash: str,
                   stage_params: dict | None = None) -> FilterManifest:
    """Manifest removing every noise point (alpha = 0)."""
    removed = np.flatnonzero(ca.cluster_ids < 0)
    kept = np.flatnonzero(ca.cluster_ids >= 0)
    if kept.size == 0:
        raise EmptyFilterError("empty filtered dataset: every point is noise")
    return FilterManifest(
        source_hash=ds_hash,
        kept_indices=tuple(int(i) for i in kept),
        removed_indices=tuple(int(i) for i in removed),
        method=METHOD_NETWORK,
        per_class_params={c: {"eps": cfg.eps, "min_pts": cfg.min_pts}
                          for c, cfg in sorted(ca.configs.items())},
        stage_params=stage_params or {},
        per_class_counts=per_class_counts(ca.labels, removed),
    )


@dataclass(frozen=True)
class ReductionSummary:
    total: int
    kept: int
    removed: int
    kept_pct: float
    per_class: dict[int, dict]

    def format_lines(self) -> list[str]:
        lines = [f"kept {self.kept} of {self.total} ({self.kept_pct:.2f}%), "
                 f"removed {self.removed}"]
        for c, row in sorted(self.per_class.items()):
            total = row["kept"] + row["removed"]
            pct = 100.0 * row["kept"] / total if total else 0.0
            lines.append(f"  class {c}: kept {row['kept']}/{total} ({pct:.2f}%)")
        return lines


def reduction_report(m: FilterManifest) -> ReductionSummary:
    """Same accounting shape as the per-network data-reduction table:
    kept percentage, removed count, per-class breakdown."""
    kept = len(m.kept_indices)
    removed = len(m.removed_indices)
    total = kept + removed
    return ReductionSummary(
        total=total,
        kept=kept,
        removed=removed,
        kept_pct=100.0 * kept / total,
        per_class=dict(m.per_class_counts),
    )


def export_assignment(ca: ClusterAssignment, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "class", "cluster", "role"])
        for i in range(ca.n):
            writer.writerow([i, int(ca.labels[i]), int(ca.cluster_ids[i]),
                             ROLE_NAMES[int(ca.roles[i])]])
