"""Dimensionality reduction: PCA pre-reduction and 2-D t-SNE embedding.

The exact O(n^2) t-SNE is the reference path; a quadtree Barnes-Hut
approximation of the repulsive gradient term is the scale path, with
tsne_bh_consistency cross-validating the two. Per-point bandwidths are
bisected until each conditional distribution's entropy matches
log(perplexity).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .errors import ValidationError

_TINY = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    axes: np.ndarray  # (d, m), orthonormal columns
    explained_variance: np.ndarray
    degenerate: bool = False

    def transform(self, fm: np.ndarray) -> np.ndarray:
        return (np.asarray(fm, dtype=np.float64) - self.mean) @ self.axes


def pca_fit_transform(fm: np.ndarray, m: int) -> tuple[PcaModel, np.ndarray]:
    """Center, project onto the top-m principal axes.

    Sign convention: each axis's largest-magnitude entry is positive, so
    the decomposition is deterministic. Requested axes beyond the data's
    rank are an arbitrary orthonormal completion and set the degenerate
    flag.
    """
    x = np.asarray(fm, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("expected an (n, d) feature matrix")
    n, d = x.shape
    if not 1 <= m <= min(n, d):
        raise ValidationError(f"target dim {m} not in [1, min(n,d)={min(n, d)}]")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    axes = vt[:m].T.copy()
    sv = s[:m]
    explained = sv**2 / max(n - 1, 1)
    degenerate = bool(sv.size == 0 or sv[-1] <= _TINY * max(1.0, float(s[0]) if s.size else 1.0))
    # fix signs
    flips = np.sign(axes[np.abs(axes).argmax(axis=0), np.arange(m)])
    flips[flips == 0] = 1.0
    axes *= flips
    model = PcaModel(mean=mean, axes=axes, explained_variance=explained, degenerate=degenerate)
    return model, xc @ axes


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    out_dim: int = 2
    iterations: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    theta: float = 0.0
    seed: int = 0
    entropy_tol: float = 1e-5
    max_bisect_steps: int = 50
    compute_dtype: str = "auto"  # auto: f64 up to 2000 points, f32 beyond

    def __post_init__(self):
        if self.out_dim != 2:
            raise ValidationError("only 2-D embeddings are supported")
        if self.perplexity <= 1:
            raise ValidationError("perplexity must exceed 1")
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError("theta must lie in [0, 1]")
        if self.iterations < 1 or self.max_bisect_steps < 1:
            raise ValidationError("iterations and bisection steps must be >= 1")
        if self.compute_dtype not in ("auto", "float32", "float64"):
            raise ValidationError("compute_dtype must be auto, float32 or float64")

    def resolve_dtype(self, n: int):
        if self.compute_dtype == "auto":
            return np.float64 if n <= 2000 else np.float32
        return np.dtype(self.compute_dtype).type


@dataclass(frozen=True)
class Embedding:
    points: np.ndarray  # (n, 2)
    labels: np.ndarray | None
    config: TsneConfig
    seed: int
    sigmas: np.ndarray = None
    kl_initial: float = np.nan
    kl_post_exaggeration: float = np.nan
    kl_final: float = np.nan

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _sq_distances(x: np.ndarray, dtype=np.float64) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=dtype)
    norms = np.einsum("ij,ij->i", x, x)
    d2 = x @ x.T
    d2 *= -2.0
    d2 += norms[:, None]
    d2 += norms[None, :]
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _calibrate_bandwidths(d2: np.ndarray, perplexity: float, tol: float, max_steps: int):
    """Vectorized per-point bisection of beta=1/(2 sigma^2) so the entropy
    of each conditional distribution hits log(perplexity)."""
    n = d2.shape[0]
    diag = np.arange(n)
    target = np.log(perplexity)
    beta = np.ones(n)
    beta_min = np.full(n, -np.inf)
    beta_max = np.full(n, np.inf)
    p = np.empty_like(d2)
    for _ in range(max_steps):
        np.multiply(d2, -beta[:, None], out=p, casting="same_kind")
        np.exp(p, out=p)
        p[diag, diag] = 0.0
        sum_p = np.maximum(p.sum(axis=1, dtype=np.float64), _TINY)
        weighted = np.einsum("ij,ij->i", d2, p, dtype=np.float64)
        entropy = np.log(sum_p) + beta * weighted / sum_p
        diff = entropy - target
        if np.all(np.abs(diff) <= tol):
            break
        too_high = diff > 0  # entropy too high -> tighten kernel (raise beta)
        beta_min = np.where(too_high, beta, beta_min)
        beta_max = np.where(~too_high, beta, beta_max)
        grow = too_high & np.isinf(beta_max)
        shrink = ~too_high & np.isinf(beta_min)
        mid = 0.5 * (beta_min + beta_max)
        beta = np.where(grow, beta * 2.0, np.where(shrink, beta / 2.0, mid))
    p /= np.maximum(p.sum(axis=1, keepdims=True, dtype=p.dtype), _TINY)
    sigmas = np.sqrt(1.0 / (2.0 * beta))
    return p, sigmas


def joint_probabilities(fm: np.ndarray, cfg: TsneConfig):
    """Symmetrized affinities p_ij = (p_j|i + p_i|j) / (2n), plus sigmas."""
    x = np.asarray(fm, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise ValidationError("t-SNE needs at least 4 points")
    if cfg.perplexity >= n:
        raise ValidationError(f"perplexity {cfg.perplexity} must be < n={n}")
    d2 = _sq_distances(x, dtype=cfg.resolve_dtype(n))
    if d2.max() <= 0.0:
        raise ValidationError("degenerate input: all points identical")
    cond, sigmas = _calibrate_bandwidths(d2, cfg.perplexity, cfg.entropy_tol,
                                         cfg.max_bisect_steps)
    p = (cond + cond.T) / (2.0 * n)
    return p.astype(np.float64, copy=False), sigmas


def _low_dim_kernel(y: np.ndarray):
    """num_ij = 1/(1+||y_i-y_j||^2) with zero diagonal, and Z = sum num."""
    num = 1.0 / (1.0 + _sq_distances(y))
    np.fill_diagonal(num, 0.0)
    return num, num.sum()


def _kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    num, z = _low_dim_kernel(y)
    q = np.maximum(num / z, _TINY)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _gradient_exact(p_eff: np.ndarray, y: np.ndarray) -> np.ndarray:
    num, z = _low_dim_kernel(y)
    w = (p_eff - num / z) * num
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


class _QuadNode:
    __slots__ = ("com", "count", "size", "children")

    def __init__(self, com, count, size, children):
        self.com = com
        self.count = count
        self.size = size
        self.children = children


_MAX_DEPTH = 48


def _build_quadtree(pts: np.ndarray, cx: float, cy: float, half: float,
                    depth: int = 0) -> _QuadNode | None:
    n = pts.shape[0]
    if n == 0:
        return None
    com = pts.mean(axis=0)
    if n == 1 or depth >= _MAX_DEPTH:
        return _QuadNode(com, n, 2.0 * half, None)
    east = pts[:, 0] > cx
    north = pts[:, 1] > cy
    q = half / 2.0
    children = [
        _build_quadtree(pts[east & north], cx + q, cy + q, q, depth + 1),
        _build_quadtree(pts[~east & north], cx - q, cy + q, q, depth + 1),
        _build_quadtree(pts[~east & ~north], cx - q, cy - q, q, depth + 1),
        _build_quadtree(pts[east & ~north], cx + q, cy - q, q, depth + 1),
    ]
    return _QuadNode(com, n, 2.0 * half, children)


def _bh_repulsion(y: np.ndarray, theta: float):
    """Barnes-Hut estimate of (sum_j num^2 (y_i - y_j), per-point Z_i).

    A cell summarizes its subtree when cell_size / distance < theta. The
    query point's own num(0)=1 contribution is subtracted from Z_i.
    """
    n = y.shape[0]
    cx, cy = y.mean(axis=0)
    half = max(float(np.abs(y - [cx, cy]).max()), _TINY) * 1.001
    root = _build_quadtree(y, cx, cy, half)
    rep = np.zeros_like(y)
    z_per_point = np.empty(n)
    for i in range(n):
        yi = y[i]
        force0 = force1 = 0.0
        zsum = 0.0
        stack = [root]
        while stack:
            node = stack.pop()
            dx = yi[0] - node.com[0]
            dy_ = yi[1] - node.com[1]
            d2 = dx * dx + dy_ * dy_
            if node.children is not None and node.size * node.size >= theta * theta * d2:
                for child in node.children:
                    if child is not None:
                        stack.append(child)
                continue
            q = 1.0 / (1.0 + d2)
            zsum += node.count * q
            q2 = q * q * node.count
            force0 += q2 * dx
            force1 += q2 * dy_
        rep[i, 0] = force0
        rep[i, 1] = force1
        z_per_point[i] = zsum - 1.0  # drop the self term num(0)=1
    return rep, z_per_point


def _gradient_bh(p_eff: np.ndarray, y: np.ndarray, theta: float) -> np.ndarray:
    num = 1.0 / (1.0 + _sq_distances(y))
    np.fill_diagonal(num, 0.0)
    w_attr = p_eff * num
    attr = w_attr.sum(axis=1)[:, None] * y - w_attr @ y
    rep, z_per_point = _bh_repulsion(y, theta)
    z = max(z_per_point.sum(), _TINY)
    return 4.0 * (attr - rep / z)


class _GradientWorkspace:
    """Preallocated buffers for the exact-gradient loop; big (n, n)
    intermediates stay in the configured compute dtype and are reused
    across iterations to keep the loop memory-bandwidth bound."""

    def __init__(self, p: np.ndarray, cfg: TsneConfig):
        n = p.shape[0]
        dtype = cfg.resolve_dtype(n)
        self.p_plain = np.ascontiguousarray(p, dtype=dtype)
        self.p_exagg = np.ascontiguousarray(p * cfg.early_exaggeration, dtype=dtype)
        self.a = np.empty((n, n), dtype=dtype)
        self.b = np.empty((n, n), dtype=dtype)
        self.dtype = dtype

    def gradient(self, y: np.ndarray, exaggerating: bool) -> np.ndarray:
        a, b = self.a, self.b
        y_c = np.ascontiguousarray(y, dtype=self.dtype)
        norms = np.einsum("ij,ij->i", y_c, y_c)
        np.matmul(y_c, y_c.T, out=a)
        a *= -2.0
        a += norms[:, None]
        a += norms[None, :]
        np.maximum(a, 0.0, out=a)           # squared distances
        a += 1.0
        np.reciprocal(a, out=a)             # num = 1/(1+d2)
        np.fill_diagonal(a, 0.0)
        z = float(a.sum(dtype=np.float64))
        p_eff = self.p_exagg if exaggerating else self.p_plain
        np.multiply(p_eff, a, out=b)        # P_eff * num
        np.multiply(a, a, out=a)            # num^2
        a *= -1.0 / z
        a += b                              # W = (P_eff - num/z) * num
        row = a.sum(axis=1, dtype=np.float64)
        wy = a @ y_c
        return 4.0 * (row[:, None] * y - wy.astype(np.float64))


def tsne(fm: np.ndarray, cfg: TsneConfig, labels: np.ndarray | None = None,
         init: np.ndarray | None = None) -> Embedding:
    """Embed an (n, d) feature matrix into 2-D.

    Deterministic per (data, cfg, seed). theta=0 runs the exact gradient;
    theta>0 uses the quadtree approximation for the repulsive term.
    `init` overrides the seeded Gaussian start (used by permutation
    equivariance checks, which must pin draws to point identity).
    """
    x = np.asarray(fm, dtype=np.float64)
    p, sigmas = joint_probabilities(x, cfg)
    n = x.shape[0]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape[0] != n:
            raise ValidationError("labels length does not match feature matrix")
    if init is None:
        gen = rng.seeded(cfg.seed, "tsne-init")
        y = gen.normal(0.0, 1e-4, size=(n, 2))
    else:
        y = np.array(init, dtype=np.float64)
        if y.shape != (n, 2):
            raise ValidationError("init must have shape (n, 2)")
    workspace = _GradientWorkspace(p, cfg) if cfg.theta == 0.0 else None
    update = np.zeros_like(y)
    gains = np.ones_like(y)  # per-coordinate adaptive gains, per the original optimizer
    kl_initial = _kl_divergence(p, y)
    kl_post_ee = np.nan
    for it in range(cfg.iterations):
        exaggerating = it < cfg.exaggeration_iters
        if workspace is not None:
            grad = workspace.gradient(y, exaggerating)
        else:
            p_eff = p * cfg.early_exaggeration if exaggerating else p
            grad = _gradient_bh(p_eff, y, cfg.theta)
        momentum = cfg.momentum_early if it < cfg.momentum_switch else cfg.momentum_late
        agree = (grad > 0) == (update > 0)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        y += update
        y -= y.mean(axis=0)
        if it == cfg.exaggeration_iters - 1:
            kl_post_ee = _kl_divergence(p, y)
    return Embedding(points=y, labels=labels, config=cfg, seed=cfg.seed, sigmas=sigmas,
                     kl_initial=kl_initial, kl_post_exaggeration=kl_post_ee,
                     kl_final=_kl_divergence(p, y))


def achieved_perplexity(fm: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Recompute each point's effective perplexity exp(H_i) from sigmas;
    independent check of the bisection."""
    d2 = _sq_distances(np.asarray(fm, dtype=np.float64))
    beta = 1.0 / (2.0 * sigmas**2)
    p = np.exp(-d2 * beta[:, None])
    np.fill_diagonal(p, 0.0)
    sum_p = np.maximum(p.sum(axis=1), _TINY)
    entropy = np.log(sum_p) + beta * np.einsum("ij,ij->i", d2, p) / sum_p
    return np.exp(entropy)


@dataclass(frozen=True)
class BhConsistencyReport:
    theta: float
    relative_error: float
    exact_grad_norm: float
    n: int


def tsne_bh_consistency(fm: np.ndarray, cfg: TsneConfig,
                        y_scale: float = 1.0) -> BhConsistencyReport:
    """Compare the quadtree gradient against the exact gradient on the
    first gradient evaluation of a run.

    The reference state is a seeded Gaussian at y_scale (default 1.0, a
    typical mid-run embedding spread; the 1e-4 optimizer init makes every
    summand effectively linear and so would not exercise the tree).
    """
    x = np.asarray(fm, dtype=np.float64)
    n = x.shape[0]
    if n > 2000:
        raise ValidationError("consistency check is limited to n <= 2000")
    p, _ = joint_probabilities(x, cfg)
    gen = rng.seeded(cfg.seed, "bh-check")
    y = gen.normal(0.0, y_scale, size=(n, 2))
    p_eff = p * cfg.early_exaggeration
    g_exact = _gradient_exact(p_eff, y)
    g_test = g_exact if cfg.theta == 0.0 else _gradient_bh(p_eff, y, cfg.theta)
    denom = max(float(np.linalg.norm(g_exact)), _TINY)
    rel = float(np.linalg.norm(g_test - g_exact)) / denom
    return BhConsistencyReport(theta=cfg.theta, relative_error=rel,
                               exact_grad_norm=denom, n=n)


def export_embedding(emb: Embedding, path) -> None:
    """CSV idx,x,y,label plus a JSON sidecar (<path>.json) of the config."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "x", "y", "label"])
        for i in range(emb.n):
            label = "" if emb.labels is None else int(emb.labels[i])
            writer.writerow([i, repr(float(emb.points[i, 0])),
                             repr(float(emb.points[i, 1])), label])
    sidecar = {"seed": emb.seed, "config": asdict(emb.config)}
    with open(f"{path}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_embedding(path) -> Embedding:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    points = np.array([[float(r[1]), float(r[2])] for r in rows])
    has_labels = all(r[3] != "" for r in rows)
    labels = np.array([int(r[3]) for r in rows]) if has_labels else None
    with open(f"{path}.json") as fh:
        sidecar = json.load(fh)
    cfg = TsneConfig(**sidecar["config"])
    return Embedding(points=points, labels=labels, config=cfg, seed=sidecar["seed"])
