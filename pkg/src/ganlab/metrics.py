"""Distribution metrics over point sets and training-dynamics statistics.

All functions accept either a :class:`SampleSet` or a plain ``(n, d)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import assignment


@dataclass
class SampleSet:
    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be an (n, d) matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n


def as_points(x) -> np.ndarray:
    if isinstance(x, SampleSet):
        return x.points
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError(f"expected an (n, d) matrix, got shape {pts.shape}")
    return pts


def _same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def pairwise_distances(a: np.ndarray, b: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Euclidean distance matrix.

    Low-dimensional inputs use explicit differences (exact zeros, no
    cancellation); wide feature vectors use the expanded square via GEMM.
    """
    if a.shape[1] <= 16:
        out = np.empty((a.shape[0], b.shape[0]))
        for s in range(0, a.shape[0], chunk):
            diff = a[s:s + chunk, None, :] - b[None, :, :]
            out[s:s + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        return out
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(sq, 0.0))


# --- optimal transport -------------------------------------------------------

def w1_exact(a, b, method: str = "scipy") -> float:
    """Wasserstein-1 between two equal-size point clouds: min-cost matching, mean cost."""
    a, b = as_points(a), as_points(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"w1_exact needs equal sizes, got {a.shape[0]} and {b.shape[0]}")
    _same_dim(a, b)
    if a.shape[0] == 0:
        return 0.0
    cost = pairwise_distances(a, b)
    col = assignment.solve(cost, method)
    return float(cost[np.arange(len(col)), col].mean())


def w1_1d(u: np.ndarray, v: np.ndarray) -> float:
    """Exact W1 between two 1D empirical distributions of any sizes (CDF area)."""
    u = np.sort(np.asarray(u, dtype=np.float64))
    v = np.sort(np.asarray(v, dtype=np.float64))
    if len(u) == len(v):
        return float(np.abs(u - v).mean())
    allv = np.concatenate([u, v])
    allv.sort()
    widths = np.diff(allv)
    cu = np.searchsorted(u, allv[:-1], side="right") / len(u)
    cv = np.searchsorted(v, allv[:-1], side="right") / len(v)
    return float((np.abs(cu - cv) * widths).sum())


def w1_sliced(a, b, projections: int = 512, seed: int = 0) -> float:
    """Mean over random unit directions of the 1D W1 of the projected clouds."""
    a, b = as_points(a), as_points(b)
    _same_dim(a, b)
    if projections < 1:
        raise ValueError("projections must be >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((projections, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa, pb = a @ dirs.T, b @ dirs.T
    return float(np.mean([w1_1d(pa[:, k], pb[:, k]) for k in range(projections)]))


# --- k-NN precision / recall -------------------------------------------------

def knn_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Distance from each row to its k-th nearest neighbour, the row itself excluded."""
    d = pairwise_distances(x, x)
    np.fill_diagonal(d, np.inf)
    return np.partition(d, k - 1, axis=1)[:, k - 1]


def coverage_fraction(query: np.ndarray, manifold: np.ndarray, radii: np.ndarray, chunk: int = 2048) -> float:
    """Fraction of ``query`` rows inside at least one closed ball (manifold[j], radii[j])."""
    hits = 0
    for s in range(0, query.shape[0], chunk):
        d = pairwise_distances(query[s:s + chunk], manifold)
        hits += int(np.any(d <= radii[None, :], axis=1).sum())
    return hits / query.shape[0]


def knn_precision_recall(real, fake, k: int = 5) -> tuple[float, float]:
    """Improved precision and recall with k-NN manifolds (closed balls, self excluded)."""
    real, fake = as_points(real), as_points(fake)
    _same_dim(real, fake)
    if real.shape[0] <= k or fake.shape[0] <= k:
        raise ValueError(f"both sets need more than k={k} points")
    precision = coverage_fraction(fake, real, knn_radii(real, k))
    recall = coverage_fraction(real, fake, knn_radii(fake, k))
    return precision, recall


# --- Frechet distance ---------------------------------------------------------

@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise ValueError(f"cov shape {self.cov.shape} does not match mean dim {d}")
        scale = max(1.0, float(np.abs(self.cov).max(initial=0.0)))
        if np.abs(self.cov - self.cov.T).max(initial=0.0) > 1e-9 * scale:
            raise ValueError("covariance is not symmetric")


def fit_gaussian(features) -> GaussianStats:
    x = as_points(features)
    if x.shape[0] < 2:
        raise ValueError("fit_gaussian needs at least 2 points")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (x.shape[0] - 1)
    return GaussianStats(mu, 0.5 * (cov + cov.T))


def _sym_sqrt(m: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(0.5 * (m + m.T))
    w = np.where(w < 1e-10, 0.0, w)
    return (q * np.sqrt(w)) @ q.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), all roots by symmetric eigh."""
    if a.mean.shape != b.mean.shape:
        raise ValueError("Gaussian dimension mismatch")
    s1h = _sym_sqrt(a.cov)
    w = np.linalg.eigvalsh(0.5 * ((s1h @ b.cov @ s1h) + (s1h @ b.cov @ s1h).T))
    tr_cross = np.sqrt(np.where(w < 1e-10, 0.0, w)).sum()
    diff = a.mean - b.mean
    val = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * tr_cross)
    return max(val, 0.0)


def fid(x, y) -> float:
    return frechet_distance(fit_gaussian(x), fit_gaussian(y))


# --- KID ----------------------------------------------------------------------

def kid(x, y) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel (u.v/d + 1)^3, full (no blocks)."""
    x, y = as_points(x), as_points(y)
    _same_dim(x, y)
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("kid needs at least 2 points per set")
    d = x.shape[1]
    kxx = (x @ x.T / d + 1.0) ** 3
    kyy = (y @ y.T / d + 1.0) ** 3
    kxy = (x @ y.T / d + 1.0) ** 3
    sxx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    syy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(sxx + syy - 2.0 * kxy.sum() / (n * m))


# --- discriminator gradient field -----------------------------------------------

def grad_field_similarity(disc, samples, centers) -> float:
    """Mean cosine between grad_x D(x) and the direction to the nearest center.

    Samples sitting on a center (within 1e-9) or with a vanishing gradient
    (norm < 1e-12) are dropped from the mean.
    """
    from .nn import input_gradient_of_logit

    x = as_points(samples)
    c = as_points(centers)
    if x.shape[0] == 0 or c.shape[0] == 0:
        raise ValueError("samples and centers must be non-empty")
    _same_dim(x, c)
    grad = input_gradient_of_logit(disc, x)
    nearest = c[np.argmin(pairwise_distances(x, c), axis=1)]
    golden = nearest - x
    gn = np.linalg.norm(grad, axis=1)
    hn = np.linalg.norm(golden, axis=1)
    keep = (gn >= 1e-12) & (hn > 1e-9)
    if not keep.any():
        raise ValueError("every sample was excluded from the gradient similarity")
    cos = (grad[keep] * golden[keep]).sum(1) / (gn[keep] * hn[keep])
    return float(np.clip(cos, -1.0, 1.0).mean())


# --- training dynamics ------------------------------------------------------------

@dataclass
class MetricSeries:
    steps: list[int]
    values: list[float]

    def __post_init__(self):
        if len(self.steps) != len(self.values):
            raise ValueError("steps and values must have equal length")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("steps must be strictly increasing")

    @classmethod
    def from_pairs(cls, pairs) -> "MetricSeries":
        pairs = list(pairs)
        return cls([int(s) for s, _ in pairs], [float(v) for _, v in pairs])

    def __len__(self):
        return len(self.steps)


def convergence_rate(series: MetricSeries, slack: float = 0.05) -> int:
    """First step whose value is within (1 + slack) of the series minimum."""
    if len(series) == 0:
        raise ValueError("empty series")
    values = np.asarray(series.values, dtype=np.float64)
    threshold = (1.0 + slack) * values.min()
    return series.steps[int(np.argmax(values <= threshold))]


def nearest_center(points, centers) -> np.ndarray:
    return np.argmin(pairwise_distances(as_points(points), as_points(centers)), axis=1)


def mode_coverage(samples, centers, min_count: int = 10, n_ref: int = 10000) -> int:
    """Number of centers receiving at least ``min_count * n / n_ref`` nearest samples."""
    x, c = as_points(samples), as_points(centers)
    if c.shape[0] == 0:
        raise ValueError("no centers given")
    counts = np.bincount(nearest_center(x, c), minlength=c.shape[0])
    threshold = min_count * x.shape[0] / n_ref
    return int((counts >= threshold).sum())


def euclidean_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a - b, axis=1)


def _check_snapshots(snapshot_outputs) -> list[np.ndarray]:
    outs = [as_points(s) for s in snapshot_outputs]
    if len(outs) < 2:
        raise ValueError("need at least 2 snapshots")
    if any(o.shape != outs[0].shape for o in outs):
        raise ValueError("all snapshots must have the same shape")
    return outs


def consecutive_distances(snapshot_outputs, dist: Callable = euclidean_rows) -> np.ndarray:
    """(n_snapshots - 1, n_rows) matrix of dist(out_i[j], out_{i+1}[j])."""
    outs = _check_snapshots(snapshot_outputs)
    return np.stack([np.asarray(dist(a, b), dtype=np.float64) for a, b in zip(outs[:-1], outs[1:])])


def trajectory_lengths(snapshot_outputs, dist: Callable = euclidean_rows) -> np.ndarray:
    return consecutive_distances(snapshot_outputs, dist).sum(axis=0)


def class_change_probability(snapshot_outputs, assigner: Callable) -> np.ndarray:
    """Per consecutive snapshot pair, fraction of rows whose assigned class differs."""
    outs = _check_snapshots(snapshot_outputs)
    labels = [np.asarray(assigner(o)) for o in outs]
    return np.array([float(np.mean(a != b)) for a, b in zip(labels[:-1], labels[1:])])


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two 1D sequences of equal length")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 points")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValueError("pearson undefined for zero variance")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))
