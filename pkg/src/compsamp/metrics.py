"""Distribution-distance and diversity metrics for desk-scale evaluation.

Sliced Wasserstein distance (average 1-D 2-Wasserstein over random
projections) is the convergence score; the closed-form Gaussian W2 serves as
an analytic cross-check on Gaussian runs; kNN-manifold precision/recall
quantify fidelity and coverage.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

DEFAULT_N_PROJECTIONS = 256


@dataclass(frozen=True)
class MetricReport:
    swd: float
    precision: float
    recall: float
    n_real: int
    n_gen: int
    seed: int
    w2_analytic: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def _quantiles(sorted_vals: np.ndarray, qs: np.ndarray) -> np.ndarray:
    # empirical quantile function with linear interpolation between the
    # midpoint plotting positions (i + 0.5) / n
    n = sorted_vals.shape[0]
    positions = (np.arange(n) + 0.5) / n
    return np.interp(qs, positions, sorted_vals)


def wasserstein_1d(a: np.ndarray, b: np.ndarray) -> float:
    """2-Wasserstein distance between two 1-D empirical distributions."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.shape[0] == b.shape[0]:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    k = max(a.shape[0], b.shape[0])
    qs = (np.arange(k) + 0.5) / k
    return float(np.sqrt(np.mean((_quantiles(a, qs) - _quantiles(b, qs)) ** 2)))


def sliced_wasserstein(a: np.ndarray, b: np.ndarray,
                       n_proj: int = DEFAULT_N_PROJECTIONS,
                       seed: int = 0) -> float:
    """Average 1-D 2-Wasserstein distance over random unit projections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("inputs must be (n, d) and (m, d) with matching d")
    if a.shape[0] < 1 or b.shape[0] < 1 or n_proj < 1:
        raise ValueError("need non-empty inputs and n_proj >= 1")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_proj, a.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    if a.shape[0] == b.shape[0]:
        per_proj = np.sqrt(np.mean((pa - pb) ** 2, axis=0))
        return float(np.mean(per_proj))
    total = 0.0
    for j in range(n_proj):
        total += wasserstein_1d(pa[:, j], pb[:, j])
    return total / n_proj


def gaussian_w2(mu1: np.ndarray, diag1: np.ndarray,
                mu2: np.ndarray, diag2: np.ndarray) -> float:
    """Closed-form W2 between axis-aligned Gaussians."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    diag1 = np.atleast_1d(np.asarray(diag1, dtype=np.float64))
    diag2 = np.atleast_1d(np.asarray(diag2, dtype=np.float64))
    if np.any(diag1 < 0) or np.any(diag2 < 0):
        raise ValueError("variances must be >= 0")
    return float(np.sqrt(np.sum((mu1 - mu2) ** 2)
                         + np.sum((np.sqrt(diag1) - np.sqrt(diag2)) ** 2)))


def _knn_radii(points: np.ndarray, k: int) -> np.ndarray:
    # distance to the k-th nearest neighbour, excluding the point itself
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return np.sqrt(kth)


def _fraction_covered(queries: np.ndarray, support: np.ndarray,
                      radii: np.ndarray) -> float:
    d2 = np.sum((queries[:, None, :] - support[None, :, :]) ** 2, axis=-1)
    # boundary counts as inside: closed balls
    inside = d2 <= (radii[None, :] ** 2) * (1.0 + 1e-12)
    return float(np.mean(inside.any(axis=1)))


def knn_precision_recall(real: np.ndarray, gen: np.ndarray, k: int = 3
                         ) -> tuple[float, float]:
    """kNN-manifold precision and recall.

    Precision is the fraction of generated points inside the union of closed
    k-NN balls of the real points (radii from the real set's own k-NN
    structure, self excluded); recall swaps the two roles.
    """
    real = np.asarray(real, dtype=np.float64)
    gen = np.asarray(gen, dtype=np.float64)
    if real.ndim != 2 or gen.ndim != 2 or real.shape[1] != gen.shape[1]:
        raise ValueError("inputs must be (n, d) and (m, d) with matching d")
    if k < 1 or k >= real.shape[0] or k >= gen.shape[0]:
        raise ValueError("need 1 <= k < n and k < m")
    precision = _fraction_covered(gen, real, _knn_radii(real, k))
    recall = _fraction_covered(real, gen, _knn_radii(gen, k))
    return precision, recall


def metric_report(real: np.ndarray, gen: np.ndarray, k: int = 3,
                  n_proj: int = DEFAULT_N_PROJECTIONS, seed: int = 0,
                  w2_analytic: float | None = None) -> MetricReport:
    precision, recall = knn_precision_recall(real, gen, k=k)
    return MetricReport(
        swd=sliced_wasserstein(real, gen, n_proj=n_proj, seed=seed),
        precision=precision, recall=recall,
        n_real=int(real.shape[0]), n_gen=int(gen.shape[0]),
        seed=seed, w2_analytic=w2_analytic,
    )
