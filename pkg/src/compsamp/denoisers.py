"""Noise predictors, clean-data reconstruction, and the compensation module.

A :class:`DenoiserHandle` presents one epsilon-prediction interface over two
backends: a trained MLP conditioned on a sinusoidal time embedding, and an
analytic oracle that is exact for isotropic Gaussian data (posterior mean of
x0 given x_t under x0 ~ N(mu, sigma0_sq I)).  The oracle gives every sampler
test a ground-truth denoiser to lean on.

The compensation module is a second small MLP that maps (x0_hat, t) to an
estimate of w(t) * (x0_hat - x0), the per-step correction that turns the
reverse step into an exact inverse.  Its output layer is zero-initialized so
a fresh module is a strict no-op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import MlpParams, mlp_forward, mlp_init, time_embedding
from .schedule import NoiseSchedule

DEFAULT_EMBED_DIM = 16
DEFAULT_DENOISER_HIDDEN = (128, 128, 128)
DEFAULT_COMP_HIDDEN = (64, 64)


@dataclass(frozen=True)
class DenoiserHandle:
    """Either a trained MLP ("trained-mlp") or the Gaussian oracle ("gaussian-oracle")."""

    kind: str
    params: MlpParams | None = None
    mu: np.ndarray | None = None
    sigma0_sq: float | None = None
    embed_dim: int = DEFAULT_EMBED_DIM

    def __post_init__(self):
        if self.kind == "trained-mlp":
            if self.params is None:
                raise ValueError("trained-mlp handle needs params")
        elif self.kind == "gaussian-oracle":
            if self.mu is None or self.sigma0_sq is None:
                raise ValueError("gaussian-oracle handle needs mu and sigma0_sq")
            if self.sigma0_sq < 0:
                raise ValueError("sigma0_sq must be >= 0")
        else:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")

    @property
    def data_dim(self) -> int:
        if self.kind == "trained-mlp":
            return self.params.layer_dims[-1]
        return int(np.asarray(self.mu).shape[0])


@dataclass(frozen=True)
class CompensationHandle:
    params: MlpParams
    enabled_at_inference: bool = True
    embed_dim: int = DEFAULT_EMBED_DIM


def denoiser_init(dim: int, hidden=DEFAULT_DENOISER_HIDDEN,
                  embed_dim: int = DEFAULT_EMBED_DIM, seed: int = 0) -> MlpParams:
    return mlp_init([dim + embed_dim, *hidden, dim], seed=seed)


def comp_init(dim: int, hidden=DEFAULT_COMP_HIDDEN,
              embed_dim: int = DEFAULT_EMBED_DIM, seed: int = 0) -> MlpParams:
    return mlp_init([dim + embed_dim, *hidden, dim], seed=seed, zero_last=True)


def _with_embedding(x: np.ndarray, t, embed_dim: int, t_max: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    emb = time_embedding(t, embed_dim, t_max)
    if x.ndim == 1:
        if emb.ndim != 1:
            raise ValueError("array t with a single input vector")
        return np.concatenate([x, emb])
    if emb.ndim == 1:
        emb = np.broadcast_to(emb, (x.shape[0], embed_dim))
    return np.concatenate([x, emb], axis=1)


def predict_eps(h: DenoiserHandle, x_t: np.ndarray, t, s: NoiseSchedule) -> np.ndarray:
    """Estimate the injected noise for x_t at time t.

    ``x_t`` may be a single vector or an (n, d) batch; ``t`` a scalar in
    [1, T] or a per-row integer array.
    """
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > s.t_max):
        raise ValueError(f"time step outside [1, {s.t_max}]")
    if h.kind == "trained-mlp":
        return mlp_forward(h.params, _with_embedding(x_t, t, h.embed_dim, s.t_max))
    # conjugate-Gaussian oracle
    x = np.asarray(x_t, dtype=np.float64)
    g = s.g_grid[t_arr]
    f = s.f_grid[t_arr]
    if x.ndim == 2 and np.ndim(g) == 1:
        g = g[:, None]
        f = f[:, None]
    shrink = g * h.sigma0_sq / (g**2 * h.sigma0_sq + f**2)
    x0_star = h.mu + shrink * (x - g * h.mu)
    return (x - g * x0_star) / f


def predict_x0(h: DenoiserHandle, x_t: np.ndarray, t, s: NoiseSchedule) -> np.ndarray:
    """Reconstruct clean data as (x_t - f(t) * eps_hat) / g(t)."""
    eps = predict_eps(h, x_t, t, s)
    return x0_from_eps(np.asarray(x_t, dtype=np.float64), eps, t, s)


def x0_from_eps(x_t: np.ndarray, eps: np.ndarray, t, s: NoiseSchedule) -> np.ndarray:
    t_arr = np.asarray(t)
    g = s.g_grid[t_arr]
    f = s.f_grid[t_arr]
    if np.any(np.asarray(g) < 1e-12):
        raise FloatingPointError("signal coefficient g(t) below 1e-12")
    if x_t.ndim == 2 and np.ndim(g) == 1:
        g = g[:, None]
        f = f[:, None]
    return (x_t - f * eps) / g


def compensation_predict(c: CompensationHandle, x0_hat: np.ndarray, t,
                         t_max: int) -> np.ndarray:
    """Predicted compensation term for a reconstruction at time t."""
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > t_max):
        raise ValueError(f"time step outside [1, {t_max}]")
    return mlp_forward(c.params, _with_embedding(x0_hat, t, c.embed_dim, t_max))
