"""Discrete variance-preserving noise schedules and the degradation operator.

The schedule owns the per-step noise scales beta_t and the derived signal /
noise coefficient grids g(t) = sqrt(alpha_bar_t), f(t) = sqrt(1 - alpha_bar_t),
extended to t = 0 with the boundary convention g(0) = 1, f(0) = 0 so that a
full reverse pass terminates exactly at clean data.  The per-step compensation
weight w(t) = g(t) - g(t-1) lives here too.  All arrays are precomputed in
double precision: w(t) is a difference of near-equal square roots and needs
the headroom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable schedule over time steps 1..t_max.

    ``betas``, ``alphas`` and ``alpha_bars`` have length ``t_max`` and are
    indexed by t-1.  ``g_grid`` and ``f_grid`` have length ``t_max + 1`` and
    are indexed directly by t, including the t = 0 boundary.
    """

    t_max: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    g_grid: np.ndarray = field(repr=False)
    f_grid: np.ndarray = field(repr=False)

    def g(self, t: int) -> float:
        self._check_t(t)
        return float(self.g_grid[t])

    def f(self, t: int) -> float:
        self._check_t(t)
        return float(self.f_grid[t])

    def w(self, t: int) -> float:
        """Compensation weight g(t) - g(t-1); zero at the t = 0 boundary."""
        self._check_t(t)
        if t == 0:
            return 0.0
        return float(self.g_grid[t] - self.g_grid[t - 1])

    def _check_t(self, t: int) -> None:
        if not 0 <= t <= self.t_max:
            raise ValueError(f"time step {t} outside [0, {self.t_max}]")


@dataclass(frozen=True)
class NoisePattern:
    """A fixed standard-normal noise vector together with the seed it came from."""

    z: np.ndarray
    seed: int

    @classmethod
    def draw(cls, dim: int, seed: int) -> "NoisePattern":
        rng = np.random.default_rng(seed)
        return cls(z=rng.standard_normal(dim), seed=seed)


def build_linear_schedule(
    t_max: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Build a schedule with betas linearly spaced from beta_start to beta_end."""
    if t_max < 1:
        raise ValueError("t_max must be a positive integer")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, t_max, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    g_grid = np.empty(t_max + 1, dtype=np.float64)
    f_grid = np.empty(t_max + 1, dtype=np.float64)
    g_grid[0], f_grid[0] = 1.0, 0.0
    g_grid[1:] = np.sqrt(alpha_bars)
    f_grid[1:] = np.sqrt(1.0 - alpha_bars)
    return NoiseSchedule(
        t_max=t_max,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        g_grid=g_grid,
        f_grid=f_grid,
    )


def coeffs(s: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """Return (g(t), f(t), w(t)) for a time step in [0, t_max]."""
    return s.g(t), s.f(t), s.w(t)


def degrade(x0: np.ndarray, z: np.ndarray, s: NoiseSchedule, t: int) -> np.ndarray:
    """Deterministic interpolation g(t)*x0 + f(t)*z toward the noise pattern."""
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x0.shape != z.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs z {z.shape}")
    return s.g(t) * x0 + s.f(t) * z


def forward_step(
    x_prev: np.ndarray, s: NoiseSchedule, t: int, rng: np.random.Generator
) -> np.ndarray:
    """One Gaussian forward transition: sqrt(1-beta_t)*x + sqrt(beta_t)*xi."""
    if not 1 <= t <= s.t_max:
        raise ValueError(f"time step {t} outside [1, {s.t_max}]")
    x_prev = np.asarray(x_prev, dtype=np.float64)
    beta = s.betas[t - 1]
    xi = rng.standard_normal(x_prev.shape)
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * xi
