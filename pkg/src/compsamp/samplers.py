"""Reverse-process step rules, generation drivers, and deviation tracing.

Step rules: DDPM ancestral, DDIM (eta-parameterized noise scale), the
Cold-Diffusion style add/subtract baseline, and compensation sampling in two
forms — an oracle step that uses the true (x0, z) and is an exact inverse of
the degradation regardless of the reconstruction, and the learned step which
adds the compensation module's output on top of a DDIM step.

At generation time the unknown noise pattern inside the degradation operator
is replaced by the predicted noise, which makes the cold rule collapse
algebraically onto deterministic DDIM and the learned rule onto DDIM plus the
module output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoisers import (CompensationHandle, DenoiserHandle,
                        compensation_predict, predict_eps, x0_from_eps)
from .schedule import NoiseSchedule, degrade

RULES = ("ddpm", "ddim", "cold", "comp-oracle", "comp-learned")


@dataclass(frozen=True)
class SamplerParams:
    rule: str
    time_grid: tuple[int, ...]
    eta: float = 0.0
    use_comp_at_inference: bool = True

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        grid = tuple(int(t) for t in self.time_grid)
        if len(grid) == 0:
            raise ValueError("time_grid must be non-empty")
        if any(b >= a for a, b in zip(grid, grid[1:])) or grid[-1] < 1:
            raise ValueError("time_grid must be strictly decreasing within [1, T]")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        object.__setattr__(self, "time_grid", grid)


@dataclass
class Trajectory:
    times: list[int] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)
    deviations: list[float] = field(default_factory=list)


def make_time_grid(t_max: int, nfe: int) -> tuple[int, ...]:
    """Strictly decreasing grid of ``nfe`` steps from T down to 1."""
    if not 1 <= nfe <= t_max:
        raise ValueError("need 1 <= nfe <= t_max")
    grid = np.unique(np.linspace(t_max, 1, nfe).round().astype(int))[::-1]
    return tuple(int(t) for t in grid)


def sigma_for_pair(s: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """DDIM eta-parameterized per-step noise scale; 0 when eta = 0 or t_prev = 0."""
    if eta == 0.0 or t_prev == 0:
        return 0.0
    ab_t = s.alpha_bars[t - 1]
    ab_p = s.alpha_bars[t_prev - 1]
    return float(eta * np.sqrt((1.0 - ab_p) / (1.0 - ab_t))
                 * np.sqrt(1.0 - ab_t / ab_p))


def _check_pair(s: NoiseSchedule, t: int, t_prev: int) -> None:
    if not (0 <= t_prev < t <= s.t_max):
        raise ValueError(f"need 0 <= t_prev < t <= {s.t_max}, got ({t}, {t_prev})")


def ddpm_step(x_t: np.ndarray, t: int, h: DenoiserHandle, s: NoiseSchedule,
              rng: np.random.Generator, eps_hat: np.ndarray | None = None
              ) -> np.ndarray:
    """Ancestral step: posterior mean plus sqrt(beta_t) noise (none at t = 1)."""
    if not 1 <= t <= s.t_max:
        raise ValueError(f"time step {t} outside [1, {s.t_max}]")
    x_t = np.asarray(x_t, dtype=np.float64)
    if eps_hat is None:
        eps_hat = predict_eps(h, x_t, t, s)
    alpha = s.alphas[t - 1]
    beta = s.betas[t - 1]
    mean = (x_t - (1.0 - alpha) / s.f(t) * eps_hat) / np.sqrt(alpha)
    if t == 1:
        return mean
    return mean + np.sqrt(beta) * rng.standard_normal(x_t.shape)


def ddim_step(x_t: np.ndarray, t: int, t_prev: int, h: DenoiserHandle,
              s: NoiseSchedule, sigma: float = 0.0,
              rng: np.random.Generator | None = None,
              eps_hat: np.ndarray | None = None) -> np.ndarray:
    """x_{t_prev} = g(p) x0_hat + sqrt(f(p)^2 - sigma^2) eps_hat + sigma xi."""
    _check_pair(s, t, t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    if eps_hat is None:
        eps_hat = predict_eps(h, x_t, t, s)
    f_p = s.f(t_prev)
    if sigma**2 > f_p**2 + 1e-15:
        raise ValueError(f"sigma^2={sigma**2} exceeds f(t_prev)^2={f_p**2}")
    x0_hat = x0_from_eps(x_t, eps_hat, t, s)
    out = s.g(t_prev) * x0_hat + np.sqrt(max(f_p**2 - sigma**2, 0.0)) * eps_hat
    if sigma > 0.0:
        if rng is None:
            raise ValueError("stochastic step needs an rng")
        out = out + sigma * rng.standard_normal(x_t.shape)
    return out


def cold_step(x_t: np.ndarray, t: int, t_prev: int, h: DenoiserHandle,
              s: NoiseSchedule) -> np.ndarray:
    """x_t - D_hat(x0_hat, t) + D_hat(x0_hat, t_prev) with eps_hat standing in for z."""
    _check_pair(s, t, t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = predict_eps(h, x_t, t, s)
    x0_hat = x0_from_eps(x_t, eps_hat, t, s)
    d_t = s.g(t) * x0_hat + s.f(t) * eps_hat
    d_p = s.g(t_prev) * x0_hat + s.f(t_prev) * eps_hat
    return x_t - d_t + d_p


def cold_step_teacher(x_t: np.ndarray, t: int, t_prev: int, x0_hat: np.ndarray,
                      z: np.ndarray, s: NoiseSchedule) -> np.ndarray:
    """Cold rule with the true noise pattern in the degradation operator."""
    _check_pair(s, t, t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    d_t = s.g(t) * x0_hat + s.f(t) * z
    d_p = s.g(t_prev) * x0_hat + s.f(t_prev) * z
    return x_t - d_t + d_p


def comp_step_oracle(x_t: np.ndarray, t: int, t_prev: int, x0_hat: np.ndarray,
                     x0: np.ndarray, z: np.ndarray, s: NoiseSchedule
                     ) -> np.ndarray:
    """Exact-inverse step: teacher-forced cold rule plus the true compensation term.

    Equals degrade(x0, z, t_prev) identically, for any reconstruction x0_hat.
    """
    _check_pair(s, t, t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not (x_t.shape == x0_hat.shape == x0.shape == z.shape):
        raise ValueError("x_t, x0_hat, x0, z must share a shape")
    base = cold_step_teacher(x_t, t, t_prev, x0_hat, z, s)
    return base + (s.g(t) - s.g(t_prev)) * (x0_hat - x0)


def comp_step_learned(x_t: np.ndarray, t: int, t_prev: int, h: DenoiserHandle,
                      c: CompensationHandle, s: NoiseSchedule,
                      sigma: float = 0.0,
                      rng: np.random.Generator | None = None,
                      use_comp: bool = True) -> np.ndarray:
    """DDIM step plus the learned compensation, rescaled for strided grids.

    The module is trained at unit stride against targets weighted by
    w(t) = g(t) - g(t-1); on a strided grid its output is scaled by
    (g(t) - g(t_prev)) / w(t), which is exactly 1 on the full grid.
    """
    _check_pair(s, t, t_prev)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = predict_eps(h, x_t, t, s)
    base = ddim_step(x_t, t, t_prev, h, s, sigma=sigma, rng=rng, eps_hat=eps_hat)
    if not use_comp:
        return base
    x0_hat = x0_from_eps(x_t, eps_hat, t, s)
    c_hat = compensation_predict(c, x0_hat, t, s.t_max)
    scale = (s.g(t) - s.g(t_prev)) / s.w(t)
    return base + scale * c_hat


def generate(h: DenoiserHandle, c: CompensationHandle | None,
             sp: SamplerParams, s: NoiseSchedule, n: int, d: int, seed: int,
             keep_trajectories: bool = False
             ) -> tuple[np.ndarray, list[Trajectory] | None]:
    """Run ``n`` chains of the selected rule from x_T ~ N(0, I) down the grid."""
    if n < 1:
        raise ValueError("need n >= 1")
    if sp.rule == "comp-oracle":
        raise ValueError("comp-oracle is a teacher-forced analysis rule; "
                         "use trace_deviation")
    if sp.rule == "comp-learned" and sp.use_comp_at_inference and c is None:
        raise ValueError("comp-learned rule needs a compensation module")
    if sp.time_grid[0] != s.t_max:
        raise ValueError("time_grid must start at t_max")
    if sp.rule == "ddpm" and sp.time_grid != tuple(range(s.t_max, 0, -1)):
        raise ValueError("ddpm rule requires the full unit-stride grid")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = rng.standard_normal((n, d))
    traj = [Trajectory(times=[sp.time_grid[0]], iterates=[row.copy()])
            for row in x] if keep_trajectories else None
    pairs = list(zip(sp.time_grid, (*sp.time_grid[1:], 0)))
    for t, t_prev in pairs:
        if sp.rule == "ddpm":
            x = ddpm_step(x, t, h, s, rng)
        else:
            sigma = sigma_for_pair(s, t, t_prev, sp.eta)
            if sp.rule == "ddim":
                x = ddim_step(x, t, t_prev, h, s, sigma=sigma, rng=rng)
            elif sp.rule == "cold":
                x = cold_step(x, t, t_prev, h, s)
            else:
                x = comp_step_learned(x, t, t_prev, h, c, s, sigma=sigma,
                                      rng=rng,
                                      use_comp=sp.use_comp_at_inference)
        if keep_trajectories:
            for i, row in enumerate(x):
                traj[i].times.append(t_prev)
                traj[i].iterates.append(row.copy())
    return x, traj


def trace_deviation(x0: np.ndarray, z: np.ndarray, s: NoiseSchedule, rule: str,
                    reconstruction_fn, grid: tuple[int, ...]) -> Trajectory:
    """Teacher-forced reverse pass recording the drift off the degradation path.

    ``reconstruction_fn(x_t, t)`` supplies the (possibly adversarial) clean
    reconstruction used by the step rule; the chain starts on-path at
    x_T = degrade(x0, z, T) and the per-step deviation is
    ``|| x_t - degrade(x0, z, t) ||_2``.
    """
    if rule not in ("ddim", "cold", "comp-oracle"):
        raise ValueError(f"unsupported trace rule {rule!r}")
    grid = tuple(int(t) for t in grid)
    if not grid or grid[0] != s.t_max or any(b >= a for a, b in zip(grid, grid[1:])) \
            or grid[-1] < 1:
        raise ValueError("grid must be strictly decreasing from t_max to >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x = degrade(x0, z, s, s.t_max)
    traj = Trajectory(times=[s.t_max], iterates=[x.copy()], deviations=[0.0])
    for t, t_prev in zip(grid, (*grid[1:], 0)):
        x0_hat = np.asarray(reconstruction_fn(x, t), dtype=np.float64)
        if rule == "comp-oracle":
            x = comp_step_oracle(x, t, t_prev, x0_hat, x0, z, s)
        elif rule == "cold":
            x = cold_step_teacher(x, t, t_prev, x0_hat, z, s)
        else:  # teacher-forced ddim: eps_hat implied by the reconstruction
            eps_hat = (x - s.g(t) * x0_hat) / s.f(t)
            out = s.g(t_prev) * x0_hat + s.f(t_prev) * eps_hat
            x = out
        traj.times.append(t_prev)
        traj.iterates.append(x.copy())
        traj.deviations.append(float(np.linalg.norm(x - degrade(x0, z, s, t_prev))))
    return traj
