"""Joint training of the noise predictor and the compensation module.

Each outer step draws a data batch, takes one Adam step on the standard
noise-prediction objective (per-sample uniform t, mean-squared error), and
then gives the compensation module K inner Adam passes on the same batch:
its target is w(t) * (x0_hat - x0) with x0_hat computed from the *frozen*
denoiser, regressed under L1 loss.  The two optimizations never touch each
other's parameters, and each consumes its own seeded substream so disabling
one leaves the other bitwise unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import DatasetSpec, dataset_draw, eight_mode_spec
from .denoisers import (DEFAULT_COMP_HIDDEN, DEFAULT_DENOISER_HIDDEN,
                        DEFAULT_EMBED_DIM, CompensationHandle, DenoiserHandle,
                        comp_init, denoiser_init, predict_x0)
from .metrics import sliced_wasserstein
from .samplers import SamplerParams, generate, make_time_grid
from .schedule import (DEFAULT_BETA_END, DEFAULT_BETA_START, NoiseSchedule,
                       build_linear_schedule)

EVAL_SWD_SEED = 777
EVAL_REAL_SEED = 424_243
N_TIME_DECILES = 10
N_STEP_BUCKETS = 20


@dataclass(frozen=True)
class TrainConfig:
    t_max: int
    seed: int = 0
    batch_size: int = 128
    outer_steps: int = 1000
    comp_inner_iters: int = 1
    lr_denoiser: float = 2e-4
    lr_comp: float = 1e-4
    eval_every: int = 200
    eval_samples: int = 2048
    comp_enabled: bool = True
    use_comp_at_inference: bool = True
    dataset: DatasetSpec = field(default_factory=eight_mode_spec)
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    denoiser_hidden: tuple[int, ...] = DEFAULT_DENOISER_HIDDEN
    comp_hidden: tuple[int, ...] = DEFAULT_COMP_HIDDEN
    embed_dim: int = DEFAULT_EMBED_DIM
    eval_nfe: int | None = None  # None: full grid

    def __post_init__(self):
        if self.batch_size < 1 or self.outer_steps < 1:
            raise ValueError("batch_size and outer_steps must be >= 1")
        if self.comp_inner_iters < 0:
            raise ValueError("comp_inner_iters must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass
class CompMagnitudeLog:
    """Mean compensation-target norm per (outer-step bucket, time decile)."""

    outer_steps: int
    t_max: int
    n_buckets: int = N_STEP_BUCKETS
    n_deciles: int = N_TIME_DECILES
    sums: np.ndarray = None
    counts: np.ndarray = None

    def __post_init__(self):
        if self.sums is None:
            self.sums = np.zeros((self.n_buckets, self.n_deciles))
        if self.counts is None:
            self.counts = np.zeros((self.n_buckets, self.n_deciles), dtype=np.int64)

    def record(self, step: int, t: np.ndarray, norms: np.ndarray) -> None:
        bucket = min(step * self.n_buckets // self.outer_steps, self.n_buckets - 1)
        deciles = np.minimum((t - 1) * self.n_deciles // self.t_max,
                             self.n_deciles - 1)
        np.add.at(self.sums[bucket], deciles, norms)
        np.add.at(self.counts[bucket], deciles, 1)

    def bucket_means(self) -> np.ndarray:
        """Mean target norm per outer-step bucket, pooled over deciles."""
        totals = self.sums.sum(axis=1)
        counts = self.counts.sum(axis=1)
        return np.divide(totals, counts, out=np.full_like(totals, np.nan),
                         where=counts > 0)


def comp_magnitude_rows(log: CompMagnitudeLog) -> list[tuple[int, int, float]]:
    """(bucket, decile, mean_norm) rows for every populated cell."""
    if int(log.counts.sum()) == 0:
        raise ValueError("empty compensation-magnitude log")
    rows = []
    for b in range(log.n_buckets):
        for d in range(log.n_deciles):
            if log.counts[b, d] > 0:
                rows.append((b, d, float(log.sums[b, d] / log.counts[b, d])))
    return rows


def _denoiser_batch_inputs(x_t: np.ndarray, t: np.ndarray, embed_dim: int,
                           t_max: int) -> np.ndarray:
    emb = nn.time_embedding(t, embed_dim, t_max)
    return np.concatenate([x_t, emb], axis=1)


def denoiser_train_step(p: nn.MlpParams, st: nn.AdamState, batch_x0: np.ndarray,
                        s: NoiseSchedule, rng: np.random.Generator,
                        embed_dim: int = DEFAULT_EMBED_DIM) -> float:
    """One Adam step on the noise-prediction objective; returns the batch loss."""
    batch_x0 = np.asarray(batch_x0, dtype=np.float64)
    if batch_x0.ndim != 2 or batch_x0.shape[0] == 0:
        raise ValueError("batch_x0 must be a non-empty (n, d) array")
    n = batch_x0.shape[0]
    t = rng.integers(1, s.t_max + 1, size=n)
    eps = rng.standard_normal(batch_x0.shape)
    x_t = s.g_grid[t][:, None] * batch_x0 + s.f_grid[t][:, None] * eps
    inputs = _denoiser_batch_inputs(x_t, t, embed_dim, s.t_max)
    loss, gw, gb = nn.mlp_grad(p, inputs, eps, loss="mean-squared")
    nn.adam_step(p, gw, gb, st)
    return loss


def comp_targets(denoiser: DenoiserHandle, batch_x0: np.ndarray,
                 t: np.ndarray, eps: np.ndarray, s: NoiseSchedule
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Detached reconstructions and compensation targets w(t)*(x0_hat - x0)."""
    x_t = s.g_grid[t][:, None] * batch_x0 + s.f_grid[t][:, None] * eps
    x0_hat = predict_x0(denoiser, x_t, t, s)
    w = (s.g_grid[t] - s.g_grid[t - 1])[:, None]
    return x0_hat, w * (x0_hat - batch_x0)


def comp_train_inner(c_params: nn.MlpParams, c_state: nn.AdamState,
                     batch_x0: np.ndarray, frozen_denoiser: DenoiserHandle,
                     s: NoiseSchedule, k: int, rng: np.random.Generator,
                     embed_dim: int = DEFAULT_EMBED_DIM
                     ) -> tuple[float, np.ndarray, np.ndarray]:
    """K inner Adam passes on the L1 compensation objective.

    Returns (last loss, per-sample t draws, per-sample target norms); with
    k = 0 the loss is evaluated without updating anything.
    """
    batch_x0 = np.asarray(batch_x0, dtype=np.float64)
    if batch_x0.ndim != 2 or batch_x0.shape[0] == 0:
        raise ValueError("batch_x0 must be a non-empty (n, d) array")
    n = batch_x0.shape[0]
    t = rng.integers(1, s.t_max + 1, size=n)
    eps = rng.standard_normal(batch_x0.shape)
    x0_hat, targets = comp_targets(frozen_denoiser, batch_x0, t, eps, s)
    inputs = _denoiser_batch_inputs(x0_hat, t, embed_dim, s.t_max)
    if k == 0:
        loss, _, _ = nn.mlp_grad(c_params, inputs, targets, loss="mean-absolute")
    else:
        loss = np.nan
        for _ in range(k):
            loss, gw, gb = nn.mlp_grad(c_params, inputs, targets,
                                       loss="mean-absolute")
            nn.adam_step(c_params, gw, gb, c_state)
    return float(loss), t, np.linalg.norm(targets, axis=1)


@dataclass
class TrainResult:
    denoiser: nn.MlpParams
    denoiser_state: nn.AdamState
    comp: nn.MlpParams
    comp_state: nn.AdamState
    schedule: NoiseSchedule
    log_rows: list[tuple]           # (step, denoiser_loss, comp_loss, swd_eval)
    magnitude_log: CompMagnitudeLog
    wallclock_s: float
    final_swd: float

    def denoiser_handle(self, embed_dim: int) -> DenoiserHandle:
        return DenoiserHandle(kind="trained-mlp", params=self.denoiser,
                              embed_dim=embed_dim)

    def comp_handle(self, embed_dim: int, enabled: bool = True) -> CompensationHandle:
        return CompensationHandle(params=self.comp,
                                  enabled_at_inference=enabled,
                                  embed_dim=embed_dim)


def eval_swd(cfg: TrainConfig, denoiser: nn.MlpParams, comp: nn.MlpParams,
             s: NoiseSchedule, real_eval: np.ndarray, eval_seed: int,
             use_comp: bool | None = None) -> float:
    """SWD between a deterministic generation snapshot and fixed real samples."""
    h = DenoiserHandle(kind="trained-mlp", params=denoiser,
                       embed_dim=cfg.embed_dim)
    use_comp = cfg.use_comp_at_inference and cfg.comp_enabled \
        if use_comp is None else use_comp
    nfe = cfg.eval_nfe or cfg.t_max
    sp = SamplerParams(rule="comp-learned" if use_comp else "ddim",
                       time_grid=make_time_grid(cfg.t_max, nfe), eta=0.0,
                       use_comp_at_inference=use_comp)
    c = CompensationHandle(params=comp, embed_dim=cfg.embed_dim) if use_comp else None
    samples, _ = generate(h, c, sp, s, n=cfg.eval_samples,
                          d=cfg.dataset.dim, seed=eval_seed)
    return sliced_wasserstein(real_eval, samples, seed=EVAL_SWD_SEED)


def train_run(cfg: TrainConfig, progress=None) -> TrainResult:
    """Run the full training loop in memory; persistence lives in the harness."""
    s = build_linear_schedule(cfg.t_max, cfg.beta_start, cfg.beta_end)
    d = cfg.dataset.dim
    root = np.random.SeedSequence(cfg.seed)
    # fixed derivation order: data, denoiser draws, comp draws, inits, eval
    (data_ss, den_ss, comp_ss, den_init_ss, comp_init_ss,
     eval_ss) = root.spawn(6)
    data_rng = np.random.default_rng(data_ss)
    den_rng = np.random.default_rng(den_ss)
    comp_rng = np.random.default_rng(comp_ss)
    eval_seed = int(np.random.default_rng(eval_ss).integers(2**63))

    denoiser = denoiser_init(d, cfg.denoiser_hidden, cfg.embed_dim,
                             seed=den_init_ss.generate_state(1)[0])
    den_state = nn.adam_init(denoiser, lr=cfg.lr_denoiser)
    comp = comp_init(d, cfg.comp_hidden, cfg.embed_dim,
                     seed=comp_init_ss.generate_state(1)[0])
    comp_state = nn.adam_init(comp, lr=cfg.lr_comp)

    real_eval = dataset_sample_eval(cfg)
    mag_log = CompMagnitudeLog(outer_steps=cfg.outer_steps, t_max=cfg.t_max)
    frozen = DenoiserHandle(kind="trained-mlp", params=denoiser,
                            embed_dim=cfg.embed_dim)

    log_rows: list[tuple] = []
    t_start = time.perf_counter()
    final_swd = np.nan
    for step in range(cfg.outer_steps):
        batch = dataset_draw(cfg.dataset, cfg.batch_size, data_rng)
        den_loss = denoiser_train_step(denoiser, den_state, batch, s, den_rng,
                                       embed_dim=cfg.embed_dim)
        comp_loss = np.nan
        if cfg.comp_enabled:
            comp_loss, t_draws, norms = comp_train_inner(
                comp, comp_state, batch, frozen, s, cfg.comp_inner_iters,
                comp_rng, embed_dim=cfg.embed_dim)
            mag_log.record(step, t_draws, norms)
        if not np.isfinite(den_loss) or (cfg.comp_enabled
                                         and not np.isfinite(comp_loss)):
            raise FloatingPointError(f"non-finite loss at outer step {step}")
        is_last = step == cfg.outer_steps - 1
        if (step + 1) % cfg.eval_every == 0 or is_last:
            swd = eval_swd(cfg, denoiser, comp, s, real_eval, eval_seed)
            final_swd = swd
            log_rows.append((step + 1, den_loss, comp_loss, swd))
            if progress is not None:
                progress(step + 1, den_loss, comp_loss, swd)
        else:
            log_rows.append((step + 1, den_loss, comp_loss, np.nan))
    wallclock = time.perf_counter() - t_start
    return TrainResult(denoiser=denoiser, denoiser_state=den_state, comp=comp,
                       comp_state=comp_state, schedule=s, log_rows=log_rows,
                       magnitude_log=mag_log, wallclock_s=wallclock,
                       final_swd=float(final_swd))


def dataset_sample_eval(cfg: TrainConfig) -> np.ndarray:
    """Fixed real evaluation set shared by every run of the same dataset."""
    from .data import dataset_sample
    return dataset_sample(cfg.dataset, cfg.eval_samples, EVAL_REAL_SEED)
