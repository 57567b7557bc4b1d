"""Experiment drivers behind the CLI: train, race, ablation, trace.

Each driver writes its delimited output plus a deterministic SVG under an
output directory, then a manifest inventorying the artifacts.  Matplotlib
companions are rendered separately by :mod:`compsamp.figures`.
"""

from __future__ import annotations

import dataclasses
import time
from pathlib import Path

import numpy as np

from . import nn
from .csvio import write_csv
from .manifest import write_manifest
from .metrics import knn_precision_recall
from .samplers import trace_deviation
from .schedule import build_linear_schedule
from .svgplot import emit_svg
from .training import (TrainConfig, TrainResult, comp_magnitude_rows,
                       dataset_sample_eval, eval_swd, train_run)

LOG_HEADER = ["step", "denoiser_loss", "comp_loss", "swd_eval"]
MAGNITUDE_HEADER = ["bucket", "decile", "mean_norm"]


def config_doc(cfg: TrainConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["dataset"] = dataclasses.asdict(cfg.dataset)
    doc["denoiser_hidden"] = list(cfg.denoiser_hidden)
    doc["comp_hidden"] = list(cfg.comp_hidden)
    return doc


def write_train_artifacts(cfg: TrainConfig, out_dir, result: TrainResult,
                          manifest_kind: str = "train",
                          extra_artifacts: dict | None = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(result.denoiser, result.denoiser_state,
                       out_dir / "denoiser.ckpt")
    nn.save_checkpoint(result.comp, result.comp_state, out_dir / "comp.ckpt")
    write_csv(out_dir / "log.csv", LOG_HEADER, result.log_rows)
    artifacts = {"denoiser_checkpoint": "denoiser.ckpt",
                 "compensation_checkpoint": "comp.ckpt",
                 "loss_log": "log.csv"}
    if cfg.comp_enabled:
        write_csv(out_dir / "comp_magnitude.csv", MAGNITUDE_HEADER,
                  comp_magnitude_rows(result.magnitude_log))
        artifacts["compensation_magnitude"] = "comp_magnitude.csv"
    if extra_artifacts:
        artifacts.update(extra_artifacts)
    write_manifest(out_dir, manifest_kind, config_doc(cfg), artifacts,
                   extra={"final_swd": result.final_swd})
    return artifacts


def run_train(cfg: TrainConfig, out_dir) -> TrainResult:
    result = train_run(cfg)
    write_train_artifacts(cfg, out_dir, result)
    return result


# -- convergence race ---------------------------------------------------------

def run_race(baseline_cfg: TrainConfig, cs_cfg: TrainConfig,
             seeds: list[int], out_dir) -> dict:
    """Train both arms per seed, score steps-to-target against the baseline.

    The target SWD is the per-seed baseline final score; each arm's
    first-reach step is the earliest evaluation snapshot at or below it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve_rows = []
    summary_rows = []
    ratios = []
    series, labels = [], []
    for seed in seeds:
        per_arm = {}
        for arm, cfg in (("baseline", baseline_cfg), ("cs", cs_cfg)):
            cfg_seeded = dataclasses.replace(cfg, seed=seed)
            t0 = time.perf_counter()
            eval_points = []

            def track(step, den_loss, comp_loss, swd, _t0=t0, _pts=eval_points):
                _pts.append((step, time.perf_counter() - _t0, swd))

            result = train_run(cfg_seeded, progress=track)
            per_arm[arm] = (cfg_seeded, result, eval_points)
            curve_rows.extend((arm, seed, step, wall, swd)
                              for step, wall, swd in eval_points)
            if arm == "cs":
                write_csv(out_dir / f"cs_magnitude_seed{seed}.csv",
                          MAGNITUDE_HEADER,
                          comp_magnitude_rows(result.magnitude_log))
        target = per_arm["baseline"][1].final_swd
        reach = {}
        for arm in ("baseline", "cs"):
            steps = [step for step, _, swd in per_arm[arm][2] if swd <= target]
            reach[arm] = min(steps) if steps else None
        baseline_total = per_arm["baseline"][0].outer_steps
        ratio = (reach["cs"] / baseline_total) if reach["cs"] is not None else np.inf
        ratios.append(ratio)
        summary_rows.append((seed, target, reach["baseline"],
                             -1 if reach["cs"] is None else reach["cs"],
                             baseline_total, ratio))
        for arm in ("baseline", "cs"):
            pts = per_arm[arm][2]
            series.append(([float(p[0]) for p in pts], [p[2] for p in pts]))
            labels.append(f"{arm} seed {seed}")
    write_csv(out_dir / "race.csv",
              ["arm", "seed", "step", "wallclock_s", "swd"], curve_rows)
    write_csv(out_dir / "race_summary.csv",
              ["seed", "target_swd", "baseline_first_reach", "cs_first_reach",
               "baseline_total_steps", "cs_step_ratio"], summary_rows)
    emit_svg(series, labels, out_dir / "race.svg",
             title="Convergence race: SWD vs gradient steps",
             x_label="gradient steps", y_label="sliced Wasserstein distance")
    median_ratio = float(np.median(ratios))
    write_manifest(
        out_dir, "race",
        {"baseline": config_doc(baseline_cfg), "cs": config_doc(cs_cfg),
         "seeds": seeds},
        {"curves": "race.csv", "summary": "race_summary.csv",
         "figure": "race.svg"},
        extra={"median_cs_step_ratio": median_ratio})
    return {"rows": summary_rows, "median_ratio": median_ratio,
            "curves": curve_rows}


# -- compensation inner-iteration sweep ---------------------------------------

def run_ablate_k(base_cfg: TrainConfig, k_values: list[int],
                 seeds: list[int], out_dir, metric_k: int = 3) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    real_eval = dataset_sample_eval(base_cfg)
    detail_rows = []
    per_k = {k: {"swd": [], "precision": [], "recall": []} for k in k_values}
    for seed in seeds:
        for k in k_values:
            cfg = dataclasses.replace(base_cfg, seed=seed, comp_inner_iters=k)
            result = train_run(cfg)
            gen_seed = _run_eval_seed(cfg)
            samples = _final_samples(cfg, result, gen_seed)
            precision, recall = knn_precision_recall(real_eval, samples,
                                                     k=metric_k)
            detail_rows.append((k, seed, result.final_swd, precision, recall))
            per_k[k]["swd"].append(result.final_swd)
            per_k[k]["precision"].append(precision)
            per_k[k]["recall"].append(recall)
    table_rows = [(k,
                   float(np.median(per_k[k]["swd"])),
                   float(np.median(per_k[k]["precision"])),
                   float(np.median(per_k[k]["recall"])))
                  for k in k_values]
    write_csv(out_dir / "ablate_k.csv", ["K", "swd", "precision", "recall"],
              table_rows)
    write_csv(out_dir / "ablate_k_runs.csv",
              ["K", "seed", "swd", "precision", "recall"], detail_rows)
    write_manifest(out_dir, "ablate-k",
                   {"base": config_doc(base_cfg), "k_values": k_values,
                    "seeds": seeds},
                   {"table": "ablate_k.csv", "runs": "ablate_k_runs.csv"})
    return {"table": table_rows, "runs": detail_rows}


def _run_eval_seed(cfg: TrainConfig) -> int:
    # same derivation as train_run's evaluation substream
    eval_ss = np.random.SeedSequence(cfg.seed).spawn(6)[5]
    return int(np.random.default_rng(eval_ss).integers(2**63))


def _final_samples(cfg: TrainConfig, result: TrainResult, seed: int,
                   use_comp: bool | None = None) -> np.ndarray:
    from .samplers import SamplerParams, generate, make_time_grid

    use_comp = (cfg.comp_enabled and cfg.use_comp_at_inference
                if use_comp is None else use_comp)
    h = result.denoiser_handle(cfg.embed_dim)
    c = result.comp_handle(cfg.embed_dim) if use_comp else None
    sp = SamplerParams(rule="comp-learned" if use_comp else "ddim",
                       time_grid=make_time_grid(cfg.t_max,
                                                cfg.eval_nfe or cfg.t_max),
                       use_comp_at_inference=use_comp)
    samples, _ = generate(h, c, sp, result.schedule, n=cfg.eval_samples,
                          d=cfg.dataset.dim, seed=seed)
    return samples


# -- role-of-term ablation ----------------------------------------------------

def run_role_of_term(base_cfg: TrainConfig, seeds: list[int], out_dir) -> dict:
    """Final SWD for plain DDIM training, CS train-only, and full CS arms."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    per_arm = {"ddim": [], "cs-train-only": [], "cs": []}
    for seed in seeds:
        off_cfg = dataclasses.replace(base_cfg, seed=seed, comp_enabled=False,
                                      use_comp_at_inference=False)
        off_result = train_run(off_cfg)
        on_cfg = dataclasses.replace(base_cfg, seed=seed, comp_enabled=True,
                                     use_comp_at_inference=True)
        on_result = train_run(on_cfg)
        real_eval = dataset_sample_eval(base_cfg)
        eval_seed = _run_eval_seed(on_cfg)
        swd_ddim = off_result.final_swd
        swd_train_only = eval_swd(on_cfg, on_result.denoiser, on_result.comp,
                                  on_result.schedule, real_eval, eval_seed,
                                  use_comp=False)
        swd_full = eval_swd(on_cfg, on_result.denoiser, on_result.comp,
                            on_result.schedule, real_eval, eval_seed,
                            use_comp=True)
        for arm, swd in (("ddim", swd_ddim), ("cs-train-only", swd_train_only),
                         ("cs", swd_full)):
            rows.append((arm, seed, swd))
            per_arm[arm].append(swd)
    medians = {arm: float(np.median(v)) for arm, v in per_arm.items()}
    write_csv(out_dir / "role_of_term.csv", ["arm", "seed", "swd"], rows)
    write_manifest(out_dir, "role-of-term",
                   {"base": config_doc(base_cfg), "seeds": seeds},
                   {"table": "role_of_term.csv"}, extra={"medians": medians})
    return {"rows": rows, "medians": medians}


# -- error-accumulation trace -------------------------------------------------

def run_trace(out_dir, t_max: int = 100, dim: int = 2, bias: float = 0.1,
              rules: tuple[str, ...] = ("ddim", "cold", "comp-oracle"),
              seed: int = 0, beta_start: float | None = None,
              beta_end: float | None = None) -> dict:
    """Teacher-forced deviation traces under a constant-bias reconstruction."""
    if bias < 0:
        raise ValueError("bias magnitude must be >= 0")
    kwargs = {}
    if beta_start is not None:
        kwargs["beta_start"] = beta_start
    if beta_end is not None:
        kwargs["beta_end"] = beta_end
    s = build_linear_schedule(t_max, **kwargs)
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(dim)
    z = rng.standard_normal(dim)
    b = np.full(dim, bias / np.sqrt(dim)) if bias > 0 else np.zeros(dim)
    grid = tuple(range(t_max, 0, -1))
    rows, series, labels = [], [], []
    traces = {}
    for rule in rules:
        traj = trace_deviation(x0, z, s, rule, lambda x, t: x0 + b, grid)
        traces[rule] = traj
        for t, dev in zip(traj.times, traj.deviations):
            comp_norm = (abs(s.g(t) - s.g(max(t - 1, 0)))
                         * float(np.linalg.norm(b))
                         if rule == "comp-oracle" and t >= 1 else 0.0)
            rows.append((rule, 0, t, dev, comp_norm))
        series.append(([float(t) for t in traj.times], traj.deviations))
        labels.append(rule)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "trace.csv",
              ["run_id", "chain", "t", "deviation", "comp_norm"], rows)
    emit_svg(series, labels, out_dir / "trace.svg",
             title=f"Deviation from the degradation path (bias {bias:g})",
             x_label="time step t", y_label="||x_t - D(x0, t)||")
    write_manifest(out_dir, "trace",
                   {"t_max": t_max, "dim": dim, "bias": bias,
                    "rules": list(rules), "seed": seed},
                   {"trace": "trace.csv", "figure": "trace.svg"})
    return {"traces": traces, "schedule": s, "bias_vec": b}


# -- compensation-magnitude figure --------------------------------------------

def run_fig_magnitude(cfg: TrainConfig, out_dir) -> dict:
    """Train one CS run and chart the compensation-target magnitude trend."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(cfg, comp_enabled=True)
    result = train_run(cfg)
    means = result.magnitude_log.bucket_means()
    buckets = [float(i) for i in range(len(means)) if np.isfinite(means[i])]
    vals = [float(v) for v in means if np.isfinite(v)]
    emit_svg([(buckets, vals)], ["mean ||comp target||"],
             out_dir / "comp_magnitude.svg",
             title="Compensation-target magnitude over training",
             x_label="outer-step bucket", y_label="mean L2 norm")
    write_train_artifacts(cfg, out_dir, result, manifest_kind="fig-magnitude",
                          extra_artifacts={"figure": "comp_magnitude.svg"})
    return {"result": result, "bucket_means": means}
