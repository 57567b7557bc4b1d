"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.  The
output root defaults to ./out and can be overridden with COMPSAMP_OUT.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import nn
from .config import (ConfigError, load_json, parse_ablate_config,
                     parse_race_config, parse_train_config)
from .csvio import read_matrix, write_csv
from .data import KINDS, DatasetSpec, dataset_sample
from .denoisers import CompensationHandle, DenoiserHandle
from .experiments import (config_doc, run_ablate_k, run_race, run_train,
                          run_trace)
from .figures import PLOTTERS
from .manifest import config_digest, write_manifest
from .metrics import metric_report
from .presets import PRESETS
from .samplers import RULES, SamplerParams, generate, make_time_grid
from .schedule import build_linear_schedule


def out_root() -> Path:
    return Path(os.environ.get("COMPSAMP_OUT", "out"))


def _runtime_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            raise click.UsageError(str(exc)) from exc
        except click.ClickException:
            raise
        except Exception as exc:  # runtime failure -> exit 1
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def _load_config(config_path: str | None, preset: str | None,
                 preset_group: str):
    if (config_path is None) == (preset is None):
        raise click.UsageError("provide exactly one of CONFIG or --preset")
    if preset is not None:
        if preset != preset_group:
            raise click.UsageError(
                f"preset {preset!r} does not drive this command")
        return PRESETS[preset]
    return load_json(config_path)


@click.group()
def main():
    """Desk-scale diffusion sandbox with compensation sampling."""


@main.command("schedule-dump")
@click.option("--t-max", type=int, default=100, show_default=True)
@click.option("--beta-start", type=float, default=1e-4, show_default=True)
@click.option("--beta-end", type=float, default=0.02, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output CSV path [default: <out-root>/schedule.csv]")
@_runtime_errors
def schedule_dump(t_max, beta_start, beta_end, out_path):
    """Serialize a linear schedule to CSV (t, beta, alpha_bar, g, f, w)."""
    try:
        s = build_linear_schedule(t_max, beta_start, beta_end)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    rows = [(0, "", "", 1.0, 0.0, 0.0)]
    rows += [(t, float(s.betas[t - 1]), float(s.alpha_bars[t - 1]),
              s.g(t), s.f(t), s.w(t)) for t in range(1, t_max + 1)]
    out_path = Path(out_path) if out_path else out_root() / "schedule.csv"
    write_csv(out_path, ["t", "beta", "alpha_bar", "g", "f", "w"], rows)
    click.echo(f"wrote {out_path}")


@main.command("data-dump")
@click.option("--kind", type=click.Choice(KINDS), default="gaussian-mixture",
              show_default=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dim", type=int, default=2, show_default=True)
@click.option("--n-modes", type=int, default=8, show_default=True)
@click.option("--radius", type=float, default=2.0, show_default=True)
@click.option("--mode-std", type=float, default=0.05, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--mean", type=float, default=0.0, show_default=True)
@click.option("--std", type=float, default=1.0, show_default=True)
@click.option("--raw", is_flag=True, help="Skip reference-draw normalization.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@_runtime_errors
def data_dump(kind, n, seed, dim, n_modes, radius, mode_std, noise, mean, std,
              raw, out_path):
    """Draw toy-distribution samples and write one point per CSV row."""
    try:
        spec = DatasetSpec(kind=kind, dim=dim, mean=mean, std=std,
                           n_modes=n_modes, radius=radius, mode_std=mode_std,
                           noise=noise, normalize=not raw)
        samples = dataset_sample(spec, n, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    out_path = Path(out_path) if out_path else out_root() / "data.csv"
    write_csv(out_path, [f"x{i}" for i in range(samples.shape[1])], samples)
    click.echo(f"wrote {out_path}")


@main.command("train")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output dir [default: <out-root>/train-<digest>]")
@_runtime_errors
def train(config_path, out_dir):
    """Run a training loop described by a JSON config."""
    cfg = parse_train_config(load_json(config_path))
    if out_dir is None:
        out_dir = out_root() / f"train-{config_digest(config_doc(cfg))[:12]}"
    result = run_train(cfg, out_dir)
    click.echo(f"final swd {result.final_swd:.6g} "
               f"({result.wallclock_s:.1f}s); artifacts in {out_dir}")


@main.command("sample")
@click.option("--denoiser", "denoiser_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--comp", "comp_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--rule", type=click.Choice([r for r in RULES if r != "comp-oracle"]),
              default="ddim", show_default=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--nfe", type=int, default=None,
              help="Denoiser evaluations per chain [default: t-max]")
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--t-max", type=int, default=100, show_default=True)
@click.option("--beta-start", type=float, default=1e-4, show_default=True)
@click.option("--beta-end", type=float, default=0.02, show_default=True)
@click.option("--embed-dim", type=int, default=16, show_default=True)
@click.option("--comp-at-inference/--no-comp-at-inference", default=True,
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_runtime_errors
def sample(denoiser_path, comp_path, rule, eta, nfe, n, seed, t_max,
           beta_start, beta_end, embed_dim, comp_at_inference, out_dir):
    """Generate samples from trained checkpoints and write them as CSV."""
    params, _ = nn.load_checkpoint(denoiser_path)
    d = params.layer_dims[-1]
    if params.layer_dims[0] != d + embed_dim:
        raise RuntimeError(
            f"denoiser checkpoint input dim {params.layer_dims[0]} does not "
            f"match expected {d + embed_dim} (data dim {d} + embedding "
            f"{embed_dim})")
    h = DenoiserHandle(kind="trained-mlp", params=params, embed_dim=embed_dim)
    c = None
    use_comp = rule == "comp-learned" and comp_at_inference
    if use_comp:
        if comp_path is None:
            raise click.UsageError("--rule comp-learned needs --comp")
        comp_params, _ = nn.load_checkpoint(comp_path)
        if comp_params.layer_dims[0] != d + embed_dim \
                or comp_params.layer_dims[-1] != d:
            raise RuntimeError(
                f"compensation checkpoint dims {comp_params.layer_dims} do "
                f"not match expected input {d + embed_dim} / output {d}")
        c = CompensationHandle(params=comp_params, embed_dim=embed_dim)
    s = build_linear_schedule(t_max, beta_start, beta_end)
    grid = make_time_grid(t_max, nfe or t_max)
    sp = SamplerParams(rule=rule, time_grid=grid, eta=eta,
                       use_comp_at_inference=use_comp)
    samples, _ = generate(h, c, sp, s, n=n, d=d, seed=seed)
    config = {"rule": rule, "eta": eta, "nfe": nfe or t_max, "n": n,
              "seed": seed, "t_max": t_max, "beta_start": beta_start,
              "beta_end": beta_end, "embed_dim": embed_dim,
              "comp_at_inference": comp_at_inference,
              "time_grid": list(grid)}
    if out_dir is None:
        out_dir = out_root() / f"sample-{config_digest(config)[:12]}"
    out_dir = Path(out_dir)
    write_csv(out_dir / "samples.csv",
              [f"x{i}" for i in range(d)], samples)
    write_manifest(out_dir, "sample", config, {"samples": "samples.csv"})
    click.echo(f"wrote {out_dir / 'samples.csv'}")


@main.command("eval")
@click.option("--real-csv", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--gen-csv", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=3, show_default=True)
@click.option("--n-proj", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_runtime_errors
def eval_cmd(real_csv, gen_csv, k, n_proj, seed, out_path):
    """Score generated samples against real ones; emit a JSON report."""
    real = read_matrix(real_csv)
    gen = read_matrix(gen_csv)
    report = metric_report(real, gen, k=k, n_proj=n_proj, seed=seed)
    text = report.to_json() + "\n"
    if out_path is None:
        out_path = out_root() / "metrics.json"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    click.echo(text.strip())


@main.command("race")
@click.argument("config_path", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_runtime_errors
def race(config_path, preset, out_dir):
    """Convergence race: baseline DDIM arm vs compensation-sampling arm."""
    cfg = parse_race_config(_load_config(config_path, preset, "race"))
    out_dir = Path(out_dir) if out_dir else out_root() / "race"
    result = run_race(cfg["baseline"], cfg["cs"], cfg["seeds"], out_dir)
    click.echo(f"median cs step ratio {result['median_ratio']:.3f}; "
               f"artifacts in {out_dir}")


@main.command("ablate-k")
@click.argument("config_path", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_runtime_errors
def ablate_k(config_path, preset, out_dir):
    """Sweep the compensation module's inner iteration count."""
    cfg = parse_ablate_config(_load_config(config_path, preset, "ablate-k"))
    out_dir = Path(out_dir) if out_dir else out_root() / "ablate-k"
    result = run_ablate_k(cfg["base"], cfg["k_values"], cfg["seeds"], out_dir)
    for k, swd, precision, recall in result["table"]:
        click.echo(f"K={k}: swd {swd:.4f} precision {precision:.3f} "
                   f"recall {recall:.3f}")


@main.command("trace")
@click.option("--t-max", type=int, default=100, show_default=True)
@click.option("--dim", type=int, default=2, show_default=True)
@click.option("--bias", type=float, default=0.1, show_default=True)
@click.option("--rules", default="ddim,cold,comp-oracle", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@_runtime_errors
def trace(t_max, dim, bias, rules, seed, out_dir):
    """Teacher-forced error-accumulation traces under a biased reconstruction."""
    rule_list = tuple(r.strip() for r in rules.split(",") if r.strip())
    bad = [r for r in rule_list if r not in ("ddim", "cold", "comp-oracle")]
    if bad or not rule_list or bias < 0:
        raise click.UsageError(
            f"invalid adversary/rule spec: rules={rule_list}, bias={bias}")
    out_dir = Path(out_dir) if out_dir else out_root() / "trace"
    run_trace(out_dir, t_max=t_max, dim=dim, bias=bias, rules=rule_list,
              seed=seed)
    click.echo(f"artifacts in {out_dir}")


@main.command("plot")
@click.option("--kind", type=click.Choice(sorted(PLOTTERS)), required=True)
@click.option("--input", "input_csv", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(), required=True)
@_runtime_errors
def plot(kind, input_csv, out_path):
    """Render a matplotlib figure from an emitted CSV."""
    PLOTTERS[kind](input_csv, out_path)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
