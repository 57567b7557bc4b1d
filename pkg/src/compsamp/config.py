"""Strict JSON configuration schemas for the CLI drivers.

Unknown keys are hard errors, never silently ignored; every error names the
offending field so the CLI can exit 2 with a usable message.
"""

from __future__ import annotations

import json
from typing import Any

from .data import KINDS, DatasetSpec
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field {field!r}: {message}")


_DATASET_KEYS = {"kind", "dim", "mean", "std", "n_modes", "radius",
                 "mode_std", "noise", "normalize"}
_TRAIN_KEYS = {"t_max", "seed", "batch_size", "outer_steps",
               "comp_inner_iters", "lr_denoiser", "lr_comp", "eval_every",
               "eval_samples", "comp_enabled", "use_comp_at_inference",
               "dataset", "beta_start", "beta_end", "denoiser_hidden",
               "comp_hidden", "embed_dim", "eval_nfe"}


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}{key}", "unknown key")


def parse_dataset(doc: Any, where: str = "dataset.") -> DatasetSpec:
    if not isinstance(doc, dict):
        raise ConfigError(where.rstrip("."), "must be an object")
    _reject_unknown(doc, _DATASET_KEYS, where)
    if "kind" not in doc:
        raise ConfigError(where + "kind", "missing required key")
    if doc["kind"] not in KINDS:
        raise ConfigError(where + "kind", f"must be one of {KINDS}")
    try:
        return DatasetSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where.rstrip("."), str(exc)) from exc


def parse_train_config(doc: Any, where: str = "") -> TrainConfig:
    if not isinstance(doc, dict):
        raise ConfigError(where.rstrip(".") or "config", "must be an object")
    _reject_unknown(doc, _TRAIN_KEYS, where)
    if "t_max" not in doc:
        raise ConfigError(where + "t_max", "missing required key")
    kwargs = dict(doc)
    if "dataset" in kwargs:
        kwargs["dataset"] = parse_dataset(kwargs["dataset"], where + "dataset.")
    for key in ("denoiser_hidden", "comp_hidden"):
        if key in kwargs:
            if (not isinstance(kwargs[key], list)
                    or any(not isinstance(v, int) or v < 1 for v in kwargs[key])):
                raise ConfigError(where + key, "must be a list of positive ints")
            kwargs[key] = tuple(kwargs[key])
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where.rstrip(".") or "config", str(exc)) from exc


def parse_race_config(doc: Any) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("config", "must be an object")
    _reject_unknown(doc, {"baseline", "cs", "seeds", "eval_every"}, "")
    for arm in ("baseline", "cs"):
        if arm not in doc:
            raise ConfigError(arm, "missing required key")
    eval_every = doc.get("eval_every")
    if eval_every is not None and (not isinstance(eval_every, int)
                                   or eval_every < 1):
        raise ConfigError("eval_every", "evaluation budget must be >= 1")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds \
            or any(not isinstance(v, int) for v in seeds):
        raise ConfigError("seeds", "must be a non-empty list of ints")
    arms = {}
    for arm in ("baseline", "cs"):
        arm_doc = dict(doc[arm])
        if eval_every is not None:
            arm_doc["eval_every"] = eval_every
        arms[arm] = parse_train_config(arm_doc, where=f"{arm}.")
    return {"baseline": arms["baseline"], "cs": arms["cs"], "seeds": seeds}


def parse_ablate_config(doc: Any) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("config", "must be an object")
    _reject_unknown(doc, {"base", "k_values", "seeds"}, "")
    if "base" not in doc:
        raise ConfigError("base", "missing required key")
    k_values = doc.get("k_values", [1, 2, 5, 10, 20, 40, 80])
    if (not isinstance(k_values, list) or not k_values
            or any(not isinstance(v, int) or v < 0 for v in k_values)):
        raise ConfigError("k_values", "must be a non-empty list of ints >= 0")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds \
            or any(not isinstance(v, int) for v in seeds):
        raise ConfigError("seeds", "must be a non-empty list of ints")
    return {"base": parse_train_config(dict(doc["base"]), where="base."),
            "base_doc": dict(doc["base"]),
            "k_values": k_values, "seeds": seeds}


def load_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}") from exc
