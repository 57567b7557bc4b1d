"""Named experiment presets at desk scale.

Each preset is a plain config document in the same schema the CLI accepts,
so `--preset NAME` and a config file are interchangeable.  Widths, learning
rates and step counts are tuned for minutes-scale CPU runs on the 8-mode
ring-of-Gaussians benchmark.
"""

from __future__ import annotations

TOY_DATASET = {"kind": "gaussian-mixture", "dim": 2, "n_modes": 8,
               "radius": 2.0, "mode_std": 0.05}

_TOY_TRAIN = {
    "batch_size": 128,
    "lr_denoiser": 1e-3,
    "lr_comp": 5e-4,
    "denoiser_hidden": [64, 64],
    "comp_hidden": [64, 64],
    "eval_samples": 2048,
    "dataset": TOY_DATASET,
}

PRESETS: dict[str, dict] = {
    "race": {
        "baseline": {**_TOY_TRAIN, "t_max": 1000, "outer_steps": 3000,
                     "comp_enabled": False, "use_comp_at_inference": False},
        "cs": {**_TOY_TRAIN, "t_max": 100, "outer_steps": 3000,
               "comp_enabled": True, "comp_inner_iters": 1},
        "eval_every": 250,
        "seeds": [0, 1, 2, 3, 4],
    },
    "ablate-k": {
        # 512-point evaluation sets: the kNN recall estimator saturates near
        # 1.0 on 2048-vs-2048 draws of this benchmark and stops discriminating
        "base": {**_TOY_TRAIN, "t_max": 100, "outer_steps": 1500,
                 "eval_every": 1500, "comp_enabled": True,
                 "eval_samples": 512},
        "k_values": [1, 2, 5, 10, 20, 40, 80],
        "seeds": [0, 1, 2],
    },
    "role-of-term": {
        "base": {**_TOY_TRAIN, "t_max": 100, "outer_steps": 2000,
                 "eval_every": 2000, "comp_enabled": True},
        "seeds": [0, 1, 2, 3, 4],
    },
    "trace": {"t_max": 100, "dim": 2, "bias": 0.1,
              "rules": ["ddim", "cold", "comp-oracle"], "seed": 0},
    "fig7": {**_TOY_TRAIN, "t_max": 100, "outer_steps": 2000,
             "eval_every": 500, "comp_enabled": True},
}
