"""Run manifests: config echo, stable digest, artifact inventory.

Manifests are deterministic for a fixed config so replayed runs diff clean;
the run id is derived from the config digest rather than a wall-clock
timestamp for the same reason.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def write_manifest(out_dir, kind: str, config: dict, artifacts: dict,
                   extra: dict | None = None) -> Path:
    """Write ``manifest.json`` under ``out_dir`` and return its path.

    ``artifacts`` maps names to paths relative to ``out_dir``; every listed
    path must already exist.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, rel in artifacts.items():
        if not (out_dir / rel).exists():
            raise FileNotFoundError(f"artifact {name!r} missing: {out_dir / rel}")
    digest = config_digest(config)
    doc = {
        "run_id": f"{kind}-{digest[:16]}",
        "kind": kind,
        "seed": config.get("seed"),
        "config": config,
        "config_digest": digest,
        "artifacts": dict(sorted(artifacts.items())),
        "tool_version": f"compsamp {__version__}",
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(out_dir) -> dict:
    with open(Path(out_dir) / "manifest.json") as fh:
        return json.load(fh)
