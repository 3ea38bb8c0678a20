"""Run manifests: enough recorded state to replay any command bit-exactly.

A manifest is written before a command produces any other output. Replaying
the stored argv with the stored config snapshot on one thread reproduces
every data output byte for byte; the manifest itself (timestamps) and wall
-clock benchmark numbers are the only run-dependent artifacts.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from . import __version__
from .errors import DataError


@dataclass
class RunManifest:
    command: str
    argv: list
    seed: int
    config: dict = field(default_factory=dict)
    version: str = __version__
    started_at: str = ""

    def __post_init__(self):
        if not self.started_at:
            self.started_at = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def write_manifest(path, manifest: RunManifest) -> None:
    payload = {
        "command": manifest.command,
        "argv": list(manifest.argv),
        "seed": manifest.seed,
        "config": manifest.config,
        "version": manifest.version,
        "started_at": manifest.started_at,
    }
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


def read_manifest(path) -> RunManifest:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            payload = json.load(fp)
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}")
    except json.JSONDecodeError:
        raise DataError(f"{path}: corrupt manifest")
    try:
        return RunManifest(
            command=payload["command"],
            argv=list(payload["argv"]),
            seed=int(payload["seed"]),
            config=dict(payload.get("config", {})),
            version=payload.get("version", ""),
            started_at=payload.get("started_at", ""),
        )
    except (KeyError, TypeError, ValueError):
        raise DataError(f"{path}: manifest missing required fields")
