"""Run configuration: a flat, typed key=value file.

Every tunable of the tracker lives here with a desk-scale default. The file
format is line-oriented ``key = value`` with ``#`` comments; unknown keys and
untypeable values are data errors so a typo can never silently fall back to
a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import DataError

_TEMPLATE_MODES = ("first", "previous", "first+previous", "all-previous")
_SAMPLERS = ("fps", "rs")


@dataclass(frozen=True)
class TrackerConfig:
    """All tracker, training and tracking knobs."""

    # backbone
    n_seeds: int = 32
    backbone_radius: float = 0.9
    backbone_group: int = 16
    backbone_hidden: int = 32
    d_feat: int = 16
    # attention blocks
    m_embed: int = 16
    k_neighbors: int = 8
    # proposal stage
    n_clusters: int = 12
    cluster_radius: float = 1.2
    cluster_group: int = 16
    head_hidden: int = 32
    # loss
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    positive_radius: float = 0.6
    smooth_l1_beta: float = 1.0
    # training
    lr: float = 0.001
    lr_drop_epoch: int = 9
    lr_drop_factor: float = 5.0
    epochs: int = 12
    batch_size: int = 8
    samples_per_tracklet: int = 6
    offset_xy: float = 0.75
    offset_z: float = 0.15
    offset_theta: float = 0.15
    # tracking
    template_budget: int = 512
    search_margin: float = 2.0
    template_mode: str = "first"
    # wiring and sampling
    ptt_vote: bool = True
    ptt_prop: bool = True
    sampler: str = "fps"
    # reproducibility
    seed: int = 0

    def __post_init__(self):
        if self.template_mode not in _TEMPLATE_MODES:
            raise DataError(
                f"template_mode must be one of {_TEMPLATE_MODES}, got {self.template_mode!r}"
            )
        if self.sampler not in _SAMPLERS:
            raise DataError(f"sampler must be one of {_SAMPLERS}, got {self.sampler!r}")
        for key in ("n_seeds", "backbone_group", "d_feat", "m_embed", "k_neighbors",
                    "n_clusters", "cluster_group", "epochs", "batch_size",
                    "template_budget"):
            if getattr(self, key) < 1 and key != "epochs":
                raise DataError(f"{key} must be >= 1")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")
        if self.k_neighbors > self.n_seeds:
            raise DataError("k_neighbors cannot exceed n_seeds")
        if self.k_neighbors > self.n_clusters:
            raise DataError("k_neighbors cannot exceed n_clusters")
        for key in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, key) < 0:
                raise DataError(f"{key} must be nonnegative")


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "on", "1", "yes"):
                return True
            if lowered in ("false", "off", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise DataError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}")


def parse_config_text(text: str, base: TrackerConfig | None = None) -> TrackerConfig:
    """Parse ``key = value`` lines into a config, starting from ``base``."""
    base = base if base is not None else TrackerConfig()
    kinds = {f.name: f.type for f in fields(TrackerConfig)}
    # dataclass field types arrive as strings under future annotations
    type_map = {"int": int, "float": float, "bool": bool, "str": str}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in kinds:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        kind = type_map[kinds[key]] if isinstance(kinds[key], str) else kinds[key]
        overrides[key] = _parse_value(key, raw, kind)
    return replace(base, **overrides)


def load_config(path, base: TrackerConfig | None = None) -> TrackerConfig:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, base=base)


def config_to_dict(config: TrackerConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in fields(TrackerConfig)}


def dump_config(config: TrackerConfig) -> str:
    """Render a config as a parseable key=value file."""
    return "\n".join(f"{k} = {v}" for k, v in config_to_dict(config).items()) + "\n"
