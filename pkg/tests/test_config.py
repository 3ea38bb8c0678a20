"""Config parsing, validation and round-trip tests."""

import dataclasses

import pytest

from pttrack.config import (
    TrackerConfig,
    config_to_dict,
    dump_config,
    load_config,
    parse_config_text,
)
from pttrack.errors import DataError


def test_defaults_are_valid():
    cfg = TrackerConfig()
    assert cfg.n_seeds >= cfg.k_neighbors
    assert cfg.n_clusters >= cfg.k_neighbors
    assert cfg.sampler in ("fps", "rs")
    assert cfg.template_mode == "first"


def test_config_is_frozen():
    cfg = TrackerConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.n_seeds = 64


def test_dump_parse_round_trip():
    cfg = dataclasses.replace(
        TrackerConfig(),
        n_seeds=48,
        lr=0.0025,
        ptt_vote=False,
        sampler="rs",
        template_mode="all-previous",
        lambda2=0.5,
    )
    parsed = parse_config_text(dump_config(cfg))
    assert parsed == cfg


def test_parse_comments_blanks_and_spacing():
    cfg = parse_config_text(
        """
        # comment line
        n_seeds = 16   # trailing comment

        lr=0.01
        ptt_prop = off
        """
    )
    assert cfg.n_seeds == 16
    assert cfg.lr == 0.01
    assert cfg.ptt_prop is False


def test_parse_bool_spellings():
    for raw, expect in [
        ("true", True), ("on", True), ("1", True), ("yes", True),
        ("false", False), ("off", False), ("0", False), ("no", False),
    ]:
        assert parse_config_text(f"ptt_vote = {raw}").ptt_vote is expect


def test_unknown_key_rejected():
    with pytest.raises(DataError, match="unknown key"):
        parse_config_text("n_seedz = 32")


def test_untypeable_value_rejected():
    with pytest.raises(DataError, match="cannot parse"):
        parse_config_text("n_seeds = many")
    with pytest.raises(DataError, match="cannot parse"):
        parse_config_text("ptt_vote = maybe")


def test_missing_equals_rejected():
    with pytest.raises(DataError, match="key = value"):
        parse_config_text("n_seeds 32")


def test_validation_rules():
    with pytest.raises(DataError, match="template_mode"):
        TrackerConfig(template_mode="last")
    with pytest.raises(DataError, match="sampler"):
        TrackerConfig(sampler="grid")
    with pytest.raises(DataError, match="k_neighbors cannot exceed n_seeds"):
        TrackerConfig(n_seeds=4, k_neighbors=8)
    with pytest.raises(DataError, match="k_neighbors cannot exceed n_clusters"):
        TrackerConfig(n_clusters=4, k_neighbors=8)
    with pytest.raises(DataError, match="nonnegative"):
        TrackerConfig(lambda2=-0.1)
    with pytest.raises(DataError, match=">= 1"):
        TrackerConfig(n_seeds=0)
    # zero epochs is legal: training becomes a no-op and the checkpoint is the init
    assert TrackerConfig(epochs=0).epochs == 0
    with pytest.raises(DataError, match="epochs"):
        TrackerConfig(epochs=-1)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read config"):
        load_config(tmp_path / "absent.cfg")


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 7\nsampler = rs\n")
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg.sampler == "rs"


def test_config_to_dict_covers_every_field():
    cfg = TrackerConfig()
    d = config_to_dict(cfg)
    assert set(d) == {f.name for f in dataclasses.fields(TrackerConfig)}
    assert TrackerConfig(**d) == cfg
