"""Run manifest serialization tests."""

import json

import pytest

from pttrack import __version__
from pttrack.errors import DataError
from pttrack.manifest import RunManifest, read_manifest, write_manifest


def test_round_trip(tmp_path):
    manifest = RunManifest(
        command="train",
        argv=["train", "--data", "corpus", "--out", "ck.bin", "--seed", "3"],
        seed=3,
        config={"n_seeds": 32, "sampler": "fps"},
    )
    path = tmp_path / "run.manifest.json"
    write_manifest(path, manifest)
    back = read_manifest(path)
    assert back.command == "train"
    assert back.argv == manifest.argv
    assert back.seed == 3
    assert back.config == {"n_seeds": 32, "sampler": "fps"}
    assert back.version == __version__
    assert back.started_at == manifest.started_at


def test_started_at_autofilled():
    manifest = RunManifest(command="gen", argv=["gen"], seed=0)
    assert manifest.started_at
    assert "T" in manifest.started_at


def test_file_is_plain_json(tmp_path):
    path = tmp_path / "m.json"
    write_manifest(path, RunManifest(command="gen", argv=["gen"], seed=1))
    payload = json.loads(path.read_text())
    assert payload["command"] == "gen"
    assert payload["seed"] == 1


def test_read_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read manifest"):
        read_manifest(tmp_path / "absent.json")


def test_read_corrupt_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{ not json")
    with pytest.raises(DataError, match="corrupt"):
        read_manifest(path)


def test_read_missing_fields(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"command": "gen"}))
    with pytest.raises(DataError, match="missing required fields"):
        read_manifest(path)
