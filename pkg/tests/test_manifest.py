import json

import pytest

from nv_deer.errors import InputDataError
from nv_deer.io.manifest import MANIFEST_VERSION, RunManifest, load_manifest, save_manifest, verify_outputs


def test_manifest_round_trip(tmp_path):
    data = tmp_path / "traces.csv"
    data.write_text("scan_value,signal\n0,1\n1,2\n")
    manifest = RunManifest("simulate-echo", "f00d", 7, toolkit_version="0.1.0")
    manifest.add_output(data)
    path = save_manifest(manifest, tmp_path / "manifest.json")
    restored = load_manifest(path)
    assert restored == manifest
    assert restored.version == MANIFEST_VERSION
    assert verify_outputs(restored, tmp_path) == {"traces.csv": True}


def test_manifest_detects_modified_output(tmp_path):
    data = tmp_path / "traces.csv"
    data.write_text("a\n")
    manifest = RunManifest("simulate-echo", None, 0)
    manifest.add_output(data)
    data.write_text("b\n")
    assert verify_outputs(manifest, tmp_path) == {"traces.csv": False}
    data.unlink()
    assert verify_outputs(manifest, tmp_path) == {"traces.csv": False}


def test_manifest_is_stable_text(tmp_path):
    a = save_manifest(RunManifest("fit-decay", "h", 1, outputs={"b": "2", "a": "1"}), tmp_path / "a.json")
    b = save_manifest(RunManifest("fit-decay", "h", 1, outputs={"a": "1", "b": "2"}), tmp_path / "b.json")
    assert a.read_bytes() == b.read_bytes()


def test_invalid_manifest(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"outputs": {}}))
    with pytest.raises(InputDataError):
        load_manifest(path)
    path.write_text("{")
    with pytest.raises(InputDataError):
        load_manifest(path)
