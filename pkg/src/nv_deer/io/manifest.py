"""
manifest.py - per-run manifest recording what produced each output file.

The manifest names the toolkit version, command, seed and config hash, and the sha256 of
every output written by the run. Its content depends only on the inputs, so two runs with
the same config and seed produce byte-identical manifests; wall-clock timing is recorded
only on request.

Example:
    manifest = RunManifest("simulate-deer3", cfg.config_hash, cfg.seed)
    manifest.add_output(path)
    save_manifest(manifest, out_dir / MANIFEST_NAME)
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from ..errors import InputDataError
from ..utils.log_utils import get_logger
from ..utils.utils import atomic_write_text, sha256_file

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"

# bump when the layout of result files changes
MANIFEST_VERSION = "1.0"


@dataclass
class RunManifest:
    """Structure of a run manifest."""

    command: str
    config_hash: Optional[str]
    seed: Optional[int]
    toolkit_version: str = ""
    version: str = MANIFEST_VERSION
    outputs: Dict[str, str] = field(default_factory=dict)
    timing: Dict[str, Any] = field(default_factory=dict)

    def add_output(self, path: Path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "toolkit_version": self.toolkit_version,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "outputs": dict(sorted(self.outputs.items())),
            "timing": dict(self.timing),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        if "version" not in data or "command" not in data:
            raise InputDataError("manifest lacks version or command")
        return cls(
            command=data["command"],
            config_hash=data.get("config_hash"),
            seed=data.get("seed"),
            toolkit_version=data.get("toolkit_version", ""),
            version=data["version"],
            outputs=dict(data.get("outputs", {})),
            timing=dict(data.get("timing", {})),
        )


def load_manifest(path: Path) -> RunManifest:
    """Load a manifest from disk (JSON)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InputDataError(f"Failed to load manifest {path}: {e}") from e
    manifest = RunManifest.from_dict(data)
    if manifest.version != MANIFEST_VERSION:
        logger.warning(f"Manifest {path} has version {manifest.version}, expected {MANIFEST_VERSION}")
    return manifest


def save_manifest(manifest: RunManifest, path: Path) -> Path:
    """Persist the manifest as JSON."""
    text = json.dumps(manifest.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    return atomic_write_text(path, text)


def verify_outputs(manifest: RunManifest, directory: Path) -> Dict[str, bool]:
    """Recompute hashes of the listed outputs; missing files count as mismatches."""
    status = {}
    for name, digest in manifest.outputs.items():
        path = Path(directory) / name
        status[name] = path.is_file() and sha256_file(path) == digest
    return status
