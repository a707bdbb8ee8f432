"""
utils.py: small shared helpers (unit factors, hashing, atomic writes, seeding).
"""

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

# unit factors into SI (or CGS where noted)
US = 1e-6
NS = 1e-9
MHZ = 1e6
KHZ = 1e3
GHZ = 1e9
NM_TO_CM = 1e-7
TWO_PI = 2.0 * np.pi


def angular(freq_hz: float) -> float:
    """Cyclic frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * freq_hz


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write ``text`` to ``path`` through a temporary file in the same directory and an
    ``os.replace``, so readers never observe a partially written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for a (master seed, key...) tuple."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *keys))


def is_strictly_monotone(values: Iterable[float]) -> bool:
    arr = np.asarray(list(values), dtype=float)
    if arr.size < 2:
        return True
    steps = np.diff(arr)
    return bool(np.all(steps > 0) or np.all(steps < 0))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 32-bit integer seed for a (master seed, key...) tuple."""
    return int(seed_sequence(seed, *keys).generate_state(1)[0])
