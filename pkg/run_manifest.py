"""
Run manifest
Records the configuration echo, seed, library versions and a digest of
every artifact a run writes, and compares digests on replay
"""

import hashlib
import json
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import scipy

import config
from exceptions import ConfigError, ReplayMismatch

logger = logging.getLogger(__name__)

# fields that vary between otherwise identical runs
VOLATILE_KEYS = frozenset({"wall_time"})


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def strip_volatile(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: strip_volatile(v) for k, v in value.items() if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [strip_volatile(v) for v in value]
    return value


def artifact_digest(path: Union[str, Path]) -> str:
    """SHA-256 of a file; JSON documents are hashed canonically without wall_time."""
    path = Path(path)
    if path.suffix == '.json':
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        payload = canonical_json(strip_volatile(data)).encode('utf-8')
        return hashlib.sha256(payload).hexdigest()
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_json(data: Dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=_json_default)
    return path


def _json_default(value):
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


class RunManifest:
    """Provenance record for one output directory"""

    def __init__(self, out_dir: Union[str, Path], data: Optional[Dict] = None):
        self.out_dir = Path(out_dir)
        self.data = data or {
            "experiment": None,
            "config": "",
            "config_digest": "",
            "seed": None,
            "threads": None,
            "versions": library_versions(),
            "artifacts": {},
            "status": "running",
            "created_at": datetime.now().isoformat(),
            "updated_at": None,
        }

    @property
    def path(self) -> Path:
        return self.out_dir / config.MANIFEST_FILE

    @property
    def artifacts(self) -> Dict[str, str]:
        return self.data["artifacts"]

    def start(self, experiment: str, config_text: str, config_digest: str, seed: int, threads: int):
        self.data.update({
            "experiment": experiment,
            "config": config_text,
            "config_digest": config_digest,
            "seed": seed,
            "threads": threads,
            "status": "running",
        })
        self.save()

    def register(self, path: Union[str, Path]) -> str:
        """Add an artifact (inside out_dir) and return its digest."""
        path = Path(path)
        name = path.relative_to(self.out_dir).as_posix()
        digest = artifact_digest(path)
        self.artifacts[name] = digest
        logger.debug(f"Artifact {name}: {digest[:12]}")
        return digest

    def register_all(self, paths: List[Path]):
        for path in paths:
            self.register(path)

    def complete(self, status: str = "completed"):
        self.data["status"] = status
        self.save()

    def save(self):
        self.data['updated_at'] = datetime.now().isoformat()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.data, self.path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        """Load a manifest file (or the manifest inside a run directory)."""
        path = Path(path)
        if path.is_dir():
            path = path / config.MANIFEST_FILE
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load manifest: {e}", key="manifest")
        for key in ("config", "seed", "artifacts"):
            if key not in data:
                raise ConfigError(f"manifest lacks '{key}'", key="manifest")
        return cls(path.parent, data)

    def compare(self, other: "RunManifest"):
        """Raise ReplayMismatch at the first artifact whose digest differs from this manifest."""
        for name in sorted(self.artifacts):
            expected = self.artifacts[name]
            actual = other.artifacts.get(name)
            if actual != expected:
                raise ReplayMismatch(name, expected, actual or "<missing>")
        extra = sorted(set(other.artifacts) - set(self.artifacts))
        if extra:
            raise ReplayMismatch(extra[0], "<absent>", other.artifacts[extra[0]])
        logger.info(f"Replay reproduced {len(self.artifacts)} artifacts")
