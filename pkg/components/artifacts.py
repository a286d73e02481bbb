"""
결과물 저장 (Run artifacts)
Atomic JSON/CSV writers and the run manifest written beside every output
"""

import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.json"


def _atomic_write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(data) -> str:
    """Canonical layout: sorted keys, 2-space indent, trailing newline"""
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_json(path: PathLike, data) -> Path:
    return _atomic_write_text(path, dumps_json(data))


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    return _atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def write_text(path: PathLike, text: str) -> Path:
    return _atomic_write_text(path, text)


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Provenance of one CLI run"""
    command: str
    tool_version: str
    seed: Optional[int] = None
    config_path: Optional[str] = None
    config_hash: Optional[str] = None
    inputs: Dict[str, str] = field(default_factory=dict)      # path → sha256
    outputs: Dict[str, str] = field(default_factory=dict)     # path → sha256
    wall_time_s: List[float] = field(default_factory=list)

    def add_input(self, path: PathLike) -> None:
        self.inputs[str(path)] = file_sha256(path)

    def add_output(self, path: PathLike) -> None:
        self.outputs[str(path)] = file_sha256(path)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir: PathLike) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, self.to_dict())


def verify_manifest(path: PathLike) -> List[str]:
    """Paths whose current hash no longer matches the manifest"""
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    stale = []
    for entry in ("inputs", "outputs"):
        for file_path, digest in manifest.get(entry, {}).items():
            if not Path(file_path).exists() or file_sha256(file_path) != digest:
                stale.append(file_path)
    return stale
