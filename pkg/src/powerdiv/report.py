"""Report serialization: JSON with 17-digit floats, run manifests, embedded headers.

Every report file written by the command line carries the manifest of the run
that produced it. JSON reports store it under ``"manifest"``; CSV and text
reports start with a single ``# manifest {...}`` comment line.
"""
from __future__ import annotations

import datetime as _dt
import io
import json
import math
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__, kernels

MANIFEST_PREFIX = "# manifest "


def format_float(x: float) -> str:
    """17 significant digits; enough to round-trip any double."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + pad if indent else ", "
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        return "[" + pad + sep.join(_encode(v, indent, level + 1) for v in seq) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def utc_now() -> str:
    """ISO-8601 UTC timestamp; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        stamp = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        stamp = _dt.datetime.now(tz=_dt.timezone.utc)
    return stamp.replace(microsecond=0).isoformat()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    started: str = field(default_factory=utc_now)
    finished: str | None = None
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    backend: str = kernels.BACKEND

    def finish(self) -> "RunManifest":
        self.finished = utc_now()
        return self

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": dict(self.config),
            "version": self.version,
            "backend": self.backend,
            "seed": self.seed,
            "timestamps": {"started": self.started, "finished": self.finished},
            "outputs": list(self.outputs),
        }


def manifest_header(manifest: RunManifest) -> str:
    return MANIFEST_PREFIX + dumps(manifest.to_dict(), indent=0)


def read_manifest(path: str | Path) -> dict | None:
    """The manifest embedded in a report file, or ``None`` if it has none."""
    text = Path(path).read_text()
    if text.startswith(MANIFEST_PREFIX):
        return json.loads(text.splitlines()[0][len(MANIFEST_PREFIX):])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return None
    if isinstance(doc, dict) and isinstance(doc.get("manifest"), dict):
        return doc["manifest"]
    return None


def write_npz(path: str | Path, arrays: Mapping[str, np.ndarray]) -> None:
    """``np.load``-compatible archive with fixed member timestamps.

    ``np.savez`` stamps members with the wall clock, which would make two
    identical runs differ byte for byte.
    """
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())
