"""Canonical report serialization and run manifests.

Reports are JSON with sorted keys and floats rounded to 9 significant digits,
so identical results give identical bytes on any platform.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from pathlib import Path
from typing import Any

FLOAT_DIGITS = 9


def canonical_float(x: float) -> float | str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{FLOAT_DIGITS}g}")


def canonicalize(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, enum.Enum):
        return canonicalize(obj.value)
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        return canonical_float(obj)
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return canonicalize(obj.item())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return canonicalize(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): canonicalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonicalize(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [canonicalize(v) for v in sorted(obj)]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(canonicalize(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_text(path: str | Path, text: str) -> str:
    """Write ``text`` and return its sha256."""
    data = text.encode()
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def emit_report(result: Any, path: str | Path) -> str:
    """Write a pipeline result (anything with ``to_doc()`` or plain data)."""
    doc = result.to_doc() if hasattr(result, "to_doc") else result
    return write_text(path, dumps(doc))


@dataclasses.dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    seed: int | None = None
    config: dict = dataclasses.field(default_factory=dict)
    inputs: dict[str, str] = dataclasses.field(default_factory=dict)
    outputs: dict[str, str] = dataclasses.field(default_factory=dict)
    wall_time_s: float = 0.0
    cpu_time_s: float = 0.0

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path, digest: str | None = None) -> None:
        self.outputs[str(path)] = digest or sha256_file(path)

    def write(self, path: str | Path) -> None:
        write_text(path, dumps(self))
