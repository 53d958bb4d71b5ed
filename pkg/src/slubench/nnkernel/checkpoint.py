"""Versioned textual parameter container.

Layout (UTF-8, line oriented)::

    NNPARAMS 1
    CONFIG <one-line JSON, sorted keys>
    PARAM <name> <rows> <cols>
    <row-major values, space separated, shortest round-trip repr>
    ...

Parameters are written in sorted name order and floats with ``repr``,
so saving the same values twice yields byte-identical files and loading
restores them exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = "NNPARAMS"
VERSION = 1


def save_params(path: str | Path, values: dict[str, np.ndarray], config: dict) -> None:
    lines = [f"{MAGIC} {VERSION}", "CONFIG " + json.dumps(config, sort_keys=True)]
    for name in sorted(values):
        data = np.asarray(values[name], dtype=np.float64)
        lines.append(f"PARAM {name} {data.shape[0]} {data.shape[1]}")
        lines.append(" ".join(repr(float(v)) for v in data.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise FormatError(f"not a {MAGIC} container", 1)
    fields = lines[0].split(" ")
    if len(fields) != 2 or fields[1] != str(VERSION):
        raise FormatError(f"unsupported container version in {lines[0]!r}", 1)
    if len(lines) < 2 or not lines[1].startswith("CONFIG "):
        raise FormatError("missing CONFIG line", 2)
    config = json.loads(lines[1][len("CONFIG "):])

    values: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        header = lines[i].split(" ")
        if header[0] != "PARAM" or len(header) != 4:
            raise FormatError(f"expected PARAM header, got {lines[i]!r}", i + 1)
        name, rows, cols = header[1], int(header[2]), int(header[3])
        if i + 1 >= len(lines):
            raise FormatError(f"missing values for parameter {name!r}", i + 1)
        flat = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        if flat.size != rows * cols:
            raise FormatError(
                f"parameter {name!r}: expected {rows * cols} values, got {flat.size}", i + 2
            )
        values[name] = flat.reshape(rows, cols)
        i += 2
    return values, config
