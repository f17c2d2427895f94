"""Field dumps: a JSON header next to raw little-endian float64 data.

    <stem>.json  {"n", "res", "name", "dtype": "f64-le", "count"}
    <stem>.bin   row-major over the real coordinates (x1, y1[, x2, y2])
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import GridSpec, ScalarField

DTYPE = "f64-le"


class FieldFormatError(ValueError):
    pass


def dump_field(field: ScalarField, directory, name: str) -> Path:
    """Write ``name.json`` + ``name.bin`` into directory; returns the header path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = field.grid
    data = np.ascontiguousarray(field.full(), dtype="<f8")
    header = {"n": g.n, "res": g.res, "name": name, "dtype": DTYPE, "count": int(data.size)}
    (d / f"{name}.bin").write_bytes(data.tobytes(order="C"))
    path = d / f"{name}.json"
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def load_field(header_path) -> tuple[ScalarField, dict]:
    hp = Path(header_path)
    if hp.suffix != ".json":
        hp = hp.with_suffix(".json")
    try:
        header = json.loads(hp.read_text())
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"{hp}: bad header ({exc})") from None
    for key in ("n", "res", "name", "dtype", "count"):
        if key not in header:
            raise FieldFormatError(f"{hp}: header lacks '{key}'")
    if header["dtype"] != DTYPE:
        raise FieldFormatError(f"{hp}: unsupported dtype {header['dtype']!r}")
    grid = GridSpec(int(header["n"]), int(header["res"]))
    if header["count"] != grid.size:
        raise FieldFormatError(f"{hp}: count {header['count']} does not match grid size {grid.size}")
    raw = hp.with_suffix(".bin").read_bytes()
    if len(raw) != 8 * header["count"]:
        raise FieldFormatError(f"{hp}: payload holds {len(raw) // 8} values, header says {header['count']}")
    values = np.frombuffer(raw, dtype="<f8").astype(float).reshape(grid.shape)
    return ScalarField(grid, values), header
