"""Run artifacts on disk: JSON summaries, diagnostics CSV and binary field snapshots.

Snapshot layout (little endian):
    b"FNLS" | u32 version | u32 d | u32 n | f64 L | f64 s | f64 alpha | n^d complex128 values
"""
import json
import logging
import math
import struct
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from models.exceptions import StructuralError
from models.schemas import PhysicsParams
from utils.spectral import Field, Grid

logger = logging.getLogger('ArtifactStore')

SNAPSHOT_MAGIC = b"FNLS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")

DIAGNOSTIC_COLUMNS = ["t", "mass", "energy", "K", "hs_norm", "l_alpha2_norm", "exterior_mass_R",
                      "V_psi", "M_phi", "dM_dt_rhs", "mass_drift", "alias_tail"]


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null"""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Field):
        return {"grid": to_jsonable(value.grid), "accuracy_flags": list(value.accuracy_flags)}
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(data: Dict[str, Any], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(rows: Sequence[Dict[str, float]], path, columns: Sequence[str] = None) -> Path:
    """Rows as CSV with 17 significant digits and '.' decimals"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(list(rows), columns=list(columns or DIAGNOSTIC_COLUMNS))
    df.to_csv(path, index=False, float_format='%.17g', lineterminator="\n")
    logger.debug(f"Wrote {len(df)} rows to {path}")
    return path


def read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_snapshot(field: Field, params: PhysicsParams, path) -> Path:
    grid = field.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim, grid.points_per_dim,
                          grid.half_length, params.s, params.alpha)
    payload = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(payload)
    return path


def read_snapshot(path) -> Tuple[Field, float, float]:
    """Field plus the (s, alpha) it was written with"""
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise StructuralError(f"{path}: truncated snapshot header")
    magic, version, dim, n, half_length, s, alpha = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise StructuralError(f"{path}: not a field snapshot (magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise StructuralError(f"{path}: unsupported snapshot version {version}")
    grid = Grid(dim, n, half_length)
    expected = _HEADER.size + 16 * grid.size
    if len(data) != expected:
        raise StructuralError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(grid.shape)
    return Field(grid, values=values), s, alpha
