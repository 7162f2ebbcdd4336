"""
Field snapshot files.

Each snapshot is a raw little-endian float64 payload (`<name>.bin`) plus a
sidecar text header (`<name>.hdr`) with shape, spacing, origin and time.
"""
import logging
import os
from typing import Dict, Tuple

import numpy as np

from .errors import ConfigurationError
from .grids import Field2D, Grid2D

logger = logging.getLogger(__name__)

DTYPE = "<f8"


def snapshot_paths(directory: str, name: str) -> Tuple[str, str]:
    base = os.path.join(directory, name)
    return base + ".bin", base + ".hdr"


def write_field(directory: str, name: str, field: Field2D, t: float) -> str:
    """Write a snapshot and return the payload path."""
    os.makedirs(directory, exist_ok=True)
    bin_path, hdr_path = snapshot_paths(directory, name)

    grid = field.grid
    header = {
        "name": name,
        "dtype": "float64-le",
        "shape": f"{grid.n} {grid.n}",
        "spacing": repr(grid.h),
        "origin": repr(-grid.half_width),
        "time": repr(float(t)),
    }
    with open(hdr_path, "w") as f:
        for key, value in header.items():
            f.write(f"{key} = {value}\n")

    np.ascontiguousarray(field.values, dtype=DTYPE).tofile(bin_path)
    logger.debug(f"Wrote {bin_path} ({grid.n}x{grid.n}, t={t:.6g})")
    return bin_path


def read_header(hdr_path: str) -> Dict[str, str]:
    header = {}
    with open(hdr_path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
    for key in ("shape", "spacing", "origin", "time"):
        if key not in header:
            raise ConfigurationError(f"Snapshot header {hdr_path} is missing '{key}'")
    return header


def read_field(directory: str, name: str) -> Tuple[Field2D, float]:
    """Load a snapshot written by write_field; returns (field, time)."""
    bin_path, hdr_path = snapshot_paths(directory, name)
    header = read_header(hdr_path)

    shape = tuple(int(v) for v in header["shape"].split())
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ConfigurationError(f"Unsupported snapshot shape {shape}")
    n = shape[0]
    h = float(header["spacing"])
    grid = Grid2D(n=n, half_width=0.5 * n * h)

    values = np.fromfile(bin_path, dtype=DTYPE)
    if values.size != n * n:
        raise ConfigurationError(f"{bin_path} holds {values.size} values, header says {n}x{n}")
    return Field2D(values.reshape(shape).astype(float), grid), float(header["time"])
