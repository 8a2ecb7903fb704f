"""Binary and CSV export of solved grids.

HYPGRID1 container layout (all little-endian):

    bytes 0..7    magic b"HYPGRID1"
    int64         N            nodes per axis
    float64       R            half width
    int64         F            number of field blocks that follow
    int64         m            punctures in the table
    m * 4 float64 puncture table: re, im, theta, eps
                  (the point at infinity carries re = im = +inf, eps = nan)
    F * N*N float64 field values, row major

A plain solve dumps one field (u); deformation dumps use three (E, F, G).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"HYPGRID1"


@dataclass(frozen=True)
class GridDump:
    half_width: float
    punctures: tuple[tuple[float, float, float, float], ...]  # re, im, theta, eps
    fields: tuple[np.ndarray, ...]

    @property
    def resolution(self) -> int:
        return self.fields[0].shape[0]


def write_grid_dump(path, dump: GridDump) -> None:
    N = dump.resolution
    for f in dump.fields:
        if f.shape != (N, N):
            raise ValueError("all field blocks must be N x N")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<q", N))
        fh.write(struct.pack("<d", dump.half_width))
        fh.write(struct.pack("<q", len(dump.fields)))
        fh.write(struct.pack("<q", len(dump.punctures)))
        for re, im, th, eps in dump.punctures:
            fh.write(struct.pack("<dddd", re, im, th, eps))
        for f in dump.fields:
            fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_grid_dump(path) -> GridDump:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"not a HYPGRID1 file (magic {magic!r})")
        (N,) = struct.unpack("<q", fh.read(8))
        (R,) = struct.unpack("<d", fh.read(8))
        (F,) = struct.unpack("<q", fh.read(8))
        (m,) = struct.unpack("<q", fh.read(8))
        punctures = tuple(struct.unpack("<dddd", fh.read(32)) for _ in range(m))
        fields = []
        for _ in range(F):
            buf = fh.read(8 * N * N)
            if len(buf) != 8 * N * N:
                raise ValueError("truncated HYPGRID1 file")
            fields.append(np.frombuffer(buf, dtype="<f8").reshape(N, N).copy())
    return GridDump(R, punctures, tuple(fields))


def write_grid_csv(path, axis: np.ndarray, values: np.ndarray, header: str = "x,y,u") -> None:
    """Long-form CSV: one row per node."""
    N = len(axis)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(N):
            xi = axis[i]
            for j in range(N):
                fh.write(f"{xi!r},{axis[j]!r},{values[i, j]!r}\n")
