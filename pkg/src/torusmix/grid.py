"""Cell-centred scalar grids on the torus and their on-disk formats.

``values[a, b]`` is the sample at ``x = ((a + 1/2)/N, (b + 1/2)/N)``: axis 0
runs along ``x1`` and axis 1 along ``x2``. The TMXF payload stores this
array in C (row-major) order.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = ["GridField", "cell_centers", "exact_cell_centers", "lp_norm", "mass",
           "write_tmxf", "read_tmxf", "tmxf_bytes", "grid_csv", "TMXF_MAGIC", "TMXF_VERSION"]

TMXF_MAGIC = b"TMXF"
TMXF_VERSION = 1


def cell_centers(N: int) -> np.ndarray:
    g = (np.arange(N) + 0.5) / N
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)


def exact_cell_centers(N: int):
    """Cell centres as ``(Fraction, Fraction)`` pairs, in ``values`` order."""
    g = [Fraction(2 * a + 1, 2 * N) for a in range(N)]
    return [(u, v) for u in g for v in g]


@dataclass
class GridField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("grid field must be a square 2-d array")
        self.values = v

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def norm(self, p) -> float:
        return lp_norm(self, p)

    def variance(self) -> float:
        return float(np.mean((self.values - self.values.mean()) ** 2))

    def copy(self) -> "GridField":
        return GridField(self.values.copy())


def _vals(f):
    return f.values if isinstance(f, GridField) else np.asarray(f, dtype=float)


def lp_norm(f, p) -> float:
    """Cell-centre quadrature of the ``L^p`` norm, ``p`` in ``{1, 2, inf}``."""
    v = _vals(f)
    if p in (np.inf, "inf", float("inf")):
        return float(np.max(np.abs(v)))
    if p == 1:
        return float(np.mean(np.abs(v)))
    if p == 2:
        return float(np.sqrt(np.mean(v * v)))
    raise ValueError(f"unsupported exponent {p!r}")


def mass(f) -> float:
    return float(np.mean(_vals(f)))


def tmxf_bytes(f) -> bytes:
    v = np.ascontiguousarray(_vals(f), dtype="<f8")
    return TMXF_MAGIC + struct.pack("<II", TMXF_VERSION, v.shape[0]) + v.tobytes(order="C")


def write_tmxf(path, f) -> None:
    Path(path).write_bytes(tmxf_bytes(f))


def read_tmxf(path) -> GridField:
    raw = Path(path).read_bytes()
    if raw[:4] != TMXF_MAGIC:
        raise ValueError("not a TMXF file")
    version, N = struct.unpack("<II", raw[4:12])
    if version != TMXF_VERSION:
        raise ValueError(f"unsupported TMXF version {version}")
    payload = raw[12:]
    if len(payload) != 8 * N * N:
        raise ValueError("truncated TMXF payload")
    return GridField(np.frombuffer(payload, dtype="<f8").reshape(N, N).copy())


def grid_csv(f) -> str:
    """Small-grid CSV export: ``a, b, x1, x2, value`` per cell."""
    v = _vals(f)
    N = v.shape[0]
    buf = io.StringIO()
    buf.write("a,b,x1,x2,value\n")
    for a in range(N):
        for b in range(N):
            buf.write(f"{a},{b},{(a + 0.5) / N!r},{(b + 0.5) / N!r},{float(v[a, b])!r}\n")
    return buf.getvalue()
