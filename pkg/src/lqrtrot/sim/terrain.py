"""Terrain height and normal queries.

A heightfield stores heights at grid vertices.  Heights are sampled
bilinearly; normals are bilinear blends of per-vertex normals so both vary
continuously across cell seams.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class FlatTerrain:
    def __init__(self, height: float = 0.0):
        self.z = float(height)

    def height(self, x: float, y: float) -> float:
        return self.z

    def normal(self, x: float, y: float) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])


class Heightfield:
    """Vertex heights ``z[i, j]`` at ``(x0 + j*cell, y0 + i*cell)``.

    Queries outside the grid use the nearest edge values.
    """

    def __init__(self, z, cell: float, origin=(0.0, 0.0)):
        self.z = np.asarray(z, dtype=float)
        if self.z.ndim != 2 or min(self.z.shape) < 2:
            raise ValueError("heightfield needs at least a 2x2 grid")
        if cell <= 0:
            raise ValueError("cell size must be positive")
        self.cell = float(cell)
        self.x0, self.y0 = (float(o) for o in origin)
        gy, gx = np.gradient(self.z, self.cell)
        n = np.stack([-gx, -gy, np.ones_like(self.z)], axis=-1)
        self._vn = n / np.linalg.norm(n, axis=-1, keepdims=True)

    @property
    def shape(self):
        return self.z.shape

    def _locate(self, x, y):
        rows, cols = self.z.shape
        u = np.clip((x - self.x0) / self.cell, 0.0, cols - 1.0)
        v = np.clip((y - self.y0) / self.cell, 0.0, rows - 1.0)
        j = min(int(u), cols - 2)
        i = min(int(v), rows - 2)
        return i, j, u - j, v - i

    def _blend(self, F, x, y):
        i, j, a, b = self._locate(x, y)
        return ((1 - a) * (1 - b) * F[i, j] + a * (1 - b) * F[i, j + 1]
                + (1 - a) * b * F[i + 1, j] + a * b * F[i + 1, j + 1])

    def height(self, x: float, y: float) -> float:
        return float(self._blend(self.z, x, y))

    def normal(self, x: float, y: float) -> np.ndarray:
        n = self._blend(self._vn, x, y)
        return n / np.linalg.norm(n)

    # -------------------------------------------------------- file format

    def save(self, path) -> None:
        rows, cols = self.z.shape
        header = f"{rows} {cols} {self.cell!r} {self.x0!r} {self.y0!r}"
        np.savetxt(path, self.z, header=header, comments="", fmt="%.9g")

    @classmethod
    def load(cls, path) -> "Heightfield":
        """Plain-text grid: a ``rows cols cell [x0 y0]`` header, then rows of heights."""
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()
                 and not ln.lstrip().startswith("#")]
        try:
            head = lines[0].split()
            rows, cols, cell = int(head[0]), int(head[1]), float(head[2])
            origin = (float(head[3]), float(head[4])) if len(head) >= 5 else (0.0, 0.0)
            z = np.array([[float(t) for t in ln.split()] for ln in lines[1:]])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: malformed heightfield ({exc})") from exc
        if z.shape != (rows, cols):
            raise ValueError(f"{path}: header says {rows}x{cols}, data is {z.shape}")
        return cls(z, cell, origin)


def bumpy_terrain(seed: int, size=(12.0, 6.0), cell: float = 0.05, amplitude: float = 0.03,
                  origin=(-2.0, -3.0), bump_cells: int = 4) -> Heightfield:
    """Seeded random bumps of height at most ``amplitude``.

    Uniform random heights on a coarse lattice are upsampled bilinearly so
    bumps span several cells instead of forming single-vertex spikes.
    """
    rng = np.random.default_rng(seed)
    cols = int(round(size[0] / cell)) + 1
    rows = int(round(size[1] / cell)) + 1
    cr = rows // bump_cells + 2
    cc = cols // bump_cells + 2
    coarse = rng.uniform(0.0, amplitude, size=(cr, cc))
    iy = np.arange(rows) / bump_cells
    ix = np.arange(cols) / bump_cells
    i0 = np.floor(iy).astype(int)
    j0 = np.floor(ix).astype(int)
    b = (iy - i0)[:, None]
    a = (ix - j0)[None, :]
    z = ((1 - a) * (1 - b) * coarse[np.ix_(i0, j0)] + a * (1 - b) * coarse[np.ix_(i0, j0 + 1)]
         + (1 - a) * b * coarse[np.ix_(i0 + 1, j0)] + a * b * coarse[np.ix_(i0 + 1, j0 + 1)])
    return Heightfield(z, cell, origin)
