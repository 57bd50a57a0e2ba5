"""Fluid-antenna aperture geometry: uniform 1D segments and 2D grids.

All positions are expressed in wavelengths (the carrier wavelength is
normalized to 1), so spatial correlation depends only on port distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FasGeometry:
    """Port layout of a fluid antenna aperture.

    ``positions`` has shape (K, dimension) with coordinates in wavelengths.
    """

    dimension: int
    num_ports: int
    aperture: tuple[float, ...]
    grid_shape: tuple[int, ...]
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        self.positions.setflags(write=False)

    @property
    def port_spacing(self) -> tuple[float, ...]:
        """Inter-port spacing per occupied axis, in wavelengths."""
        return tuple(
            w / (k - 1) for w, k in zip(self.aperture, self.grid_shape) if k > 1
        )

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "num_ports": self.num_ports,
            "aperture": list(self.aperture),
            "grid_shape": list(self.grid_shape),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FasGeometry":
        if d["dimension"] == 1:
            return build_geometry(1, num_ports=d["num_ports"], aperture=d["aperture"][0])
        return build_geometry(
            2, grid_shape=tuple(d["grid_shape"]), aperture=tuple(d["aperture"])
        )


def build_geometry(
    dimension: int,
    num_ports: int | None = None,
    grid_shape: tuple[int, int] | None = None,
    aperture: float | tuple[float, float] | None = None,
) -> FasGeometry:
    """Build a uniformly spaced 1D or 2D port layout.

    1D: ``num_ports`` ports at x_k = (k-1)/(K-1) * W for k = 1..K.
    2D: a ``grid_shape`` = (K_x, K_y) grid over a W_x x W_y rectangle,
    ports ordered by raster scan (row-major over the grid).
    """
    if dimension == 1:
        if num_ports is None or aperture is None:
            raise ValueError("1D geometry requires num_ports and aperture")
        k, w = int(num_ports), float(aperture)
        if w <= 0:
            raise ValueError(f"aperture must be positive, got {w}")
        if k < 2:
            raise ValueError(f"need at least 2 ports on an occupied axis, got K={k}")
        x = np.arange(k, dtype=float) / (k - 1) * w
        return FasGeometry(1, k, (w,), (k,), x[:, None])

    if dimension == 2:
        if grid_shape is None or aperture is None:
            raise ValueError("2D geometry requires grid_shape and aperture")
        kx, ky = (int(v) for v in grid_shape)
        wx, wy = (float(v) for v in aperture)
        if wx <= 0 or wy <= 0:
            raise ValueError(f"apertures must be positive, got ({wx}, {wy})")
        if kx < 2 or ky < 2:
            raise ValueError(
                f"need at least 2 ports per occupied axis, got ({kx}, {ky})"
            )
        x = np.arange(kx, dtype=float) / (kx - 1) * wx
        y = np.arange(ky, dtype=float) / (ky - 1) * wy
        # Raster order: port (i, j) -> flat index (i-1)*K_y + (j-1).
        xx, yy = np.meshgrid(x, y, indexing="ij")
        pos = np.stack([xx.ravel(), yy.ravel()], axis=1)
        return FasGeometry(2, kx * ky, (wx, wy), (kx, ky), pos)

    raise ValueError(f"dimension must be 1 or 2, got {dimension}")


def raster_index_2d(grid_shape: tuple[int, int]):
    """Bijection between grid cells (i, j) and flat port indices.

    Returns (to_flat, to_grid): 1-based grid coordinates map to 1-based
    flat indices k = (i-1)*K_y + j.
    """
    kx, ky = grid_shape

    def to_flat(i: int, j: int) -> int:
        if not (1 <= i <= kx and 1 <= j <= ky):
            raise ValueError(f"cell ({i}, {j}) outside {kx}x{ky} grid")
        return (i - 1) * ky + j

    def to_grid(k: int) -> tuple[int, int]:
        if not (1 <= k <= kx * ky):
            raise ValueError(f"port {k} outside 1..{kx * ky}")
        return (k - 1) // ky + 1, (k - 1) % ky + 1

    return to_flat, to_grid
