"""Sample grids for the PDE solver: uniform N x N lattices over [-R, R]^2
with puncture excisions and an outer-disk boundary.

Masks partition the nodes into interior (unknowns), excised (inside a
puncture disk, where the grafted model is used verbatim) and exterior
(outside the disk |z| = R, covered by the far-field model).  The marked
point at infinity is handled by the far field, never excised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import is_infinity, point_to_complex
from .surfaces import Configuration

INTERIOR, EXCISED, EXTERIOR = 0, 1, 2


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry: half-width R, N nodes per axis, per-point excision
    radii (None at the infinity slot)."""

    half_width: float
    resolution: int
    excision_radii: tuple[float | None, ...]

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("grid too small to be useful (N < 16)")
        if self.half_width <= 0:
            raise ValueError("half width must be positive")
        h = self.spacing
        for e in self.excision_radii:
            if e is not None and e < 4.0 * h * (1 - 1e-12):
                raise ValueError(
                    f"excision radius {e} under 4 cells (h = {h}); refine the grid"
                )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.resolution

    def axis(self) -> np.ndarray:
        # N cell centres; punctures at rational points never collide with them
        h = self.spacing
        return -self.half_width + h * (np.arange(self.resolution) + 0.5)


def default_grid_spec(
    cfg: Configuration,
    resolution: int = 512,
    half_width: float | None = None,
    eps_cells: float = 4.0,
) -> GridSpec:
    """Reasonable defaults: R covers the finite punctures with the mandated
    margin, excisions sit at `eps_cells` cells."""
    finite = [point_to_complex(p.position) for p in cfg.points if not is_infinity(p.position)]
    if not finite:
        raise ValueError("need at least one finite marked point")
    extent = max(max(abs(z.real), abs(z.imag)) for z in finite)
    if half_width is None:
        half_width = max(4.0, 2.5 * extent + 2.0)
    if extent >= half_width / 2:
        raise ValueError(
            f"finite punctures must lie inside (-R/2, R/2)^2; R = {half_width}, extent {extent}"
        )
    h = 2.0 * half_width / resolution
    radii: list[float | None] = []
    for p in cfg.points:
        radii.append(None if is_infinity(p.position) else eps_cells * h)
    return GridSpec(half_width, resolution, tuple(radii))


@dataclass
class Grid:
    """Realised lattice: coordinates, masks, and the interior index map."""

    spec: GridSpec
    cfg: Configuration
    x: np.ndarray = field(init=False)
    z: np.ndarray = field(init=False)
    mask: np.ndarray = field(init=False)
    interior: np.ndarray = field(init=False)
    index: np.ndarray = field(init=False)
    n_interior: int = field(init=False)

    def __post_init__(self):
        N = self.spec.resolution
        ax = self.spec.axis()
        self.x = ax
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        self.z = X + 1j * Y
        absz = np.abs(self.z)
        mask = np.full((N, N), INTERIOR, dtype=np.int8)
        mask[absz >= self.spec.half_width] = EXTERIOR
        # the array's outermost ring never carries unknowns (stencil support)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = EXTERIOR
        for p, e in zip(self.cfg.points, self.spec.excision_radii):
            if e is None:
                continue
            zp = point_to_complex(p.position)
            mask[np.abs(self.z - zp) < e] = EXCISED
        self.mask = mask
        self.interior = mask == INTERIOR
        self.index = -np.ones((N, N), dtype=np.int64)
        self.n_interior = int(self.interior.sum())
        self.index[self.interior] = np.arange(self.n_interior)

    @property
    def h(self) -> float:
        return self.spec.spacing

    def finite_punctures(self) -> list[tuple[int, complex, float]]:
        """(config index, position, excision radius) for the finite points."""
        out = []
        for i, (p, e) in enumerate(zip(self.cfg.points, self.spec.excision_radii)):
            if e is not None:
                out.append((i, point_to_complex(p.position), e))
        return out


@dataclass(frozen=True)
class GridField:
    """Real values sampled on a grid, masked like the grid itself."""

    values: np.ndarray
    mask: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")
        if not np.all(np.isfinite(self.values[self.mask == INTERIOR])):
            raise ValueError("non-finite values on interior nodes")

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    def sup_interior(self) -> float:
        return float(np.max(np.abs(self.values[self.interior])))
