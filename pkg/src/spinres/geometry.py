"""Film geometry: simulation grid, material maps, and readout regions.

The device is a thin rectangular garnet film discretized into square cells.
A high-damping frame along the film edge absorbs outgoing spin waves, two
circular input electrodes sit at opposite corners of the low-damping
interior, and rectangular central regions define where output electrodes
may be placed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

MU0 = 4e-7 * math.pi  # vacuum permeability, T m / A

# region codes
INTERIOR = 0
DAMPER = 1
ELECTRODE_1 = 2
ELECTRODE_2 = 3


@dataclass(frozen=True)
class GridSpec:
    """Uniform 2D cell grid of a thin film (single layer through thickness)."""

    nx: int = 220
    ny: int = 220
    cell_size: float = 10e-9  # m
    thickness: float = 100e-9  # m

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GeometryError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if self.cell_size <= 0 or self.thickness <= 0:
            raise GeometryError("cell_size and thickness must be positive")

    @property
    def cell_volume(self) -> float:
        return self.cell_size * self.cell_size * self.thickness

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class MaterialParams:
    """Material constants and frame/electrode dimensions.

    Defaults are the garnet-film profile: Ms = 100 kA/m, A_ex = 3.6 pJ/m,
    uniaxial anisotropy 10 kJ/m^3 at rest modulated down to 1 kJ/m^3 under
    the input electrodes, 0.03 kA/m external field along z, damping 0.001
    in the interior and 1.0 in the absorbing frame.
    """

    ms: float = 100e3  # A/m
    a_ex: float = 3.6e-12  # J/m
    ku_high: float = 10e3  # J/m^3
    ku_low: float = 1e3  # J/m^3
    h_ext: float = 30.0  # A/m, along +z
    alpha_interior: float = 1e-3
    alpha_damper: float = 1.0
    damper_width: float = 0.1e-6  # m
    electrode_diameter: float = 0.2e-6  # m
    # in-plane input-coupling field at the electrode cells, scaled by the
    # instantaneous anisotropy modulation depth. The local demag
    # approximation drops the dipolar in-plane components that couple the
    # anisotropy drive to transverse dynamics in the full model; this term
    # restores that coupling. Zero whenever the drive is idle.
    drive_inplane: float = 1e3  # A/m

    def __post_init__(self):
        if self.ms <= 0 or self.a_ex <= 0:
            raise GeometryError("ms and a_ex must be positive")
        if self.ku_high < self.ku_low:
            raise GeometryError("ku_high must be >= ku_low")


@dataclass(frozen=True)
class Rect:
    """Axis-aligned cell rectangle; x0/y0 inclusive, w/h in cells."""

    x0: int
    y0: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x0 + self.w  # exclusive

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    def contains(self, ix: int, iy: int) -> bool:
        return self.x0 <= ix < self.x1 and self.y0 <= iy < self.y1

    def cells(self) -> np.ndarray:
        """All (ix, iy) pairs row-major: y outer, x inner."""
        ys, xs = np.mgrid[self.y0 : self.y1, self.x0 : self.x1]
        return np.column_stack([xs.ravel(), ys.ravel()])


@dataclass(frozen=True)
class RegionSpec:
    """Readout regions: the central full-readout square, the compartment
    area, and its nine tiling compartments (numbered 1..9 row-major from
    the top-left)."""

    full_readout: Rect
    compartment_area: Rect
    compartments: tuple[Rect, ...]

    def compartment(self, k: int) -> Rect:
        if not 1 <= k <= 9:
            raise GeometryError(f"compartment index must be in 1..9, got {k}")
        return self.compartments[k - 1]


@dataclass
class MaterialMap:
    """Per-cell static material data plus region labels.

    alpha, ku_base and region are (ny, nx) arrays indexed [iy, ix].
    Electrode cells keep the interior damping; only their anisotropy is
    modulated by the drive.
    """

    grid: GridSpec
    params: MaterialParams
    alpha: np.ndarray
    ku_base: np.ndarray
    region: np.ndarray
    electrode_iy: np.ndarray = field(repr=False, default=None)
    electrode_ix: np.ndarray = field(repr=False, default=None)

    @property
    def interior_rect(self) -> Rect:
        d = damper_cells(self.grid, self.params)
        return Rect(d, d, self.grid.nx - 2 * d, self.grid.ny - 2 * d)

    def electrode_cells(self, which: int | None = None) -> np.ndarray:
        """(ix, iy) pairs of input-electrode cells; which in {1, 2} or both."""
        if which is None:
            mask = self.region >= ELECTRODE_1
        else:
            mask = self.region == (ELECTRODE_1 if which == 1 else ELECTRODE_2)
        iy, ix = np.nonzero(mask)
        return np.column_stack([ix, iy])


@dataclass
class SpinField:
    """Unit magnetization direction per cell, stored as separate component
    planes (sx, sy, sz) for stencil-friendly access."""

    grid: GridSpec
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    def copy(self) -> "SpinField":
        return SpinField(self.grid, self.sx.copy(), self.sy.copy(), self.sz.copy())

    def norms(self) -> np.ndarray:
        return np.sqrt(self.sx**2 + self.sy**2 + self.sz**2)

    def max_norm_error(self) -> float:
        return float(np.max(np.abs(self.norms() - 1.0)))


def damper_cells(grid: GridSpec, params: MaterialParams) -> int:
    return int(round(params.damper_width / grid.cell_size))


def electrode_centers(grid: GridSpec, params: MaterialParams) -> list[tuple[float, float]]:
    """Physical electrode centers (m): one disk radius inside each of the
    top-left and bottom-right corners of the low-damping interior, so the
    disks sit entirely in the interior."""
    r = params.electrode_diameter / 2.0
    lo = params.damper_width + r
    hx = grid.nx * grid.cell_size - lo
    hy = grid.ny * grid.cell_size - lo
    return [(lo, lo), (hx, hy)]


def build_geometry(grid: GridSpec, params: MaterialParams | None = None) -> MaterialMap:
    """Assemble the per-cell material map: absorbing frame, interior, and
    the two input-electrode disks (cell-center-in-disk membership)."""
    params = params or MaterialParams()
    if grid.nx < 40 or grid.ny < 40:
        raise GeometryError(
            f"grid {grid.nx}x{grid.ny} too small for damper frame plus electrodes; "
            "need at least 40x40 cells"
        )
    d = damper_cells(grid, params)
    if d < 1:
        raise GeometryError("damper frame thinner than one cell")

    region = np.full((grid.ny, grid.nx), INTERIOR, dtype=np.int8)
    region[:d, :] = DAMPER
    region[-d:, :] = DAMPER
    region[:, :d] = DAMPER
    region[:, -d:] = DAMPER

    # cell centers
    xc = (np.arange(grid.nx) + 0.5) * grid.cell_size
    yc = (np.arange(grid.ny) + 0.5) * grid.cell_size
    xx, yy = np.meshgrid(xc, yc)

    r = params.electrode_diameter / 2.0
    for code, (ex, ey) in zip((ELECTRODE_1, ELECTRODE_2), electrode_centers(grid, params)):
        disk = (xx - ex) ** 2 + (yy - ey) ** 2 <= r * r
        if np.any(disk & (region == DAMPER)):
            raise GeometryError("input electrode overlaps the damper frame")
        region[disk] = code

    alpha = np.where(region == DAMPER, params.alpha_damper, params.alpha_interior)
    ku_base = np.full((grid.ny, grid.nx), params.ku_high, dtype=np.float64)

    eiy, eix = np.nonzero(region >= ELECTRODE_1)
    return MaterialMap(
        grid=grid,
        params=params,
        alpha=alpha.astype(np.float64),
        ku_base=ku_base,
        region=region,
        electrode_iy=eiy.astype(np.int64),
        electrode_ix=eix.astype(np.int64),
    )


def build_regions(grid: GridSpec, params: MaterialParams | None = None) -> RegionSpec:
    """Readout regions derived from the interior: the full-readout square
    keeps a 0.2 um margin from the interior edge, the compartment area a
    0.1 um margin (trimmed to a multiple of three so nine equal
    compartments tile it exactly)."""
    params = params or MaterialParams()
    d = damper_cells(grid, params)
    m_full = int(round(0.2e-6 / grid.cell_size))
    m_comp = int(round(0.1e-6 / grid.cell_size))

    fw = grid.nx - 2 * (d + m_full)
    fh = grid.ny - 2 * (d + m_full)
    if fw <= 0 or fh <= 0:
        raise GeometryError("grid too small for the central readout region")
    full = Rect(d + m_full, d + m_full, fw, fh)

    cw = grid.nx - 2 * (d + m_comp)
    ch = grid.ny - 2 * (d + m_comp)
    cw -= cw % 3
    ch -= ch % 3
    if cw <= 0 or ch <= 0:
        raise GeometryError("grid too small for the compartment area")
    cx0 = (grid.nx - cw) // 2
    cy0 = (grid.ny - ch) // 2
    area = Rect(cx0, cy0, cw, ch)

    tw, th = cw // 3, ch // 3
    comps = tuple(
        Rect(cx0 + col * tw, cy0 + row * th, tw, th)
        for row in range(3)
        for col in range(3)
    )
    return RegionSpec(full_readout=full, compartment_area=area, compartments=comps)


def initial_state(mat: MaterialMap) -> SpinField:
    """Uniform out-of-plane state s = (0, 0, 1)."""
    shape = (mat.grid.ny, mat.grid.nx)
    return SpinField(
        grid=mat.grid,
        sx=np.zeros(shape),
        sy=np.zeros(shape),
        sz=np.ones(shape),
    )
