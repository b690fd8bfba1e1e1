"""Output-electrode arrangements inside the central readout region.

Every generator returns distinct single-cell positions, all strictly
inside the permitted region: the central readout square for grid,
circular, random and full arrangements, or one of the nine compartments
for the compartment-local grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import Rect, RegionSpec

FULL = "FULL"
GRID = "GRID"
CIRCLE = "CIRCLE"
RANDOM = "RANDOM"
COMPARTMENT = "COMPARTMENT"

# single circle up to this count, two concentric circles above
_SINGLE_CIRCLE_MAX = 25
_R_SINGLE = 0.4
_R_INNER, _R_OUTER = 0.25, 0.45


@dataclass(frozen=True)
class ElectrodeSet:
    """Ordered output-electrode cell positions."""

    positions: np.ndarray  # (n_o, 2) int64, (ix, iy)
    arrangement: str
    seed: int | None = None
    compartment: int | None = None

    @property
    def n_o(self) -> int:
        return len(self.positions)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if len(np.unique(pos, axis=0)) != len(pos):
            raise GeometryError("electrode positions must be distinct")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_square(n_o: int, limit: int) -> int:
    if n_o < 1:
        raise GeometryError(f"electrode count must be positive, got {n_o}")
    m = math.isqrt(n_o)
    if m * m != n_o:
        raise GeometryError(
            f"grid arrangement needs a perfect-square electrode count, got {n_o} "
            f"(nearest squares: {m * m} and {(m + 1) ** 2})"
        )
    if n_o > limit:
        raise GeometryError(f"electrode count {n_o} exceeds the region capacity {limit}")
    return m


def _grid_in_rect(rect: Rect, n_o: int, arrangement: str, compartment=None) -> ElectrodeSet:
    m = _check_square(n_o, rect.w * rect.h)
    # lattice at the L/(sqrt(N)+1) interval, offsets rounded half-up
    offs_x = [_round_half_up((i + 1) * rect.w / (m + 1)) for i in range(m)]
    offs_y = [_round_half_up((j + 1) * rect.h / (m + 1)) for j in range(m)]
    pos = [(rect.x0 + ox, rect.y0 + oy) for oy in offs_y for ox in offs_x]
    return ElectrodeSet(
        positions=np.array(pos, dtype=np.int64),
        arrangement=arrangement,
        compartment=compartment,
    )


def grid_layout(region: RegionSpec, n_o: int) -> ElectrodeSet:
    """Square lattice in the central readout region; n_o a perfect square
    up to 289. Interval follows region_width / (sqrt(n_o) + 1)."""
    if n_o > 289:
        raise GeometryError(f"grid arrangement supports up to 289 electrodes, got {n_o}")
    return _grid_in_rect(region.full_readout, n_o, GRID)


def circle_layout(region: RegionSpec, n_o: int) -> ElectrodeSet:
    """Equiangular points on one centered circle (n_o <= 25) or two
    concentric circles, points split proportionally to circumference.
    Rounding collisions are resolved by nudging a point one cell outward."""
    if n_o < 3:
        raise GeometryError(f"circular arrangement needs at least 3 electrodes, got {n_o}")
    rect = region.full_readout
    cx = rect.x0 + (rect.w - 1) / 2.0
    cy = rect.y0 + (rect.h - 1) / 2.0
    scale = min(rect.w, rect.h)

    rings: list[tuple[float, int]] = []
    if n_o <= _SINGLE_CIRCLE_MAX:
        rings.append((_R_SINGLE * scale, n_o))
    else:
        n_inner = int(round(n_o * _R_INNER / (_R_INNER + _R_OUTER)))
        rings.append((_R_INNER * scale, n_inner))
        rings.append((_R_OUTER * scale, n_o - n_inner))

    taken: set[tuple[int, int]] = set()
    pos = []
    for radius, count in rings:
        for k in range(count):
            ang = 2.0 * math.pi * k / count
            r = radius
            while True:
                p = (
                    _round_half_up(cx + r * math.cos(ang)),
                    _round_half_up(cy + r * math.sin(ang)),
                )
                if p not in taken:
                    break
                r += 1.0  # nudge outward until the cell is free
            if not rect.contains(*p):
                raise GeometryError("circular point landed outside the readout region")
            taken.add(p)
            pos.append(p)
    return ElectrodeSet(positions=np.array(pos, dtype=np.int64), arrangement=CIRCLE)


def random_layout(region: RegionSpec, n_o: int, seed: int) -> ElectrodeSet:
    """Uniform sample without replacement over the readout region."""
    rect = region.full_readout
    n_cells = rect.w * rect.h
    if n_o > n_cells:
        raise GeometryError(f"cannot place {n_o} electrodes in {n_cells} cells")
    rng = np.random.default_rng(seed)
    flat = rng.choice(n_cells, size=n_o, replace=False)
    pos = np.column_stack([rect.x0 + flat % rect.w, rect.y0 + flat // rect.w])
    return ElectrodeSet(positions=pos.astype(np.int64), arrangement=RANDOM, seed=seed)


def compartment_layout(region: RegionSpec, k: int, n_o: int) -> ElectrodeSet:
    """Square lattice confined to compartment k (1..9, row-major from the
    top-left; 5 is the chip center)."""
    rect = region.compartment(k)
    return _grid_in_rect(rect, n_o, COMPARTMENT, compartment=k)


def full_layout(region: RegionSpec) -> ElectrodeSet:
    """Every cell of the central readout region, row-major (y outer)."""
    return ElectrodeSet(positions=region.full_readout.cells(), arrangement=FULL)


def layout_rows(rect: Rect, electrodes: ElectrodeSet) -> np.ndarray:
    """Row indices of an electrode set inside a row-major probe rectangle,
    so traces/features recorded over the rectangle can be sliced per
    layout instead of re-simulated."""
    pos = electrodes.positions
    inside = (
        (pos[:, 0] >= rect.x0)
        & (pos[:, 0] < rect.x1)
        & (pos[:, 1] >= rect.y0)
        & (pos[:, 1] < rect.y1)
    )
    if not inside.all():
        raise GeometryError("electrode set extends outside the probed rectangle")
    return (pos[:, 1] - rect.y0) * rect.w + (pos[:, 0] - rect.x0)
