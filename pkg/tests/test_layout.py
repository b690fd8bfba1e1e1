import math

import numpy as np
import pytest

from spinres.errors import GeometryError
from spinres.geometry import GridSpec, INTERIOR, build_geometry, build_regions
from spinres.layout import (
    CIRCLE,
    COMPARTMENT,
    FULL,
    GRID,
    RANDOM,
    ElectrodeSet,
    circle_layout,
    compartment_layout,
    full_layout,
    grid_layout,
    layout_rows,
    random_layout,
)

REGIONS = build_regions(GridSpec())  # paper profile, readout square 160x160
SWEEP_COUNTS = (4, 16, 25, 54, 81, 144, 196, 289)
SQUARES = tuple(n for n in SWEEP_COUNTS if math.isqrt(n) ** 2 == n)


def in_rect(positions, rect):
    return (
        (positions[:, 0] >= rect.x0)
        & (positions[:, 0] < rect.x1)
        & (positions[:, 1] >= rect.y0)
        & (positions[:, 1] < rect.y1)
    ).all()


def test_grid_81_interval():
    es = grid_layout(REGIONS, 81)
    xs = np.unique(es.positions[:, 0])
    assert len(xs) == 9
    # 160 / (9 + 1) = 16-cell interval, exactly
    assert np.array_equal(np.diff(xs), np.full(8, 16))
    assert xs[0] == REGIONS.full_readout.x0 + 16


def test_grid_4_rounded_offsets():
    es = grid_layout(REGIONS, 4)
    offs = sorted(set(es.positions[:, 0] - REGIONS.full_readout.x0))
    assert offs == [53, 107]  # round-half-up of 160/3 and 2*160/3


@pytest.mark.parametrize("n_o", SQUARES)
def test_grid_contract(n_o):
    es = grid_layout(REGIONS, n_o)
    assert es.n_o == n_o
    assert len(np.unique(es.positions, axis=0)) == n_o
    assert in_rect(es.positions, REGIONS.full_readout)
    assert es.arrangement == GRID


def test_grid_289_strictly_inside():
    es = grid_layout(REGIONS, 289)
    rect = REGIONS.full_readout
    assert es.positions[:, 0].max() < rect.x1
    assert es.positions[:, 0].min() > rect.x0


def test_grid_rejects_non_square():
    with pytest.raises(GeometryError, match="49 and 64"):
        grid_layout(REGIONS, 54)
    with pytest.raises(GeometryError):
        grid_layout(REGIONS, 324)  # over the supported 289


def test_grid_offsets_symmetric():
    # the lattice is symmetric about the region center: offsets pair to L
    for n_o in SQUARES:
        es = grid_layout(REGIONS, n_o)
        offs = sorted(set(es.positions[:, 0] - REGIONS.full_readout.x0))
        assert [a + b for a, b in zip(offs, reversed(offs))] == [160] * len(offs)


def test_circle_4_quadrature_points():
    es = circle_layout(REGIONS, 4)
    rect = REGIONS.full_readout
    cx = rect.x0 + (rect.w - 1) / 2
    cy = rect.y0 + (rect.h - 1) / 2
    d = es.positions - np.array([cx, cy])
    radii = np.hypot(d[:, 0], d[:, 1])
    assert np.all(np.abs(radii - 0.4 * 160) < 1.0)
    angles = sorted(np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi))
    spacing = np.diff(angles)
    assert np.allclose(spacing, np.pi / 2, atol=0.02)


def test_circle_54_two_rings():
    es = circle_layout(REGIONS, 54)
    rect = REGIONS.full_readout
    cx = rect.x0 + (rect.w - 1) / 2
    cy = rect.y0 + (rect.h - 1) / 2
    d = es.positions - np.array([cx, cy])
    radii = np.hypot(d[:, 0], d[:, 1])
    inner = radii < 0.35 * 160
    assert inner.sum() == 19  # proportional-to-circumference split
    assert np.all(np.abs(radii[inner] - 0.25 * 160) < 1.5)
    assert np.all(np.abs(radii[~inner] - 0.45 * 160) < 1.5)


@pytest.mark.parametrize("n_o", SWEEP_COUNTS)
def test_circle_contract(n_o):
    es = circle_layout(REGIONS, n_o)
    assert es.n_o == n_o
    assert len(np.unique(es.positions, axis=0)) == n_o
    assert in_rect(es.positions, REGIONS.full_readout)


def test_circle_distinct_up_to_289():
    for n_o in range(3, 290):
        es = circle_layout(REGIONS, n_o)
        assert len(np.unique(es.positions, axis=0)) == n_o


def test_circle_minimum():
    with pytest.raises(GeometryError):
        circle_layout(REGIONS, 2)


@pytest.mark.parametrize("n_o", SWEEP_COUNTS)
def test_random_contract(n_o):
    es = random_layout(REGIONS, n_o, seed=42)
    assert es.n_o == n_o
    assert len(np.unique(es.positions, axis=0)) == n_o
    assert in_rect(es.positions, REGIONS.full_readout)
    assert es.seed == 42


def test_random_reproducible_and_seed_sensitive():
    a = random_layout(REGIONS, 81, seed=1)
    b = random_layout(REGIONS, 81, seed=1)
    assert np.array_equal(a.positions, b.positions)
    sets = {random_layout(REGIONS, 81, seed=s).positions.tobytes() for s in range(10)}
    assert len(sets) == 10


def test_random_is_uniform_over_region():
    # mean of many draws sits at the region center within 3 standard errors
    rect = REGIONS.full_readout
    es = random_layout(REGIONS, 10000, seed=3)
    se = rect.w / math.sqrt(12) / math.sqrt(10000)
    center = rect.x0 + (rect.w - 1) / 2
    assert abs(es.positions[:, 0].mean() - center) < 3 * se + 0.5
    assert abs(es.positions[:, 1].mean() - center) < 3 * se + 0.5


def test_random_covers_region_over_seeds():
    # every 16x16 sub-block of the 160x160 region is hit across 100 seeds
    rect = REGIONS.full_readout
    hits = np.zeros((10, 10), dtype=int)
    for seed in range(100):
        es = random_layout(REGIONS, 81, seed=seed)
        bx = (es.positions[:, 0] - rect.x0) // 16
        by = (es.positions[:, 1] - rect.y0) // 16
        hits[by, bx] += 1
    assert (hits > 0).all()


def test_random_capacity():
    with pytest.raises(GeometryError):
        random_layout(REGIONS, 160 * 160 + 1, seed=0)


def test_compartment_center_and_corners():
    es5 = compartment_layout(REGIONS, 5, 25)
    assert in_rect(es5.positions, REGIONS.compartment(5))
    es1 = compartment_layout(REGIONS, 1, 81)
    # 9x9 lattice at 60/10 = 6-cell interval inside compartment 1
    offs = sorted(set(es1.positions[:, 0] - REGIONS.compartment(1).x0))
    assert offs == [6, 12, 18, 24, 30, 36, 42, 48, 54]
    assert es1.compartment == 1 and es1.arrangement == COMPARTMENT


@pytest.mark.parametrize("n_o", (4, 16, 25, 81, 196))
@pytest.mark.parametrize("k", range(1, 10))
def test_compartment_contract(k, n_o):
    es = compartment_layout(REGIONS, k, n_o)
    assert es.n_o == n_o
    assert len(np.unique(es.positions, axis=0)) == n_o
    assert in_rect(es.positions, REGIONS.compartment(k))


def test_compartment_invalid_index():
    with pytest.raises(GeometryError):
        compartment_layout(REGIONS, 0, 4)
    with pytest.raises(GeometryError):
        compartment_layout(REGIONS, 10, 4)


def test_full_layout():
    es = full_layout(REGIONS)
    assert es.n_o == 160 * 160 == 25600
    assert es.arrangement == FULL
    assert in_rect(es.positions, REGIONS.full_readout)
    # row-major ordering: first row scans x
    assert es.positions[0].tolist() == [30, 30]
    assert es.positions[1].tolist() == [31, 30]
    assert es.positions[160].tolist() == [30, 31]


def test_full_readout_avoids_damper_and_electrodes():
    mat = build_geometry(GridSpec())
    es = full_layout(REGIONS)
    codes = mat.region[es.positions[:, 1], es.positions[:, 0]]
    assert (codes == INTERIOR).all()


def test_layout_rows_roundtrip():
    rect = REGIONS.compartment_area
    for es in (grid_layout(REGIONS, 81), random_layout(REGIONS, 54, 7),
               compartment_layout(REGIONS, 9, 16), full_layout(REGIONS)):
        rows = layout_rows(rect, es)
        cells = rect.cells()
        assert np.array_equal(cells[rows], es.positions)
    # electrode sets outside the probed rectangle are rejected
    with pytest.raises(GeometryError):
        layout_rows(REGIONS.compartment(5), grid_layout(REGIONS, 81))


def test_electrode_set_rejects_duplicates():
    with pytest.raises(GeometryError):
        ElectrodeSet(positions=np.array([[1, 2], [1, 2]]), arrangement=RANDOM)
