"""Supercell sampling: keyed draws, voxel fractions, cell editing."""

import numpy as np
import pytest

from helmfluct.dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist
from helmfluct.medium import InclusionParams
from helmfluct.supercell import (MIN_VOXELS_ACROSS, SupercellConfig,
                                 SupercellMedium, sample_supercell,
                                 single_ball_supercell)


def small_config(seed=5, L=3, resolution=16):
    return SupercellConfig(L=L, resolution=resolution, seed=seed)


def test_config_refuses_unresolvable_balls():
    with pytest.raises(ValueError, match="voxels"):
        SupercellConfig(resolution=12)  # 2*0.25*12 = 6 voxel span
    with pytest.raises(ValueError):
        SupercellConfig(L=0)


def test_medium_refuses_unresolvable_pinned_ball():
    sc = sample_supercell(small_config())
    with pytest.raises(ValueError, match="voxels"):
        sc.with_cell((0, 0, 0), InclusionParams((0.5, 0.5, 0.5), 0.2, 2.0))
    # 0.25 spans exactly MIN_VOXELS_ACROSS at resolution 16
    sc.with_cell((0, 0, 0), InclusionParams((0.5, 0.5, 0.5), 0.25, 2.0))


def test_sampling_is_reproducible_and_generation_indexed():
    a = sample_supercell(small_config(seed=9))
    b = sample_supercell(small_config(seed=9))
    assert a.cells == b.cells
    c = sample_supercell(small_config(seed=9), generation=1)
    assert c.cells != a.cells
    d = sample_supercell(small_config(seed=10))
    assert d.cells != a.cells


def test_fixed_override_pins_cell_without_touching_others():
    pinned = InclusionParams((0.4, 0.5, 0.6), 0.3, 1.5 + 0.25j)
    a = sample_supercell(small_config(seed=9))
    b = sample_supercell(small_config(seed=9), fixed={(1, 1, 1): pinned})
    assert b.cells[(1, 1, 1)] == pinned
    for j in a.cells:
        if j != (1, 1, 1):
            assert a.cells[j] == b.cells[j]


def test_sampled_geometry_is_admissible():
    cfg = small_config(seed=3, L=4)
    sc = sample_supercell(cfg)
    xi = cfg.geometry.xi
    for j, p in sc.cells.items():
        margin = min(min(t, 1.0 - t) for t in p.theta)
        assert margin >= p.rho + xi - 1e-12
        lo, hi = cfg.geometry.rho.support()
        assert lo <= p.rho <= hi


def test_grid_metadata():
    sc = sample_supercell(small_config(L=3, resolution=16))
    assert sc.n == 48
    assert sc.spacing == pytest.approx(1 / 16)
    assert sc.ball_center((2, 1, 0)).shape == (3,)
    assert np.all(sc.ball_center((2, 1, 0)) >= np.array([2, 1, 0]))


def test_fluid_fraction_field_structure():
    sb = single_ball_supercell(1, 32, 0.3)
    frac = sb.fluid_fraction()
    assert frac.shape == (32, 32, 32)
    assert frac.min() == 0.0 and frac.max() == 1.0
    assert np.all((frac >= 0.0) & (frac <= 1.0))
    # center voxel solid, corner voxel fluid
    assert frac[16, 16, 16] == 0.0
    assert frac[0, 0, 0] == 1.0
    # only voxels within half a diagonal of the surface are fractional
    x = (np.arange(32) + 0.5) / 32
    X, Y, Z = np.meshgrid(x - 0.5, x - 0.5, x - 0.5, indexing="ij")
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    band = np.sqrt(3) / 64
    cut = (frac > 0) & (frac < 1)
    assert np.all(np.abs(r[cut] - 0.3) <= band + 1e-12)


def test_fluid_fraction_integrates_ball_volume():
    sb = single_ball_supercell(1, 32, 0.3)
    frac = sb.fluid_fraction()
    solid = float((1.0 - frac).mean())  # cell volume is 1
    exact = 4.0 / 3.0 * np.pi * 0.3 ** 3
    assert abs(solid - exact) < 5e-4
    assert sb.volume_fraction() == pytest.approx(exact)


def test_ensemble_fraction_matches_exact_volume():
    sc = sample_supercell(small_config(seed=13, L=3))
    frac = sc.fluid_fraction()
    solid = float((1.0 - frac).mean())
    assert abs(solid - sc.volume_fraction()) < 1e-3


def test_without_cell_is_parameter_independent():
    # the perforation with cell j removed must not remember what was there:
    # downstream conditional statistics rely on bitwise-equal reduced media
    sc = sample_supercell(small_config(seed=7))
    j = (1, 2, 0)
    a = sc.with_cell(j, InclusionParams((0.45, 0.5, 0.5), 0.3, 2.0 + 0.5j))
    b = sc.with_cell(j, InclusionParams((0.6, 0.4, 0.55), 0.26, 1.0 + 1.0j))
    fa = a.without_cell(j).fluid_fraction()
    fb = b.without_cell(j).fluid_fraction()
    assert np.array_equal(fa, fb)


def test_without_cell_adds_fluid_only_locally():
    sc = sample_supercell(small_config(seed=7))
    j = (1, 1, 1)
    full = sc.fluid_fraction()
    red = sc.without_cell(j).fluid_fraction()
    diff = red - full
    assert np.all(diff >= 0.0)
    c = sc.ball_center(j)
    r = sc.ball_radius(j)
    n, h = sc.n, sc.spacing
    x = (np.arange(n) + 0.5) * h
    X, Y, Z = np.meshgrid(x - c[0], x - c[1], x - c[2], indexing="ij")
    rr = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    assert np.all(diff[rr > r + np.sqrt(3) * h] == 0.0)
    with pytest.raises(KeyError):
        sc.without_cell(j).without_cell(j)


def test_single_ball_geometry():
    sb = single_ball_supercell(3, 16, 0.25, cell=(0, 1, 2))
    assert list(sb.cells) == [(0, 1, 2)]
    assert np.allclose(sb.ball_center((0, 1, 2)), [0.5, 1.5, 2.5])
    assert sb.ball_radius((0, 1, 2)) == 0.25
    # default cell is the center
    sb = single_ball_supercell(5, 16, 0.3)
    assert list(sb.cells) == [(2, 2, 2)]


def test_cells_outside_lattice_rejected():
    cfg = small_config()
    with pytest.raises(ValueError, match="lattice"):
        SupercellMedium(config=cfg, cells={
            (3, 0, 0): InclusionParams((0.5, 0.5, 0.5), 0.3, 2.0)})
