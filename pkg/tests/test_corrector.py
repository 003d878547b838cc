"""Corrector solves: conservation, dilute oracles, invariances."""

import numpy as np
import pytest

from helmfluct.dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist
from helmfluct.medium import InclusionParams
from helmfluct.mtensor import trilinear
from helmfluct.supercell import (SupercellConfig, sample_supercell,
                                 single_ball_supercell)
from helmfluct.corrector import (effective_matrix, solve_corrector,
                                 solve_modified_corrector)
from helmfluct.green import fit_loglog_slope


def test_empty_perforation_has_zero_corrector():
    sc = single_ball_supercell(2, 16, 0.3).without_cell((1, 1, 1))
    sol = solve_corrector(sc)
    assert np.all(sol.phi == 0.0)
    A, asym = effective_matrix((sol,), 1.0)
    assert np.allclose(A, np.eye(3), atol=1e-14)
    assert asym == 0.0


def test_conservation_in_integrated_units():
    # discrete divergence of 1_fluid (e_i + grad phi): the stated reading is
    # max-norm residual <= 10 x solver tolerance x source norm
    sc = sample_supercell(SupercellConfig(L=3, resolution=16, seed=17))
    tol = 1e-9
    sol = solve_corrector(sc, tol=tol)
    for i in range(3):
        assert sol.residual_max[i] <= 10 * tol * sol.rhs_norm[i]
        assert sol.residual_rel[i] <= tol


def test_dilute_corrector_matches_point_dipole():
    # single small ball: phi_i ~ (rho^3/2) x_i/|x|^3 outside, probed on a
    # sphere at 2 rho; farther out the periodic images (cell face at 5 rho)
    # visibly squash the dipole tail
    rho, m = 0.1, 80
    sb = single_ball_supercell(1, m, rho)
    sol = solve_corrector(sb, tol=1e-10)
    h = sb.spacing
    t = np.linspace(0, np.pi, 10)[1:-1]
    p = np.linspace(0, 2 * np.pi, 17)[:-1]
    T, P = np.meshgrid(t, p, indexing="ij")
    normals = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P),
                        np.cos(T)], axis=-1).reshape(-1, 3)
    r = 2.0 * rho
    pts = 0.5 + r * normals
    fluid = sol.frac > 0
    vals = trilinear(sol.phi[0], pts, h, valid=fluid)
    pred = (rho ** 3 / 2.0) * r * normals[:, 0] / r ** 3
    err = np.linalg.norm(vals - pred) / np.linalg.norm(pred)
    assert err < 0.03


def test_effective_matrix_dilute_limit():
    sb = single_ball_supercell(1, 48, 0.2)
    sol = solve_corrector(sb, tol=1e-10)
    A, asym = effective_matrix((sol,), 1.0)
    f = 4.0 / 3.0 * np.pi * 0.2 ** 3
    assert np.abs(np.diag(A) - (1.0 - 1.5 * f)).max() < 3e-3
    assert np.abs(A - np.diag(np.diag(A))).max() < 1e-9
    assert asym < 1e-9


def test_effective_matrix_is_spd_and_contractive():
    sc = sample_supercell(SupercellConfig(L=2, resolution=16, seed=29))
    sol = solve_corrector(sc)
    A, asym = effective_matrix((sol,), 1.0)
    assert asym < 1e-8
    w = np.linalg.eigvalsh(A)
    assert w.min() > 0.0
    assert w.max() < 1.0  # obstacles only impede the flux


def test_identical_cells_inherit_cell_periodicity():
    # a supercell whose law pins every cell to the same ball is 1-periodic,
    # so the corrector must repeat across cells up to solver noise
    cfg = SupercellConfig(
        L=3, resolution=16,
        geometry=GeometryLaw(ThetaDist("point", value=(0.45, 0.55, 0.5)),
                             ScalarDist("point", value=0.3), 0.05),
        seed=1)
    sc = sample_supercell(cfg)
    sol = solve_corrector(sc, tol=1e-11)
    scale = np.abs(sol.phi).max()
    for axis in (1, 2, 3):
        shift = np.roll(sol.phi, 16, axis)
        assert np.abs(shift - sol.phi).max() < 1e-5 * scale


def test_modified_corrector_ignores_removed_ball_parameters():
    # the reduced solve must depend only on the other cells: bitwise equal
    # fields for different pinned parameters in the removed cell
    base = sample_supercell(SupercellConfig(L=2, resolution=16, seed=3))
    j = (1, 0, 1)
    m1 = base.with_cell(j, InclusionParams((0.45, 0.5, 0.5), 0.3, 2.0 + 0.5j))
    m2 = base.with_cell(j, InclusionParams((0.6, 0.42, 0.5), 0.27, 1.0 + 1.0j))
    s1 = solve_corrector(m1)
    s2 = solve_corrector(m2)
    r1 = solve_modified_corrector(m1, s1, j)
    r2 = solve_modified_corrector(m2, s2, j)
    assert np.array_equal(r1.phi, r2.phi)


def test_modified_corrector_far_mismatch_decays_dipole_like():
    sc = sample_supercell(SupercellConfig(L=6, resolution=16, seed=7))
    sol = solve_corrector(sc)
    mod = solve_modified_corrector(sc, sol, (3, 3, 3))
    d = mod.mismatch_distance
    g = mod.mismatch_max
    assert np.all(np.diff(g) < 0)
    keep = d >= 1.0
    slope = fit_loglog_slope(d[keep], g[keep])
    assert -3.6 < slope < -2.4
    assert mod.far_mismatch(2.0) < mod.far_mismatch(1.0)


def test_corrector_requires_periodic_or_dirichlet():
    sb = single_ball_supercell(2, 16, 0.3)
    with pytest.raises(ValueError):
        solve_corrector(sb, bc="robin")
