"""Perforated Green's functions on truncated boxes, and the boundary-integral
reconstruction of the modified-corrector difference.

The Green's function G_j sees every ball except the designated one as a
Neumann obstacle and is solved on a box with zero Dirichlet outer boundary
(the truncation surrogate for decay at infinity). Solving the corrector pair
on the same box with the same outer condition makes the reconstruction
identity exact for the truncated geometry: the outer boundary terms vanish
because both the fields and G vanish there. What remains is discretization
and quadrature error, which the cross-checks measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import poisson
from .mtensor import sphere_quadrature, trilinear


@dataclass
class GreenSolver:
    """Reusable Dirichlet-box solver for one perforation.

    removed_cells lists inclusions that are *not* obstacles (the designated
    cell of the modified-corrector problems). One assembled system serves
    any number of source locations; with the symmetric discrete operator,
    field(x)[y] is symmetric in (x, y) to solver tolerance.
    """

    medium: object
    removed_cells: tuple = ()
    tol: float = 1e-9
    max_iter: int = 400
    subsamples: int = 4

    def __post_init__(self):
        reduced = self.medium
        for j in self.removed_cells:
            reduced = reduced.without_cell(tuple(int(c) for c in j))
        self.reduced = reduced
        self.frac = reduced.fluid_fraction(self.subsamples)
        self.system = poisson.assemble(self.frac, reduced.spacing, "dirichlet")
        self.solver = poisson.PoissonSolver(self.system)

    def field(self, source_voxel):
        b = poisson.point_source_rhs(self.system, tuple(source_voxel))
        res = self.solver.solve(b, tol=self.tol, maxiter=self.max_iter)
        return res.values


def perforated_green(medium, source_voxel, removed_cells=(), tol=1e-9,
                     max_iter=400, subsamples=4):
    """One Green's function field on the truncated perforated box."""
    gs = GreenSolver(medium, tuple(removed_cells), tol, max_iter, subsamples)
    return gs.field(source_voxel), gs


def shell_profile(values, medium, source_voxel, rmin, rmax, nshells,
                  mask=None):
    """Shell means of |values| against distance from the source voxel.

    Used for decay-rate fits; shells with no admissible voxels are dropped.
    """
    n = medium.n
    h = medium.spacing
    x = (np.arange(n) + 0.5) * h
    src = (np.asarray(source_voxel, float) + 0.5) * h
    d2 = np.zeros((n, n, n))
    for axis in range(3):
        sh = [1, 1, 1]
        sh[axis] = n
        d2 = d2 + ((x - src[axis]) ** 2).reshape(sh)
    r = np.sqrt(d2)
    edges = np.geomspace(rmin, rmax, nshells + 1)
    ok = np.ones(r.shape, bool) if mask is None else mask
    centers, means = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        shell = ok & (r >= lo) & (r < hi)
        if shell.sum() == 0:
            continue
        centers.append(np.sqrt(lo * hi))
        means.append(float(np.abs(values[shell]).mean()))
    return np.asarray(centers), np.asarray(means)


def fit_loglog_slope(r, v):
    if len(r) < 3:
        raise ValueError("need at least three shells for a slope fit")
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


def corrector_difference_via_green(corrector, green_solver, cell,
                                   probe_voxels, n_polar=12, n_azimuth=24):
    """Boundary-integral evaluation of phi_minus - phi at probe voxels.

    corrector: Dirichlet-box corrector on the full perforation (ball of
    *cell* present). green_solver: GreenSolver with that same ball removed.
    For each probe x the Green field with source at x supplies G(x, y) and
    grad_y G(x, y) on the sphere (symmetry of the discrete operator), and

        diff_i(x) = -int_{dB} [ n_i G + phi_i n . grad_y G ] dS(y).

    The sphere must be exactly the ball surface: the n_i G term is not
    surface-independent (it absorbs the Neumann data of phi on dB), so the
    route difference against the direct two-solve field carries the O(h)
    staircase truncation of the discrete obstacle. Halving h roughly halves
    the gap; cross-checks should budget for it rather than tighten blindly.
    """
    medium = corrector.medium
    cell = tuple(int(c) for c in cell)
    center = medium.ball_center(cell)
    h = medium.spacing
    radius = medium.ball_radius(cell)
    normals, weights = sphere_quadrature(n_polar, n_azimuth)
    pts = center[None, :] + radius * normals
    weights = weights * radius ** 2

    own_fluid = corrector.frac > 0.0
    foreign = green_solver.frac <= 0.0
    phi_surf = [trilinear(corrector.phi[i], pts, h, valid=own_fluid,
                          forbidden=foreign) for i in range(3)]

    out = np.empty((3, len(probe_voxels)))
    for p, voxel in enumerate(probe_voxels):
        g = green_solver.field(voxel)
        gvals = trilinear(g, pts, h, forbidden=foreign)
        grads = np.stack(np.gradient(g, h), axis=0)
        gn = np.zeros(len(pts))
        for d in range(3):
            gn += trilinear(grads[d], pts, h, forbidden=foreign) \
                * normals[:, d]
        for i in range(3):
            out[i, p] = -np.sum(weights * (normals[:, i] * gvals
                                           + phi_surf[i] * gn))
    return out
