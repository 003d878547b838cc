"""Correctors on perforated supercells and the effective matrix A_eff.

The corrector phi_i solves the Neumann problem

    div(1_{fluid} (e_i + grad phi_i)) = 0

on the complement of the balls, with periodic supercell boundaries (or zero
Dirichlet on a truncated box, used by the boundary-integral cross-checks).
The modified corrector removes one designated ball and is otherwise the same
problem; its gradient approaches the plain corrector's far from the removed
cell, and the mismatch decay rate is a convergence diagnostic for the
supercell truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import poisson


@dataclass(frozen=True)
class CorrectorSolution:
    """Three solved corrector fields on one voxelized perforation.

    phi has shape (3, n, n, n), zero fluid-volume-weighted mean per
    direction, and value 0 on fully solid voxels. Residuals are recorded in
    integrated finite-volume units (max) and relative to the source (rel).
    """

    medium: object
    bc: str
    frac: np.ndarray
    phi: np.ndarray
    rhs_norm: tuple
    residual_rel: tuple
    residual_max: tuple
    iterations: tuple
    removed_cell: tuple | None = None

    @property
    def spacing(self):
        return self.medium.spacing

    def gradient(self, direction):
        """Central-difference gradient field of phi_i, shape (3, n, n, n)."""
        h = self.spacing
        p = self.phi[direction]
        out = np.empty((3,) + p.shape)
        for d in range(3):
            if self.bc == "periodic":
                out[d] = (np.roll(p, -1, d) - np.roll(p, 1, d)) / (2 * h)
            else:
                out[d] = np.gradient(p, h, axis=d)
        return out

    def interior_fluid_mask(self):
        """Voxels whose full 3^3 neighborhood is fluid (frac == 1)."""
        solid = self.frac < 1.0
        grown = solid.copy()
        for d in range(3):
            for s in (-1, 1):
                grown |= np.roll(solid, s, d)
        return ~grown

    def flux_average(self):
        """Face-based volume average of 1_fluid (I + grad phi) over the
        supercell; rows index the flux component, columns the direction."""
        if self.bc != "periodic":
            raise ValueError("flux average is defined on periodic supercells")
        h = self.spacing
        n3 = self.frac.size
        vol = n3 * h ** 3
        F = np.zeros((3, 3))
        for k in range(3):
            t = poisson.face_transmissibility(np.roll(self.frac, 1, k),
                                              self.frac)
            ts = t.sum()
            for i in range(3):
                diff = (self.phi[i] - np.roll(self.phi[i], 1, k)) / h
                F[k, i] = (t * diff).sum() * h ** 3 / vol
            F[k, k] += ts * h ** 3 / vol
        return F


def solve_corrector(medium, tol=1e-9, max_iter=400, bc="periodic",
                    subsamples=4, frac=None):
    """Solve the three corrector problems on one supercell."""
    if frac is None:
        frac = medium.fluid_fraction(subsamples)
    system = poisson.assemble(frac, medium.spacing, bc)
    solver = poisson.PoissonSolver(system)
    n = medium.n
    phi = np.zeros((3, n, n, n))
    rel, rmax, iters, bnorm = [], [], [], []
    for d in range(3):
        b = poisson.background_rhs(system, d)
        res = solver.solve(b, tol=tol, maxiter=max_iter)
        phi[d] = res.values
        rel.append(res.residual_rel)
        rmax.append(res.residual_max)
        iters.append(res.iterations)
        bnorm.append(float(np.linalg.norm(b)))
    return CorrectorSolution(medium=medium, bc=bc, frac=frac, phi=phi,
                             rhs_norm=tuple(bnorm),
                             residual_rel=tuple(rel),
                             residual_max=tuple(rmax),
                             iterations=tuple(iters))


@dataclass(frozen=True)
class ModifiedCorrector:
    """Corrector with one ball removed, plus far-field mismatch diagnostics
    against the unmodified corrector on the same supercell."""

    solution: CorrectorSolution
    removed_cell: tuple
    mismatch_distance: np.ndarray   # shell centers, cell units
    mismatch_max: np.ndarray        # max |grad phi^- - grad phi| per shell

    @property
    def phi(self):
        return self.solution.phi

    def far_mismatch(self, min_distance):
        keep = self.mismatch_distance >= min_distance
        if not np.any(keep):
            raise ValueError("no probe shells beyond the requested distance")
        return float(self.mismatch_max[keep].max())


def _periodic_distance(medium, center):
    """Distance from every voxel center to a point, min over images."""
    n = medium.n
    h = medium.spacing
    L = medium.L
    x = (np.arange(n) + 0.5) * h
    d2 = np.zeros((n, n, n))
    for axis in range(3):
        dd = np.abs(x - center[axis])
        dd = np.minimum(dd, L - dd)
        sh = [1, 1, 1]
        sh[axis] = n
        d2 = d2 + (dd ** 2).reshape(sh)
    return np.sqrt(d2)


def solve_modified_corrector(medium, corrector, removed_cell, tol=1e-9,
                             max_iter=400, subsamples=4, nshells=6):
    """Solve the corrector with one inclusion removed.

    Only the ball of removed_cell leaves the perforation; no parameter of
    that cell enters the solve, so the result is bit-identical under changes
    of the removed cell's material or geometry.
    """
    removed_cell = tuple(int(c) for c in removed_cell)
    reduced = medium.without_cell(removed_cell)
    sol = solve_corrector(reduced, tol=tol, max_iter=max_iter, bc=corrector.bc,
                          subsamples=subsamples)
    sol = CorrectorSolution(medium=reduced, bc=sol.bc, frac=sol.frac,
                            phi=sol.phi, rhs_norm=sol.rhs_norm,
                            residual_rel=sol.residual_rel,
                            residual_max=sol.residual_max,
                            iterations=sol.iterations,
                            removed_cell=removed_cell)
    center = medium.ball_center(removed_cell)
    dist = _periodic_distance(medium, center)
    # compare gradients only where both perforations are locally pure fluid
    ok = corrector.interior_fluid_mask() & sol.interior_fluid_mask()
    gap = np.zeros(dist.shape)
    for i in range(3):
        gi = sol.gradient(i) - corrector.gradient(i)
        gap = np.maximum(gap, np.sqrt((gi ** 2).sum(axis=0)))
    rmin = medium.ball_radius(removed_cell) + 2 * medium.spacing
    rmax = medium.L / 2.0
    edges = np.geomspace(max(rmin, 0.3), rmax, nshells + 1)
    centers, peaks = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        shell = ok & (dist >= lo) & (dist < hi)
        if shell.sum() == 0:
            continue
        centers.append(np.sqrt(lo * hi))
        peaks.append(float(gap[shell].max()))
    return ModifiedCorrector(solution=sol, removed_cell=removed_cell,
                             mismatch_distance=np.asarray(centers),
                             mismatch_max=np.asarray(peaks))


def effective_matrix(solutions, a_b):
    """A_eff = a_b * ensemble average of the supercell flux matrices.

    Returns (A_eff symmetrized, asymmetry magnitude): the raw average of
    flux matrices is symmetric only in the ensemble limit, so the asymmetry
    is a Monte Carlo diagnostic, reported rather than hidden.
    """
    if not solutions:
        raise ValueError("need at least one solved supercell")
    F = np.mean([s.flux_average() for s in solutions], axis=0)
    A = a_b * F
    asym = float(np.abs(A - A.T).max())
    return 0.5 * (A + A.T), asym
