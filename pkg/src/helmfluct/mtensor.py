"""Per-inclusion surface statistics: the polarization-type M tensor.

M pairs the flux of the modified corrector with the plain corrector over the
sphere of the designated inclusion:

    M[l, k] = int_{dB} n.(e_l + grad phi_minus_l) (y_k + phi_k) dS.

The continuum flux factor integrates to zero over the closed sphere (the
field is divergence-free through the ball once the inclusion is removed),
which is what makes M independent of the additive constant in phi. Discrete
quadrature does not annihilate constants on its own, so the flux factor is
projected to zero quadrature mean before pairing; the unprojected mean flux
is returned as a diagnostic. The projection restores gauge invariance to
float precision instead of quadrature precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InterpolationError(ValueError):
    """Interpolation stencil reaches into a foreign inclusion."""


def sphere_quadrature(n_polar=12, n_azimuth=24):
    """Product Gauss-Legendre x uniform-angle nodes on the unit sphere.

    Returns (nodes, weights) with weights summing to 4*pi; exact for
    spherical polynomials up to degree ~2*n_polar - 1.
    """
    if n_polar * n_azimuth < 50:
        raise ValueError("need at least 50 quadrature nodes")
    ct, w = np.polynomial.legendre.leggauss(n_polar)
    st = np.sqrt(1.0 - ct ** 2)
    phi = (np.arange(n_azimuth) + 0.5) * (2.0 * np.pi / n_azimuth)
    nodes = np.empty((n_polar * n_azimuth, 3))
    nodes[:, 0] = np.outer(st, np.cos(phi)).ravel()
    nodes[:, 1] = np.outer(st, np.sin(phi)).ravel()
    nodes[:, 2] = np.repeat(ct, n_azimuth)
    weights = np.repeat(w, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return nodes, weights


def trilinear(field, points, h, valid=None, forbidden=None):
    """Trilinear interpolation at points (in y units, voxel centers at
    (i+1/2)h), renormalizing over the valid corner subset.

    valid: boolean voxel mask; invalid corners are dropped and the remaining
    weights rescaled (solid-cell extension). forbidden: corners in this mask
    raise InterpolationError instead (reaching into a foreign inclusion).
    Points must stay at least half a voxel inside the grid.
    """
    pts = np.asarray(points, float)
    f = pts / h - 0.5
    i0 = np.floor(f).astype(np.int64)
    frac = f - i0
    n = field.shape
    if np.any(i0 < 0) or np.any(i0 + 1 >= np.asarray(n)[None, :]):
        raise ValueError("interpolation point outside the voxel-center hull")
    vals = np.zeros(len(pts))
    wsum = np.zeros(len(pts))
    for corner in np.ndindex(2, 2, 2):
        idx = tuple(i0[:, d] + corner[d] for d in range(3))
        w = np.ones(len(pts))
        for d in range(3):
            w = w * (frac[:, d] if corner[d] else 1.0 - frac[:, d])
        if forbidden is not None and np.any(forbidden[idx] & (w > 1e-12)):
            raise InterpolationError(
                "stencil reaches a foreign inclusion; refine the grid")
        if valid is not None:
            keep = valid[idx]
            w = np.where(keep, w, 0.0)
        vals += w * field[idx]
        wsum += w
    if np.any(wsum <= 1e-12):
        raise InterpolationError("no fluid voxel under an interpolation point")
    return vals / wsum


def gradient_field(phi, h):
    """Central-difference gradient, one-sided at the outer box faces."""
    return np.stack(np.gradient(phi, h), axis=0)


@dataclass(frozen=True)
class MTensor:
    entries: np.ndarray          # (3,3) real, volume units
    gauge_defect: np.ndarray     # (3,) unprojected mean flux integrals
    cell: tuple

    def __post_init__(self):
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("M tensor must be finite")


def m_tensor(corrector, modified, cell, n_polar=12, n_azimuth=24,
             phi_shift=0.0):
    """Surface integral M for one inclusion.

    corrector: solution on the full perforation (the inclusion present);
    modified: solution with that inclusion removed, same supercell and bc.
    phi_shift adds a constant to every phi_k before pairing; the result must
    not depend on it (gauge invariance), which tests exercise directly.
    """
    modified = getattr(modified, "solution", modified)
    medium = corrector.medium
    cell = tuple(int(c) for c in cell)
    center = medium.ball_center(cell)
    radius = medium.ball_radius(cell)
    h = medium.spacing
    normals, weights = sphere_quadrature(n_polar, n_azimuth)
    pts = center[None, :] + radius * normals
    weights = weights * radius ** 2

    own_fluid = corrector.frac > 0.0
    # voxels of the remaining inclusions: solid in both perforations
    foreign = modified.frac <= 0.0

    # flux factor from the modified corrector: smooth across this ball, but
    # its stencil must not touch any remaining inclusion
    q = np.empty((3, len(pts)))
    for ell in range(3):
        gm = modified.gradient(ell)
        gvals = np.stack([trilinear(gm[d], pts, h, forbidden=foreign)
                          for d in range(3)], axis=1)
        q[ell] = normals[:, ell] + np.einsum("pd,pd->p", gvals, normals)
    # project the flux to zero quadrature mean: the discrete analogue of
    # the vanishing closed-surface flux that makes M gauge invariant
    defect = (q @ weights) / weights.sum()
    q = q - defect[:, None]

    M = np.empty((3, 3))
    for k in range(3):
        phik = trilinear(corrector.phi[k], pts, h, valid=own_fluid,
                         forbidden=foreign)
        surf = (pts[:, k] - center[k]) + phik + phi_shift
        M[:, k] = q @ (weights * surf)
    return MTensor(entries=M, gauge_defect=defect * weights.sum(), cell=cell)
