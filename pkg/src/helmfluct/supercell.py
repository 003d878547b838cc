"""Periodic supercells of perforated cells for the corrector problems.

The infinite stationary medium is approximated by an L^3-cell supercell with
periodic identification; L is a convergence parameter. Cells are unit cubes
(y coordinates), each holding one ball drawn from the same admissible
geometry law as the full medium, so every ball sits strictly inside its own
cell and balls never touch.

Voxelization produces the fluid volume-fraction field consumed by the sparse
divergence-form solver: 1 outside all balls, 0 deep inside, exact-band
subsampled fractions on cut voxels. The same medium object also serves as a
truncated-box geometry when assembled with Dirichlet outer boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist
from .medium import Cell, InclusionParams

MIN_VOXELS_ACROSS = 8


@dataclass(frozen=True)
class SupercellConfig:
    """Ensemble law of periodic supercells.

    resolution is the number of voxels per unit cell; the supercell grid has
    (L * resolution)^3 voxels, so cell boundaries align with voxel faces.
    """

    L: int = 5
    resolution: int = 16
    geometry: GeometryLaw = field(default_factory=lambda: GeometryLaw(
        ThetaDist("uniform"), ScalarDist("uniform", lo=0.25, hi=0.35), 0.05))
    material: ComplexDist = field(default_factory=lambda: ComplexDist(
        "point", value=2.0 + 0.5j))
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("supercell needs at least one cell per side")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2 voxels per cell")
        lo, _ = self.geometry.rho.support()
        if 2.0 * lo * self.resolution < MIN_VOXELS_ACROSS - 1e-12:
            raise ValueError(
                f"smallest ball spans {2.0 * lo * self.resolution:.2f} voxels;"
                f" need >= {MIN_VOXELS_ACROSS} (raise resolution)")


@dataclass(frozen=True)
class SupercellMedium:
    """One drawn supercell: per-cell inclusion parameters plus grid metadata.

    cells may omit entries (removed inclusions); remaining cells index the
    lattice [0, L)^3. All lengths are in cell units: the box has side L and
    the voxel size is 1/resolution.
    """

    config: SupercellConfig
    cells: dict[Cell, InclusionParams]
    generation: int = 0

    def __post_init__(self):
        L = self.config.L
        m = self.config.resolution
        for j, p in self.cells.items():
            if not all(0 <= c < L for c in j):
                raise ValueError(f"cell {j} outside the supercell lattice")
            if 2.0 * p.rho * m < MIN_VOXELS_ACROSS - 1e-12:
                raise ValueError(
                    f"ball in cell {j} spans {2.0 * p.rho * m:.2f} voxels")

    @property
    def L(self):
        return self.config.L

    @property
    def n(self):
        """Voxels per side of the supercell grid."""
        return self.config.L * self.config.resolution

    @property
    def spacing(self):
        """Voxel size in cell units (cells are unit cubes)."""
        return 1.0 / self.config.resolution

    def ball_center(self, j):
        return np.asarray(j, float) + np.asarray(self.cells[j].theta)

    def ball_radius(self, j):
        return self.cells[j].rho

    def without_cell(self, j):
        """Same supercell with the cell-j inclusion removed."""
        if j not in self.cells:
            raise KeyError(f"cell {j} has no inclusion")
        cells = {k: v for k, v in self.cells.items() if k != j}
        return replace(self, cells=cells)

    def with_cell(self, j, params):
        """Same supercell with cell j's inclusion pinned to given params."""
        cells = dict(self.cells)
        cells[tuple(int(c) for c in j)] = params
        return replace(self, cells=cells)

    def fluid_fraction(self, subsamples=4):
        """Fluid volume fraction per voxel on the (L*m)^3 grid."""
        n = self.n
        h = self.spacing
        frac = np.ones((n, n, n))
        axes = [(np.arange(n) + 0.5) * h for _ in range(3)]
        for j in self.cells:
            c = self.ball_center(j)
            r = self.ball_radius(j)
            sl, inside = _ball_voxel_fractions(axes, c, r, h, subsamples)
            frac[sl] -= inside
        np.clip(frac, 0.0, 1.0, out=frac)
        return frac

    def volume_fraction(self):
        """Exact total ball volume over supercell volume."""
        v = sum(4.0 / 3.0 * np.pi * p.rho ** 3 for p in self.cells.values())
        return v / self.config.L ** 3


def _ball_voxel_fractions(axes, center, radius, h, subsamples):
    """Window slices and per-voxel inside fractions for one ball.

    Voxels deeper than half a diagonal inside are fully solid, outside the
    band fully fluid; the cut band is resolved by subsamples^3 points.
    """
    band = np.sqrt(3.0) / 2.0 * h
    sl = []
    local = []
    for d in range(3):
        x = axes[d]
        keep = np.abs(x - center[d]) <= radius + band + h
        idx = np.nonzero(keep)[0]
        if idx.size == 0:
            return (slice(0, 0),) * 3, np.zeros((0, 0, 0))
        sl.append(slice(idx[0], idx[-1] + 1))
        local.append(x[idx[0]:idx[-1] + 1] - center[d])
    dx, dy, dz = np.meshgrid(*local, indexing="ij")
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    inside = np.zeros(dist.shape)
    inside[dist <= radius - band] = 1.0
    cut = (dist > radius - band) & (dist < radius + band)
    if np.any(cut):
        off = (np.arange(subsamples) + 0.5) / subsamples - 0.5
        ox, oy, oz = np.meshgrid(off * h, off * h, off * h, indexing="ij")
        pts = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
        cx = np.stack([dx[cut], dy[cut], dz[cut]], axis=1)
        d2 = ((cx[:, None, :] + pts[None, :, :]) ** 2).sum(axis=2)
        inside[cut] = (d2 <= radius * radius).mean(axis=1)
    return tuple(sl), inside


def sample_supercell(config, generation=0, fixed=None):
    """Draw one supercell environment.

    Cells are drawn independently through keyed streams, so equal
    (seed, generation) reproduce the identical environment and different
    generations are independent draws (the nested-MC replicas). ``fixed``
    pins chosen cells to given InclusionParams, overriding their draw; the
    pinned values do not consume randomness from the environment streams.
    """
    cells = {}
    L = config.L
    for j in np.ndindex(L, L, L):
        g = rng.component_generator(config.seed, rng.CELL_GEOMETRY, j,
                                    generation)
        theta, rho = config.geometry.sample(g)
        m = rng.component_generator(config.seed, rng.CELL_MATERIAL, j,
                                    generation)
        a = config.material.sample(m)
        cells[j] = InclusionParams(tuple(theta), rho, a)
    if fixed:
        for j, p in fixed.items():
            cells[tuple(int(c) for c in j)] = p
    return SupercellMedium(config=config, cells=cells, generation=generation)


def single_ball_supercell(L, resolution, rho, theta=(0.5, 0.5, 0.5),
                          a=2.0 + 0.5j, cell=None):
    """Supercell holding exactly one ball (dilute test geometries)."""
    config = SupercellConfig(
        L=L, resolution=resolution,
        geometry=GeometryLaw(ThetaDist("point", value=theta),
                             ScalarDist("point", value=rho),
                             min(0.05, max(1e-3, 0.49 - rho))),
        material=ComplexDist("point", value=a))
    if cell is None:
        cell = (L // 2,) * 3
    cells = {tuple(cell): InclusionParams(tuple(theta), rho, a)}
    return SupercellMedium(config=config, cells=cells)
