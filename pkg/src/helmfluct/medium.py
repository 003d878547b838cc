"""Random high-contrast media on a lattice of side eta inside a domain B.

A medium sample assigns to every lattice cell fully contained in B an
inclusion: a ball of radius eta*rho centered at eta*(j - z + theta), carrying
coefficient eta^2 * a. Outside inclusions the coefficient is a_b inside B and
1 outside. Cells, radii and materials are drawn independently per cell from
the configured laws, with (theta, rho) conditioned on the admissibility
margin xi so every ball is strictly inside its own cell.

Components are addressable for swap-based covariance identities: any subset
of cells can have its geometry (theta, rho) or material (a) redrawn at a
chosen generation, and all draws of one generation together form a single
consistent independent copy of the medium.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist

Cell = tuple[int, int, int]


@dataclass(frozen=True)
class DomainSpec:
    """Bounded domain B; axis-aligned box (side) or ball (radius)."""

    kind: str = "box"
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    side: float = 1.0
    radius: float = 0.5

    def __post_init__(self):
        if self.kind not in ("box", "ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "box" and self.side <= 0:
            raise ValueError("box side must be positive")
        if self.kind == "ball" and self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, float)) - np.asarray(self.center)
        if self.kind == "box":
            inside = np.all(np.abs(p) < 0.5 * self.side, axis=-1)
        else:
            inside = np.einsum("...i,...i->...", p, p) < self.radius ** 2
        return inside if np.asarray(points).ndim > 1 else inside[0]

    def distance_to_boundary(self, points: np.ndarray) -> np.ndarray:
        """Signed distance (positive inside) to the boundary of B."""
        p = np.atleast_2d(np.asarray(points, float)) - np.asarray(self.center)
        if self.kind == "box":
            d = 0.5 * self.side - np.max(np.abs(p), axis=-1)
        else:
            d = self.radius - np.sqrt(np.einsum("...i,...i->...", p, p))
        return d if np.asarray(points).ndim > 1 else d[0]

    def interior_cells(self, eta: float, z: np.ndarray) -> list[Cell]:
        """All lattice cells j with eta*(j - z + unit cell) inside B."""
        c = np.asarray(self.center, float)
        if self.kind == "box":
            lo = c - 0.5 * self.side
            hi = c + 0.5 * self.side
        else:
            lo = c - self.radius
            hi = c + self.radius
        jlo = np.ceil(lo / eta + z - 1e-12).astype(int)
        jhi = np.floor(hi / eta + z - 1 + 1e-12).astype(int)
        cells = []
        for i in range(jlo[0], jhi[0] + 1):
            for j in range(jlo[1], jhi[1] + 1):
                for k in range(jlo[2], jhi[2] + 1):
                    if self.kind == "box":
                        cells.append((i, j, k))
                        continue
                    corners = eta * (np.array([i, j, k], float) - z
                                     + np.array(np.meshgrid([0, 1], [0, 1], [0, 1],
                                                            indexing="ij")).reshape(3, -1).T)
                    if self.contains(corners).all():
                        cells.append((i, j, k))
        return cells

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": list(self.center)}
        d["side" if self.kind == "box" else "radius"] = (
            self.side if self.kind == "box" else self.radius)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DomainSpec":
        kw = dict(d)
        kw["center"] = tuple(kw.get("center", (0.0, 0.0, 0.0)))
        return DomainSpec(**kw)


@dataclass(frozen=True)
class InclusionParams:
    """Geometry and material of one cell's inclusion (cell-local units)."""

    theta: tuple[float, float, float]
    rho: float
    a: complex

    def __post_init__(self):
        if not all(0.0 < t < 1.0 for t in self.theta):
            raise ValueError("center must lie in the open unit cell")
        if not 0.0 < self.rho < 0.5:
            raise ValueError("radius must lie in (0, 1/2)")
        if complex(self.a).imag < 0 or complex(self.a).real <= 0:
            raise ValueError("material must satisfy Re a > 0, Im a >= 0")


@dataclass(frozen=True)
class MediumConfig:
    eta: float
    domain: DomainSpec = field(default_factory=DomainSpec)
    geometry: GeometryLaw = field(default_factory=lambda: GeometryLaw(
        ThetaDist("uniform"), ScalarDist("uniform", lo=0.15, hi=0.3), 0.05))
    material: ComplexDist = field(default_factory=lambda: ComplexDist(
        "point", value=2.0 + 0.5j))
    z: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not all(0.0 <= zc < 1.0 for zc in self.z):
            raise ValueError("lattice origin z must lie in [0, 1)^3")

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "eta": self.eta,
            "domain": self.domain.to_dict(),
            "theta": _dist_dict(g.theta),
            "rho": _dist_dict(g.rho),
            "xi": g.xi,
            "material": _dist_dict(self.material),
            "z": list(self.z),
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "MediumConfig":
        return MediumConfig(
            eta=d["eta"],
            domain=DomainSpec.from_dict(d["domain"]),
            geometry=GeometryLaw(ThetaDist.from_dict(d["theta"]),
                                 ScalarDist.from_dict(d["rho"]), d["xi"]),
            material=ComplexDist.from_dict(d["material"]),
            z=tuple(d.get("z", (0.0, 0.0, 0.0))),
            seed=d.get("seed", 0),
        )


def _dist_dict(dist) -> dict:
    out = {"kind": dist.kind}
    for name in ("value", "lo", "hi", "values", "probs",
                 "re_lo", "re_hi", "im_lo", "im_hi"):
        if hasattr(dist, name):
            v = getattr(dist, name)
            if isinstance(v, complex):
                v = [v.real, v.imag]
            elif isinstance(v, tuple):
                v = [[c.real, c.imag] if isinstance(c, complex) else c for c in v]
            out[name] = v
    return out


@dataclass(frozen=True)
class SwapSpec:
    """Which components to redraw: geometry or material of a cell set.

    ``star`` marks the joint-redraw variant used by the covariance identity:
    for a material swap it additionally redraws the geometry of every cell
    (the whole (theta, rho) family is replaced by its independent copy). For
    a geometry swap the starred and plain variants coincide.
    """

    alpha: str
    cells: tuple[Cell, ...]
    star: bool = False

    def __post_init__(self):
        if self.alpha not in ("geometry", "material"):
            raise ValueError("alpha must be 'geometry' or 'material'")


@dataclass(frozen=True)
class MediumSample:
    config: MediumConfig
    cells: dict[Cell, InclusionParams]
    z: tuple[float, float, float]
    geometry_gen: dict[Cell, int] = field(default_factory=dict)
    material_gen: dict[Cell, int] = field(default_factory=dict)

    @property
    def eta(self) -> float:
        return self.config.eta

    def inclusion_center(self, j: Cell) -> np.ndarray:
        """Physical center of cell j's inclusion."""
        p = self.cells[j]
        return self.eta * (np.asarray(j, float) - np.asarray(self.z)
                           + np.asarray(p.theta))

    def inclusion_radius(self, j: Cell) -> float:
        return self.eta * self.cells[j].rho


def _draw_cell(config: MediumConfig, j: Cell, geom_gen: int, mat_gen: int
               ) -> InclusionParams:
    g = rng.component_generator(config.seed, rng.GEOMETRY, j, geom_gen)
    theta, rho = config.geometry.sample(g)
    m = rng.component_generator(config.seed, rng.MATERIAL, j, mat_gen)
    a = config.material.sample(m)
    return InclusionParams(tuple(theta), rho, a)


def sample_medium(config: MediumConfig) -> MediumSample:
    """Draw the generation-0 medium: one inclusion per cell inside B."""
    z = np.asarray(config.z, float)
    cells = {}
    for j in config.domain.interior_cells(config.eta, z):
        cells[j] = _draw_cell(config, j, 0, 0)
    return MediumSample(config=config, cells=cells, z=config.z)


def resample(sample: MediumSample, swap: SwapSpec, generation: int = 1
             ) -> MediumSample:
    """Redraw the swapped components at the given generation.

    Draws of equal generation are mutually consistent: resampling overlapping
    cell sets at the same generation produces identical replacement values,
    so swapped media built from one generation share a single independent
    copy of the underlying components.
    """
    if generation < 1:
        raise ValueError("replacement draws need generation >= 1")
    for j in swap.cells:
        if j not in sample.cells:
            raise KeyError(f"cell {j} not in sample")
    geometry_gen = dict(sample.geometry_gen)
    material_gen = dict(sample.material_gen)
    if swap.alpha == "geometry":
        for j in swap.cells:
            geometry_gen[j] = generation
    else:
        for j in swap.cells:
            material_gen[j] = generation
        if swap.star:
            for j in sample.cells:
                geometry_gen[j] = generation
    cells = {}
    for j in sample.cells:
        gg = geometry_gen.get(j, 0)
        mg = material_gen.get(j, 0)
        cells[j] = _draw_cell(sample.config, j, gg, mg)
    return MediumSample(config=sample.config, cells=cells, z=sample.z,
                        geometry_gen=geometry_gen, material_gen=material_gen)


def shift_medium(sample: MediumSample, x: np.ndarray) -> MediumSample:
    """Lattice shift: cells relabel by the integer part of z + x, the origin
    keeps the fractional part. Composing shifts by x then y equals one shift
    by x + y."""
    zx = np.asarray(sample.z, float) + np.asarray(x, float)
    step = np.floor(zx).astype(int)
    z_new = tuple(zx - step)
    cells = {}
    geometry_gen = {}
    material_gen = {}
    for j, params in sample.cells.items():
        jn = (j[0] - step[0], j[1] - step[1], j[2] - step[2])
        cells[jn] = params
        if j in sample.geometry_gen:
            geometry_gen[jn] = sample.geometry_gen[j]
        if j in sample.material_gen:
            material_gen[jn] = sample.material_gen[j]
    return MediumSample(config=sample.config, cells=cells, z=z_new,
                        geometry_gen=geometry_gen, material_gen=material_gen)


def coefficient_at(sample: MediumSample, points: np.ndarray, a_b: complex
                   ) -> np.ndarray:
    """Coefficient field at arbitrary points.

    eta^2 * a_j inside cell j's inclusion, a_b elsewhere inside B, 1 outside.
    Admissibility guarantees each ball is strictly inside its own cell, so
    only the cell containing a point needs checking.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    eta = sample.eta
    z = np.asarray(sample.z)
    out = np.where(sample.config.domain.contains(pts),
                   complex(a_b), 1.0 + 0j).astype(complex)
    jj = np.floor(pts / eta + z).astype(int)
    for idx in range(pts.shape[0]):
        j = tuple(jj[idx])
        params = sample.cells.get(j)
        if params is None:
            continue
        center = eta * (np.asarray(j, float) - z + np.asarray(params.theta))
        if np.sum((pts[idx] - center) ** 2) < (eta * params.rho) ** 2:
            out[idx] = eta ** 2 * params.a
    return out if np.asarray(points).ndim > 1 else out[0]


def to_json(sample: MediumSample) -> str:
    d = {
        "config": sample.config.to_dict(),
        "z": list(sample.z),
        "cells": [
            {
                "j": list(j),
                "theta": list(p.theta),
                "rho": p.rho,
                "a": [p.a.real, p.a.imag],
                "geometry_gen": sample.geometry_gen.get(j, 0),
                "material_gen": sample.material_gen.get(j, 0),
            }
            for j, p in sorted(sample.cells.items())
        ],
    }
    return json.dumps(d, indent=1)


def from_json(text: str) -> MediumSample:
    d = json.loads(text)
    config = MediumConfig.from_dict(d["config"])
    cells = {}
    geometry_gen = {}
    material_gen = {}
    for rec in d["cells"]:
        j = tuple(rec["j"])
        cells[j] = InclusionParams(tuple(rec["theta"]), rec["rho"],
                                   complex(rec["a"][0], rec["a"][1]))
        if rec.get("geometry_gen", 0):
            geometry_gen[j] = rec["geometry_gen"]
        if rec.get("material_gen", 0):
            material_gen[j] = rec["material_gen"]
    return MediumSample(config=config, cells=cells, z=tuple(d["z"]),
                        geometry_gen=geometry_gen, material_gen=material_gen)
