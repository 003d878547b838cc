"""Uniform cell-centered grids and absorbing-layer stretch profiles."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid3D:
    """Axis-aligned box of cubic cells.

    origin is the position of the lowest cell corner; cell centers sit at
    origin + (i + 1/2) h.
    """

    shape: tuple
    h: float
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.shape) != 3 or any(int(n) < 4 for n in self.shape):
            raise ValueError("need three axes with at least 4 cells each")
        if not self.h > 0:
            raise ValueError("cell size must be positive")

    def centers(self, axis):
        n = self.shape[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.h

    def meshgrid(self):
        return np.meshgrid(*(self.centers(d) for d in range(3)), indexing="ij")

    @property
    def extent(self):
        return tuple(n * self.h for n in self.shape)

    @property
    def ncells(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return self.h ** 3

    def to_dict(self):
        return {"shape": list(self.shape), "h": self.h,
                "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(int(n) for n in d["shape"]), float(d["h"]),
                   tuple(float(x) for x in d["origin"]))


def coarsening_chain(n, stop=8):
    """Sizes reached by repeated halving, ending at an odd size or <= stop."""
    sizes = [int(n)]
    while sizes[-1] > stop and sizes[-1] % 2 == 0:
        sizes.append(sizes[-1] // 2)
    return sizes


def mg_friendly_size(n_min, coarse_max=10):
    """Smallest n >= n_min whose halving chain bottoms out small enough for
    a dense coarse solve."""
    m = int(np.ceil(n_min))
    while coarsening_chain(m)[-1] > coarse_max:
        m += 1
    return m


def stretch_profiles(n, h, width, k0, sigma_scale=2.2, power=2):
    """Complex coordinate stretch s = 1 + i sigma/k0 at cell centers and faces.

    sigma ramps polynomially from zero at the inner edge of the absorbing
    layer to sigma_scale*k0 at the outer boundary, on both ends of the axis.
    A zero width gives the identity stretch (no layer).
    """
    xc = (np.arange(n) + 0.5) * h
    xf = np.arange(n + 1) * h
    if width == 0.0:
        return np.ones(n, np.complex128), np.ones(n + 1, np.complex128)
    L = n * h
    if 2 * width >= L:
        raise ValueError("absorbing layers overlap")
    smax = sigma_scale * k0

    def sigma(x):
        d = np.maximum(width - x, 0.0) + np.maximum(x - (L - width), 0.0)
        return smax * (d / width) ** power

    sc = 1.0 + 1j * sigma(xc) / k0
    sf = 1.0 + 1j * sigma(xf) / k0
    return sc.astype(np.complex128), sf.astype(np.complex128)


def pml_mask(grid, width):
    """Boolean cell mask of the absorbing layer (True inside the layer)."""
    m = np.zeros(grid.shape, bool)
    for d in range(3):
        x = grid.centers(d) - grid.origin[d]
        L = grid.shape[d] * grid.h
        edge = (x < width) | (x > L - width)
        sh = [1, 1, 1]
        sh[d] = -1
        m |= edge.reshape(sh)
    return m
