"""Counter-based random streams keyed by (seed, tag, cell, generation).

Every random component of a medium owns an independent, reproducible stream:
the stream is derived from the run seed plus a structural key, never from
global state. Redrawing a component ("generation" bump) yields a draw that is
independent of the original but itself reproducible, which is what the
swap-based covariance machinery needs: all generation-1 draws together form
one consistent independent copy of the medium.
"""

from __future__ import annotations

import numpy as np

# key tags (first spawn_key entry)
GEOMETRY = 0       # (theta, rho) of one cell
MATERIAL = 1       # a of one cell
ZSHIFT = 2         # lattice origin
NOISE = 3          # white-noise fields
GENERIC = 4        # anything else keyed by integers
CELL_GEOMETRY = 5  # (theta, rho) of one supercell environment cell
CELL_MATERIAL = 6  # a of one supercell environment cell

_CELL_OFFSET = 1 << 20  # spawn_key entries must be non-negative


def _check_cell(cell: tuple[int, int, int]) -> tuple[int, int, int]:
    for c in cell:
        if abs(int(c)) >= _CELL_OFFSET:
            raise ValueError(f"cell index {cell} out of supported range")
    return tuple(int(c) + _CELL_OFFSET for c in cell)


def component_generator(
    seed: int,
    tag: int,
    cell: tuple[int, int, int] = (0, 0, 0),
    generation: int = 0,
) -> np.random.Generator:
    """Independent generator for one component of one cell.

    Streams with different (tag, cell, generation) are statistically
    independent; identical keys reproduce the identical stream.
    """
    if generation < 0:
        raise ValueError("generation must be >= 0")
    key = (int(tag), *_check_cell(cell), int(generation))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
