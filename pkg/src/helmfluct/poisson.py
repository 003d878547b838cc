"""Sparse real SPD solver for divergence-form problems on voxel grids.

Handles the conductivity problem -div(c grad u) = s where c >= 0 comes from
a fluid volume-fraction field (zero inside obstacles). Voxels with zero fluid
fraction carry no unknown; faces touching them carry no flux, which realizes
interior Neumann boundaries. Outer boundaries are periodic or zero-Dirichlet.

Equations are kept in integrated finite-volume form: for unknown voxel p,

    sum_faces t_f (u_p - u_q) = b_p,

with transmissibility t_f the harmonic mean of the two adjacent fluid
fractions. Right-hand sides for a uniform background field e_i and for point
sources are provided in matching units by the callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pyamg
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg


def face_transmissibility(fa, fb):
    """Harmonic mean of adjacent fluid fractions; 0 when either side is solid."""
    s = fa + fb
    out = np.zeros(np.broadcast(fa, fb).shape)
    np.divide(2.0 * fa * fb, s, out=out, where=s > 0)
    return out


@dataclass
class VoxelPoisson:
    """Assembled system on the fluid voxels of a fraction field.

    index: voxel -> unknown number (-1 for solid voxels); matrix is the
    SPD graph Laplacian of face transmissibilities (plus Dirichlet ties to
    the outer boundary when bc="dirichlet").
    """

    frac: np.ndarray
    h: float
    bc: str
    index: np.ndarray
    matrix: object
    trans: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def nunknowns(self):
        return self.matrix.shape[0]

    def scatter(self, vec, fill=0.0):
        out = np.full(self.frac.shape, fill, float)
        out[self.index >= 0] = vec
        return out

    def gather(self, field):
        return np.ascontiguousarray(field[self.index >= 0], float)


def _axis_faces(frac, axis, bc):
    """Transmissibilities of the faces normal to *axis*.

    periodic: n faces per line, face k between voxels k-1 and k (k=0 wraps).
    dirichlet: n+1 faces per line; outer faces see a fluid ghost (fraction 1)
    holding value 0.
    """
    fwd = frac
    if bc == "periodic":
        bwd = np.roll(frac, 1, axis)
        return face_transmissibility(bwd, fwd)
    pad = [(0, 0)] * 3
    pad[axis] = (1, 1)
    padded = np.pad(frac, pad, constant_values=1.0)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, frac.shape[axis] + 1)
    hi[axis] = slice(1, frac.shape[axis] + 2)
    return face_transmissibility(padded[tuple(lo)], padded[tuple(hi)])


def assemble(frac, h, bc="periodic"):
    """Build the SPD system for the fraction field.

    bc = "periodic": supercell problem; the matrix is singular with the
    constant vector on the fluid component in its kernel.
    bc = "dirichlet": outer box faces tie to a zero ghost, nonsingular.
    """
    frac = np.asarray(frac, float)
    if frac.ndim != 3:
        raise ValueError("fraction field must be 3d")
    if np.any(frac < 0) or np.any(frac > 1):
        raise ValueError("fractions must lie in [0, 1]")
    if bc not in ("periodic", "dirichlet"):
        raise ValueError(f"unknown boundary mode {bc!r}")
    fluid = frac > 0
    n = int(fluid.sum())
    if n == 0:
        raise ValueError("no fluid voxels")
    index = np.full(frac.shape, -1, np.int64)
    index[fluid] = np.arange(n)

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    trans = []
    for axis in range(3):
        t = _axis_faces(frac, axis, bc)
        trans.append(t)
        if bc == "periodic":
            a = np.roll(index, 1, axis)   # voxel behind face k
            b = index                     # voxel ahead of face k
            tf = t
        else:
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[axis] = slice(0, frac.shape[axis] - 1)
            sl_hi[axis] = slice(1, frac.shape[axis])
            a = index[tuple(sl_lo)]
            b = index[tuple(sl_hi)]
            tf = t[tuple([slice(1, -1) if ax == axis else slice(None)
                          for ax in range(3)])]
            # boundary faces: direct tie into the diagonal (ghost value 0)
            first = [slice(None)] * 3
            last = [slice(None)] * 3
            first[axis] = 0
            last[axis] = frac.shape[axis]
            t_first = t[tuple(first)]
            t_last = t[tuple(last)]
            edge_lo = [slice(None)] * 3
            edge_hi = [slice(None)] * 3
            edge_lo[axis] = 0
            edge_hi[axis] = frac.shape[axis] - 1
            i_lo = index[tuple(edge_lo)]
            i_hi = index[tuple(edge_hi)]
            m = i_lo >= 0
            np.add.at(diag, i_lo[m], t_first[m])
            m = i_hi >= 0
            np.add.at(diag, i_hi[m], t_last[m])
        live = (a >= 0) & (b >= 0) & (tf > 0)
        ia = a[live]
        ib = b[live]
        tv = tf[live]
        rows.append(ia)
        cols.append(ib)
        vals.append(-tv)
        rows.append(ib)
        cols.append(ia)
        vals.append(-tv)
        np.add.at(diag, ia, tv)
        np.add.at(diag, ib, tv)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = coo_matrix((np.concatenate(vals),
                    (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n, n)).tocsr()
    return VoxelPoisson(frac, float(h), bc, index, A, tuple(trans))


def background_rhs(system, direction):
    """RHS of the corrector equation div(c (e_i + grad phi)) = 0.

    In integrated form b_p = h (t_{i+} - t_{i-}) with t the transmissibilities
    of the two faces of voxel p normal to *direction* (the net influx of the
    background field e_i through open faces).
    """
    t = system.trans[direction]
    if system.bc == "periodic":
        t_minus = t
        t_plus = np.roll(t, -1, direction)
    else:
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[direction] = slice(0, system.frac.shape[direction])
        hi[direction] = slice(1, system.frac.shape[direction] + 1)
        t_minus = t[tuple(lo)]
        t_plus = t[tuple(hi)]
    b = system.h * (t_plus - t_minus)
    return system.gather(b)


def point_source_rhs(system, voxel, strength=1.0):
    """Unit point source: integrated -div(c grad G) = strength*delta gives
    b = strength / h at the source voxel."""
    i = system.index[tuple(voxel)]
    if i < 0:
        raise ValueError("source voxel is inside an obstacle")
    b = np.zeros(system.nunknowns)
    b[i] = strength / system.h
    return b


class PoissonSolveError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class PoissonResult:
    values: np.ndarray          # full voxel field, 0 on solid voxels
    residual_rel: float         # ||b - A u||_2 / ||b||_2
    residual_max: float         # ||b - A u||_inf, integrated-divergence units
    iterations: int


class PoissonSolver:
    """CG with a classical (Ruge-Stuben) AMG preconditioner, reusable across
    right-hand sides on one assembled system.

    The transmissibility Laplacian is an M-matrix, where classical AMG
    coarsening is both robust and deterministic; determinism matters because
    downstream identities assert bit-identical repeat solves. The global
    numpy RNG state is fenced off during setup since some pyamg components
    draw spectral-estimate vectors from it.
    """

    def __init__(self, system):
        self.system = system
        state = np.random.get_state()
        np.random.seed(0)
        try:
            self._ml = pyamg.ruge_stuben_solver(system.matrix, max_coarse=64)
        finally:
            np.random.set_state(state)
        self._M = self._ml.aspreconditioner(cycle="V")

    def solve(self, b, tol=1e-9, maxiter=400):
        system = self.system
        nb = float(np.linalg.norm(b))
        if nb == 0.0:
            return PoissonResult(np.zeros(system.frac.shape), 0.0, 0.0, 0)
        count = [0]

        def cb(_):
            count[0] += 1

        u, info = cg(system.matrix, b, rtol=tol, atol=0.0, M=self._M,
                     maxiter=maxiter, callback=cb)
        r = b - system.matrix @ u
        rel = float(np.linalg.norm(r)) / nb
        if info != 0 and rel > tol:
            raise PoissonSolveError(
                f"cg stopped after {count[0]} iterations at relative "
                f"residual {rel:.3e}", [rel])
        if system.bc == "periodic":
            # gauge: zero fluid-volume-weighted mean
            w = system.gather(system.frac)
            u = u - (w @ u) / w.sum()
        return PoissonResult(system.scatter(u), rel,
                             float(np.abs(r).max()), count[0])
