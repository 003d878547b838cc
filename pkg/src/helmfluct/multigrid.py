"""Geometric multigrid preconditioner for the stretched Helmholtz operator.

Cell-centered hierarchy: coefficients coarsen by 2x2x2 cell means and the
operator is rediscretized on each level with the same physical absorbing
layer. Transfers are the linear (3/4, 1/4) prolongation and its adjoint/8 as
restriction; the coarsest level is solved densely. The cycle runs entirely
in single precision and targets a spectrally shifted operator, which keeps
the smoother stable on the indefinite fine-grid problem; the surrounding
Krylov iteration sees the unshifted operator.
"""

import numpy as np

from . import kernels
from .grid import stretch_profiles

DENSE_COARSE_LIMIT = 4096


def coarsen_cells(a):
    """2x2x2 cell means; trailing odd slices must not exist (even dims)."""
    n1, n2, n3 = a.shape
    m1, m2, m3 = n1 // 2, n2 // 2, n3 // 2
    b = a[:2 * m1, :2 * m2, :2 * m3].reshape(m1, 2, m2, 2, m3, 2)
    return b.mean(axis=(1, 3, 5))


def harmonic_faces(a1, a2, a3, stretches):
    """Stretch-folded harmonic face coefficients, single precision.

    Boundary faces take the edge cell value, the Dirichlet ghost convention.
    """
    (s1c, s1f), (s2c, s2f), (s3c, s3f) = stretches
    n1, n2, n3 = a1.shape

    def harm(ap, am):
        return 2.0 * ap * am / (ap + am)

    fx = np.empty((n1 + 1, n2, n3), np.complex128)
    fx[1:-1] = harm(a1[1:], a1[:-1])
    fx[0] = a1[0]
    fx[-1] = a1[-1]
    fx *= s2c[None, :, None] * s3c[None, None, :] / s1f[:, None, None]
    fx64 = fx.astype(np.complex64)
    del fx

    fy = np.empty((n1, n2 + 1, n3), np.complex128)
    fy[:, 1:-1] = harm(a2[:, 1:], a2[:, :-1])
    fy[:, 0] = a2[:, 0]
    fy[:, -1] = a2[:, -1]
    fy *= s1c[:, None, None] * s3c[None, None, :] / s2f[None, :, None]
    fy64 = fy.astype(np.complex64)
    del fy

    fz = np.empty((n1, n2, n3 + 1), np.complex128)
    fz[:, :, 1:-1] = harm(a3[:, :, 1:], a3[:, :, :-1])
    fz[:, :, 0] = a3[:, :, 0]
    fz[:, :, -1] = a3[:, :, -1]
    fz *= s1c[:, None, None] * s2c[None, :, None] / s3f[None, None, :]
    fz64 = fz.astype(np.complex64)
    return fx64, fy64, fz64


def diag_array(fx, fy, fz, mass_frac, mu, stretches, ih2, k0sq):
    """Cell diagonal: face sum plus the mass term k0sq * mass * S."""
    (s1c, _), (s2c, _), (s3c, _) = stretches
    S = (s1c[:, None, None] * s2c[None, :, None] * s3c[None, None, :])
    if mass_frac is None:
        mass = 1.0
    else:
        mass = 1.0 + mass_frac * (mu - 1.0)
    dg = -(fx[1:].astype(np.complex128) + fx[:-1]
           + fy[:, 1:] + fy[:, :-1]
           + fz[:, :, 1:] + fz[:, :, :-1]) * ih2
    dg += k0sq * (mass * S)
    return dg.astype(np.complex64)


class _Level:
    __slots__ = ("fx", "fy", "fz", "dg", "ih2", "shape", "b", "u", "r")

    def __init__(self, fx, fy, fz, dg, ih2, alloc_bu):
        self.fx, self.fy, self.fz, self.dg = fx, fy, fz, dg
        self.ih2 = np.float32(ih2)
        self.shape = dg.shape
        pad = tuple(n + 2 for n in dg.shape)
        self.r = np.zeros(pad, np.complex64)
        if alloc_bu:
            self.b = np.zeros(pad, np.complex64)
            self.u = np.zeros(pad, np.complex64)
        else:
            self.b = self.u = None


class MGPreconditioner:
    """One V-cycle per application, complex64 throughout."""

    def __init__(self, cells, mass_frac, mu, h, k0, k0sq_shifted, pml,
                 nu=2, omega=0.8, coarse_max=10, finest_faces=None):
        self.nu = int(nu)
        self.omega = np.float32(omega)
        self.levels = []
        a1, a2, a3 = cells
        frac = mass_frac
        hh = float(h)
        first = True
        while True:
            shape = a1.shape
            stretches = [stretch_profiles(shape[d], hh, pml.width, k0,
                                          pml.sigma_scale, pml.power)
                         for d in range(3)]
            ih2 = 1.0 / hh ** 2
            if first and finest_faces is not None:
                fx, fy, fz = finest_faces
            else:
                fx, fy, fz = harmonic_faces(a1, a2, a3, stretches)
            dg = diag_array(fx, fy, fz, frac, mu, stretches, ih2, k0sq_shifted)
            self.levels.append(_Level(fx, fy, fz, dg, ih2, alloc_bu=not first))
            first = False
            if min(shape) <= coarse_max or any(n % 2 for n in shape):
                break
            shared = a2 is a1 and a3 is a1
            a1 = coarsen_cells(a1)
            if shared:
                a2 = a3 = a1
            else:
                a2 = coarsen_cells(a2)
                a3 = coarsen_cells(a3)
            if frac is not None:
                frac = coarsen_cells(frac)
            hh *= 2.0
        self._build_coarse_inverse()

    def _build_coarse_inverse(self):
        L = self.levels[-1]
        n1, n2, n3 = L.shape
        N = n1 * n2 * n3
        if N > DENSE_COARSE_LIMIT:
            raise ValueError(
                f"coarsest level has {N} cells, too many for a dense solve; "
                "pick grid sizes whose halving chain ends small")
        e = np.zeros((n1 + 2, n2 + 2, n3 + 2), np.complex64)
        out = np.zeros_like(e)
        A = np.empty((N, N), np.complex128)
        for i in range(N):
            i1, i2, i3 = np.unravel_index(i, L.shape)
            e[i1 + 1, i2 + 1, i3 + 1] = 1.0
            kernels.apply_op(e, out, L.fx, L.fy, L.fz, L.dg, L.ih2)
            A[:, i] = out[1:-1, 1:-1, 1:-1].reshape(-1)
            e[i1 + 1, i2 + 1, i3 + 1] = 0.0
        self._coarse_inv = np.linalg.inv(A)

    def __call__(self, b, out):
        """Apply one V-cycle to the padded rhs b, writing into out."""
        out.fill(0)
        self._cycle(0, b, out)

    def _cycle(self, l, b, u):
        L = self.levels[l]
        if l == len(self.levels) - 1:
            x = self._coarse_inv @ b[1:-1, 1:-1, 1:-1].reshape(-1)
            u[1:-1, 1:-1, 1:-1] = x.reshape(L.shape)
            return
        for _ in range(self.nu):
            kernels.gs_sweep(u, b, L.fx, L.fy, L.fz, L.dg, L.ih2, self.omega)
        kernels.residual_op(u, b, L.r, L.fx, L.fy, L.fz, L.dg, L.ih2)
        nxt = self.levels[l + 1]
        kernels.restrict_fw(L.r, nxt.b)
        nxt.u.fill(0)
        self._cycle(l + 1, nxt.b, nxt.u)
        kernels.prolong_add(nxt.u, u)
        for _ in range(self.nu):
            kernels.gs_sweep(u, b, L.fx, L.fy, L.fz, L.dg, L.ih2, self.omega)
