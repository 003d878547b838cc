"""Compiled stencil kernels.

Field arrays carry one ghost cell per side; ghosts hold zero, which closes
the outer boundary with a homogeneous Dirichlet condition behind the
absorbing layers. Face-coefficient arrays are unpadded: fx[i, j, k] is the
coefficient on the face below cell (i, j, k) along the first axis, so fx has
shape (n1+1, n2, n3) and the slots fx[0], fx[n1] are boundary faces. All
kernels are dtype-generic; the solver instantiates them for complex64 inner
work and complex128 refinement.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def apply_op(u, out, fx, fy, fz, dg, ih2):
    n1, n2, n3 = dg.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                out[i + 1, j + 1, k + 1] = (
                    dg[i, j, k] * u[i + 1, j + 1, k + 1]
                    + ih2 * (fx[i, j, k] * u[i, j + 1, k + 1]
                             + fx[i + 1, j, k] * u[i + 2, j + 1, k + 1]
                             + fy[i, j, k] * u[i + 1, j, k + 1]
                             + fy[i, j + 1, k] * u[i + 1, j + 2, k + 1]
                             + fz[i, j, k] * u[i + 1, j + 1, k]
                             + fz[i, j, k + 1] * u[i + 1, j + 1, k + 2]))


@njit(cache=True, fastmath=True)
def residual_op(u, b, out, fx, fy, fz, dg, ih2):
    n1, n2, n3 = dg.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                out[i + 1, j + 1, k + 1] = b[i + 1, j + 1, k + 1] - (
                    dg[i, j, k] * u[i + 1, j + 1, k + 1]
                    + ih2 * (fx[i, j, k] * u[i, j + 1, k + 1]
                             + fx[i + 1, j, k] * u[i + 2, j + 1, k + 1]
                             + fy[i, j, k] * u[i + 1, j, k + 1]
                             + fy[i, j + 1, k] * u[i + 1, j + 2, k + 1]
                             + fz[i, j, k] * u[i + 1, j + 1, k]
                             + fz[i, j, k + 1] * u[i + 1, j + 1, k + 2]))


@njit(cache=True, fastmath=True)
def gs_sweep(u, b, fx, fy, fz, dg, ih2, omega):
    """Damped lexicographic Gauss-Seidel, in place."""
    n1, n2, n3 = dg.shape
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                r = b[i + 1, j + 1, k + 1] - (
                    dg[i, j, k] * u[i + 1, j + 1, k + 1]
                    + ih2 * (fx[i, j, k] * u[i, j + 1, k + 1]
                             + fx[i + 1, j, k] * u[i + 2, j + 1, k + 1]
                             + fy[i, j, k] * u[i + 1, j, k + 1]
                             + fy[i, j + 1, k] * u[i + 1, j + 2, k + 1]
                             + fz[i, j, k] * u[i + 1, j + 1, k]
                             + fz[i, j, k + 1] * u[i + 1, j + 1, k + 2]))
                u[i + 1, j + 1, k + 1] += omega * r / dg[i, j, k]


@njit(cache=True, fastmath=True)
def restrict_fw(r, rc):
    """Full-weighting cell-centered restriction (adjoint of prolong_add / 8)."""
    m1, m2, m3 = rc.shape
    for I in range(1, m1 - 1):
        i = 2 * I - 1
        for J in range(1, m2 - 1):
            j = 2 * J - 1
            for K in range(1, m3 - 1):
                k = 2 * K - 1
                s = r[i, j, k] - r[i, j, k]  # typed zero
                for di in (-1, 0, 1, 2):
                    wi = 1.0 if di in (-1, 2) else 3.0
                    for dj in (-1, 0, 1, 2):
                        wj = 1.0 if dj in (-1, 2) else 3.0
                        for dk in (-1, 0, 1, 2):
                            wk = 1.0 if dk in (-1, 2) else 3.0
                            s += wi * wj * wk * r[i + di, j + dj, k + dk]
                rc[I, J, K] = s / 512.0


@njit(cache=True, fastmath=True)
def prolong_add(ec, u):
    """Trilinear cell-centered prolongation with (3/4, 1/4) weights, added
    into the fine array."""
    m1, m2, m3 = ec.shape
    for I in range(1, m1 - 1):
        i = 2 * I - 1
        for J in range(1, m2 - 1):
            j = 2 * J - 1
            for K in range(1, m3 - 1):
                k = 2 * K - 1
                for di in (0, 1):
                    si = 1 if di else -1
                    for dj in (0, 1):
                        sj = 1 if dj else -1
                        for dk in (0, 1):
                            sk = 1 if dk else -1
                            val = (27.0 * ec[I, J, K]
                                   + 9.0 * (ec[I + si, J, K] + ec[I, J + sj, K]
                                            + ec[I, J, K + sk])
                                   + 3.0 * (ec[I + si, J + sj, K]
                                            + ec[I + si, J, K + sk]
                                            + ec[I, J + sj, K + sk])
                                   + ec[I + si, J + sj, K + sk]) / 64.0
                            u[i + di, j + dj, k + dk] += val


@njit(cache=True, fastmath=True)
def residual_otf(x, b, out, a1, a2, a3, mk, mu_in, s1c, s2c, s3c,
                 s1f, s2f, s3f, k0sq, ih2):
    """Full-precision residual with face coefficients recomputed on the fly.

    a1, a2, a3 are padded per-axis cell coefficients (edge-padded, so
    boundary faces reduce to the cell value); mk marks cells where the mass
    coefficient is mu_in instead of 1.
    """
    n1, n2, n3 = x.shape
    one = mu_in - mu_in + 1.0
    for i in range(1, n1 - 1):
        sc1 = s1c[i - 1]
        g1m = 1.0 / s1f[i - 1]
        g1p = 1.0 / s1f[i]
        for j in range(1, n2 - 1):
            sc2 = s2c[j - 1]
            c12 = sc1 * sc2
            g2m = 1.0 / s2f[j - 1]
            g2p = 1.0 / s2f[j]
            for k in range(1, n3 - 1):
                sc3 = s3c[k - 1]
                a1c = a1[i, j, k]
                a2c = a2[i, j, k]
                a3c = a3[i, j, k]
                axm = 2.0 * a1c * a1[i - 1, j, k] / (a1c + a1[i - 1, j, k]) * (sc2 * sc3 * g1m)
                axp = 2.0 * a1c * a1[i + 1, j, k] / (a1c + a1[i + 1, j, k]) * (sc2 * sc3 * g1p)
                aym = 2.0 * a2c * a2[i, j - 1, k] / (a2c + a2[i, j - 1, k]) * (sc1 * sc3 * g2m)
                ayp = 2.0 * a2c * a2[i, j + 1, k] / (a2c + a2[i, j + 1, k]) * (sc1 * sc3 * g2p)
                azm = 2.0 * a3c * a3[i, j, k - 1] / (a3c + a3[i, j, k - 1]) * (c12 / s3f[k - 1])
                azp = 2.0 * a3c * a3[i, j, k + 1] / (a3c + a3[i, j, k + 1]) * (c12 / s3f[k])
                mass = mu_in if mk[i, j, k] else one
                diag = -(axm + axp + aym + ayp + azm + azp) * ih2 + k0sq * mass * (c12 * sc3)
                out[i, j, k] = b[i, j, k] - (
                    diag * x[i, j, k]
                    + ih2 * (axm * x[i - 1, j, k] + axp * x[i + 1, j, k]
                             + aym * x[i, j - 1, k] + ayp * x[i, j + 1, k]
                             + azm * x[i, j, k - 1] + azp * x[i, j, k + 1]))


@njit(cache=True, fastmath=True)
def mixed_accumulate(u, out, m12, m13, m23, scale):
    """Add scale * sum of symmetrized cross-derivative terms to out.

    Discretizes d_i(m_ij d_j u) + d_j(m_ij d_i u) per axis pair with centered
    differences; scale carries 1/(2h)^2 and the sign. All arrays padded.
    """
    n1, n2, n3 = u.shape
    for i in range(1, n1 - 1):
        for j in range(1, n2 - 1):
            for k in range(1, n3 - 1):
                t = (m12[i + 1, j, k] * (u[i + 1, j + 1, k] - u[i + 1, j - 1, k])
                     - m12[i - 1, j, k] * (u[i - 1, j + 1, k] - u[i - 1, j - 1, k])
                     + m12[i, j + 1, k] * (u[i + 1, j + 1, k] - u[i - 1, j + 1, k])
                     - m12[i, j - 1, k] * (u[i + 1, j - 1, k] - u[i - 1, j - 1, k])
                     + m13[i + 1, j, k] * (u[i + 1, j, k + 1] - u[i + 1, j, k - 1])
                     - m13[i - 1, j, k] * (u[i - 1, j, k + 1] - u[i - 1, j, k - 1])
                     + m13[i, j, k + 1] * (u[i + 1, j, k + 1] - u[i - 1, j, k + 1])
                     - m13[i, j, k - 1] * (u[i + 1, j, k - 1] - u[i - 1, j, k - 1])
                     + m23[i, j + 1, k] * (u[i, j + 1, k + 1] - u[i, j + 1, k - 1])
                     - m23[i, j - 1, k] * (u[i, j - 1, k + 1] - u[i, j - 1, k - 1])
                     + m23[i, j, k + 1] * (u[i, j + 1, k + 1] - u[i, j - 1, k + 1])
                     - m23[i, j, k - 1] * (u[i, j + 1, k - 1] - u[i, j - 1, k - 1]))
                out[i, j, k] += scale * t


@njit(cache=True)
def norm_sq(a):
    """Squared 2-norm with a double accumulator, any complex dtype."""
    fl = a.reshape(-1)
    s = 0.0
    for i in range(fl.size):
        v = fl[i]
        s += v.real * v.real + v.imag * v.imag
    return s


@njit(cache=True)
def vdot_acc(a, b):
    """conj(a).b with double accumulators."""
    fa = a.reshape(-1)
    fb = b.reshape(-1)
    sr = 0.0
    si = 0.0
    for i in range(fa.size):
        x = fa[i]
        y = fb[i]
        sr += x.real * y.real + x.imag * y.imag
        si += x.real * y.imag - x.imag * y.real
    return complex(sr, si)


def pad_field(values, edge=False):
    """One ghost layer around a cell field; edge-replicated or zero."""
    mode = "edge" if edge else "constant"
    return np.pad(values, 1, mode=mode)
