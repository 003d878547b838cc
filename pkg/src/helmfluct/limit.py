"""Limiting second moments and the white-noise SPDE cross-check.

Two routes to the same numbers. The quadrature route contracts the
covariance tensors against gradients of the homogenized field and the
g-weighted Green function. The sampling route draws matrix/scalar white
noise per voxel, assembles the divergence-form right-hand side, solves the
homogenized system, and accumulates moments of (g, v).

The two are made to agree by construction, not by tuning: the functional
satisfies (g, v) = h^3 sum G_g * rhs exactly (the operator is complex
symmetric and both g and the noise live where the absorbing-layer stretch
is 1), and the divergence uses the centered difference whose matrix is
exactly antisymmetric, so summation by parts holds without boundary terms.
What remains between the routes is solver tolerance and Monte Carlo noise.

Cross-correlation sign: the sampler uses E{W N_theta} = -C_WN, the pairing
under which the quadrature's cross terms carry their stated plus signs;
C_WN itself is stored with the reversed-M convention of its definition.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .grid import Grid3D
from .helmholtz import (ComplexGridField, assemble, effective_problem,
                        solve)


def centered_gradient(values, h):
    """Centered differences with zero extension beyond the grid.

    The one-axis matrix is exactly antisymmetric, which is what makes the
    discrete summation by parts against centered_divergence exact.
    """
    values = np.asarray(values)
    out = np.zeros((3,) + values.shape,
                   np.promote_types(values.dtype, np.float64))
    for d in range(3):
        fwd = np.zeros_like(out[d])
        bwd = np.zeros_like(out[d])
        head = [slice(None)] * 3
        tail = [slice(None)] * 3
        head[d] = slice(None, -1)
        tail[d] = slice(1, None)
        fwd[tuple(head)] = values[tuple(tail)]
        bwd[tuple(tail)] = values[tuple(head)]
        out[d] = (fwd - bwd) / (2.0 * h)
    return out


def centered_divergence(flux, h):
    """Adjoint of -centered_gradient, axis by axis."""
    flux = np.asarray(flux)
    out = np.zeros(flux.shape[1:], flux.dtype)
    for d in range(3):
        fwd = np.zeros_like(out)
        bwd = np.zeros_like(out)
        head = [slice(None)] * 3
        tail = [slice(None)] * 3
        head[d] = slice(None, -1)
        tail[d] = slice(1, None)
        fwd[tuple(head)] = flux[d][tuple(tail)]
        bwd[tuple(tail)] = flux[d][tuple(head)]
        out += (fwd - bwd) / (2.0 * h)
    return out


def interior_mask(grid, domain, delta=0.0):
    """Voxels whose centers sit inside the domain with margin delta."""
    X, Y, Z = grid.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    dist = domain.distance_to_boundary(pts).reshape(grid.shape)
    return dist > delta


def _field_on(grid, field, what):
    if isinstance(field, ComplexGridField):
        if field.grid != grid:
            raise ValueError(f"{what} grid does not match")
        return field.values
    field = np.asarray(field)
    if tuple(field.shape) != tuple(grid.shape):
        raise ValueError(f"{what} shape does not match grid")
    return field


def _shared_grid(u_h, green_g):
    for f in (green_g, u_h):
        if isinstance(f, ComplexGridField):
            return f.grid
    raise ValueError("need at least one ComplexGridField to fix the grid")


def quadrature_kernels(u_h, green_g, domain, delta=0.0):
    """Field contractions the limiting moments are linear functionals of.

    P and P_plain pair gradient products with themselves (conjugated and
    plain), r and r_plain pair them with the field product, s2/s2_plain
    are the field-product quadratic sums. Evaluating moments through these
    kernels makes exact linear error propagation in the covariance entries
    a matter of absolute-value contractions.
    """
    grid = _shared_grid(u_h, green_g)
    u = _field_on(grid, u_h, "field")
    G = _field_on(grid, green_g, "weight field")
    mask = interior_mask(grid, domain, delta)
    du = centered_gradient(u, grid.h)[:, mask]
    dG = centered_gradient(G, grid.h)[:, mask]
    s = G[mask] * u[mask]
    q = np.einsum("it,jt->ijt", dG, du).reshape(9, -1)
    return {
        "P": np.einsum("at,bt->ab", q, q.conj()),
        "P_plain": np.einsum("at,bt->ab", q, q),
        "r": np.einsum("at,t->a", q, s.conj()).reshape(3, 3),
        "r_plain": np.einsum("at,t->a", q, s).reshape(3, 3),
        "s2": float(np.sum(np.abs(s) ** 2)),
        "s2_plain": complex(np.sum(s ** 2)),
        "w": grid.cell_volume,
        "cells": int(mask.sum()),
    }


def contract_moments(cov, kernels, a_b, k0):
    """Pair a covariance set with precomputed quadrature kernels."""
    c9 = np.asarray(cov.C_W, float).reshape(9, 9)
    cross = np.asarray(cov.C_WN)
    t_w_abs = np.einsum("ab,ab->", c9, kernels["P"])
    t_w_sq = np.einsum("ab,ab->", c9, kernels["P_plain"])
    t_x_abs = np.einsum("ij,ij->", cross.conj(), kernels["r"])
    t_x_sq = np.einsum("ij,ij->", cross, kernels["r_plain"])
    w = kernels["w"]
    e_abs2 = (a_b ** 2 * t_w_abs.real
              + k0 ** 4 * (cov.C_theta_star + cov.C_a_star) * kernels["s2"]
              + 2.0 * (a_b * k0 ** 2 * t_x_abs).real) * w
    e_sq = (a_b ** 2 * t_w_sq
            + k0 ** 4 * (cov.C_theta + cov.C_a) * kernels["s2_plain"]
            + 2.0 * a_b * k0 ** 2 * t_x_sq) * w
    return float(e_abs2), complex(e_sq)


def moment_error_bound(kernels, a_b, k0, d_cw=0.0, d_cwn=0.0):
    """Worst-case |change of E_abs2| for entrywise covariance changes.

    d_cw and d_cwn are absolute entry bounds (scalars or arrays); the
    moments are linear in the entries, so the bound is exact.
    """
    d_cw = np.asarray(d_cw, float)
    d_cw = np.full((9, 9), float(d_cw)) if d_cw.ndim == 0 \
        else d_cw.reshape(9, 9)
    term_w = a_b ** 2 * float(np.sum(d_cw * np.abs(kernels["P"])))
    term_x = 2.0 * a_b * k0 ** 2 * float(
        np.sum(np.abs(d_cwn) * np.abs(kernels["r"])))
    return (term_w + term_x) * kernels["w"]


def limit_second_moments(cov, u_h, green_g, domain, a_b, k0, delta=0.0):
    """Quadrature of the limiting E|U(g)|^2 and E{U(g)^2}.

    u_h and green_g must share a grid; u_h may be a ComplexGridField or a
    raw array paired with green_g's grid. Returns (E_abs2, E_sq).
    """
    kernels = quadrature_kernels(u_h, green_g, domain, delta)
    return contract_moments(cov, kernels, a_b, k0)


def decimated(grid, values):
    """Every second voxel, as a field on the matching 2h grid."""
    sub = np.asarray(values)[::2, ::2, ::2]
    origin = tuple(o - grid.h / 2 for o in grid.origin)
    coarse = Grid3D(tuple(sub.shape), 2 * grid.h, origin)
    return coarse, sub


def quadrature_refinement_gap(cov, u_h, green_g, domain, a_b, k0,
                              delta=0.0):
    """Change of both moments when the quadrature grid coarsens to 2h.

    Estimates quadrature error of the integrals only; the fields are
    subsampled, not re-solved.
    """
    grid = _shared_grid(u_h, green_g)
    fine = limit_second_moments(cov, u_h, green_g, domain, a_b, k0, delta)
    coarse_grid, u2 = decimated(grid, _field_on(grid, u_h, "field"))
    _, g2 = decimated(grid, _field_on(grid, green_g, "weight field"))
    coarse = limit_second_moments(cov, u2, ComplexGridField(coarse_grid, g2),
                                  domain, a_b, k0, delta)
    return abs(fine[0] - coarse[0]), abs(fine[1] - coarse[1])


@dataclass(frozen=True)
class NoiseFields:
    """One white-noise realization on a solver grid.

    W is the real 3x3 matrix noise per voxel; N_theta and N_a the complex
    scalar noises, N_a independent of the pair (W, N_theta). Entries carry
    the 1/sqrt(cell_volume) delta-correlation normalization.
    """

    grid: Grid3D
    W: np.ndarray
    N_theta: np.ndarray
    N_a: np.ndarray
    cell_volume: float

    def __post_init__(self):
        shape = tuple(self.grid.shape)
        if tuple(self.W.shape) != (3, 3) + shape:
            raise ValueError("W must be a 3x3 field on the grid")
        if np.iscomplexobj(self.W):
            raise ValueError("W is a real matrix noise")
        for name in ("N_theta", "N_a"):
            if tuple(getattr(self, name).shape) != shape:
                raise ValueError(f"{name} shape does not match grid")
        if not np.isclose(self.cell_volume, self.grid.cell_volume):
            raise ValueError("cell_volume disagrees with the grid")


def noise_covariance_blocks(cov):
    """Real second-moment matrices of (W flat, Re N_th, Im N_th) and N_a.

    Unit normalization (multiply samples by 1/sqrt(cell_volume) for the
    voxel fields). The W to N_theta cross block carries the minus sign
    discussed in the module docstring.
    """
    s11 = np.zeros((11, 11))
    s11[:9, :9] = np.asarray(cov.C_W, float).reshape(9, 9)
    cross = -np.asarray(cov.C_WN)
    s11[:9, 9] = cross.real.ravel()
    s11[:9, 10] = cross.imag.ravel()
    s11[9, :9] = s11[:9, 9]
    s11[10, :9] = s11[:9, 10]
    s11[9, 9] = 0.5 * (cov.C_theta_star + cov.C_theta.real)
    s11[10, 10] = 0.5 * (cov.C_theta_star - cov.C_theta.real)
    s11[9, 10] = s11[10, 9] = 0.5 * cov.C_theta.imag
    sa = np.array([
        [0.5 * (cov.C_a_star + cov.C_a.real), 0.5 * cov.C_a.imag],
        [0.5 * cov.C_a.imag, 0.5 * (cov.C_a_star - cov.C_a.real)],
    ])
    return s11, sa


def _factor(sigma, what):
    vals, vecs = np.linalg.eigh(sigma)
    floor = -1e-10 * max(float(vals.max()), 0.0) - 1e-300
    if vals.min() < floor:
        raise ValueError(
            f"{what} covariance is not positive semidefinite "
            f"(smallest eigenvalue {vals.min():.3e}); the Monte Carlo "
            "input is inconsistent")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_noise(cov, grid, rng):
    """Draw one jointly Gaussian noise realization on the grid.

    Second moments per voxel equal the covariance entries divided by the
    cell volume; only those moments are specified by the model, and the
    Gaussian law is the documented sampling choice.
    """
    s11, sa = noise_covariance_blocks(cov)
    f11 = _factor(s11, "matrix noise")
    fa = _factor(sa, "material noise")
    n = grid.ncells
    scale = 1.0 / np.sqrt(grid.cell_volume)
    z = rng.standard_normal((11, n))
    joint = (f11 @ z) * scale
    shape = tuple(grid.shape)
    w = joint[:9].reshape((3, 3) + shape).copy()
    n_theta = (joint[9] + 1j * joint[10]).reshape(shape)
    za = rng.standard_normal((2, n))
    ja = (fa @ za) * scale
    n_a = (ja[0] + 1j * ja[1]).reshape(shape)
    return NoiseFields(grid, w, n_theta, n_a, grid.cell_volume)


def noise_rhs(noise, u_h, domain, a_b, k0, delta=0.0):
    """-a_b div(1_B W grad u_h) - k0^2 1_B (N_theta + N_a) u_h."""
    grid = noise.grid
    u = _field_on(grid, u_h, "field")
    mask = interior_mask(grid, domain, delta)
    du = centered_gradient(u, grid.h)
    flux = np.einsum("ij...,j...->i...", noise.W, du)
    flux *= mask[None]
    rhs = -a_b * centered_divergence(flux, grid.h)
    rhs -= k0 ** 2 * mask * (noise.N_theta + noise.N_a) * u
    return rhs


def sample_v(noise, u_h, a_eff, mu_eff, settings, domain, a_b, delta=0.0):
    """Solve the homogenized system driven by one noise realization."""
    rhs = noise_rhs(noise, u_h, domain, a_b, settings.k0, delta)
    problem = effective_problem(settings, domain, a_eff, mu_eff, rhs)
    result = solve(assemble(problem), **settings.solver_kwargs())
    return result.field


def scalar_second_moments(values):
    """Centered second moments of complex samples with jackknife stderr."""
    v = np.asarray(values, complex)
    s = len(v)
    if s < 3:
        raise ValueError("need at least three samples")
    u = v - v.mean()
    m2_abs = float(np.sum(np.abs(u) ** 2) / (s - 1))
    m2_plain = complex(np.sum(u ** 2) / (s - 1))
    vbar_i = (v.sum() - v) / (s - 1)
    t_abs = np.sum(np.abs(v) ** 2)
    t_pl = np.sum(v ** 2)
    m2a_i = ((t_abs - np.abs(v) ** 2) - (s - 1) * np.abs(vbar_i) ** 2) / (s - 2)
    m2p_i = ((t_pl - v ** 2) - (s - 1) * vbar_i ** 2) / (s - 2)
    se_abs = float(np.sqrt((s - 1) / s * np.sum((m2a_i - m2a_i.mean()) ** 2)))
    se_plain = float(np.sqrt((s - 1) / s
                             * np.sum(np.abs(m2p_i - m2p_i.mean()) ** 2)))
    return m2_abs, m2_plain, se_abs, se_plain


@dataclass
class SpdeMoments:
    e_abs2: float
    e_sq: complex
    stderr_abs2: float
    stderr_sq: float
    draws: int
    solver_residual_max: float


def spde_second_moments(cov, u_h, g_values, a_eff, mu_eff, settings,
                        domain, a_b, draws, seed, delta=0.0):
    """Monte Carlo second moments of (g, v) over noise realizations.

    One operator assembly serves every draw; noise streams are keyed by
    the draw index so any draw budget gives a reproducible prefix.
    """
    if draws < 3:
        raise ValueError("need at least three noise draws")
    grid = settings.grid
    u = _field_on(grid, u_h, "field")
    g = np.asarray(g_values)
    system = assemble(effective_problem(settings, domain, a_eff, mu_eff,
                                        np.zeros(grid.shape, complex)))
    w = grid.cell_volume
    vals = np.empty(draws, complex)
    worst = 0.0
    for t in range(draws):
        gen = rngmod.component_generator(seed, rngmod.NOISE, (t, 0, 0))
        noise = sample_noise(cov, grid, gen)
        rhs = noise_rhs(noise, u, domain, a_b, settings.k0, delta)
        result = solve(system, rhs=rhs, **settings.solver_kwargs())
        worst = max(worst, result.relative_residual)
        vals[t] = w * np.vdot(g.ravel(), result.field.values.ravel())
    m2_abs, m2_plain, se_abs, se_plain = scalar_second_moments(vals)
    return SpdeMoments(m2_abs, m2_plain, se_abs, se_plain, draws, worst)
