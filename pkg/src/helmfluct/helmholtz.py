"""Stretched-coordinate Helmholtz discretization and mixed-precision solver.

The operator is the complex-symmetric symmetrization of the PML-stretched
equation: sum_d d_d(g_d a d_d u) + k0^2 m S u = S f, with g_d = s_e s_f / s_d
on faces and S = s1 s2 s3 at centers. Faces carry harmonic means of the cell
coefficient, which keeps fluxes continuous across the strong contrasts of
the inclusion phase. The solve runs a single-precision multigrid-
preconditioned stabilized bi-CG inside a double-precision iterative
refinement loop; refinement residuals recompute the operator on the fly in
full precision, so the attainable accuracy is not limited by the
single-precision working set.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import Grid3D, pml_mask, stretch_profiles
from .medium import DomainSpec
from .multigrid import MGPreconditioner, diag_array, harmonic_faces


@dataclass(frozen=True)
class PMLSpec:
    """Absorbing layer on all six sides; width in physical units.

    Zero width disables the layer and closes the box with a plain Dirichlet
    condition, which is only appropriate for stencil-consistency checks.
    """

    width: float
    sigma_scale: float = 2.2
    power: int = 2

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("layer width cannot be negative")
        if self.power < 1:
            raise ValueError("profile power must be at least 1")


@dataclass(frozen=True)
class ComplexGridField:
    grid: Grid3D
    values: np.ndarray

    def __post_init__(self):
        if tuple(self.values.shape) != tuple(self.grid.shape):
            raise ValueError("field shape does not match grid")

    def norm(self):
        return float(np.linalg.norm(self.values.ravel())
                     * np.sqrt(self.grid.cell_volume))


def inner_product(grid, f, g):
    """(f, g) = integral of conj(f) g, midpoint rule."""
    return complex(np.vdot(f.ravel(), g.ravel()) * grid.cell_volume)


@dataclass
class HelmholtzProblem:
    """Volumetric description of one solve.

    coeff is a complex cell field, or a per-axis triple of fields for a
    diagonally anisotropic coefficient; mixed holds the (12, 13, 23) cross
    coefficients when the effective tensor has off-diagonal entries. The
    mass coefficient is 1 outside mass_mask and mass_value inside it.
    """

    grid: Grid3D
    k0: float
    coeff: object
    source: np.ndarray
    pml: PMLSpec
    mass_mask: np.ndarray = None
    mass_value: complex = 1.0 + 0.0j
    mixed: tuple = None

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError("wavenumber must be positive")
        wavelength = 2 * np.pi / self.k0
        if self.grid.h > wavelength / 10 * (1 + 1e-12):
            raise ValueError(
                f"h={self.grid.h:.4g} leaves fewer than 10 cells per "
                f"wavelength {wavelength:.4g}")
        if self.pml.width > 0 and self.pml.width < wavelength * (1 - 1e-9):
            raise ValueError("absorbing layer thinner than one wavelength")
        shape = tuple(self.grid.shape)
        coeff = self.coeff
        if not isinstance(coeff, tuple):
            coeff = (coeff, coeff, coeff)
        for c in coeff:
            if tuple(c.shape) != shape:
                raise ValueError("coefficient shape does not match grid")
            if not np.all(np.isfinite(c)):
                raise ValueError("coefficient has non-finite entries")
        self.coeff = coeff
        if tuple(self.source.shape) != shape:
            raise ValueError("source shape does not match grid")
        if self.mixed is not None:
            if self.pml.width > 0:
                layer = pml_mask(self.grid, self.pml.width)
                for m in self.mixed:
                    if np.any(np.abs(m[layer]) > 0):
                        raise ValueError(
                            "cross coefficients must vanish inside the "
                            "absorbing layer")


class SolverError(RuntimeError):
    def __init__(self, message, outer_history=(), inner_counts=()):
        super().__init__(message)
        self.outer_history = list(outer_history)
        self.inner_counts = list(inner_counts)


@dataclass
class SolveResult:
    field: ComplexGridField
    converged: bool
    relative_residual: float
    outer_history: list
    inner_counts: list

    @property
    def values(self):
        return self.field.values


class DiscreteSystem:
    """Assembled operator: single-precision streaming arrays for the Krylov
    working set plus full-precision inputs for refinement residuals."""

    def __init__(self, problem):
        self.problem = problem
        self.grid = problem.grid
        self.k0 = float(problem.k0)
        self.h = float(problem.grid.h)
        self.ih2 = 1.0 / self.h ** 2
        self.shape = tuple(problem.grid.shape)
        self.pad = tuple(n + 2 for n in self.shape)
        self.pml = problem.pml

        self.stretches = [
            stretch_profiles(self.shape[d], self.h, self.pml.width, self.k0,
                             self.pml.sigma_scale, self.pml.power)
            for d in range(3)]

        a1, a2, a3 = problem.coeff
        self.a1p = kernels.pad_field(np.ascontiguousarray(a1, np.complex128),
                                     edge=True)
        self.a2p = self.a1p if a2 is a1 else kernels.pad_field(
            np.ascontiguousarray(a2, np.complex128), edge=True)
        if a3 is a1:
            self.a3p = self.a1p
        elif a3 is a2:
            self.a3p = self.a2p
        else:
            self.a3p = kernels.pad_field(np.ascontiguousarray(a3, np.complex128),
                                         edge=True)

        self.mu = np.complex128(problem.mass_value)
        if problem.mass_mask is None:
            self.mask_frac = None
            self.mkp = np.zeros(self.pad, np.uint8)
        else:
            mask = problem.mass_mask.astype(bool)
            self.mask_frac = mask.astype(np.float32)
            self.mkp = kernels.pad_field(mask.astype(np.uint8))

        self.fx, self.fy, self.fz = harmonic_faces(
            self.a1p[1:-1, 1:-1, 1:-1], self.a2p[1:-1, 1:-1, 1:-1],
            self.a3p[1:-1, 1:-1, 1:-1], self.stretches)
        self.dg = diag_array(self.fx, self.fy, self.fz, self.mask_frac,
                             complex(self.mu), self.stretches, self.ih2,
                             self.k0 ** 2)

        if problem.mixed is None:
            self.mixedp = self.mixed64 = None
        else:
            self.mixedp = tuple(kernels.pad_field(
                np.ascontiguousarray(m, np.complex128)) for m in problem.mixed)
            self.mixed64 = tuple(m.astype(np.complex64) for m in self.mixedp)

        self.b = self.make_rhs(problem.source)
        self._mg = {}
        self._work = None

    def make_rhs(self, f_values):
        if tuple(f_values.shape) != self.shape:
            raise ValueError("source shape does not match grid")
        (s1c, _), (s2c, _), (s3c, _) = self.stretches
        b = np.zeros(self.pad, np.complex128)
        b[1:-1, 1:-1, 1:-1] = (f_values
                               * s1c[:, None, None]
                               * s2c[None, :, None]
                               * s3c[None, None, :])
        return b

    def residual128(self, x, b, out):
        (s1c, s1f), (s2c, s2f), (s3c, s3f) = self.stretches
        kernels.residual_otf(x, b, out, self.a1p, self.a2p, self.a3p,
                             self.mkp, self.mu, s1c, s2c, s3c, s1f, s2f, s3f,
                             np.complex128(self.k0 ** 2), np.float64(self.ih2))
        if self.mixedp is not None:
            kernels.mixed_accumulate(x, out, *self.mixedp,
                                     np.complex128(-0.25 * self.ih2))

    def apply128(self, x, out):
        zero = np.zeros(self.pad, np.complex128)
        self.residual128(x, zero, out)
        np.negative(out, out)

    def apply64(self, x, out):
        kernels.apply_op(x, out, self.fx, self.fy, self.fz, self.dg,
                         np.float32(self.ih2))
        if self.mixed64 is not None:
            kernels.mixed_accumulate(x, out, *self.mixed64,
                                     np.complex64(0.25 * self.ih2))

    def preconditioner(self, shift, nu, omega):
        key = (float(shift), int(nu), float(omega))
        if key not in self._mg:
            k0sq_shifted = self.k0 ** 2 * (1.0 + 1j * shift)
            a1 = self.a1p[1:-1, 1:-1, 1:-1]
            a2 = self.a2p[1:-1, 1:-1, 1:-1]
            a3 = self.a3p[1:-1, 1:-1, 1:-1]
            self._mg[key] = MGPreconditioner(
                (a1, a2, a3), self.mask_frac, complex(self.mu), self.h,
                self.k0, k0sq_shifted, self.pml, nu=nu, omega=omega,
                finest_faces=(self.fx, self.fy, self.fz))
        return self._mg[key]

    def workspace(self):
        if self._work is None:
            names = ("x", "r", "rhat", "p", "v", "t", "ph", "sh")
            self._work = {n: np.zeros(self.pad, np.complex64) for n in names}
        return self._work

    def as_linear_operator(self):
        from scipy.sparse.linalg import LinearOperator
        n = self.grid.ncells

        def mv(vec):
            x = np.zeros(self.pad, np.complex128)
            x[1:-1, 1:-1, 1:-1] = vec.reshape(self.shape)
            out = np.zeros(self.pad, np.complex128)
            self.apply128(x, out)
            return out[1:-1, 1:-1, 1:-1].reshape(-1)

        return LinearOperator((n, n), matvec=mv, rmatvec=mv,
                              dtype=np.complex128)

    def dense(self):
        """Explicit matrix, for small-grid oracle comparisons only."""
        n = self.grid.ncells
        if n > 4200:
            raise ValueError("dense assembly limited to small grids")
        x = np.zeros(self.pad, np.complex128)
        out = np.zeros(self.pad, np.complex128)
        A = np.empty((n, n), np.complex128)
        for i in range(n):
            i1, i2, i3 = np.unravel_index(i, self.shape)
            x[i1 + 1, i2 + 1, i3 + 1] = 1.0
            self.apply128(x, out)
            A[:, i] = out[1:-1, 1:-1, 1:-1].reshape(-1)
            x[i1 + 1, i2 + 1, i3 + 1] = 0.0
        return A


def assemble(problem):
    return DiscreteSystem(problem)


def _bicgstab64(system, mg, work, rtol, maxiter):
    """Preconditioned stabilized bi-CG in single precision.

    work["r"] holds the right-hand side on entry and is consumed; the
    correction lands in work["x"]. Inner products accumulate in double.
    """
    x, r = work["x"], work["r"]
    rhat, p, v, t, ph, sh = (work[n] for n in ("rhat", "p", "v", "t", "ph", "sh"))
    x.fill(0)
    np.copyto(rhat, r)
    nb = np.sqrt(kernels.norm_sq(r))
    if nb == 0.0:
        return 0, True
    rho = alpha = omega = 1.0 + 0.0j
    restarts = 0
    for it in range(maxiter):
        rho_new = kernels.vdot_acc(rhat, r)
        if abs(rho_new) < 1e-30 * nb * nb:
            if restarts >= 2:
                return it, False
            restarts += 1
            np.copyto(rhat, r)
            rho_new = kernels.norm_sq(r) + 0.0j
        if it == 0:
            np.copyto(p, r)
        else:
            beta = (rho_new / rho) * (alpha / omega)
            p -= np.complex64(omega) * v
            p *= np.complex64(beta)
            p += r
        rho = rho_new
        mg(p, ph)
        system.apply64(ph, v)
        denom = kernels.vdot_acc(rhat, v)
        if abs(denom) < 1e-30 * nb * nb:
            return it, False
        alpha = rho / denom
        r -= np.complex64(alpha) * v
        if np.sqrt(kernels.norm_sq(r)) / nb < rtol:
            x += np.complex64(alpha) * ph
            return it + 1, True
        mg(r, sh)
        system.apply64(sh, t)
        tt = kernels.norm_sq(t)
        if tt == 0.0:
            return it, False
        omega = kernels.vdot_acc(t, r) / tt
        x += np.complex64(alpha) * ph
        x += np.complex64(omega) * sh
        r -= np.complex64(omega) * t
        if np.sqrt(kernels.norm_sq(r)) / nb < rtol:
            return it + 1, True
    return maxiter, False


def solve(system, rtol=1e-8, max_outer=16, inner_rtol=1e-4,
          inner_maxiter=200, shift=0.8, nu=2, omega=0.8, rhs=None):
    """Mixed-precision solve of the assembled system.

    Raises SolverError when the refinement loop stops making progress
    before reaching rtol.
    """
    b = system.b if rhs is None else system.make_rhs(rhs)
    nb = float(np.linalg.norm(b.ravel()))
    grid = system.grid
    if nb == 0.0:
        zero = ComplexGridField(grid, np.zeros(system.shape, np.complex128))
        return SolveResult(zero, True, 0.0, [0.0], [])

    mg = system.preconditioner(shift, nu, omega)
    work = system.workspace()
    x = np.zeros(system.pad, np.complex128)
    r = np.zeros(system.pad, np.complex128)
    outer_hist = []
    inner_counts = []
    stalls = 0
    converged = False
    for outer in range(max_outer):
        system.residual128(x, b, r)
        rel = float(np.linalg.norm(r.ravel())) / nb
        outer_hist.append(rel)
        if rel <= rtol:
            converged = True
            break
        if outer > 0 and rel > 0.5 * outer_hist[-2]:
            stalls += 1
            if stalls >= 2:
                raise SolverError(
                    f"refinement stalled at relative residual {rel:.3e}",
                    outer_hist, inner_counts)
        scale = float(np.linalg.norm(r.ravel()))
        r *= 1.0 / scale
        np.copyto(work["r"], r, casting="same_kind")
        tol_inner = float(np.clip(max(inner_rtol, 0.2 * rtol / rel),
                                  5e-6, 0.5))
        iters, ok = _bicgstab64(system, mg, work, tol_inner, inner_maxiter)
        inner_counts.append(iters)
        np.multiply(work["x"], np.complex64(scale), out=work["x"])
        np.add(x, work["x"], out=x, casting="same_kind")
    if not converged:
        system.residual128(x, b, r)
        rel = float(np.linalg.norm(r.ravel())) / nb
        if rel <= rtol:
            converged = True
            outer_hist.append(rel)
        else:
            raise SolverError(
                f"no convergence after {max_outer} refinement passes, "
                f"relative residual {rel:.3e}", outer_hist, inner_counts)
    u = ComplexGridField(grid, x[1:-1, 1:-1, 1:-1].copy())
    return SolveResult(u, converged, outer_hist[-1], outer_hist, inner_counts)


# ---------------------------------------------------------------------------
# coefficient painting

def _axis_overlap(centers, h, lo, hi):
    left = np.maximum(centers - h / 2, lo)
    right = np.minimum(centers + h / 2, hi)
    return np.clip(right - left, 0.0, None) / h


def domain_fraction(domain, grid, subsamples=4):
    """Per-voxel volume fraction covered by the domain."""
    if domain.kind == "box":
        fr = np.ones((1, 1, 1))
        for d in range(3):
            lo = domain.center[d] - domain.side / 2
            hi = domain.center[d] + domain.side / 2
            ov = _axis_overlap(grid.centers(d), grid.h, lo, hi)
            sh = [1, 1, 1]
            sh[d] = -1
            fr = fr * ov.reshape(sh)
        return fr
    # ball: exact well inside/outside, subsampled in the cut band
    X, Y, Z = grid.meshgrid()
    c = domain.center
    d = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
    half = grid.h * np.sqrt(3.0) / 2
    frac = np.zeros(grid.shape)
    frac[d <= domain.radius - half] = 1.0
    band = (d > domain.radius - half) & (d < domain.radius + half)
    if np.any(band):
        offs = _subsample_offsets(grid.h, subsamples)
        pts = np.stack([X[band], Y[band], Z[band]], axis=1)
        sub = pts[:, None, :] + offs[None, :, :]
        dd = np.linalg.norm(sub - np.asarray(c), axis=2)
        frac[band] = np.mean(dd <= domain.radius, axis=1)
    return frac


def _subsample_offsets(h, s):
    q = ((np.arange(s) + 0.5) / s - 0.5) * h
    return np.stack(np.meshgrid(q, q, q, indexing="ij"), axis=-1).reshape(-1, 3)


def paint_coefficient(sample, grid, background, subsamples=4):
    """Voxelized a_eta: 1 outside the domain, background inside it, and the
    rescaled inclusion values inside the balls; cut voxels mix by volume
    fraction."""
    cfg = sample.config
    a = np.ones(grid.shape, np.complex128)
    frB = domain_fraction(cfg.domain, grid, subsamples)
    a += frB * (complex(background) - 1.0)
    half = grid.h * np.sqrt(3.0) / 2
    offs = _subsample_offsets(grid.h, subsamples)
    for j, inc in sample.cells.items():
        c = np.asarray(sample.inclusion_center(j))
        R = sample.inclusion_radius(j)
        v = cfg.eta ** 2 * inc.a
        lo = np.maximum(np.floor((c - R - half - grid.origin) / grid.h - 0.5),
                        0).astype(int)
        hi = np.minimum(np.ceil((c + R + half - grid.origin) / grid.h - 0.5),
                        np.array(grid.shape) - 1).astype(int)
        if np.any(hi < lo):
            continue
        sl = tuple(slice(lo[d], hi[d] + 1) for d in range(3))
        axes = [grid.centers(d)[sl[d]] - c[d] for d in range(3)]
        d2 = (axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2
              + axes[2][None, None, :] ** 2)
        dist = np.sqrt(d2)
        block = a[sl]
        block[dist <= R - half] = v
        band = (dist > R - half) & (dist < R + half)
        if np.any(band):
            X, Y, Z = np.meshgrid(*[grid.centers(d)[sl[d]] for d in range(3)],
                                  indexing="ij")
            pts = np.stack([X[band], Y[band], Z[band]], axis=1)
            sub = pts[:, None, :] + offs[None, :, :]
            dd = np.linalg.norm(sub - c, axis=2)
            fr = np.mean(dd <= R, axis=1)
            block[band] = (1.0 - fr) * complex(background) + fr * v
        a[sl] = block
    return a


# ---------------------------------------------------------------------------
# high-level solves

@dataclass(frozen=True)
class SolverSettings:
    grid: Grid3D
    k0: float
    pml: PMLSpec
    background: complex = 1.0 + 0.0j
    rtol: float = 1e-8
    max_outer: int = 16
    inner_rtol: float = 1e-4
    inner_maxiter: int = 200
    shift: float = 0.8
    nu: int = 2
    omega: float = 0.8
    standoff: float = 0.05

    def solver_kwargs(self):
        return dict(rtol=self.rtol, max_outer=self.max_outer,
                    inner_rtol=self.inner_rtol,
                    inner_maxiter=self.inner_maxiter, shift=self.shift,
                    nu=self.nu, omega=self.omega)


def _dilated(domain, margin):
    if domain.kind == "box":
        return DomainSpec("box", domain.center, side=domain.side + 2 * margin)
    return DomainSpec("ball", domain.center, radius=domain.radius + margin)


def check_source_support(domain, grid, values, standoff, what="source"):
    """The driving term must vanish on the domain closure plus a standoff."""
    region = _dilated(domain, standoff)
    X, Y, Z = grid.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    inside = region.contains(pts).reshape(grid.shape)
    bad = np.abs(values)[inside]
    if bad.size and bad.max() > 1e-14 * max(np.abs(values).max(), 1e-300):
        raise ValueError(f"{what} overlaps the scatterer region")


def solve_heterogeneous(settings, sample, f_values):
    """One realization of the strongly heterogeneous field."""
    if settings.grid.h > sample.eta / 8 * (1 + 1e-12):
        raise ValueError(
            f"h={settings.grid.h:.4g} does not resolve inclusions at "
            f"eta={sample.eta:.4g}; need h <= eta/8")
    check_source_support(sample.config.domain, settings.grid, f_values,
                         settings.standoff)
    a = paint_coefficient(sample, settings.grid, settings.background)
    problem = HelmholtzProblem(settings.grid, settings.k0, a, f_values,
                               settings.pml)
    return solve(assemble(problem), **settings.solver_kwargs())


def normalize_tensor(a_eff):
    """Accept scalar, per-axis triple, or full symmetric 3x3."""
    A = np.asarray(a_eff, dtype=complex)
    if A.shape == ():
        return complex(A) * np.eye(3)
    if A.shape == (3,):
        return np.diag(A)
    if A.shape == (3, 3):
        scale = max(np.abs(A).max(), 1e-300)
        if np.abs(A - A.T).max() > 1e-8 * scale:
            raise ValueError("effective tensor must be symmetric")
        return 0.5 * (A + A.T)
    raise ValueError("effective tensor must be scalar, diagonal, or 3x3")


def effective_problem(settings, domain, a_eff, mu_eff, f_values):
    """Homogenized coefficients: identity/1 outside the domain, the
    effective tensor and dispersion factor inside it."""
    grid = settings.grid
    A = normalize_tensor(a_eff)
    frac = domain_fraction(domain, grid)
    diag_vals = [A[d, d] for d in range(3)]
    if diag_vals[0] == diag_vals[1] == diag_vals[2]:
        a1 = 1.0 + frac * (diag_vals[0] - 1.0)
        coeff = (a1, a1, a1)
    else:
        coeff = tuple(1.0 + frac * (diag_vals[d] - 1.0) for d in range(3))
    off = [A[0, 1], A[0, 2], A[1, 2]]
    offscale = max(np.abs(np.diag(A)).max(), 1e-300)
    if max(abs(o) for o in off) > 1e-12 * offscale:
        mixed = tuple(frac * o for o in off)
    else:
        mixed = None
    X, Y, Z = grid.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    mask = domain.contains(pts).reshape(grid.shape)
    return HelmholtzProblem(grid, settings.k0, coeff, f_values, settings.pml,
                            mass_mask=mask, mass_value=complex(mu_eff),
                            mixed=mixed)


def solve_homogenized(settings, domain, a_eff, mu_eff, f_values):
    check_source_support(domain, settings.grid, f_values, settings.standoff)
    problem = effective_problem(settings, domain, a_eff, mu_eff, f_values)
    return solve(assemble(problem), **settings.solver_kwargs())


def weighted_green(settings, domain, a_eff, mu_eff, g_values):
    """Green's function of the homogenized operator integrated against the
    weight g: one adjoint-free solve, valid by complex symmetry."""
    if np.abs(g_values.imag).max() > 1e-14 * max(np.abs(g_values).max(), 1e-300):
        raise ValueError("weight must be real")
    check_source_support(domain, settings.grid, g_values, settings.standoff,
                         what="weight")
    problem = effective_problem(settings, domain, a_eff, mu_eff,
                                g_values.astype(np.complex128))
    return solve(assemble(problem), **settings.solver_kwargs())


# ---------------------------------------------------------------------------
# sources

def gaussian_source(grid, center, width, amplitude=1.0):
    X, Y, Z = grid.meshgrid()
    r2 = ((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    return amplitude * np.exp(-r2 / (2 * width ** 2)).astype(np.complex128)


def bump_source(grid, center, radius, amplitude=1.0):
    """Smooth source with exact compact support in a ball: the standard
    exp(1 - 1/(1 - s^2)) profile. Safe against support checks, unlike a
    Gaussian with its unbounded tails."""
    X, Y, Z = grid.meshgrid()
    r2 = ((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2)
    s2 = r2 / radius ** 2
    out = np.zeros(grid.shape, np.complex128)
    inside = s2 < 1.0
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return out


def tapered_plane_wave_source(grid, k0, direction, center, width):
    """Source whose free-space field is a Gaussian-windowed plane wave.

    f = (Laplace + k0^2)(chi e^{ik.x}) with |k| = k0 and a Gaussian window
    chi; the oscillatory second-derivative terms cancel, leaving the window
    derivatives only.
    """
    kvec = np.asarray(direction, float)
    kvec = k0 * kvec / np.linalg.norm(kvec)
    X, Y, Z = grid.meshgrid()
    dx = X - center[0]
    dy = Y - center[1]
    dz = Z - center[2]
    r2 = dx ** 2 + dy ** 2 + dz ** 2
    chi = np.exp(-r2 / (2 * width ** 2))
    phase = np.exp(1j * (kvec[0] * X + kvec[1] * Y + kvec[2] * Z))
    kdotd = kvec[0] * dx + kvec[1] * dy + kvec[2] * dz
    lap_chi = (r2 / width ** 4 - 3.0 / width ** 2) * chi
    grad_term = -2j * kdotd / width ** 2 * chi
    return phase * (lap_chi + grad_term)


# ---------------------------------------------------------------------------
# fluctuation statistics

@dataclass
class FluctuationStats:
    u_values: np.ndarray
    second_abs: float
    second_plain: complex
    stderr_abs: float
    stderr_plain: float
    nsamples: int


def fluctuation_functional(fields, g, eta, grid):
    """Centered, eta^{-3/2}-scaled functional of each field against the
    real weight g, with jackknife error bars on both second moments."""
    arrays = [f.values if hasattr(f, "values") else np.asarray(f)
              for f in fields]
    S = len(arrays)
    if S < 2:
        raise ValueError("need at least two fields to center")
    w = grid.cell_volume / eta ** 1.5
    V = np.array([w * np.vdot(g.ravel(), u.ravel()) for u in arrays])
    U = V - V.mean()
    m2_abs = float(np.sum(np.abs(U) ** 2).real / (S - 1))
    m2_plain = complex(np.sum(U ** 2) / (S - 1))
    if S < 3:
        se_abs = se_plain = float("nan")
    else:
        vbar_i = (V.sum() - V) / (S - 1)
        t_abs = np.sum(np.abs(V) ** 2)
        t_pl = np.sum(V ** 2)
        m2a_i = ((t_abs - np.abs(V) ** 2)
                 - (S - 1) * np.abs(vbar_i) ** 2) / (S - 2)
        m2p_i = ((t_pl - V ** 2) - (S - 1) * vbar_i ** 2) / (S - 2)
        se_abs = float(np.sqrt((S - 1) / S
                               * np.sum((m2a_i - m2a_i.mean()) ** 2)))
        se_plain = float(np.sqrt((S - 1) / S
                                 * np.sum(np.abs(m2p_i - m2p_i.mean()) ** 2)))
    return FluctuationStats(U, m2_abs, m2_plain, se_abs, se_plain, S)
