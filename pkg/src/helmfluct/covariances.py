"""Covariance tensors of the per-inclusion statistics.

The limiting source noises are driven by how the conditional averages of the
surface tensor M and the volume scalar N fluctuate with the cell-0 parameters:

    C_W        4-tensor of  <M>_(theta0,rho0) - <M>          (matrix noise)
    C_WN       cross matrix of the M and N fluctuations
    C_theta(*) scalar (pseudo-)variance of N under (theta0, rho0)
    C_a(*)     scalar (pseudo-)variance of E{N | a0}

M depends only on the perforation geometry, so its a-conditioning is vacuous;
N depends only on (rho0, a0), so every N statistic reduces to deterministic
quadrature over the admissibility-conditioned radius law and the material
law. Only the M statistics need Monte Carlo, and those use nested sampling:
outer draws of (theta0, rho0), inner environment replicas keyed by
generation, two independent replicas cross-multiplied so the inner noise
does not inflate the outer covariance. Environments are shared across outer
draws (common random numbers), which shrinks the variance of differences of
conditional means without changing the estimand. The debiased C_W average
is indefinite at finite budgets, so it is projected onto the PSD cone
before reporting; the clipped mass is kept as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .dists import ComplexDist, GeometryLaw
from .medium import InclusionParams
from .mtensor import InterpolationError, MTensor, m_tensor
from .oscillation import n_value
from .poisson import PoissonSolveError
from .corrector import solve_corrector, solve_modified_corrector
from .supercell import SupercellConfig, sample_supercell


@dataclass(frozen=True)
class CovarianceConfig:
    """Ensemble law plus discretization knobs for the covariance estimators."""

    geometry: GeometryLaw
    material: ComplexDist
    k0: float
    resolution: int = 16
    seed: int = 0
    tol: float = 1e-9
    subsamples: int = 4

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError("wavenumber must be positive")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2 voxels per cell")


def n_scalar(params, k0):
    """Volume statistic of one inclusion; theta plays no role."""
    return n_value(params.rho, k0, params.a)


def pinned_m_tensor(config, L, pinned, generation):
    """One m_tensor evaluation with cell 0 pinned in a drawn environment.

    "Cell 0" is realized as the center cell of the L^3 supercell so its
    probe sphere stays away from the periodic seam of the voxelization.
    """
    sc_config = SupercellConfig(L=L, resolution=config.resolution,
                                geometry=config.geometry,
                                material=config.material, seed=config.seed)
    center = (L // 2,) * 3
    env = sample_supercell(sc_config, generation=generation,
                           fixed={center: pinned})
    full = solve_corrector(env, tol=config.tol, subsamples=config.subsamples)
    mod = solve_modified_corrector(env, full, center, tol=config.tol,
                                   subsamples=config.subsamples)
    return m_tensor(full, mod, center)


def conditional_mean_M(theta0, rho0, config, L, inner_samples,
                       generation_base=0, a_family=None):
    """MC average of M over environments with (theta0, rho0) held fixed.

    a_family is accepted to mirror the conditioning notation but is unused:
    M is a functional of the perforation geometry alone, so conditioning on
    materials cannot change it. Inner environments use generations
    generation_base .. generation_base + inner_samples - 1.
    """
    if inner_samples < 1:
        raise ValueError("need at least one inner sample")
    del a_family
    a_fill = config.material.nodes()[0][0]
    pinned = InclusionParams(tuple(theta0), float(rho0), complex(a_fill))
    entries = np.zeros((3, 3))
    defect = np.zeros(3)
    for g in range(generation_base, generation_base + inner_samples):
        m = pinned_m_tensor(config, L, pinned, g)
        entries += m.entries
        defect += m.gauge_defect
    return MTensor(entries / inner_samples, defect / inner_samples,
                   (L // 2,) * 3)


@dataclass(frozen=True)
class CovarianceSet:
    """Second-moment data of the limiting noises, with uncertainty fields.

    Quadrature-derived scalars carry zero stderr; the MC tensors carry
    entrywise outer-sample standard errors. l_sensitivity holds the max-abs
    entry change when the supercell shrinks from L to L-2 (a systematic
    proxy), or None when that box would be smaller than 3 cells.
    """

    C_W: np.ndarray
    C_WN: np.ndarray
    C_theta: complex
    C_theta_star: float
    C_a: complex
    C_a_star: float
    C_W_stderr: np.ndarray
    C_WN_stderr: np.ndarray
    C_theta_stderr: float
    C_a_stderr: float
    mean_M: np.ndarray
    mean_N: complex
    L: int
    outer_samples: int
    inner_samples: int
    failures: int
    l_sensitivity: dict | None
    psd_clip: float = 0.0

    def __post_init__(self):
        if np.asarray(self.C_W).shape != (3, 3, 3, 3):
            raise ValueError("C_W must be a 3x3x3x3 tensor")
        if np.asarray(self.C_WN).shape != (3, 3):
            raise ValueError("C_WN must be a 3x3 matrix")
        for name in ("C_theta_star", "C_a_star"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} is a second absolute moment")
        if abs(self.C_theta) > self.C_theta_star + 1e-12:
            raise ValueError("|C_theta| exceeds C_theta_star")
        if abs(self.C_a) > self.C_a_star + 1e-12:
            raise ValueError("|C_a| exceeds C_a_star")

    def cw_matrix(self):
        """C_W reshaped to the symmetric 9x9 quadratic form."""
        return np.asarray(self.C_W).reshape(9, 9)

    def cw_min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.cw_matrix()
                                               + self.cw_matrix().T)).min())

    def to_dict(self):
        return {
            "C_W": np.asarray(self.C_W).tolist(),
            "C_WN": [[_c(z) for z in row] for row in np.asarray(self.C_WN)],
            "C_theta": _c(self.C_theta),
            "C_theta_star": self.C_theta_star,
            "C_a": _c(self.C_a),
            "C_a_star": self.C_a_star,
            "C_W_stderr": np.asarray(self.C_W_stderr).tolist(),
            "C_WN_stderr": np.asarray(self.C_WN_stderr).tolist(),
            "C_theta_stderr": self.C_theta_stderr,
            "C_a_stderr": self.C_a_stderr,
            "mean_M": np.asarray(self.mean_M).tolist(),
            "mean_N": _c(self.mean_N),
            "L": self.L,
            "outer_samples": self.outer_samples,
            "inner_samples": self.inner_samples,
            "failures": self.failures,
            "l_sensitivity": self.l_sensitivity,
            "psd_clip": self.psd_clip,
            "cw_min_eigenvalue": self.cw_min_eigenvalue(),
        }

    @staticmethod
    def from_dict(d):
        return CovarianceSet(
            C_W=np.asarray(d["C_W"], float),
            C_WN=np.asarray([[complex(*z) for z in row]
                             for row in d["C_WN"]]),
            C_theta=complex(*d["C_theta"]),
            C_theta_star=float(d["C_theta_star"]),
            C_a=complex(*d["C_a"]),
            C_a_star=float(d["C_a_star"]),
            C_W_stderr=np.asarray(d["C_W_stderr"], float),
            C_WN_stderr=np.asarray(d["C_WN_stderr"], float),
            C_theta_stderr=float(d["C_theta_stderr"]),
            C_a_stderr=float(d["C_a_stderr"]),
            mean_M=np.asarray(d["mean_M"], float),
            mean_N=complex(*d["mean_N"]),
            L=int(d["L"]),
            outer_samples=int(d["outer_samples"]),
            inner_samples=int(d["inner_samples"]),
            failures=int(d["failures"]),
            l_sensitivity=d.get("l_sensitivity"),
            psd_clip=float(d.get("psd_clip", 0.0)),
        )


def _c(z):
    z = complex(z)
    return [z.real, z.imag]


def scalar_covariances(geometry, material, k0):
    """Deterministic quadrature for the N-driven scalars.

    Returns (C_theta, C_theta_star, C_a, C_a_star, mean_N, nbar_of_a) with
    nbar_of_a the function a -> E_rho{N | a} reused by the cross term.
    """
    rho_nodes, rho_w = geometry.conditional_rho_nodes()
    a_nodes, a_w = material.nodes()
    nmat = np.array([[n_value(r, k0, a) for a in a_nodes]
                     for r in rho_nodes])
    nbar_a = rho_w @ nmat                      # E{N | a} per material node
    mean_n = complex(nbar_a @ a_w)
    dev = nmat - nbar_a[None, :]
    c_theta = complex(rho_w @ (dev ** 2) @ a_w)
    c_theta_star = float(rho_w @ (np.abs(dev) ** 2) @ a_w)
    dev_a = nbar_a - mean_n
    c_a = complex((dev_a ** 2) @ a_w)
    c_a_star = float((np.abs(dev_a) ** 2) @ a_w)

    def nbar(rho):
        row = np.array([n_value(rho, k0, a) for a in a_nodes])
        return row, nbar_a

    return c_theta, c_theta_star, c_a, c_a_star, mean_n, nbar


def _nested_m_statistics(config, L, outer_samples, inner_samples, nbar):
    """Nested-MC estimates of C_W, C_WN and the pooled mean M at one L."""
    a_nodes, a_w = config.material.nodes()
    rep1 = []
    rep2 = []
    qvals = []
    failures = 0
    for t in range(outer_samples):
        gen = rng.component_generator(config.seed, rng.GENERIC, (0, 0, 0), t)
        theta0, rho0 = config.geometry.sample(gen)
        a_fill = a_nodes[0]
        pinned = InclusionParams(tuple(theta0), float(rho0), complex(a_fill))
        try:
            sums = []
            for r in range(2):
                acc = np.zeros((3, 3))
                for g in range(r * inner_samples, (r + 1) * inner_samples):
                    acc += pinned_m_tensor(config, L, pinned, g).entries
                sums.append(acc / inner_samples)
        except (PoissonSolveError, InterpolationError):
            failures += 1
            continue
        rep1.append(sums[0])
        rep2.append(sums[1])
        row, nbar_a = nbar(rho0)
        qvals.append(complex((row - nbar_a) @ a_w))
    kept = len(rep1)
    if kept < 2:
        raise RuntimeError(
            f"covariance estimation kept {kept} outer samples"
            f" ({failures} failed); need at least 2")
    rep1 = np.asarray(rep1)
    rep2 = np.asarray(rep2)
    qvals = np.asarray(qvals)
    pooled = 0.5 * (rep1.mean(0) + rep2.mean(0))
    d1 = rep1 - pooled
    d2 = rep2 - pooled
    # per-outer cross products: inner noises of the two replicas are
    # independent, so their product is an unbiased centered outer moment
    prods = 0.5 * (np.einsum("tij,tkl->tijkl", d1, d2)
                   + np.einsum("tij,tkl->tijkl", d2, d1))
    c_w, psd_clip = _project_psd(prods.mean(0))
    c_w_stderr = prods.std(0, ddof=1) / np.sqrt(kept)
    dbar = 0.5 * (d1 + d2)
    cross = -dbar * qvals[:, None, None]
    c_wn = cross.mean(0)
    c_wn_stderr = cross.std(0, ddof=1) / np.sqrt(kept)
    return {
        "C_W": c_w,
        "C_W_stderr": c_w_stderr,
        "C_WN": c_wn,
        "C_WN_stderr": np.abs(c_wn_stderr),
        "mean_M": pooled,
        "kept": kept,
        "failures": failures,
        "psd_clip": psd_clip,
    }


def _project_psd(c_w):
    """Nearest positive semidefinite tensor in Frobenius norm.

    The cross-product average is unbiased but indefinite at finite outer
    samples: its negative eigenvalues are pure sampling noise around a PSD
    truth. Clipping them is a metric projection onto the feasible cone, so
    it can only move the estimate toward the truth; the clipped mass is
    returned as a diagnostic and shrinks with the outer budget.
    """
    mat = np.asarray(c_w).reshape(9, 9)
    mat = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(mat)
    clip = float(-vals.min()) if vals.min() < 0 else 0.0
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    fixed = 0.5 * (fixed + fixed.T)
    return fixed.reshape(3, 3, 3, 3), clip


def covariance_set(config, L, outer_samples, inner_samples,
                   sensitivity=True):
    """Estimate the full covariance family at supercell size L.

    The scalar covariances are exact quadratures; C_W and C_WN come from
    the nested MC. With sensitivity=True (and L-2 >= 3) the MC part is
    repeated on the L-2 supercell with the same streams and budgets, and
    the max-abs entry differences are reported as a systematic proxy.
    """
    if L < 3:
        raise ValueError("supercell must be at least 3 cells across")
    if outer_samples < 2 or inner_samples < 1:
        raise ValueError("need outer_samples >= 2 and inner_samples >= 1")
    c_theta, c_theta_star, c_a, c_a_star, mean_n, nbar = scalar_covariances(
        config.geometry, config.material, config.k0)
    main = _nested_m_statistics(config, L, outer_samples, inner_samples,
                                nbar)
    l_sens = None
    if sensitivity and L - 2 >= 3:
        small = _nested_m_statistics(config, L - 2, outer_samples,
                                     inner_samples, nbar)
        l_sens = {
            "L_small": L - 2,
            "C_W": float(np.abs(main["C_W"] - small["C_W"]).max()),
            "C_WN": float(np.abs(main["C_WN"] - small["C_WN"]).max()),
            "mean_M": float(np.abs(main["mean_M"]
                                   - small["mean_M"]).max()),
        }
    return CovarianceSet(
        C_W=main["C_W"],
        C_WN=main["C_WN"],
        C_theta=c_theta,
        C_theta_star=c_theta_star,
        C_a=c_a,
        C_a_star=c_a_star,
        C_W_stderr=main["C_W_stderr"],
        C_WN_stderr=main["C_WN_stderr"],
        C_theta_stderr=0.0,
        C_a_stderr=0.0,
        mean_M=main["mean_M"],
        mean_N=mean_n,
        L=L,
        outer_samples=main["kept"],
        inner_samples=inner_samples,
        failures=main["failures"],
        l_sensitivity=l_sens,
        psd_clip=main["psd_clip"],
    )
