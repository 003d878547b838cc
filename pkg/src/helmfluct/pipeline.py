"""Experiment orchestration: medium -> correctors -> covariances ->
MC variance -> limit -> compare.

Each stage writes its own stamped artifact into the run's output directory
and returns the payload, so stages can run individually from the command
line or together through run_pipeline. Later stages read earlier artifacts
from disk; nothing is passed through hidden state.

Media for the eta sweep are drawn from per-sample seeds (seed + index), so
sample s at one eta shares its cell draws with sample s at another eta
where the lattices overlap. That coupling is deliberate: common random
numbers steady the trend comparison without biasing any per-eta statistic.
"""

import pathlib
from dataclasses import dataclass

import numpy as np

from . import artifacts, medium as medium_mod
from .corrector import effective_matrix, solve_corrector
from .covariances import CovarianceConfig, CovarianceSet, covariance_set
from .helmholtz import (fluctuation_functional, solve_heterogeneous,
                        solve_homogenized, weighted_green)
from .limit import (contract_moments, moment_error_bound,
                    quadrature_kernels, spde_second_moments)
from .oscillation import mu_eff
from .supercell import sample_supercell


class StageFailure(RuntimeError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _out(cfg):
    path = pathlib.Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def source_field(grid, spec, real=False):
    """Truncated Gaussian on the grid; exactly zero beyond the support."""
    X, Y, Z = grid.meshgrid()
    r2 = ((X - spec.center[0]) ** 2 + (Y - spec.center[1]) ** 2
          + (Z - spec.center[2]) ** 2)
    vals = spec.amplitude * np.exp(-r2 / (2.0 * spec.width ** 2))
    vals[r2 > spec.support_radius ** 2] = 0.0
    return vals if real else vals.astype(np.complex128)


def stage_sample_medium(cfg, eta=None):
    eta = cfg.eta_sweep[0] if eta is None else eta
    sample = medium_mod.sample_medium(cfg.medium_config(eta))
    rhos = [p.rho for p in sample.cells.values()]
    payload = {
        "eta": eta,
        "cells": len(sample.cells),
        "rho_mean": float(np.mean(rhos)) if rhos else 0.0,
        "sample": medium_mod.to_json(sample),
    }
    artifacts.write_json(_out(cfg) / f"medium_eta{eta:.6g}.json",
                         "medium-sample", payload,
                         config_hash=cfg.config_hash, seed=cfg.seed)
    return payload


def stage_correctors(cfg):
    """Solve corrector triples on `outer` supercell draws.

    Persists per-draw flux matrices so the effective stage can aggregate
    without re-solving, plus conservation and residual diagnostics.
    """
    sc = cfg.supercell_config()
    draws = []
    for t in range(cfg.outer):
        cell = sample_supercell(sc, generation=t)
        sol = solve_corrector(cell, tol=cfg.tol)
        F = sol.flux_average()
        draws.append({
            "generation": t,
            "flux": [[float(F[i, j]) for j in range(3)] for i in range(3)],
            "residual_rel_max": max(sol.residual_rel),
            "residual_max": max(sol.residual_max),
            "fluid_fraction": float(sol.frac.mean()),
            "iterations": list(sol.iterations),
        })
    payload = {
        "L": sc.L,
        "resolution": sc.resolution,
        "tol": cfg.tol,
        "samples": draws,
        "conservation_max": max(d["residual_max"] for d in draws),
    }
    artifacts.write_json(_out(cfg) / "correctors.json", "correctors",
                         payload, config_hash=cfg.config_hash,
                         seed=cfg.seed)
    return payload


def stage_effective(cfg):
    """A_eff from corrector fluxes, mu_eff by dual-route quadrature."""
    path = _out(cfg) / "correctors.json"
    if path.exists():
        record = artifacts.read_json(path)
        if record["config_hash"] != cfg.config_hash:
            raise StageFailure("effective",
                               "correctors.json belongs to another config")
        fluxes = [np.array(d["flux"]) for d in record["data"]["samples"]]
    else:
        corr = stage_correctors(cfg)
        fluxes = [np.array(d["flux"]) for d in corr["samples"]]
    F = np.mean(fluxes, axis=0)
    A = cfg.a_b * F
    asym = float(np.abs(A - A.T).max())
    A = 0.5 * (A + A.T)
    disp = mu_eff(cfg.geometry, cfg.material, cfg.k0)
    payload = {
        "a_eff": [[artifacts.cnum(A[i, j]) for j in range(3)]
                  for i in range(3)],
        "a_eff_asymmetry": asym,
        "mu_eff": artifacts.cnum(disp.series),
        "mu_eff_volume_route": artifacts.cnum(disp.volume_average),
        "mu_route_gap": disp.route_gap,
        "flux_samples": len(fluxes),
    }
    artifacts.write_json(_out(cfg) / "effective.json", "effective", payload,
                         config_hash=cfg.config_hash, seed=cfg.seed)
    return payload


def stage_covariances(cfg, L=None, outer=None, inner=None):
    cov_cfg = CovarianceConfig(geometry=cfg.geometry, material=cfg.material,
                               k0=cfg.k0, resolution=cfg.supercell_grid,
                               seed=cfg.seed)
    cov = covariance_set(cov_cfg,
                         L=cfg.supercell_L if L is None else L,
                         outer_samples=cfg.outer if outer is None else outer,
                         inner_samples=cfg.inner if inner is None else inner)
    artifacts.write_json(_out(cfg) / "covariances.json", "covariances",
                         cov.to_dict(), config_hash=cfg.config_hash,
                         seed=cfg.seed)
    return cov


def _eta_samples(cfg, eta, settings, f_values, residuals):
    for s in range(cfg.mc_samples):
        sample = medium_mod.sample_medium(
            cfg.medium_config(eta, seed=cfg.seed + s))
        result = solve_heterogeneous(settings, sample, f_values)
        residuals.append(result.relative_residual)
        yield result.field


def stage_mc_variance(cfg):
    """Empirical second moments of the centered, scaled functional per eta."""
    rows = []
    for eta in cfg.eta_sweep:
        grid = cfg.grid_for(eta)
        settings = cfg.settings_for(grid)
        f_values = source_field(grid, cfg.f_spec)
        g_values = source_field(grid, cfg.g_spec, real=True)
        residuals = []
        fields = _eta_samples(cfg, eta, settings, f_values, residuals)
        stats = fluctuation_functional(fields, g_values, eta, grid)
        rows.append({
            "eta": eta,
            "grid_n": grid.shape[0],
            "grid_h": grid.h,
            "samples": stats.nsamples,
            "second_abs": stats.second_abs,
            "second_plain": artifacts.cnum(stats.second_plain),
            "stderr_abs": stats.stderr_abs,
            "stderr_plain": stats.stderr_plain,
            "solver_residual_max": max(residuals),
        })
    payload = {"rows": rows}
    artifacts.write_json(_out(cfg) / "mc_variance.json", "mc-variance",
                         payload, config_hash=cfg.config_hash,
                         seed=cfg.seed)
    artifacts.write_csv(
        _out(cfg) / "mc_variance.csv",
        ["eta", "grid_n", "grid_h", "samples", "second_abs",
         "second_plain_re", "second_plain_im", "stderr_abs",
         "stderr_plain", "solver_residual_max"],
        [[r["eta"], r["grid_n"], r["grid_h"], r["samples"], r["second_abs"],
          r["second_plain"][0], r["second_plain"][1], r["stderr_abs"],
          r["stderr_plain"], r["solver_residual_max"]] for r in rows],
        config_hash=cfg.config_hash, seed=cfg.seed)
    return payload


def _load_effective(cfg):
    path = _out(cfg) / "effective.json"
    if not path.exists():
        raise StageFailure("limit", "effective.json not found; run the "
                           "effective stage first")
    record = artifacts.read_json(path)
    if record["config_hash"] != cfg.config_hash:
        raise StageFailure("limit",
                           "effective.json belongs to another config")
    data = record["data"]
    a_eff = np.array([[complex(*data["a_eff"][i][j]) for j in range(3)]
                      for i in range(3)])
    return a_eff, complex(*data["mu_eff"])


def load_covariances(cfg, path=None):
    path = pathlib.Path(path) if path else _out(cfg) / "covariances.json"
    if not path.exists():
        raise StageFailure("limit", f"covariance record {path} not found; "
                           "run the covariances stage first")
    record = artifacts.read_json(path)
    return CovarianceSet.from_dict(record["data"])


def stage_limit(cfg, cov_path=None):
    """Limiting moments by quadrature, with an optional sampled cross-check.

    The reported stderr combines quadrature refinement, supercell size
    sensitivity, and covariance Monte Carlo error (linear propagation);
    the SPDE route's own stderr is reported alongside, not folded in.
    """
    cov = load_covariances(cfg, cov_path)
    a_eff, mu = _load_effective(cfg)
    grid = cfg.limit_grid3d()
    settings = cfg.settings_for(grid)
    f_values = source_field(grid, cfg.f_spec)
    g_values = source_field(grid, cfg.g_spec, real=True)
    u_h = solve_homogenized(settings, cfg.domain, a_eff, mu, f_values).field
    green = weighted_green(settings, cfg.domain, a_eff, mu, g_values).field

    kernels = quadrature_kernels(u_h, green, cfg.domain, cfg.delta)
    e_abs2, e_sq = contract_moments(cov, kernels, cfg.a_b, cfg.k0)
    coarse = quadrature_kernels(*_decimate_pair(grid, u_h, green),
                                cfg.domain, cfg.delta)
    c_abs2, c_sq = contract_moments(cov, coarse, cfg.a_b, cfg.k0)
    band_quad = abs(e_abs2 - c_abs2)
    band_cov = moment_error_bound(kernels, cfg.a_b, cfg.k0,
                                  d_cw=np.abs(np.asarray(cov.C_W_stderr)),
                                  d_cwn=np.abs(np.asarray(cov.C_WN_stderr)))
    if cov.l_sensitivity is not None:
        band_l = moment_error_bound(kernels, cfg.a_b, cfg.k0,
                                    d_cw=cov.l_sensitivity["C_W"],
                                    d_cwn=cov.l_sensitivity["C_WN"])
    else:
        band_l = None
    stderr = band_quad + band_cov + (band_l or 0.0)

    payload = {
        "E_abs2": e_abs2,
        "E_sq": artifacts.cnum(e_sq),
        "stderr": stderr,
        "grid_h": grid.h,
        "config_hash": cfg.config_hash,
        "bands": {"quadrature": band_quad, "covariance_mc": band_cov,
                  "l_sensitivity": band_l},
        "coarse_E_abs2": c_abs2,
        "coarse_E_sq": artifacts.cnum(c_sq),
        "quadrature_cells": kernels["cells"],
        "delta": cfg.delta,
    }
    if cfg.noise_draws >= 3:
        stats = spde_second_moments(cov, u_h, g_values, a_eff, mu, settings,
                                    cfg.domain, cfg.a_b, cfg.noise_draws,
                                    cfg.seed, cfg.delta)
        payload["spde"] = {
            "e_abs2": stats.e_abs2,
            "e_sq": artifacts.cnum(stats.e_sq),
            "stderr_abs2": stats.stderr_abs2,
            "stderr_sq": stats.stderr_sq,
            "draws": stats.draws,
            "solver_residual_max": stats.solver_residual_max,
            "route_gap_abs2": abs(stats.e_abs2 - e_abs2),
            "route_gap_sq": abs(stats.e_sq - e_sq),
        }
    artifacts.write_json(_out(cfg) / "limit.json", "limit", payload,
                         config_hash=cfg.config_hash, seed=cfg.seed)
    return payload


def _decimate_pair(grid, u_h, green):
    from .grid import Grid3D
    from .helmholtz import ComplexGridField
    sub_u = u_h.values[::2, ::2, ::2]
    sub_g = green.values[::2, ::2, ::2]
    origin = tuple(o - grid.h / 2 for o in grid.origin)
    coarse = Grid3D(tuple(sub_u.shape), 2 * grid.h, origin)
    return sub_u, ComplexGridField(coarse, sub_g)


def stage_compare(cfg):
    """Empirical sweep against the limit, with the uncertainty ledger."""
    out = _out(cfg)
    mc_path = out / "mc_variance.json"
    limit_path = out / "limit.json"
    for path in (mc_path, limit_path):
        if not path.exists():
            raise StageFailure("compare", f"{path.name} not found; run the "
                               "earlier stages first")
    mc = artifacts.read_json(mc_path)
    lim = artifacts.read_json(limit_path)
    for rec, name in ((mc, "mc_variance"), (lim, "limit")):
        if rec["config_hash"] != cfg.config_hash:
            raise StageFailure("compare",
                               f"{name}.json belongs to another config")
    e_abs2 = lim["data"]["E_abs2"]
    limit_stderr = lim["data"]["stderr"]
    rows = []
    for r in mc["data"]["rows"]:
        gap = abs(r["second_abs"] - e_abs2)
        band = limit_stderr + 4.0 * r["stderr_abs"]
        rows.append({
            "eta": r["eta"],
            "second_abs": r["second_abs"],
            "mc_stderr": r["stderr_abs"],
            "limit_E_abs2": e_abs2,
            "abs_gap": gap,
            "band": band,
            "within_band": gap <= band,
        })
    gaps = [r["abs_gap"] for r in rows]
    trend = all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))
    payload = {
        "rows": rows,
        "trend_monotone": trend,
        "final_within_band": rows[-1]["within_band"] if rows else False,
        "limit_bands": lim["data"]["bands"],
    }
    artifacts.write_json(out / "report.json", "compare", payload,
                         config_hash=cfg.config_hash, seed=cfg.seed)
    artifacts.write_csv(
        out / "report.csv",
        ["eta", "second_abs", "mc_stderr", "limit_E_abs2", "abs_gap",
         "band", "within_band"],
        [[r["eta"], r["second_abs"], r["mc_stderr"], r["limit_E_abs2"],
          r["abs_gap"], r["band"], int(r["within_band"])] for r in rows],
        config_hash=cfg.config_hash, seed=cfg.seed)
    return payload


@dataclass
class PipelineReport:
    stages: list
    report: dict


def run_pipeline(cfg):
    """All stages in order; failures leave a machine-readable record."""
    done = []
    order = [
        ("sample-medium", lambda: stage_sample_medium(cfg)),
        ("correctors", lambda: stage_correctors(cfg)),
        ("effective", lambda: stage_effective(cfg)),
        ("covariances", lambda: stage_covariances(cfg)),
        ("mc-variance", lambda: stage_mc_variance(cfg)),
        ("limit", lambda: stage_limit(cfg)),
        ("compare", lambda: stage_compare(cfg)),
    ]
    report = None
    for name, step in order:
        try:
            result = step()
        except Exception as exc:
            artifacts.write_json(_out(cfg) / "error.json", "error",
                                 {"stage": name, "type": type(exc).__name__,
                                  "message": str(exc)},
                                 config_hash=cfg.config_hash, seed=cfg.seed)
            if isinstance(exc, StageFailure):
                raise
            raise StageFailure(name, exc) from exc
        done.append(name)
        if name == "compare":
            report = result
    return PipelineReport(stages=done, report=report)
