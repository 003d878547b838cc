"""Run configuration: TOML ingestion, cross-module validation, hashing.

A run file holds everything an experiment needs: the medium law, supercell
and solver numerics, stage budgets, the eta sweep, and the two truncated
Gaussian profiles (f drives the field, g is the test weight). Every
constraint that a downstream module would enforce mid-run is re-checked at
load time so misconfigurations fail before any solve starts.

The config hash covers the resolved physical and numerical content, not the
output directory, so moving results does not change their identity.
"""

import hashlib
import json
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from .dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist
from .grid import Grid3D, mg_friendly_size
from .helmholtz import PMLSpec, SolverSettings
from .medium import DomainSpec, MediumConfig, _dist_dict
from .supercell import SupercellConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# physical defaults; values are configuration, not claims
DEFAULTS = {
    "k0": 3.0,
    "a_b": 0.8,
    "seed": 0,
    "output_dir": "out",
}
SOLVER_DEFAULTS = {
    "tol": 1e-8,
    "max_iter": 16,
    "pml_width": None,     # one wavelength unless set
    "clearance": 0.5,
    "limit_grid": 64,
    "standoff": 0.05,
    "delta": 0.0,
    "cells_per_eta": 8,
    "cells_per_wavelength": 10,
}
BUDGET_DEFAULTS = {
    "mc_samples": 8,
    "outer": 8,
    "inner": 1,
    "noise_draws": 128,
}
SUPERCELL_DEFAULTS = {"L": 5, "grid": 16}


@dataclass(frozen=True)
class SourceSpec:
    """Truncated Gaussian profile: exp(-r^2/2w^2) cut at support_radius."""

    center: tuple
    width: float
    support_radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        if len(self.center) != 3:
            raise ConfigError("source center needs three coordinates")
        if not self.width > 0:
            raise ConfigError("source width must be positive")
        if not self.support_radius >= self.width:
            raise ConfigError("support radius must be at least one width")

    def to_dict(self):
        return {"center": list(self.center), "width": self.width,
                "support_radius": self.support_radius,
                "amplitude": self.amplitude}


def _take(table, defaults, where):
    table = dict(table)
    out = {}
    for key, default in defaults.items():
        out[key] = table.pop(key, default)
    if table:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(table)}")
    return out


def _source(table, what):
    table = dict(table)
    center = table.pop("center", None)
    width = table.pop("width", None)
    if center is None or width is None:
        raise ConfigError(f"[{what}] needs center and width")
    support = table.pop("support_radius", 2.5 * float(width))
    amplitude = table.pop("amplitude", 1.0)
    if table:
        raise ConfigError(f"unknown keys in [{what}]: {sorted(table)}")
    return SourceSpec(tuple(float(c) for c in center), float(width),
                      float(support), float(amplitude))


@dataclass(frozen=True)
class RunConfig:
    k0: float
    a_b: float
    seed: int
    eta_sweep: tuple
    output_dir: str
    domain: DomainSpec
    geometry: GeometryLaw
    material: ComplexDist
    z: tuple
    supercell_L: int
    supercell_grid: int
    tol: float
    max_iter: int
    pml_width: float
    clearance: float
    limit_grid: int
    standoff: float
    delta: float
    cells_per_eta: int
    cells_per_wavelength: int
    mc_samples: int
    outer: int
    inner: int
    noise_draws: int
    g_spec: SourceSpec
    f_spec: SourceSpec

    @property
    def wavelength(self):
        return 2.0 * np.pi / self.k0

    @property
    def domain_halfwidth(self):
        if self.domain.kind == "box":
            return 0.5 * self.domain.side
        return self.domain.radius

    @property
    def extent(self):
        return 2.0 * (self.domain_halfwidth + self.clearance
                      + self.pml_width)

    def pml(self):
        return PMLSpec(width=self.pml_width)

    def medium_config(self, eta, seed=None):
        return MediumConfig(eta=eta, domain=self.domain,
                            geometry=self.geometry, material=self.material,
                            z=self.z,
                            seed=self.seed if seed is None else seed)

    def supercell_config(self):
        return SupercellConfig(L=self.supercell_L,
                               resolution=self.supercell_grid,
                               geometry=self.geometry,
                               material=self.material, seed=self.seed)

    def grid_for(self, eta=None):
        """Helmholtz grid resolving the wavelength and, when given, eta."""
        h_max = self.wavelength / self.cells_per_wavelength
        if eta is not None:
            h_max = min(h_max, eta / self.cells_per_eta)
        n = mg_friendly_size(self.extent / h_max)
        return self._grid(n)

    def limit_grid3d(self):
        return self._grid(self.limit_grid)

    def _grid(self, n):
        h = self.extent / n
        center = np.asarray(self.domain.center, float)
        origin = tuple(center - 0.5 * self.extent)
        return Grid3D((n, n, n), h, origin)

    def settings_for(self, grid, tol=None):
        return SolverSettings(grid=grid, k0=self.k0, pml=self.pml(),
                              rtol=self.tol if tol is None else tol,
                              max_outer=self.max_iter,
                              standoff=self.standoff)

    def to_dict(self):
        g = self.geometry
        return {
            "k0": self.k0, "a_b": self.a_b, "seed": self.seed,
            "eta_sweep": list(self.eta_sweep),
            "domain": self.domain.to_dict(),
            "theta": _dist_dict(g.theta), "rho": _dist_dict(g.rho),
            "xi": g.xi, "material": _dist_dict(self.material),
            "z": list(self.z),
            "supercell": {"L": self.supercell_L,
                          "grid": self.supercell_grid},
            "solver": {"tol": self.tol, "max_iter": self.max_iter,
                       "pml_width": self.pml_width,
                       "clearance": self.clearance,
                       "limit_grid": self.limit_grid,
                       "standoff": self.standoff, "delta": self.delta,
                       "cells_per_eta": self.cells_per_eta,
                       "cells_per_wavelength": self.cells_per_wavelength},
            "budgets": {"mc_samples": self.mc_samples, "outer": self.outer,
                        "inner": self.inner,
                        "noise_draws": self.noise_draws},
            "g_spec": self.g_spec.to_dict(),
            "f_spec": self.f_spec.to_dict(),
        }

    @property
    def config_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _validate_sources(cfg):
    for what, spec in (("g_spec", cfg.g_spec), ("f_spec", cfg.f_spec)):
        gap = -float(cfg.domain.distance_to_boundary(np.asarray(spec.center)))
        if gap < cfg.standoff + spec.support_radius - 1e-12:
            raise ConfigError(
                f"[{what}] support reaches within the standoff of the "
                f"domain closure (gap {gap:.4g}, need >= "
                f"{cfg.standoff + spec.support_radius:.4g})")
        half_core = cfg.domain_halfwidth + cfg.clearance
        off = np.abs(np.asarray(spec.center, float)
                     - np.asarray(cfg.domain.center, float))
        if float(off.max()) + spec.support_radius > half_core + 1e-12:
            raise ConfigError(
                f"[{what}] support does not fit between the domain and "
                f"the absorbing layer")


def _validate(cfg):
    if not cfg.k0 > 0:
        raise ConfigError("k0 must be positive")
    if not cfg.a_b > 0:
        raise ConfigError("a_b must be positive")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if not cfg.eta_sweep:
        raise ConfigError("eta_sweep must not be empty")
    if any(e <= 0 for e in cfg.eta_sweep):
        raise ConfigError("eta values must be positive")
    if list(cfg.eta_sweep) != sorted(cfg.eta_sweep, reverse=True):
        raise ConfigError("eta_sweep must be strictly decreasing")
    if len(set(cfg.eta_sweep)) != len(cfg.eta_sweep):
        raise ConfigError("eta_sweep must be strictly decreasing")
    if not 0 < cfg.tol <= 1e-2:
        raise ConfigError("solver tol must lie in (0, 1e-2]")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    if cfg.pml_width < cfg.wavelength * (1 - 1e-9):
        raise ConfigError(
            f"pml_width {cfg.pml_width:.4g} is thinner than one "
            f"wavelength {cfg.wavelength:.4g}")
    if cfg.clearance <= 0:
        raise ConfigError("clearance must be positive")
    if cfg.delta < 0 or cfg.standoff < 0:
        raise ConfigError("delta and standoff must be non-negative")
    if cfg.cells_per_eta < 8:
        raise ConfigError("cells_per_eta must be at least 8")
    if cfg.cells_per_wavelength < 10:
        raise ConfigError("cells_per_wavelength must be at least 10")
    if cfg.mc_samples < 2:
        raise ConfigError("mc_samples must be at least 2 (centering)")
    if cfg.outer < 2:
        raise ConfigError("outer budget must be at least 2")
    if cfg.inner < 1:
        raise ConfigError("inner budget must be at least 1")
    if cfg.noise_draws != 0 and cfg.noise_draws < 3:
        raise ConfigError("noise_draws must be 0 (skip) or at least 3")
    if cfg.limit_grid < 4:
        raise ConfigError("limit_grid must be at least 4 cells")
    h_limit = cfg.extent / cfg.limit_grid
    if h_limit > cfg.wavelength / 10 * (1 + 1e-12):
        raise ConfigError(
            f"limit_grid {cfg.limit_grid} leaves h={h_limit:.4g}, coarser "
            f"than a tenth wavelength")
    try:
        cfg.supercell_config()
        for eta in cfg.eta_sweep:
            cfg.medium_config(eta)
            if not cfg.domain.interior_cells(eta, np.asarray(cfg.z)):
                raise ConfigError(
                    f"no lattice cell fits inside the domain at eta={eta}")
            cfg.grid_for(eta)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _validate_sources(cfg)


def config_from_tables(tables):
    """Build and validate a RunConfig from nested plain dicts."""
    tables = dict(tables)
    top = {}
    for key, default in DEFAULTS.items():
        top[key] = tables.pop(key, default)
    eta_sweep = tables.pop("eta_sweep", None)
    if eta_sweep is None:
        raise ConfigError("eta_sweep is required")
    medium = dict(tables.pop("medium", None) or {})
    supercell = _take(tables.pop("supercell", {}), SUPERCELL_DEFAULTS,
                      "supercell")
    solver = _take(tables.pop("solver", {}), SOLVER_DEFAULTS, "solver")
    budgets = _take(tables.pop("budgets", {}), BUDGET_DEFAULTS, "budgets")
    g_spec = _source(tables.pop("g_spec", None) or {}, "g_spec")
    f_spec = _source(tables.pop("f_spec", None) or {}, "f_spec")
    if tables:
        raise ConfigError(f"unknown top-level keys: {sorted(tables)}")

    try:
        domain = DomainSpec.from_dict(medium.pop("domain", {"kind": "box"}))
        theta = ThetaDist.from_dict(medium.pop("theta", {"kind": "uniform"}))
        rho_d = medium.pop("rho", None)
        if rho_d is None:
            raise ConfigError("[medium] needs a rho law")
        rho = ScalarDist.from_dict(rho_d)
        xi = float(medium.pop("xi", 0.05))
        mat_d = medium.pop("material", None)
        if mat_d is None:
            raise ConfigError("[medium] needs a material law")
        material = ComplexDist.from_dict(mat_d)
        z = tuple(float(c) for c in medium.pop("z", (0.0, 0.0, 0.0)))
        if medium:
            raise ConfigError(f"unknown keys in [medium]: {sorted(medium)}")
        geometry = GeometryLaw(theta, rho, xi)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad [medium] table: {exc}") from exc

    k0 = float(top["k0"])
    pml_width = solver["pml_width"]
    if pml_width is None:
        pml_width = 2.0 * np.pi / k0 if k0 > 0 else 1.0

    try:
        cfg = RunConfig(
            k0=k0, a_b=float(top["a_b"]), seed=int(top["seed"]),
            eta_sweep=tuple(float(e) for e in eta_sweep),
            output_dir=str(top["output_dir"]),
            domain=domain, geometry=geometry, material=material, z=z,
            supercell_L=int(supercell["L"]),
            supercell_grid=int(supercell["grid"]),
            tol=float(solver["tol"]), max_iter=int(solver["max_iter"]),
            pml_width=float(pml_width),
            clearance=float(solver["clearance"]),
            limit_grid=int(solver["limit_grid"]),
            standoff=float(solver["standoff"]),
            delta=float(solver["delta"]),
            cells_per_eta=int(solver["cells_per_eta"]),
            cells_per_wavelength=int(solver["cells_per_wavelength"]),
            mc_samples=int(budgets["mc_samples"]),
            outer=int(budgets["outer"]), inner=int(budgets["inner"]),
            noise_draws=int(budgets["noise_draws"]),
            g_spec=g_spec, f_spec=f_spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    _validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, "rb") as fh:
            tables = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") \
            from exc
    return config_from_tables(tables)
