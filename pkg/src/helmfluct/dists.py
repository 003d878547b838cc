"""Distribution specifications for inclusion geometry and material laws.

Three small families cover every law the laboratory uses:

* ``ScalarDist``: radius laws on (0, 1/2); point mass, uniform, two-point.
* ``ComplexDist``: material coefficient laws with Im a >= 0.
* ``ThetaDist``: center laws on the open unit cell.

Each law exposes deterministic quadrature nodes alongside sampling so that
expectations over the law can be evaluated both by Monte Carlo and by exact
quadrature (the two routes are cross-checked in tests). Gauss-Legendre rules
come from numpy; everything else is arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_GL_POINTS = 24  # exact for polynomial integrands well past what we need


def _gauss_legendre(lo: float, hi: float, n: int = _GL_POINTS):
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    return nodes, weights / (hi - lo)  # weights normalized to a probability law


@dataclass(frozen=True)
class ScalarDist:
    """Law of a positive scalar; kind in {point, uniform, two_point}."""

    kind: str
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    values: tuple[float, float] = (0.0, 0.0)
    probs: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("point", "uniform", "two_point"):
            raise ValueError(f"unknown scalar law {self.kind!r}")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise ValueError("uniform law needs lo < hi")
        if self.kind == "two_point" and not np.isclose(sum(self.probs), 1.0):
            raise ValueError("two_point probabilities must sum to 1")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "point":
            return self.value
        if self.kind == "uniform":
            return float(rng.uniform(self.lo, self.hi))
        return float(rng.choice(self.values, p=self.probs))

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and probability weights."""
        if self.kind == "point":
            return np.array([self.value]), np.array([1.0])
        if self.kind == "uniform":
            return _gauss_legendre(self.lo, self.hi)
        return np.asarray(self.values, float), np.asarray(self.probs, float)

    def support(self) -> tuple[float, float]:
        if self.kind == "point":
            return self.value, self.value
        if self.kind == "uniform":
            return self.lo, self.hi
        return min(self.values), max(self.values)

    @staticmethod
    def from_dict(d: dict) -> "ScalarDist":
        kw = dict(d)
        kind = kw.pop("kind")
        if "values" in kw:
            kw["values"] = tuple(kw["values"])
        if "probs" in kw:
            kw["probs"] = tuple(kw["probs"])
        return ScalarDist(kind, **kw)


@dataclass(frozen=True)
class ComplexDist:
    """Law of the material coefficient a; support must satisfy Im a >= 0.

    kind in {point, uniform_rect, two_point}. uniform_rect is uniform on an
    axis-aligned rectangle [re_lo, re_hi] x [im_lo, im_hi] of the upper half
    plane.
    """

    kind: str
    value: complex = 0j
    re_lo: float = 0.0
    re_hi: float = 0.0
    im_lo: float = 0.0
    im_hi: float = 0.0
    values: tuple[complex, complex] = (0j, 0j)
    probs: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("point", "uniform_rect", "two_point"):
            raise ValueError(f"unknown complex law {self.kind!r}")
        lo, _ = self._im_range()
        if lo < 0:
            raise ValueError("material law must have Im a >= 0")
        re_lo = self._re_range()[0]
        if re_lo <= 0:
            raise ValueError("material law must have Re a > 0")

    def _im_range(self):
        if self.kind == "point":
            return self.value.imag, self.value.imag
        if self.kind == "uniform_rect":
            return self.im_lo, self.im_hi
        ims = [complex(v).imag for v in self.values]
        return min(ims), max(ims)

    def _re_range(self):
        if self.kind == "point":
            return self.value.real, self.value.real
        if self.kind == "uniform_rect":
            return self.re_lo, self.re_hi
        res = [complex(v).real for v in self.values]
        return min(res), max(res)

    def sample(self, rng: np.random.Generator) -> complex:
        if self.kind == "point":
            return complex(self.value)
        if self.kind == "uniform_rect":
            return complex(rng.uniform(self.re_lo, self.re_hi),
                           rng.uniform(self.im_lo, self.im_hi))
        return complex(self.values[int(rng.random() >= self.probs[0])])

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "point":
            return np.array([self.value], complex), np.array([1.0])
        if self.kind == "uniform_rect":
            xr, wr = _gauss_legendre(self.re_lo, self.re_hi, 12)
            if self.im_hi > self.im_lo:
                xi, wi = _gauss_legendre(self.im_lo, self.im_hi, 12)
            else:
                xi, wi = np.array([self.im_lo]), np.array([1.0])
            nodes = (xr[:, None] + 1j * xi[None, :]).ravel()
            weights = (wr[:, None] * wi[None, :]).ravel()
            return nodes, weights
        return np.asarray(self.values, complex), np.asarray(self.probs, float)

    @staticmethod
    def from_dict(d: dict) -> "ComplexDist":
        kw = dict(d)
        kind = kw.pop("kind")
        if "value" in kw:
            kw["value"] = _as_complex(kw["value"])
        if "values" in kw:
            kw["values"] = tuple(_as_complex(v) for v in kw["values"])
        if "probs" in kw:
            kw["probs"] = tuple(kw["probs"])
        return ComplexDist(kind, **kw)


def _as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


@dataclass(frozen=True)
class ThetaDist:
    """Law of the inclusion center inside the open unit cell.

    kind in {point, uniform}. The joint geometry law conditions (theta, rho)
    on the admissible set dist(theta, cell boundary) > rho + xi, so the
    relevant analytic quantity here is the conditional acceptance probability
    P(dist(theta, boundary) > r) as a function of r.
    """

    kind: str
    value: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("point", "uniform"):
            raise ValueError(f"unknown center law {self.kind!r}")
        if self.kind == "point" and not all(0 < c < 1 for c in self.value):
            raise ValueError("center must lie in the open unit cell")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "point":
            return np.asarray(self.value, float)
        return rng.random(3)

    def acceptance_probability(self, r) -> np.ndarray:
        """P(dist(theta, cell boundary) > r) for scalar or array r."""
        r = np.asarray(r, float)
        if self.kind == "uniform":
            side = np.clip(1.0 - 2.0 * r, 0.0, None)
            return side ** 3
        d = min(min(c, 1.0 - c) for c in self.value)
        return (r < d).astype(float)

    @staticmethod
    def from_dict(d: dict) -> "ThetaDist":
        kw = dict(d)
        kind = kw.pop("kind")
        if "value" in kw:
            kw["value"] = tuple(kw["value"])
        return ThetaDist(kind, **kw)


@dataclass(frozen=True)
class GeometryLaw:
    """Joint law of (theta, rho) conditioned on admissibility with margin xi."""

    theta: ThetaDist
    rho: ScalarDist
    xi: float

    MAX_REJECTION_ATTEMPTS = 100_000

    def __post_init__(self):
        if not 0.0 < self.xi < 0.5:
            raise ValueError("xi must lie in (0, 1/2)")
        lo, hi = self.rho.support()
        if not 0.0 < lo <= hi < 0.5:
            raise ValueError("radius law must be supported in (0, 1/2)")
        nodes, w = self.conditional_rho_nodes()
        if w.sum() <= 0:
            raise ValueError("admissible set has zero probability under the law")

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Rejection sampling of (theta, rho) from the conditioned law."""
        for _ in range(self.MAX_REJECTION_ATTEMPTS):
            theta = self.theta.sample(rng)
            rho = self.rho.sample(rng)
            margin = min(float(np.min(theta)), float(np.min(1.0 - theta)))
            if margin > rho + self.xi:
                return theta, rho
        raise RuntimeError(
            f"admissibility rejection failed after "
            f"{self.MAX_REJECTION_ATTEMPTS} attempts; law too tight")

    def conditional_rho_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature for the rho marginal of the conditioned joint law.

        The conditioning reweights the raw radius law by the center's
        acceptance probability at r = rho + xi.
        """
        nodes, w = self.rho.nodes()
        w = w * self.theta.acceptance_probability(nodes + self.xi)
        total = w.sum()
        if total > 0:
            w = w / total
        return nodes, w

    def mean_rho(self) -> float:
        nodes, w = self.conditional_rho_nodes()
        return float(nodes @ w)
