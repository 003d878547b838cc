"""Swap-based covariance identity for functions of paired component families.

A state X = (g, m) carries n independent components, each with a geometry
part g_i and a material part m_i. For an independent copy X' define the
component swap

    delta(f, X, X', alpha, j) = f(X) - f(X with alpha-part j from X'),

and the partially swapped states

    swapped(X, X', 'geometry', A) : geometry parts in A from X',
    swapped(X, X', 'material', A) : material parts in A from X' and the
                                    entire geometry family from X'.

Then for square-integrable h, f,

    Cov(h(X), f(X)) = 1/2 * sum over alpha in {geometry, material}
                      sum over proper subsets A of [n]
                      1 / (binom(n,|A|) * (n-|A|))
                      sum over j not in A
                      E{ delta(h,X,X',alpha,j) * delta(f*,X,X',alpha,j)
                         evaluated at the swapped state },

bilinear without complex conjugation; callers wanting E|f - Ef|^2 pass the
pointwise conjugate of f as h. Exact enumeration validates the identity for
small n and discrete laws; the randomized estimator scales it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

State = tuple[tuple, tuple]  # (geometry parts, material parts)

ALPHAS = ("geometry", "material")


def replace_component(X: State, Xp: State, alpha: str, j: int) -> State:
    g, m = X
    gp, mp = Xp
    if alpha == "geometry":
        g = g[:j] + (gp[j],) + g[j + 1:]
    else:
        m = m[:j] + (mp[j],) + m[j + 1:]
    return (g, m)


def delta(f, X: State, Xp: State, alpha: str, j: int):
    """f(X) - f(X with component j's alpha part replaced from X')."""
    return f(X) - f(replace_component(X, Xp, alpha, j))


def swapped(X: State, Xp: State, alpha: str, A: tuple[int, ...]) -> State:
    """The partially swapped state entering the identity's right-hand side."""
    g, m = X
    gp, mp = Xp
    if alpha == "geometry":
        g = tuple(gp[i] if i in A else g[i] for i in range(len(g)))
    else:
        m = tuple(mp[i] if i in A else m[i] for i in range(len(m)))
        g = gp
    return (g, m)


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite component law for exact enumeration: values with probabilities."""

    geometry: tuple[tuple[object, float], ...]
    material: tuple[tuple[object, float], ...]

    def __post_init__(self):
        for part in (self.geometry, self.material):
            total = sum(p for _, p in part)
            if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
                raise ValueError("probabilities must sum to 1")

    def component_states(self):
        """All (geometry, material) values of one component with weights."""
        return [((gv, mv), gp * mp)
                for gv, gp in self.geometry for mv, mp in self.material]


def _iter_states(law: DiscreteLaw, n: int):
    comp = law.component_states()
    for combo in product(comp, repeat=n):
        weight = 1.0
        for _, p in combo:
            weight *= p
        g = tuple(c[0][0] for c in combo)
        m = tuple(c[0][1] for c in combo)
        yield (g, m), weight


def cov_direct(h, f, law: DiscreteLaw, n: int) -> complex:
    """E{h f} - E{h} E{f} by direct enumeration."""
    ehf = eh = ef = 0.0 + 0j
    for X, w in _iter_states(law, n):
        hv, fv = h(X), f(X)
        ehf += w * hv * fv
        eh += w * hv
        ef += w * fv
    return ehf - eh * ef


def cov_swap_enumerated(h, f, law: DiscreteLaw, n: int) -> complex:
    """Right-hand side of the identity by brute force over (X, X') pairs.

    Cost grows like (|geometry| * |material|)^(2n); intended for n <= 4.
    """
    if n > 4:
        raise ValueError("exact enumeration supported for n <= 4")
    subsets = []
    for size in range(n):
        coef = 1.0 / (math.comb(n, size) * (n - size))
        for A in combinations(range(n), size):
            subsets.append((A, coef))
    total = 0.0 + 0j
    for X, wx in _iter_states(law, n):
        for Xp, wp in _iter_states(law, n):
            w = wx * wp
            acc = 0.0 + 0j
            for alpha in ALPHAS:
                for A, coef in subsets:
                    Y = swapped(X, Xp, alpha, A)
                    for j in range(n):
                        if j in A:
                            continue
                        acc += coef * (delta(h, X, Xp, alpha, j)
                                       * delta(f, Y, Xp, alpha, j))
            total += 0.5 * w * acc
    return total


def cov_estimate(h, f, draw_geometry, draw_material, n: int, budget: int,
                 seed: int, chunk: int = 4096):
    """Unbiased randomized estimator of the identity's right-hand side.

    Per draw: sample X, X' componentwise from the supplied draw functions,
    a subset size uniform on {0..n-1}, a uniform subset A of that size, a
    uniform j outside A, and average (n/2) * sum over alpha of
    delta(h,X)*delta(f, swapped X). Returns (mean, standard error) with the
    standard error from chunk means merged pairwise.

    draw_geometry/draw_material: callables rng -> component value.
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    count = 0
    mean = 0.0 + 0j
    m2 = 0.0
    while count < budget:
        block = min(chunk, budget - count)
        vals = np.empty(block, complex)
        for b in range(block):
            g = tuple(draw_geometry(rng) for _ in range(n))
            m = tuple(draw_material(rng) for _ in range(n))
            gp = tuple(draw_geometry(rng) for _ in range(n))
            mp = tuple(draw_material(rng) for _ in range(n))
            X, Xp = (g, m), (gp, mp)
            size = int(rng.integers(0, n))
            A = tuple(sorted(rng.choice(n, size=size, replace=False))) if size else ()
            outside = [j for j in range(n) if j not in A]
            j = int(outside[int(rng.integers(0, len(outside)))])
            acc = 0.0 + 0j
            for alpha in ALPHAS:
                Y = swapped(X, Xp, alpha, A)
                acc += delta(h, X, Xp, alpha, j) * delta(f, Y, Xp, alpha, j)
            vals[b] = 0.5 * n * acc
        block_mean = vals.mean()
        block_m2 = float(np.sum(np.abs(vals - block_mean) ** 2))
        # pairwise merge of (count, mean, M2)
        tot = count + block
        d = block_mean - mean
        m2 = m2 + block_m2 + abs(d) ** 2 * count * block / tot
        mean = mean + d * block / tot
        count = tot
    stderr = math.sqrt(m2 / (count - 1) / count)
    return mean, stderr
