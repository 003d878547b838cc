"""Swap identity: exact enumeration against direct covariance, estimator."""

import numpy as np
import pytest

from helmfluct.chatterjee import (DiscreteLaw, cov_direct, cov_estimate,
                                  cov_swap_enumerated, delta, replace_component,
                                  swapped)

RADEMACHER = DiscreteLaw(geometry=((1.0, 0.5), (-1.0, 0.5)),
                         material=((1.0, 0.5), (-1.0, 0.5)))

BIASED = DiscreteLaw(geometry=((1.0, 0.3), (-1.0, 0.7)),
                     material=((2.0, 0.6), (0.5, 0.4)))

COMPLEX_MAT = DiscreteLaw(geometry=((1.0, 0.5), (-1.0, 0.5)),
                          material=((1.0 + 1.0j, 0.5), (1.0 - 0.5j, 0.5)))


def f_pair(X):
    g, m = X
    return g[0] * g[1]


def f_mixed(X):
    g, m = X
    return g[0] * m[0] + 0.5 * g[1]


def f_cubic(X):
    g, m = X
    return g[0] * g[1] * m[2] + m[0] * m[1]


def f_complex(X):
    g, m = X
    return g[0] * m[0] + m[1] ** 2


CASES = [
    (1, RADEMACHER, lambda X: X[0][0], lambda X: X[0][0]),
    (1, BIASED, f_mixed_1 := lambda X: X[0][0] * X[1][0], f_mixed_1),
    (2, RADEMACHER, f_pair, f_pair),
    (2, BIASED, f_mixed, f_pair),
    (3, RADEMACHER, f_cubic, f_cubic),
    (3, BIASED, f_cubic, f_mixed),
    (2, COMPLEX_MAT, f_complex, f_complex),
    (3, COMPLEX_MAT, f_complex, f_cubic),
]


@pytest.mark.parametrize("n,law,h,f", CASES)
def test_swap_identity_matches_direct_covariance(n, law, h, f):
    lhs = cov_direct(h, f, law, n)
    rhs = cov_swap_enumerated(h, f, law, n)
    assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(lhs))


def test_second_moment_via_conjugate_pairing():
    """E|f - Ef|^2 comes from pairing with the pointwise conjugate."""
    n = 2
    f = f_complex
    h = lambda X: np.conj(f_complex(X))
    rhs = cov_swap_enumerated(h, f, COMPLEX_MAT, n)
    assert abs(rhs.imag) < 1e-12
    assert rhs.real >= 0
    lhs = cov_direct(h, f, COMPLEX_MAT, n)
    assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(lhs))


def test_delta_and_swap_semantics():
    X = ((1.0, 2.0), (10.0, 20.0))
    Xp = ((-1.0, -2.0), (-10.0, -20.0))
    assert replace_component(X, Xp, "geometry", 1) == ((1.0, -2.0), (10.0, 20.0))
    assert replace_component(X, Xp, "material", 0) == ((1.0, 2.0), (-10.0, 20.0))
    # material swap replaces the whole geometry family
    assert swapped(X, Xp, "material", (1,)) == ((-1.0, -2.0), (10.0, -20.0))
    assert swapped(X, Xp, "geometry", (0,)) == ((-1.0, 2.0), (10.0, 20.0))
    f = lambda s: s[0][0] + s[1][1]
    assert delta(f, X, Xp, "geometry", 0) == pytest.approx(2.0)


def test_estimator_agrees_with_enumeration():
    n = 2
    law = BIASED
    target = cov_swap_enumerated(f_mixed, f_pair, law, n)
    gvals = [v for v, _ in law.geometry]
    gprobs = [p for _, p in law.geometry]
    mvals = [v for v, _ in law.material]
    mprobs = [p for _, p in law.material]
    mean, se = cov_estimate(
        f_mixed, f_pair,
        draw_geometry=lambda rng: gvals[int(rng.random() >= gprobs[0])],
        draw_material=lambda rng: mvals[int(rng.random() >= mprobs[0])],
        n=n, budget=40_000, seed=99)
    assert se > 0
    assert abs(mean - target) < 4 * se


def test_estimator_reproducible():
    kw = dict(draw_geometry=lambda rng: float(rng.choice([1.0, -1.0])),
              draw_material=lambda rng: float(rng.choice([1.0, -1.0])),
              n=2, budget=2000, seed=5)
    m1, s1 = cov_estimate(f_pair, f_pair, **kw)
    m2, s2 = cov_estimate(f_pair, f_pair, **kw)
    assert m1 == m2 and s1 == s2


def test_enumeration_rejects_large_n():
    with pytest.raises(ValueError):
        cov_swap_enumerated(f_pair, f_pair, RADEMACHER, 5)
