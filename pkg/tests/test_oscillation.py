"""Oscillation profile: ODE oracle, eigenseries, N value, dispersion constant."""

import numpy as np
import pytest

from helmfluct.dists import ComplexDist, GeometryLaw, ScalarDist, ThetaDist
from helmfluct.oscillation import (ball_volume, eigen_coefficient, kappa,
                                   lambda_closed_form, lambda_series, mu_eff,
                                   n_value)


def ode_profile(radii, rho, k0, a):
    """Independent oracle: integrate a*(L'' + 2L'/r) + k0^2 L = 0 outward
    from the center with the regular initial condition, then normalize to 1
    at the boundary. Run as a real 4-dim system (Re/Im split) with RK45."""
    from scipy.integrate import solve_ivp

    def rhs(r, y):
        lam = y[0] + 1j * y[1]
        dlam = y[2] + 1j * y[3]
        dd = -(k0 ** 2 / a) * lam - 2.0 * dlam / r
        return [dlam.real, dlam.imag, dd.real, dd.imag]

    r0 = 1e-8
    # regular solution ~ sin(kr)/r: L(r0) = 1 - (k r0)^2/6 + ..., L'(r0) ~ -k^2 r0/3
    k2 = k0 ** 2 / a
    y0 = [1.0 - (k2 * r0 ** 2 / 6).real, -(k2 * r0 ** 2 / 6).imag,
          (-k2 * r0 / 3).real, (-k2 * r0 / 3).imag]
    sol = solve_ivp(rhs, (r0, rho), y0, t_eval=np.clip(radii, r0, rho),
                    rtol=1e-11, atol=1e-13, method="RK45")
    vals = sol.y[0] + 1j * sol.y[1]
    at_rho = vals[-1] if radii[-1] >= rho else None
    if at_rho is None:
        solb = solve_ivp(rhs, (r0, rho), y0, rtol=1e-11, atol=1e-13)
        at_rho = solb.y[0][-1] + 1j * solb.y[1][-1]
    return vals / at_rho


@pytest.mark.parametrize("a", [2.0 + 1.0j, 2.0 + 0.0j, 0.7 + 0.3j])
def test_closed_form_against_ode_oracle(a):
    rho, k0 = 0.3, 1.5
    radii = np.linspace(0.02, rho, 40)
    oracle = ode_profile(radii, rho, k0, a)
    cf = lambda_closed_form(radii, rho, k0, a)
    assert np.max(np.abs(cf - oracle)) < 1e-8


def test_kappa_branch():
    assert kappa(1.0, 2.0 + 1.0j).imag < 0
    assert kappa(1.0, 4.0).real == pytest.approx(0.5)


def test_profile_boundary_and_outside():
    rho = 0.25
    vals = lambda_closed_form(np.array([rho, 0.3, 1.0]), rho, 2.0, 2 + 1j)
    assert np.allclose(vals, 1.0)


def test_series_matches_closed_form():
    rho, k0, a = 0.3, 1.0, 2.0 + 1.0j
    radii = np.linspace(0.05 * rho, rho, 100)
    cf = lambda_closed_form(radii, rho, k0, a)
    sr = lambda_series(radii, rho, k0, a, modes=200)
    rel = np.abs(sr - cf) / np.abs(cf)
    assert rel.max() <= 1e-6


def test_series_center_value_converges_slowly_but_surely():
    rho, k0, a = 0.3, 1.0, 2.0 + 1.0j
    cf = lambda_closed_form(np.array([0.0]), rho, k0, a)
    sr = lambda_series(np.array([0.0]), rho, k0, a, modes=20000)
    assert abs(sr[0] - cf[0]) < 1e-6


def test_parseval_sum():
    n = np.arange(1, 200_000)
    total = np.sum(eigen_coefficient(n) ** 2)
    assert total == pytest.approx(4 * np.pi / 3, rel=1e-4)


def test_n_value_against_quadrature():
    """Oracle: integrate 1 + Lambda over the ball with Gauss-Legendre."""
    rho, k0, a = 0.28, 2.0, 1.5 + 0.7j
    x, w = np.polynomial.legendre.leggauss(200)
    r = 0.5 * rho * (x + 1.0)
    wr = 0.5 * rho * w
    lam = lambda_closed_form(r, rho, k0, a)
    oracle = np.sum(wr * 4 * np.pi * r ** 2 * (1.0 + lam))
    assert n_value(rho, k0, a) == pytest.approx(oracle, rel=1e-10)


def test_n_value_stiff_limit():
    """a -> infinity flattens the profile to 1, so N -> 2 |B_rho|."""
    rho = 0.3
    val = n_value(rho, 1.0, 1e8 + 1e6j)
    assert val == pytest.approx(2 * ball_volume(rho), rel=1e-5)


def test_n_value_depends_only_on_rho_and_a():
    # same k0^2/a ratio, same profile; different k0 with scaled a
    v1 = n_value(0.25, 2.0, 2.0 + 1.0j)
    v2 = n_value(0.25, 4.0, 8.0 + 4.0j)
    assert v1 == pytest.approx(v2, rel=1e-12)


def test_mu_eff_dual_route_deterministic():
    law = GeometryLaw(ThetaDist("uniform"), ScalarDist("point", value=0.25), 0.05)
    mat = ComplexDist("point", value=2.0 + 0.0j)
    m = mu_eff(law, mat, k0=3.0)
    assert m.route_gap <= 1e-8 * abs(m.series)


def test_mu_eff_dual_route_random_laws():
    law = GeometryLaw(ThetaDist("uniform"),
                      ScalarDist("uniform", lo=0.15, hi=0.3), 0.05)
    mat = ComplexDist("two_point", values=(2.0 + 0.5j, 1.5 + 1.0j),
                      probs=(0.4, 0.6))
    m = mu_eff(law, mat, k0=3.0)
    assert m.route_gap <= 1e-8 * abs(m.series)
    assert m.series.imag != 0.0


def test_mu_eff_third_route_radial_quadrature():
    """Cell average of Lambda integrated directly in radius."""
    law = GeometryLaw(ThetaDist("uniform"), ScalarDist("point", value=0.2), 0.05)
    mat = ComplexDist("point", value=2.0 + 1.0j)
    k0 = 2.5
    rho = 0.2
    x, w = np.polynomial.legendre.leggauss(400)
    r = 0.5 * rho * (x + 1.0)
    wr = 0.5 * rho * w
    lam = lambda_closed_form(r, rho, k0, 2.0 + 1.0j)
    cell_avg = 1.0 - ball_volume(rho) + np.sum(wr * 4 * np.pi * r ** 2 * lam)
    m = mu_eff(law, mat, k0=k0)
    assert m.series == pytest.approx(cell_avg, abs=1e-9)


def test_mu_eff_vanishing_inclusions():
    law = GeometryLaw(ThetaDist("uniform"), ScalarDist("point", value=0.01), 0.05)
    mat = ComplexDist("point", value=2.0 + 0.5j)
    m = mu_eff(law, mat, k0=3.0)
    assert m.series == pytest.approx(1.0, abs=1e-5)
