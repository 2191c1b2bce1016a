"""Independent oracles: symbolic ansatz algebra and exact 1D first integrals."""

import numpy as np
import pytest
import sympy as sp
from scipy import integrate, optimize

from conftest import ansatz
from plapsys.grid import DomainSpec, build_grid
from plapsys.plap import solve_dirichlet_scalar


@pytest.mark.parametrize("p,gamma", [(2, 3), (3, 4), (sp.Rational(3, 2), 2), (4, 5)])
def test_power_ansatz_solves_boundary_ode(p, gamma):
    # u = A d^(-beta) solves (|u'|^(p-2) u')' = u^gamma for d > 0
    d = sp.symbols("d", positive=True)
    p, gamma = sp.nsimplify(p), sp.nsimplify(gamma)
    beta = p / (gamma - p + 1)
    A = (beta ** (p - 1) * (beta + 1) * (p - 1)) ** (1 / (gamma - p + 1))
    u = A * d ** (-beta)
    flux = (-sp.diff(u, d)) ** (p - 1)  # u' < 0 in d
    lhs = -sp.diff(flux, d)
    assert sp.simplify(lhs / u ** gamma - 1) == 0


def test_ansatz_constants():
    assert ansatz(2, 3) == pytest.approx((1.0, np.sqrt(2)))
    assert ansatz(3, 4) == pytest.approx((1.5, 3.3541019662))
    assert ansatz(1.5, 2) == pytest.approx((1.0, 1.0))


def first_integral(p, gamma, b=None, half_width=1.0):
    """Center value u0 and the map u -> distance to the nearest end.

    With b=None the large solution (u = inf at the ends) is returned.
    """
    pp = p / (p - 1)

    def H(v):
        return v ** (gamma + 1) / (gamma + 1)

    def rate(v, u0):
        return (pp * (H(v) - H(u0))) ** (-1 / p)

    def span(u0, top):
        mid = 2 * u0 if top is None else 0.5 * (u0 + top)
        return (integrate.quad(rate, u0, mid, args=(u0,), limit=400)[0]
                + integrate.quad(rate, mid, np.inf if top is None else top, args=(u0,), limit=400)[0])

    hi = 100.0 if b is None else b * (1 - 1e-6)
    u0 = optimize.brentq(lambda c: span(c, b) - half_width, 1e-3, hi, xtol=1e-14)

    def dist(u):
        if b is not None:
            return integrate.quad(rate, u, b, args=(u0,), limit=400)[0]
        return (integrate.quad(rate, u, 2 * u, args=(u0,), limit=400)[0]
                + integrate.quad(lambda t: rate(1 / t, u0) / t ** 2, 0.0, 0.5 / u, limit=400)[0])
    return u0, dist


@pytest.mark.parametrize("p,gamma", [(2.0, 3.0), (3.0, 4.0), (1.5, 2.0)])
def test_solver_matches_first_integral(p, gamma):
    b = 5.0
    u0, dist = first_integral(p, gamma, b)
    g = build_grid(DomainSpec.interval(-1, 1, 801))
    rep = solve_dirichlet_scalar(g, f"power(1,{gamma})", b, p)
    assert rep.converged
    U = rep.solution[0].values
    assert U[400] == pytest.approx(u0, rel=1e-4)
    for u in (0.5 * (u0 + b), 0.9 * b):
        d = dist(u)
        x = -1 + d
        assert np.interp(x, g.nodes[:, 0], U) == pytest.approx(u, rel=1e-3)


@pytest.mark.parametrize("p,gamma,window", [(2.0, 3.0, (0.01, 0.1)), (3.0, 4.0, (0.01, 0.1)),
                                            (1.5, 2.0, (0.005, 0.05))])
def test_exact_large_solution_rates_confirm_ansatz(p, gamma, window):
    beta, A = ansatz(p, gamma)
    u0, dist = first_integral(p, gamma)
    ds = np.geomspace(*window, 30)
    us = [optimize.brentq(lambda u: dist(u) - d, 1.5 * u0, 1e7) for d in ds]
    slope, icpt = np.polyfit(np.log(ds), np.log(us), 1)
    assert -slope == pytest.approx(beta, rel=0.02)
    assert np.exp(icpt) == pytest.approx(A, rel=0.05)
