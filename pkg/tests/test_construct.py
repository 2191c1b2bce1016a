import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ansatz
from plapsys.construct import (
    Barrier,
    EscalationSchedule,
    barrier_check,
    barrier_mu,
    escalate_blowup,
    escalate_mixed,
    fit_boundary_rate,
)
from plapsys.errors import BarrierUndefinedError, ConstructError, GridError, InsufficientDataError
from plapsys.grid import DomainSpec, build_grid
from plapsys.plap import SystemSpec


@pytest.fixture(scope="module")
def small_grid():
    return build_grid(DomainSpec.interval(-1, 1, 201, "boundary_refined", 0.9))


@pytest.mark.parametrize("kwargs", [
    dict(base=0.0), dict(ratio=1.0), dict(growth="arithmetic", step=0.0), dict(growth="cubic"),
    dict(max_levels=2), dict(stall_tol=0.0), dict(core_margin=5.0),
])
def test_schedule_validation(kwargs):
    g = build_grid(DomainSpec.interval(-1, 1, 11))
    with pytest.raises(ConstructError):
        EscalationSchedule(**kwargs).validate(g)


def test_schedule_values():
    assert list(EscalationSchedule(base=2, ratio=3, max_levels=4).values()) == [2, 6, 18, 54]
    assert list(EscalationSchedule(base=1, growth="arithmetic", step=0.5, max_levels=3).values()) == [1, 1.5, 2]


def test_early_stabilization_and_short_trace(small_grid):
    sys = SystemSpec.scalar("power(1,3)")
    loose = escalate_blowup(small_grid, sys, 2.0, EscalationSchedule(base=100, max_levels=8, stall_tol=1e-2))
    # core deltas halve with each doubling: 0.037, 0.019, 0.0096, ...
    assert loose.stabilized and len(loose.levels) == 4
    tight = escalate_blowup(small_grid, sys, 2.0, EscalationSchedule(base=1, max_levels=3, stall_tol=1e-12))
    assert not tight.stabilized and len(tight.levels) == 3


def test_levels_increase_and_ring_grows(small_grid):
    sys = SystemSpec.scalar("power(1,3)")
    tr = escalate_blowup(small_grid, sys, 2.0, EscalationSchedule(base=10, max_levels=5, stall_tol=1e-12))
    for k in range(1, len(tr.levels)):
        assert np.all(tr.fields(k) >= tr.fields(k - 1) - 1e-8)
    assert tr.ring_growth
    ring = np.array(tr.ring_values)[:, 0]
    assert np.all(np.diff(ring) > 0)
    assert all(c >= 0 for c in tr.core_deltas)


def test_decoupled_pair_matches_scalar(small_grid):
    sched = EscalationSchedule(base=10, max_levels=4, stall_tol=1e-12)
    scalar = escalate_blowup(small_grid, SystemSpec.scalar("power(1,3)"), 2.0, sched)
    pair = SystemSpec.from_expressions(["u1**3", "u2**3"], ["power(1,3)"] * 2, "power(1,3)",
                                       F="(u1**4 + u2**4) / 4")
    tr = escalate_blowup(small_grid, pair, 2.0, sched)
    for k in range(4):
        U = tr.fields(k)
        np.testing.assert_allclose(U[0], U[1], atol=1e-10)
        np.testing.assert_allclose(U[0], scalar.fields(k)[0], atol=1e-7 * scalar.boundary_values[k])


def test_rate_fit_on_exact_power(small_grid):
    d = small_grid.distance
    vals = 3.0 * np.maximum(d, 1e-12) ** -1.5
    fit = fit_boundary_rate(vals, small_grid)
    assert fit.beta == pytest.approx(1.5, abs=1e-10)
    assert fit.A == pytest.approx(3.0, rel=1e-10)
    assert fit.residual < 1e-10


def test_rate_fit_of_constant_is_flat(small_grid):
    fit = fit_boundary_rate(np.full(small_grid.n_nodes, 2.0), small_grid)
    assert abs(fit.beta) < 1e-12 and fit.A == pytest.approx(2.0)


def test_rate_fit_errors(small_grid):
    coarse = build_grid(DomainSpec.interval(-1, 1, 21))
    with pytest.raises(InsufficientDataError):
        fit_boundary_rate(np.ones(21), coarse)
    with pytest.raises(GridError):
        fit_boundary_rate(np.ones(small_grid.n_nodes), small_grid, fit_window=(0.5, 2.0))


def test_barrier_matches_closed_form():
    # f = t^3, p = 2: delta(u) = sqrt(2)/u, so mu(delta) = sqrt(2)/delta
    d = np.geomspace(1e-4, 0.5, 25)
    np.testing.assert_allclose(barrier_mu("power(1,3)", 2.0, d), math.sqrt(2) / d, rtol=1e-6)
    # f = t^2, p = 2: delta(u) = sqrt(6/u), mu = 6/delta^2
    np.testing.assert_allclose(barrier_mu("power(1,2)", 2.0, d), 6 / d ** 2, rtol=1e-6)


@pytest.mark.parametrize("p,gamma", [(2.0, 3.0), (3.0, 4.0), (1.5, 2.0)])
def test_barrier_is_the_ansatz_for_pure_powers(p, gamma):
    beta, A = ansatz(p, gamma)
    d = np.geomspace(1e-3, 0.1, 9)
    np.testing.assert_allclose(barrier_mu(f"power(1,{gamma})", p, d), A * d ** -beta, rtol=1e-6)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(1e-4, 1.0), b=st.floats(1e-4, 1.0))
def test_barrier_decreasing_in_distance(a, b):
    if abs(a - b) < 1e-9:
        return
    lo, hi = sorted((a, b))
    mu = Barrier("expm1(1)", 2.0)
    assert mu(np.array([lo]))[0] > mu(np.array([hi]))[0]


def test_barrier_rejects_ko_failure():
    with pytest.raises(BarrierUndefinedError):
        barrier_mu("power(1,1)", 2.0, np.array([0.1]))


def test_barrier_check_on_scalar_trace(small_grid):
    tr = escalate_blowup(small_grid, SystemSpec.scalar("power(1,3)"), 2.0,
                         EscalationSchedule(base=100, max_levels=4, stall_tol=1e-12))
    ok, worst, witness = barrier_check(tr, 2.0)
    assert ok and worst <= 1.05 and witness["component"] == 1


def test_mixed_rejects_full_and_empty_sets(small_grid):
    pair = SystemSpec.from_expressions(["u1**3", "u2**3"], ["power(1,3)"] * 2, "power(1,3)")
    sched = EscalationSchedule(base=10, max_levels=3)
    for bad in ([0, 1], []):
        with pytest.raises(ConstructError):
            escalate_mixed(small_grid, pair, 2.0, bad, {1: 1.0}, sched)
    with pytest.raises(ConstructError):
        escalate_mixed(small_grid, pair, 2.0, [0], {}, sched)


def test_mixed_decoupled_keeps_fixed_component(small_grid):
    pair = SystemSpec.from_expressions(["u1**3", "u2**3"], ["power(1,3)"] * 2, "power(1,3)")
    sched = EscalationSchedule(base=10, max_levels=4, stall_tol=1e-12)
    tr = escalate_mixed(small_grid, pair, 2.0, [0], {1: 0.5}, sched)
    fixed = tr.fields(0)[1]
    for k in range(len(tr.levels)):
        np.testing.assert_allclose(tr.fields(k)[1], fixed, atol=1e-10)
    assert tr.fixed_ok
    assert tr.ring_deviation < 1e-3
    assert tr.rate_fits[1] is None and tr.rate_fits[0] is not None
