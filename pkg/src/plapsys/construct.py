"""Boundary blow-up by monotone escalation of Dirichlet data.

Each level solves the Dirichlet system with a larger constant boundary
value, warm-started from the previous level (which is a sub-solution of the
next one).  A trace records core stabilization, growth of the values next to
the boundary and a log-log fit ``u ~ A d**(-beta)`` of the boundary layer.
The one-dimensional barrier ``mu`` bounds every such field from above.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    BarrierUndefinedError,
    ConstructError,
    GridError,
    InsufficientDataError,
    MonotonicityError,
    NonlinearityError,
)
from .grid import GridFunction, restrict_to_core
from .nonlinearity import (
    _GL_W,
    _GL_X,
    fit_tail_exponent,
    keller_osserman_check,
    parse_nonlinearity,
)
from .plap import SolveReport, SolverOptions, solve_dirichlet_system, solve_system_core

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8
MONOTONE_ERROR = 1e-6
FIXED_TOL = 1e-8
MIN_FIT_NODES = 6
DEFAULT_WINDOW = (0.01, 0.1)  # as fractions of the inradius


@dataclass(frozen=True)
class EscalationSchedule:
    """Boundary values ``b_k = base * ratio**k`` (geometric) or ``base + k*step``."""

    base: float = 1.0
    growth: str = "geometric"
    ratio: float = 2.0
    step: float = 1.0
    max_levels: int = 8
    core_margin: float = 0.5
    stall_tol: float = 1e-6

    def validate(self, grid=None):
        if not self.base > 0:
            raise ConstructError("schedule base must be positive", operation="EscalationSchedule",
                                 witness={"base": self.base})
        if self.growth == "geometric":
            if not self.ratio > 1:
                raise ConstructError("geometric ratio must exceed 1", operation="EscalationSchedule",
                                     witness={"ratio": self.ratio})
        elif self.growth == "arithmetic":
            if not self.step > 0:
                raise ConstructError("arithmetic step must be positive", operation="EscalationSchedule",
                                     witness={"step": self.step})
        else:
            raise ConstructError(f"unknown growth {self.growth!r}", operation="EscalationSchedule")
        if self.max_levels < 3:
            raise ConstructError("max_levels must be at least 3", operation="EscalationSchedule",
                                 witness={"max_levels": self.max_levels})
        if not (self.core_margin > 0 and self.stall_tol > 0):
            raise ConstructError("core_margin and stall_tol must be positive",
                                 operation="EscalationSchedule")
        if grid is not None and not self.core_margin < grid.spec.inradius:
            raise ConstructError("core_margin must be less than the inradius",
                                 operation="EscalationSchedule",
                                 witness={"core_margin": self.core_margin, "inradius": grid.spec.inradius})

    def values(self):
        k = np.arange(self.max_levels, dtype=float)
        if self.growth == "geometric":
            return list(self.base * self.ratio ** k)
        return list(self.base + self.step * k)


class RateFit(NamedTuple):
    A: float
    beta: float
    residual: float
    n_nodes: int = 0


@dataclass
class EscalationTrace:
    levels: list  # (boundary_value, SolveReport)
    core_deltas: list
    stabilized: bool
    limit_fields: list
    rate_fits: list  # per component RateFit or None (last level)
    grid: object = None
    system: object = None
    ring_values: list = field(default_factory=list)  # per level, per component max on the ring
    ring_growth: bool = False
    monotone_margins: list = field(default_factory=list)  # per level k>0: min(u^k - u^(k-1))
    truncated: bool = False
    message: str = ""
    blowup_set: Optional[tuple] = None
    fixed_boundary: Optional[dict] = None
    fixed_excess: list = field(default_factory=list)  # per level: max(u_j - alpha_j)
    fixed_ok: Optional[bool] = None
    ring_deviation: Optional[float] = None
    fit_window: tuple = ()
    level_fits: list = field(default_factory=list)  # per level, per component RateFit or None

    @property
    def boundary_values(self):
        return [b for b, _ in self.levels]

    def fields(self, level):
        return self.levels[level][1].values


def _ring(grid):
    """Interior nodes closest to the boundary (the outermost node ring)."""
    I = grid.interior_index
    d = grid.distance[I]
    return I[d <= d.min() * (1 + 1e-9)]


def _window(grid, fit_window):
    if fit_window is None:
        r = grid.spec.inradius
        return (DEFAULT_WINDOW[0] * r, DEFAULT_WINDOW[1] * r)
    return tuple(float(v) for v in fit_window)


def fit_boundary_rate(source, grid, component=0, fit_window=None):
    """Least-squares fit of ``log u = log A - beta log d`` over the window.

    ``source`` may be an :class:`EscalationTrace` (its last level), a
    :class:`SolveReport`, a :class:`GridFunction` or an array of nodal values.
    ``fit_window`` is an absolute distance interval; the default is
    ``(0.01, 0.1)`` times the inradius.  Returns ``RateFit(A, beta, residual)``
    with the RMS misfit in log space.
    """
    if isinstance(source, EscalationTrace):
        u = source.limit_fields[component].values
    elif isinstance(source, SolveReport):
        u = source.values[component]
    elif isinstance(source, GridFunction):
        u = source.values
    else:
        u = np.asarray(source, dtype=float)
        if u.ndim == 2:
            u = u[component]
    lo, hi = _window(grid, fit_window)
    if not 0 < lo < hi < grid.spec.inradius:
        raise GridError("fit window must lie inside (0, inradius)", operation="fit_boundary_rate",
                        witness={"window": (lo, hi), "inradius": grid.spec.inradius})
    d = grid.distance
    mask = (d >= lo) & (d <= hi)
    n = int(mask.sum())
    if n < MIN_FIT_NODES:
        raise InsufficientDataError(f"only {n} nodes in the fit window (need {MIN_FIT_NODES})",
                                    operation="fit_boundary_rate",
                                    witness={"window": (lo, hi), "nodes": n})
    uw = u[mask]
    if not np.all(uw > 0):
        raise ConstructError("rate fit needs positive values in the window", operation="fit_boundary_rate",
                             witness={"node": int(np.flatnonzero(mask)[np.argmin(uw)])})
    x, y = np.log(d[mask]), np.log(uw)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(math.exp(intercept)), float(-slope), resid, n)


def _initial(grid, sys, p, bvals, opts):
    """First level: the sandwich solve, which starts from the sub-solution."""
    if np.ptp(bvals) == 0.0:
        return solve_dirichlet_system(grid, sys, list(bvals), p, opts)
    return solve_system_core(grid, sys, list(bvals), p, opts)


def _run(grid, sys, p, sched, opts, boundary_of, watched, fit_window, fixed=None):
    opts = opts or SolverOptions()
    sched.validate(grid)
    core = restrict_to_core(grid, sched.core_margin)
    ring = _ring(grid)
    levels, deltas, ring_vals, margins, excess = [], [], [], [], []
    stabilized = truncated = False
    message = ""
    prev = None
    for k, b in enumerate(sched.values()):
        bvals = boundary_of(b)
        if prev is None:
            rep = _initial(grid, sys, p, bvals, opts)
        else:
            rep = solve_system_core(grid, sys, list(bvals), p, opts, init=prev)
        if not rep.converged:
            truncated = True
            message = (f"level {k} (boundary {b:g}) did not converge: residual "
                       f"{rep.residual_sup:.3e} after {rep.iterations} iterations")
            log.warning(message)
            break
        U = rep.values
        levels.append((float(b), rep))
        ring_vals.append([float(np.max(U[i, ring])) for i in range(sys.d)])
        if fixed is not None:
            excess.append(max(float(np.max(U[j] - a)) for j, a in fixed.items()))
        if prev is not None:
            diff = U[watched] - prev[watched]
            worst = float(diff.min())
            margins.append(worst)
            if worst < -MONOTONE_ERROR:
                i, node = np.unravel_index(int(np.argmin(diff)), diff.shape)
                raise MonotonicityError(
                    f"level {k} drops below level {k - 1} by {-worst:.3e}",
                    operation="escalate",
                    witness={"level": k, "component": int(watched[i]) + 1, "node": int(node),
                             "drop": -worst},
                )
            delta = float(np.max(np.abs(U[:, core] - prev[:, core])))
            deltas.append(delta)
            if delta <= sched.stall_tol:
                stabilized = True
                prev = U
                break
        prev = U
    if not levels:
        raise ConstructError(message or "no level converged", operation="escalate")
    last = levels[-1][1]

    def fits_of(rep):
        out = []
        for i in range(sys.d):
            if i not in watched:
                out.append(None)
                continue
            try:
                out.append(fit_boundary_rate(rep, grid, i, fit_window))
            except (InsufficientDataError, ConstructError) as exc:
                log.info("rate fit skipped for component %d: %s", i + 1, exc)
                out.append(None)
        return out

    level_fits = [fits_of(rep) for _, rep in levels]
    fits = level_fits[-1]
    growth = len(ring_vals) >= 2 and all(
        ring_vals[k + 1][i] > ring_vals[k][i] for k in range(len(ring_vals) - 1) for i in watched)
    return EscalationTrace(
        levels=levels, core_deltas=deltas, stabilized=stabilized and not truncated,
        limit_fields=list(last.solution), rate_fits=fits, grid=grid, system=sys, ring_values=ring_vals,
        ring_growth=bool(growth), monotone_margins=margins, truncated=truncated, message=message,
        fixed_excess=excess, fit_window=_window(grid, fit_window), level_fits=level_fits,
    )


def escalate_blowup(grid, sys, p, sched, opts=None, fit_window=None):
    """Escalate the boundary value of every component along ``sched``."""
    watched = np.arange(sys.d)
    return _run(grid, sys, p, sched, opts, lambda b: np.full(sys.d, b), watched, fit_window)


def escalate_mixed(grid, sys, p, blowup_set, fixed_boundary, sched, opts=None, fit_window=None):
    """Escalate components in ``blowup_set`` (0-based) and hold the rest fixed.

    ``fixed_boundary`` maps each remaining component to its boundary value,
    or lists the values in component order.  The fixed components are
    checked to stay below their data at every level; monotonicity is only
    required of the escalated components, since the coupling may push the
    fixed ones down as the others grow.
    """
    chosen = sorted({int(i) for i in blowup_set})
    if not chosen or len(chosen) >= sys.d or chosen[0] < 0 or chosen[-1] >= sys.d:
        raise ConstructError("blowup_set must be a nonempty proper subset of the components; "
                             "use escalate_blowup to escalate all of them",
                             operation="escalate_mixed", witness={"blowup_set": chosen, "d": sys.d})
    rest = [j for j in range(sys.d) if j not in chosen]
    if isinstance(fixed_boundary, dict):
        fixed = {int(j): float(v) for j, v in fixed_boundary.items()}
    else:
        vals = list(np.atleast_1d(np.asarray(fixed_boundary, dtype=float)))
        if len(vals) != len(rest):
            raise ConstructError("need one fixed boundary value per non-escalated component",
                                 operation="escalate_mixed", witness={"expected": len(rest)})
        fixed = dict(zip(rest, vals))
    if sorted(fixed) != rest:
        raise ConstructError("fixed_boundary must cover exactly the non-escalated components",
                             operation="escalate_mixed", witness={"given": sorted(fixed), "expected": rest})

    def boundary_of(b):
        out = np.empty(sys.d)
        out[chosen] = b
        for j, a in fixed.items():
            out[j] = a
        return out

    trace = _run(grid, sys, p, sched, opts, boundary_of, np.array(chosen), fit_window, fixed)
    U = trace.levels[-1][1].values
    ring = _ring(grid)
    trace.blowup_set = tuple(chosen)
    trace.fixed_boundary = fixed
    trace.fixed_ok = bool(all(e <= FIXED_TOL for e in trace.fixed_excess))
    trace.ring_deviation = max(float(np.max(np.abs(U[j, ring] - a))) for j, a in fixed.items())
    return trace


# ----------------------------------------------------------------------------
# barrier


class Barrier:
    """Half-line large solution ``mu(delta)`` for ``(|u'|^(p-2) u')' = f(u)``.

    The first integral gives ``delta(u) = int_u^inf (p' H(v))^(-1/p) dv``;
    this is tabulated on a log grid up to ``u_cap`` (with a fitted power tail
    beyond) and inverted by bisection.  Values are truncated at zero.
    """

    def __init__(self, f, p, u_cap=1e10, u_min=1e-8, width=0.02):
        f = parse_nonlinearity(f)
        try:
            verdict = keller_osserman_check(f, p)
        except NonlinearityError as exc:
            raise BarrierUndefinedError(f"barrier undefined: {exc.message}", operation="barrier_mu",
                                        witness=exc.witness) from None
        if not verdict.converges:
            raise BarrierUndefinedError(
                f"Keller-Osserman condition fails for {f.label} at p={p}",
                operation="barrier_mu", witness={"tail_exponent": verdict.tail_exponent})
        self.f, self.p, self.u_cap, self.u_min = f, p, float(u_cap), float(u_min)
        pp = p / (p - 1.0)

        def k(v):
            with np.errstate(all="ignore"):
                Hv = np.asarray(f.primitive(v), dtype=float)
                return np.where(Hv == np.inf, 0.0, (pp * Hv) ** (-1.0 / p))
        self.k = k
        self.q, _ = fit_tail_exponent(lambda t: float(k(np.array([t]))[0]), self.u_cap)
        self.tail = 0.0 if math.isinf(self.q) else float(k(np.array([self.u_cap]))[0]) * self.u_cap / (self.q - 1.0)
        la, lb = math.log(self.u_min), math.log(self.u_cap)
        n = int(math.ceil((lb - la) / width))
        self.edges = np.linspace(la, lb, n + 1)
        pieces = self._panel(self.edges[:-1], self.edges[1:])
        self.delta_at_edge = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + self.tail

    def _panel(self, a, b):
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X
        ev = np.exp(s)
        return np.sum(self.k(ev) * ev * _GL_W, axis=1) * half

    def delta(self, u):
        """Distance at which the barrier takes the value ``u``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        out = np.empty_like(u)
        big = u >= self.u_cap
        # above the cap the fitted tail is a pure power law
        out[big] = self.tail * (u[big] / self.u_cap) ** (1.0 - self.q)
        s = np.log(np.maximum(u[~big], self.u_min))
        j = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        out[~big] = self.delta_at_edge[j + 1] + self._panel(s, self.edges[j + 1])
        return out

    def __call__(self, delta):
        delta = np.asarray(delta, dtype=float)
        if np.any(~(delta > 0)):
            raise ConstructError("barrier needs positive distances", operation="barrier_mu")
        flat = delta.ravel()
        out = np.zeros_like(flat)
        top = self.delta_at_edge[0]
        inside = flat < top  # beyond delta(u_min) the barrier is truncated to 0
        dd = flat[inside]
        above = dd <= self.tail
        res = np.empty_like(dd)
        if np.any(above) and self.tail > 0:
            res[above] = self.u_cap * (dd[above] / self.tail) ** (1.0 / (1.0 - self.q))
        mid = ~above
        lo = np.full(mid.sum(), math.log(self.u_min))
        hi = np.full(mid.sum(), math.log(self.u_cap))
        target = dd[mid]
        for _ in range(200):
            m = 0.5 * (lo + hi)
            larger = self.delta(np.exp(m)) > target
            lo = np.where(larger, m, lo)
            hi = np.where(larger, hi, m)
            if np.all(hi - lo < 1e-14):
                break
        res[mid] = np.exp(0.5 * (lo + hi))
        out[inside] = res
        out = out.reshape(delta.shape)
        return float(out) if out.ndim == 0 else out


def barrier_mu(f, p, delta, u_cap=1e10):
    """One-dimensional barrier ``mu(delta)`` for the class-F function ``f``.

    Accepts a scalar or an array of distances; decreasing in ``delta``.
    """
    return Barrier(f, p, u_cap)(delta)


def barrier_check(trace, p, slack=0.05):
    """Largest ratio ``u_i(x) / mu_i(d(x))`` over levels, components and window nodes.

    Component ``i`` is measured against the barrier of its lower bound
    ``f_i``.  Returns ``(ok, worst_ratio, witness)``.
    """
    grid = trace.grid
    lo, hi = trace.fit_window
    mask = (grid.distance >= lo) & (grid.distance <= hi)
    d = grid.distance[mask]
    worst, witness = 0.0, None
    barriers = {}
    for k, (b, rep) in enumerate(trace.levels):
        U = rep.values
        for i in range(U.shape[0]):
            if trace.blowup_set is not None and i not in trace.blowup_set:
                continue
            f = trace.system.lower_bounds[i]
            if f.label not in barriers:
                barriers[f.label] = Barrier(f, p)(d)
            ratio = U[i, mask] / barriers[f.label]
            j = int(np.argmax(ratio))
            if ratio[j] > worst:
                worst = float(ratio[j])
                witness = {"level": k, "component": i + 1, "node": int(np.flatnonzero(mask)[j]),
                           "value": float(U[i, mask][j]), "mu": float(barriers[f.label][j])}
    return worst <= 1.0 + slack, worst, witness
