"""Discrete p-Laplacian, energy-descent Dirichlet solvers and verification.

The discrete operator is the exact negative gradient of the edge-based
p-Dirichlet energy, divided by the nodal cell measures.  Solves are damped
Newton iterations on the (eps-regularised) energy with Armijo backtracking;
when a coupled system has no joint potential, or its weights differ between
components, the same Newton step is globalised on the residual merit
instead.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import DivergenceError, EnergyUnavailableError, SolverError
from .expr import Expression
from .grid import Grid, GridFunction
from .nonlinearity import ClassFFunction, parse_nonlinearity

log = logging.getLogger(__name__)

ENERGY_SLACK = 1e-12
SANDWICH_TOL = 1e-6
ROUNDOFF_FACTOR = 10.0  # safety factor on the rounding floor of the residual
# Gauss-Legendre rule on [0, 1] for line integrals of the energy gradient
_LINE_X, _LINE_W = (0.5 * (np.polynomial.legendre.leggauss(6)[0] + 1.0),
                    0.5 * np.polynomial.legendre.leggauss(6)[1])


# ----------------------------------------------------------------------------
# flux function and its derivative


def flux(s, p, eps):
    """``(s^2 + eps^2)^((p-2)/2) s``; exactly ``|s|^(p-2) s`` when ``eps == 0``."""
    s = np.asarray(s, dtype=float)
    if eps == 0.0:
        return np.sign(s) * np.abs(s) ** (p - 1.0)
    return (s * s + eps * eps) ** (0.5 * (p - 2.0)) * s


def flux_derivative(s, p, eps):
    s = np.asarray(s, dtype=float)
    q = s * s + eps * eps
    with np.errstate(divide="ignore"):
        return q ** (0.5 * (p - 4.0)) * ((p - 1.0) * s * s + eps * eps)


def _density(s, p, eps):
    s = np.asarray(s, dtype=float)
    if eps == 0.0:
        return np.abs(s) ** p / p
    return (s * s + eps * eps) ** (0.5 * p) / p


# ----------------------------------------------------------------------------
# systems


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Coupled system  Delta_p u_i = a_i(x) F_{u_i}(x, u_1..u_d).

    Maps take ``(coords, U)`` with ``coords`` a tuple of nodal coordinate
    arrays and ``U`` of shape ``(d, n)``.
    """

    d: int
    grad_F: Sequence[Callable]
    lower_bounds: Sequence[ClassFFunction]
    upper_bound: ClassFFunction
    F: Optional[Callable] = None
    weights: Optional[Sequence[Callable]] = None
    jacobian: Optional[Callable] = None
    label: str = "system"

    def __post_init__(self):
        if self.d < 1:
            raise SolverError("system needs d >= 1", operation="SystemSpec")
        if len(self.grad_F) != self.d or len(self.lower_bounds) != self.d:
            raise SolverError("grad_F and lower_bounds must have d entries", operation="SystemSpec",
                              witness={"d": self.d})
        if self.weights is not None and len(self.weights) != self.d:
            raise SolverError("weights must have d entries", operation="SystemSpec")

    @classmethod
    def scalar(cls, g, weight=None):
        """The single equation Delta_p u = a(x) g(u)."""
        g = parse_nonlinearity(g)
        return cls(
            d=1,
            grad_F=[lambda c, U: g.h(U[0])],
            lower_bounds=[g],
            upper_bound=g,
            F=lambda c, U: g.primitive(U[0]),
            weights=None if weight is None else [weight],
            jacobian=lambda c, U: np.asarray(g.h_prime(U[0]), dtype=float)[None, None, :],
            label=f"scalar {g.label}",
        )

    @classmethod
    def from_expressions(cls, grad_F, lower_bounds, upper_bound, F=None, weights=None,
                         coordinate_names=("x",), label="system"):
        """Build a system from expression strings in the coordinates and u1..ud."""
        d = len(grad_F)
        names = list(coordinate_names) + [f"u{i + 1}" for i in range(d)]

        def wrap(src):
            ex = Expression(src, names)

            def fn(coords, U):
                if len(coords) != len(coordinate_names):
                    raise SolverError(
                        f"expression {src!r} is written in coordinates {tuple(coordinate_names)} "
                        f"but the grid has {len(coords)}", operation="evaluate")
                return ex(*coords, *U)
            fn.source = src
            return fn

        weight_fns = None
        if weights is not None:
            weight_fns = []
            for src in weights:
                ex = Expression(src, list(coordinate_names))

                def weight(*c, ex=ex, src=src):
                    if len(c) != len(coordinate_names):
                        raise SolverError(f"weight {src!r} expects coordinates {tuple(coordinate_names)}",
                                          operation="evaluate")
                    return ex(*c)
                weight_fns.append(weight)
        return cls(
            d=d,
            grad_F=[wrap(s) for s in grad_F],
            lower_bounds=[parse_nonlinearity(f) for f in lower_bounds],
            upper_bound=parse_nonlinearity(upper_bound),
            F=None if F is None else wrap(F),
            weights=weight_fns,
            label=label,
        )

    def weight_values(self, grid):
        coords = _coords(grid)
        if self.weights is None:
            return np.ones((self.d, grid.n_nodes))
        return np.array([np.broadcast_to(np.asarray(w(*coords), dtype=float), (grid.n_nodes,))
                         for w in self.weights])

    @property
    def variational(self):
        return self.F is not None

    def reaction(self, grid, U, weights=None):
        coords = _coords(grid)
        a = self.weight_values(grid) if weights is None else weights
        with np.errstate(all="ignore"):
            vals = np.array([np.broadcast_to(np.asarray(f(coords, U), dtype=float), (grid.n_nodes,))
                             for f in self.grad_F])
        return a * vals

    def reaction_jacobian(self, grid, U, weights=None):
        """``J[i, j, n] = a_i d(F_{u_i})/d u_j`` at each node."""
        coords = _coords(grid)
        a = self.weight_values(grid) if weights is None else weights
        if self.jacobian is not None:
            with np.errstate(all="ignore"):
                J = np.asarray(self.jacobian(coords, U), dtype=float)
            return a[:, None, :] * J
        J = np.empty((self.d, self.d, grid.n_nodes))
        for j in range(self.d):
            step = 1e-6 * np.maximum(1.0, np.abs(U[j]))
            Up, Um = U.copy(), U.copy()
            Up[j] += step
            Um[j] -= step
            with np.errstate(all="ignore"):
                for i, f in enumerate(self.grad_F):
                    J[i, j] = (np.asarray(f(coords, Up), dtype=float)
                               - np.asarray(f(coords, Um), dtype=float)) / (2 * step)
        return a[:, None, :] * J

    def potential(self, grid, U):
        if self.F is None:
            raise EnergyUnavailableError("no joint potential F supplied", operation="discrete_energy")
        with np.errstate(all="ignore"):
            return np.broadcast_to(np.asarray(self.F(_coords(grid), U), dtype=float), (grid.n_nodes,))

    def validate(self, grid, t_samples=None, tol=1e-9):
        """Sampled checks of the lower/upper comparison hypotheses and of F.

        Returns a dict of ``name -> (passed, witness)``.
        """
        t = np.logspace(-3, 3, 25) if t_samples is None else np.asarray(t_samples, dtype=float)
        coords = _coords(grid)
        out = {}
        worst_lower = (True, None)
        worst_upper = (True, None)
        g_vals = np.asarray(self.upper_bound.h(t), dtype=float)
        for k, tk in enumerate(t):
            U = np.full((self.d, grid.n_nodes), tk)
            with np.errstate(all="ignore"):
                vals = [np.broadcast_to(np.asarray(f(coords, U), dtype=float), (grid.n_nodes,))
                        for f in self.grad_F]
            for i, v in enumerate(vals):
                fi = float(self.lower_bounds[i].h(tk))
                slack = tol * max(1.0, abs(fi))
                low = float(np.min(v))
                if worst_lower[0] and not low >= fi - slack:
                    node = int(np.argmin(v))
                    worst_lower = (False, {"component": i + 1, "t": float(tk), "node": node,
                                           "F_u": low, "f": fi})
                high = float(np.max(v))
                slack = tol * max(1.0, abs(g_vals[k]))
                if worst_upper[0] and not g_vals[k] >= high - slack:
                    node = int(np.argmax(v))
                    worst_upper = (False, {"component": i + 1, "t": float(tk), "node": node,
                                           "F_u": high, "g": float(g_vals[k])})
        out["lower_bounds"] = worst_lower
        out["upper_bound"] = worst_upper
        if self.F is not None:
            rng = np.random.default_rng(0)
            ok = (True, None)
            for _ in range(8):
                U = rng.uniform(0.2, 3.0, size=(self.d, grid.n_nodes))
                for j in range(self.d):
                    step = 1e-5 * np.maximum(1.0, np.abs(U[j]))
                    Up, Um = U.copy(), U.copy()
                    Up[j] += step
                    Um[j] -= step
                    fd = (self.potential(grid, Up) - self.potential(grid, Um)) / (2 * step)
                    ref = np.asarray(self.grad_F[j](coords, U), dtype=float)
                    rel = np.abs(fd - ref) / np.maximum(np.abs(ref), 1e-8)
                    if ok[0] and np.max(rel) > 1e-4:
                        n = int(np.argmax(rel))
                        ok = (False, {"component": j + 1, "node": n, "relative_error": float(rel[n])})
            out["potential"] = ok
        return out


def _coords(grid):
    return tuple(grid.nodes[:, k] for k in range(grid.nodes.shape[1]))


def _as_array(u):
    if isinstance(u, GridFunction):
        return np.asarray(u.values, dtype=float)
    return np.asarray(u, dtype=float)


def _stack(grid, u):
    if isinstance(u, (GridFunction, np.ndarray)) and np.ndim(_as_array(u)) == 1:
        u = [u]
    return np.array([_as_array(v) for v in u], dtype=float).reshape(-1, grid.n_nodes)


# ----------------------------------------------------------------------------
# energy and operator


def _dirichlet_energy(grid, U, p, eps):
    s = (grid.incidence @ U.T).T / grid.edge_length
    return float(np.sum(np.sum(_density(s, p, eps) * grid.edge_length * grid.edge_measure, axis=1)))


def discrete_energy(grid, u, sys=None, p=2.0, eps=0.0):
    """Edge-based p-Dirichlet energy plus the nodal potential term.

    ``sum_e tau_e l_e (1/p)|du_e/l_e|^p  +  sum_n m_n a(x_n) F(x_n, u(x_n))``
    """
    U = _stack(grid, u)
    total = _dirichlet_energy(grid, U, p, eps)
    if sys is not None:
        if sys.F is None:
            raise EnergyUnavailableError(
                "energy needs a joint potential F; residual solves remain available",
                operation="discrete_energy", witness={"d": sys.d})
        a = sys.weight_values(grid)
        if not np.allclose(a, a[0]):
            raise EnergyUnavailableError("component weights differ: the system is not variational",
                                         operation="discrete_energy")
        total += float(np.sum(grid.cell_measures * a[0] * sys.potential(grid, U)))
    return total


def _operator(grid, U, p, eps):
    s = (grid.incidence @ U.T).T / grid.edge_length
    q = flux(s, p, eps) * grid.edge_measure
    out = -(grid.incidence.T @ q.T).T / grid.cell_measures
    out[:, grid.boundary_index] = 0.0
    return out


def apply_p_laplacian(grid, u, p, eps=0.0):
    """Discrete ``div(|grad u|^(p-2) grad u)``; boundary entries are zero."""
    values = _operator(grid, _stack(grid, u), p, eps)[0]
    return GridFunction(grid, values)


# ----------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverOptions:
    tol: Optional[float] = None
    max_iters: int = 10000
    eps: float = 1e-8
    line_search_beta: float = 0.5
    newton_fallback: bool = True
    armijo: float = 1e-4
    check_eps: bool = True

    def tolerance(self, p):
        if self.tol is not None:
            return self.tol
        return 1e-9 if p == 2 else 1e-7


@dataclass
class SolveReport:
    solution: list
    residual_sup: float
    energy_trace: list
    iterations: int
    converged: bool
    regularization_eps: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def values(self):
        return np.array([u.values for u in self.solution])


def _boundary_array(grid, d, boundary):
    nb = len(grid.boundary_index)
    if isinstance(boundary, GridFunction) or np.isscalar(boundary):
        boundary = [boundary] * d
    if len(boundary) != d:
        raise SolverError("need one boundary field per component", operation="solve",
                          witness={"d": d, "given": len(boundary)})
    out = np.empty((d, nb))
    for i, b in enumerate(boundary):
        if isinstance(b, GridFunction):
            out[i] = b.values[grid.boundary_index]
        else:
            arr = np.asarray(b, dtype=float)
            if arr.ndim == 0:
                out[i] = float(arr)
            elif arr.shape == (grid.n_nodes,):
                out[i] = arr[grid.boundary_index]
            elif arr.shape == (nb,):
                out[i] = arr
            else:
                raise SolverError("boundary field has the wrong length", operation="solve")
    if not np.all(np.isfinite(out)):
        raise SolverError("boundary values must be finite", operation="solve")
    return out


def _harmonic_extension(grid, bvals):
    d = bvals.shape[0]
    U = np.empty((d, grid.n_nodes))
    for i in range(d):
        if np.ptp(bvals[i]) == 0.0:
            U[i] = bvals[i][0]
            continue
        U[i] = 0.0
        U[i, grid.boundary_index] = bvals[i]
        K = _stiffness(grid, np.zeros(len(grid.edges)) + 1.0)
        I = grid.interior_index
        rhs = -(K[I][:, grid.boundary_index] @ bvals[i])
        U[i, I] = splinalg.spsolve(K[I][:, I].tocsc(), rhs)
    return U


def _stiffness(grid, coef):
    D = grid.incidence
    return (D.T @ sparse.diags(coef * grid.edge_measure / grid.edge_length) @ D).tocsr()


class _Problem:
    """Residual, merit and Newton matrix for one Dirichlet solve."""

    def __init__(self, grid, sys, p, eps, weights):
        self.grid, self.sys, self.p, self.eps = grid, sys, p, eps
        self.a = weights
        self.I = grid.interior_index
        self.m = grid.cell_measures[self.I]
        self.D_int = grid.incidence[:, self.I].tocsc()
        self.energy_mode = sys.F is not None and np.allclose(weights, weights[0])

    def residual(self, U):
        lap = _operator(self.grid, U, self.p, self.eps)[:, self.I]
        react = self.sys.reaction(self.grid, U, self.a)[:, self.I]
        return lap - react, react

    def roundoff_floor(self, U):
        """Size of the residual that rounding in ``u`` alone can produce.

        Each edge slope carries an absolute error of about
        ``eps_machine * (|u_i| + |u_j|) / h``; pushed through the flux
        derivative and summed over the edges of a node, that bounds how
        small the discrete residual can be made in floating point.
        """
        g = self.grid
        s = (g.incidence @ U.T).T / g.edge_length
        ds = np.finfo(float).eps * (abs(g.incidence) @ np.abs(U).T).T / g.edge_length
        q = np.abs(flux_derivative(s, self.p, self.eps)) * ds * g.edge_measure
        q += np.finfo(float).eps * np.abs(flux(s, self.p, self.eps)) * g.edge_measure
        return (abs(g.incidence).T @ q.T).T[:, self.I] / self.m

    def energy(self, U):
        e = _dirichlet_energy(self.grid, U, self.p, self.eps)
        pot = self.sys.potential(self.grid, U)
        return e + float(np.sum(self.grid.cell_measures * self.a[0] * pot))

    def merit(self, U):
        if self.energy_mode:
            return self.energy(U)
        R, _ = self.residual(U)
        return 0.5 * float(np.sum((self.m * R) ** 2))

    def energy_change(self, U, direction, t):
        """``E(U + t d) - E(U)`` as a line integral of the energy gradient.

        Differencing two huge totals loses every digit of a small change;
        the line integral of the nodal residuals does not.
        """
        total = 0.0
        for x, w in zip(_LINE_X, _LINE_W):
            trial = U.copy()
            trial[:, self.I] += (t * x) * direction
            R, _ = self.residual(trial)
            total -= w * float(np.sum(self.m * R * direction))
        return t * total

    def matrix(self, U):
        g = self.grid
        s = (g.incidence @ U.T).T / g.edge_length
        d = self.sys.d
        J = self.sys.reaction_jacobian(g, U, self.a)[:, :, self.I]
        blocks = [[None] * d for _ in range(d)]
        for i in range(d):
            coef = flux_derivative(s[i], self.p, self.eps) * g.edge_measure / g.edge_length
            K = (self.D_int.T @ sparse.diags(coef) @ self.D_int)
            for j in range(d):
                R = sparse.diags(self.m * J[i, j])
                blocks[i][j] = K + R if i == j else R
        return sparse.bmat(blocks, format="csc")


def _solve_core(grid, sys, p, bvals, U0, opts, weights):
    prob = _Problem(grid, sys, p, opts.eps, weights)
    d, I = sys.d, prob.I
    tol = opts.tolerance(p)
    U = U0.copy()
    U[:, grid.boundary_index] = bvals

    def measure(U):
        R, react = prob.residual(U)
        scale = np.maximum(1.0, np.abs(react))
        # cancellation in the flux differences sets a floating-point floor
        scale = np.maximum(scale, ROUNDOFF_FACTOR * prob.roundoff_floor(U) / tol)
        return R, float(np.max(np.abs(R) / scale)) if R.size else 0.0

    merit = prob.merit(U)
    R, res = measure(U)
    if not (math.isfinite(merit) and math.isfinite(res)):
        raise DivergenceError("non-finite energy or residual at the initial guess", operation="solve")
    trace = [merit]
    mode_log = []
    it = 0
    converged = res <= tol
    while not converged and it < opts.max_iters:
        it += 1
        grad = -(prob.m * R).ravel()  # gradient of the energy w.r.t. interior unknowns
        step = None
        A = prob.matrix(U)
        try:
            with np.errstate(all="ignore"):
                delta = splinalg.spsolve(A, -grad)
            if not np.all(np.isfinite(delta)):
                delta = None
        except RuntimeError:
            delta = None
        candidates = []
        if delta is not None:
            candidates.append(("newton", delta))
        if opts.newton_fallback or delta is None:
            diag = A.diagonal()
            diag = np.where(diag > 0, diag, 1.0)
            candidates.append(("gradient", -grad / diag))
        for kind, direction in candidates:
            direction = direction.reshape(d, -1)
            slope = float(grad @ direction.ravel()) if prob.energy_mode else -2.0 * merit
            if prob.energy_mode and slope >= 0:
                continue
            t = 1.0
            for _ in range(60):
                trial = U.copy()
                trial[:, I] += t * direction
                if prob.energy_mode:
                    change = prob.energy_change(U, direction, t)
                    ok = math.isfinite(change) and change <= opts.armijo * t * slope \
                        + ENERGY_SLACK * abs(merit)
                    m_new = merit + change
                else:
                    m_new = prob.merit(trial)
                    ok = math.isfinite(m_new) and m_new <= (1.0 - 2.0 * opts.armijo * t) * merit
                if ok:
                    step = (kind, trial, m_new)
                    break
                t *= opts.line_search_beta
            if step is not None:
                break
        if step is None:
            log.debug("line search failed at iteration %d (residual %.3e)", it, res)
            break
        kind, U, merit = step
        mode_log.append(kind)
        trace.append(merit)
        R, res = measure(U)
        if not math.isfinite(res):
            raise DivergenceError("non-finite residual", operation="solve", witness={"iteration": it})
        converged = res <= tol
    diagnostics = {
        "mode": "energy" if prob.energy_mode else "residual",
        "newton_steps": mode_log.count("newton"),
        "gradient_steps": mode_log.count("gradient"),
        "tolerance": tol,
    }
    return U, res, trace, it, converged, diagnostics


def solve_system_core(grid, sys, boundary, p, opts=None, init=None):
    """Newton solve of the Dirichlet system without the sandwich post-check."""
    opts = opts or SolverOptions()
    if not p > 1:
        raise SolverError("p must exceed 1", operation="solve", witness={"p": p})
    bvals = _boundary_array(grid, sys.d, boundary)
    weights = sys.weight_values(grid)
    U0 = _harmonic_extension(grid, bvals) if init is None else _stack(grid, init).copy()
    U, res, trace, it, conv, diag = _solve_core(grid, sys, p, bvals, U0, opts, weights)
    if conv and p != 2 and opts.check_eps:
        half = replace(opts, eps=0.5 * opts.eps, check_eps=False)
        U2, *_ = _solve_core(grid, sys, p, bvals, U, half, weights)
        diag["eps_halved_change"] = float(np.max(np.abs(U2 - U)))
    return SolveReport(
        solution=[GridFunction(grid, U[i]) for i in range(sys.d)],
        residual_sup=res, energy_trace=trace, iterations=it, converged=conv,
        regularization_eps=opts.eps, diagnostics=diag,
    )


def solve_dirichlet_scalar(grid, g, boundary, p, opts=None, init=None, weight=None):
    """Solve ``Delta_p u = a(x) g(u)`` with Dirichlet data ``boundary``."""
    sys = SystemSpec.scalar(g, weight)
    return solve_system_core(grid, sys, [boundary], p, opts, init)


def max_weight(sys):
    """Pointwise ``max_i a_i(x)`` as a weight callable (``None`` if unweighted)."""
    if sys.weights is None:
        return None
    ws = list(sys.weights)
    return lambda *c: np.max([np.asarray(w(*c), dtype=float) + 0.0 * c[0] for w in ws], axis=0)


def solve_dirichlet_system(grid, sys, boundary, p, opts=None, init=None, sandwich=True):
    """Solve the coupled Dirichlet system.

    With constant boundary data the solve starts from the sub-solution
    ``(psi, ..., psi)`` (``Delta_p psi = g(psi)``, ``psi = min alpha``) and
    the result is checked against ``psi <= u_i <= max alpha``.
    """
    opts = opts or SolverOptions()
    bvals = _boundary_array(grid, sys.d, boundary)
    if not np.all(bvals > 0):
        i, k = np.argwhere(bvals <= 0)[0]
        raise SolverError("system boundary values must be positive", operation="solve_dirichlet_system",
                          witness={"component": int(i) + 1, "value": float(bvals[i, k])})
    constant = all(np.ptp(b) == 0.0 for b in bvals)
    psi = None
    if sandwich and constant:
        m = float(np.min(bvals))
        psi_rep = solve_dirichlet_scalar(grid, sys.upper_bound, m, p, opts, weight=max_weight(sys))
        psi = psi_rep.solution[0].values
        if init is None and psi_rep.converged:
            init = np.tile(psi, (sys.d, 1))
    report = solve_system_core(grid, sys, list(bvals), p, opts, init)
    if psi is not None:
        M = float(np.max(bvals))
        U = report.values
        below = float(np.max(psi[None, :] - U))
        above = float(np.max(U - M))
        report.diagnostics.update({
            "sandwich_lower_violation": max(below, 0.0),
            "sandwich_upper_violation": max(above, 0.0),
            "sandwich_ok": below <= SANDWICH_TOL and above <= SANDWICH_TOL,
            "psi": GridFunction(grid, psi),
            "psi_iterations": psi_rep.iterations,
            "M": M,
        })
    return report


# ----------------------------------------------------------------------------
# verification


@dataclass
class ComparisonReport:
    hypothesis_met: bool
    interior_hypothesis: bool
    boundary_hypothesis: bool
    conclusion_holds: bool
    worst_node: int
    worst_violation: float
    hypothesis_witness: Optional[dict] = None


def verify_comparison(grid, u, v, p, tol=1e-8, eps=0.0):
    """Check the comparison hypothesis and conclusion ``u <= v`` nodewise."""
    uu, vv = _as_array(u), _as_array(v)
    I, B = grid.interior_index, grid.boundary_index
    neg_u = -_operator(grid, uu[None], p, eps)[0]
    neg_v = -_operator(grid, vv[None], p, eps)[0]
    gap_int = neg_u[I] - neg_v[I]
    gap_bd = uu[B] - vv[B]
    interior_ok = bool(np.all(gap_int <= tol))
    boundary_ok = bool(np.all(gap_bd <= tol))
    witness = None
    if not interior_ok:
        k = int(np.argmax(gap_int))
        witness = {"where": "interior", "node": int(I[k]), "excess": float(gap_int[k])}
    elif not boundary_ok:
        k = int(np.argmax(gap_bd))
        witness = {"where": "boundary", "node": int(B[k]), "excess": float(gap_bd[k])}
    diff = uu - vv
    worst = int(np.argmax(diff))
    return ComparisonReport(
        hypothesis_met=interior_ok and boundary_ok,
        interior_hypothesis=interior_ok,
        boundary_hypothesis=boundary_ok,
        conclusion_holds=bool(diff[worst] <= tol),
        worst_node=worst,
        worst_violation=float(max(diff[worst], 0.0)),
        hypothesis_witness=witness,
    )


@dataclass
class SubsolutionReport:
    side: str
    passed: bool
    components: list  # per component: dict(passed, worst_node, worst_value)


def verify_subsolution(grid, u, sys, p, side="sub", tol=1e-8, eps=0.0, boundary=None):
    """Nodewise strong-form check of the sub- (or super-) solution inequality.

    ``side="sub"`` requires ``Delta_p u_i - a_i F_{u_i}(x, u) >= -tol`` at
    interior nodes; ``side="super"`` the reverse.  When ``boundary`` is
    given the boundary ordering is checked too.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    U = _stack(grid, u)
    if U.shape[0] != sys.d:
        raise SolverError("need one field per component", operation="verify_subsolution")
    I = grid.interior_index
    R = _operator(grid, U, p, eps)[:, I] - sys.reaction(grid, U)[:, I]
    sign = 1.0 if side == "sub" else -1.0
    comps = []
    bvals = None if boundary is None else _boundary_array(grid, sys.d, boundary)
    for i in range(sys.d):
        val = sign * R[i]
        k = int(np.argmin(val))
        ok = bool(val[k] >= -tol)
        entry = {"passed": ok, "worst_node": int(I[k]), "worst_value": float(sign * val[k]),
                 "failing_nodes": int(np.sum(val < -tol))}
        if bvals is not None:
            gap = sign * (bvals[i] - U[i, grid.boundary_index])
            kb = int(np.argmin(gap))
            entry["boundary_ok"] = bool(gap[kb] >= -tol)
            entry["passed"] = entry["passed"] and entry["boundary_ok"]
        comps.append(entry)
    return SubsolutionReport(side, all(c["passed"] for c in comps), comps)
