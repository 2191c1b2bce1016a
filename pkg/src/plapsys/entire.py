"""Entire large solutions on R^N built by exhausting balls.

The radial upper solution ``z`` of ``-div(|grad z|^(p-2) grad z) = A(|x|)``
comes from the nested integral

    z(r) = int_r^inf [ s^(1-N) int_0^s t^(N-1) A(t) dt ]^(1/(p-1)) ds,

and the sub-solution is ``w = Phi^{-1}(z)``.  Dirichlet problems on balls of
growing radius with boundary value ``w(R)`` are then squeezed between ``w``
and that constant.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConstructError, EntireError, IndeterminateError, NoUpperSolutionError
from .grid import DomainSpec, GridFunction, build_grid
from .nonlinearity import (
    _GL_W,
    _GL_X,
    KO_MARGIN,
    fit_tail_exponent,
    parse_nonlinearity,
    phi_invert_array,
    phi_transform,
)
from .plap import SolverOptions, solve_system_core

log = logging.getLogger(__name__)

SANDWICH_TOL = 1e-7
DECAY_FRACTION = 1e-3
RESIDUAL_TOL = 1e-6
TAIL_FACTOR = 1e3  # the outer integral is integrated out to TAIL_FACTOR * R_max


@dataclass(frozen=True, eq=False)
class RadialProfile:
    radii: np.ndarray
    values: np.ndarray
    ambient_dim: int
    decay_verified: bool = False
    kind: str = "z"
    evaluator: Optional[object] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise EntireError("radii and values must be 1-D of equal length", operation="RadialProfile")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise EntireError("radii must start at 0 and increase strictly", operation="RadialProfile")
        if not np.all(np.isfinite(v)):
            raise EntireError("profile values must be finite", operation="RadialProfile")
        if self.kind == "z" and (np.any(v <= 0) or np.any(np.diff(v) > 0)):
            raise EntireError("z profiles must be positive and nonincreasing", operation="RadialProfile")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)

    @property
    def R_max(self):
        return float(self.radii[-1])

    def __call__(self, r):
        """Value at arbitrary radii: exact evaluation when available, else interpolation."""
        if self.evaluator is not None:
            return self.evaluator(r)
        return np.interp(np.asarray(r, dtype=float), self.radii, self.values)

    def to_csv(self):
        lines = [f"r,{self.kind}"]
        lines += [f"{r!r},{v!r}" for r, v in zip(self.radii.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"


def _gl_nodes(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    return (0.5 * (a + b))[..., None] + half[..., None] * _GL_X, half


class _NestedIntegral:
    """Tabulated inner and outer integrals on a fixed set of panels."""

    def __init__(self, A, p, N, R_max, panels_per_unit=64, R_far=None):
        self.A, self.p, self.N = A, float(p), int(N)
        self.R_max = float(R_max)
        self.R_far = TAIL_FACTOR * self.R_max if R_far is None else float(R_far)
        n_lin = max(8, int(math.ceil(panels_per_unit * self.R_max)))
        lin = np.linspace(0.0, self.R_max, n_lin + 1)
        n_log = int(math.ceil(math.log(self.R_far / self.R_max) / 0.01))
        geo = self.R_max * np.exp(np.linspace(0.0, math.log(self.R_far / self.R_max), n_log + 1))
        self.edges = np.concatenate([lin, geo[1:]])
        a, b = self.edges[:-1], self.edges[1:]
        # inner integral I(s) = int_0^s t^(N-1) A(t) dt at every panel edge
        self.I_edges = np.concatenate([[0.0], np.cumsum(self._inner_piece(a, b))])
        if not np.all(np.isfinite(self.I_edges)) or np.any(self.I_edges[1:] <= 0):
            raise NoUpperSolutionError("inner integral of r^(N-1) A(r) is not finite and positive",
                                       operation="radial_upper_solution")
        try:
            q, _ = fit_tail_exponent(lambda s: float(self.k(np.array([s]))[0]), self.R_far)
        except IndeterminateError as exc:
            raise NoUpperSolutionError(f"outer integral tail is indeterminate: {exc.message}",
                                       operation="radial_upper_solution", witness=exc.witness) from None
        if not q > 1.0 + KO_MARGIN:
            raise NoUpperSolutionError(
                "the outer integral diverges: no radial upper solution decaying to zero",
                operation="radial_upper_solution", witness={"tail_exponent": q, "R": self.R_far})
        self.tail_exponent = q
        self.tail = float(self.k(np.array([self.R_far]))[0]) * self.R_far / (q - 1.0)
        pieces = self._outer_piece(a, b)
        self.z_edges = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + self.tail

    def _weighted_A(self, t):
        with np.errstate(all="ignore"):
            return t ** (self.N - 1) * np.asarray(self.A(t), dtype=float) + 0.0 * t

    def _inner_piece(self, a, b):
        s, half = _gl_nodes(a, b)
        return np.sum(self._weighted_A(s) * _GL_W, axis=-1) * half

    def inner(self, s):
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        return self.I_edges[j] + self._inner_piece(self.edges[j], s)

    def k(self, s):
        """Outer integrand ``[s^(1-N) I(s)]^(1/(p-1))``."""
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            flux = np.where(s > 0, self.inner(s) / np.where(s > 0, s, 1.0) ** (self.N - 1), 0.0)
            return np.maximum(flux, 0.0) ** (1.0 / (self.p - 1.0))

    def _outer_piece(self, a, b):
        s, half = _gl_nodes(a, b)
        return np.sum(self.k(s) * _GL_W, axis=-1) * half

    def z(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r, dtype=float)
        far = r >= self.R_far
        out[far] = self.tail * (r[far] / self.R_far) ** (1.0 - self.tail_exponent)
        rr = r[~far]
        j = np.clip(np.searchsorted(self.edges, rr, side="right") - 1, 0, len(self.edges) - 2)
        out[~far] = self.z_edges[j + 1] + self._outer_piece(rr, self.edges[j + 1])
        return out


def _flux_residual(nested, A, N, p, radii):
    """Relative mismatch of ``r^(N-1)|z'|^(p-1)`` (differenced ``z``) against an
    independent quadrature of ``int_0^r t^(N-1) A(t) dt``."""
    worst = 0.0
    where = None
    for r in radii:
        h = 1e-3 * max(r, 1.0)
        zz = nested.z(np.array([r - 2 * h, r - h, r + h, r + 2 * h]))
        dz = (zz[0] - 8 * zz[1] + 8 * zz[2] - zz[3]) / (12 * h)
        lhs = r ** (N - 1) * abs(dz) ** (p - 1)
        ref, _ = integrate.quad(lambda t: t ** (N - 1) * float(A(t)), 0.0, r, epsabs=0.0, epsrel=1e-12,
                                limit=200)
        rel = abs(lhs - ref) / ref
        if rel > worst:
            worst, where = rel, float(r)
    return worst, where


def radial_upper_solution(A, p, N, R_max, resolution):
    """The radial upper solution ``z`` sampled at ``resolution`` radii on ``[0, R_max]``.

    ``A`` is the radial weight ``r -> sum_i a_i(r)`` (vectorised).  The
    profile keeps an exact evaluator, so ``profile(r)`` is accurate between
    samples.  ``diagnostics`` holds the relative flux-form residual.
    """
    if N < 2:
        raise EntireError("ambient dimension must be at least 2", operation="radial_upper_solution")
    if not (p > 1 and R_max > 0 and resolution >= 2):
        raise EntireError("need p > 1, R_max > 0 and resolution >= 2", operation="radial_upper_solution")
    probe = np.asarray(A(np.linspace(0.0, R_max, 257)), dtype=float) + np.zeros(257)
    if not np.all(np.isfinite(probe)) or np.any(probe <= 0):
        i = int(np.argmin(np.where(np.isfinite(probe), probe, -np.inf)))
        raise NoUpperSolutionError("A must be positive and finite on [0, R_max]",
                                   operation="radial_upper_solution",
                                   witness={"r": float(np.linspace(0.0, R_max, 257)[i])})
    nested = _NestedIntegral(A, p, N, R_max)
    coarse = _NestedIntegral(A, p, N, R_max, panels_per_unit=32)
    radii = np.linspace(0.0, R_max, int(resolution))
    values = nested.z(radii)
    refinement = float(np.max(np.abs(values - coarse.z(radii)) / values))
    sample = np.linspace(0.05 * R_max, R_max, 40)
    residual, where = _flux_residual(nested, A, N, p, sample)
    diagnostics = {
        "tail_exponent": nested.tail_exponent, "tail": nested.tail, "R_far": nested.R_far,
        "refinement_change": refinement, "flux_residual": residual, "flux_residual_at": where,
        "residual_ok": residual <= RESIDUAL_TOL,
    }
    return RadialProfile(radii, values, int(N),
                         decay_verified=bool(values[-1] <= DECAY_FRACTION * values[0]),
                         kind="z", evaluator=nested.z, diagnostics=diagnostics)


def build_subsolution_w(z, g, p):
    """``w = Phi^{-1}(z)`` pointwise, for a :class:`RadialProfile` or a :class:`GridFunction`."""
    g = parse_nonlinearity(g)
    if isinstance(z, RadialProfile):
        w, _ = phi_invert_array(g, p, z.values)
        return RadialProfile(z.radii, w, z.ambient_dim, decay_verified=z.decay_verified, kind="w")
    if isinstance(z, GridFunction):
        w, _ = phi_invert_array(g, p, z.values)
        return GridFunction(z.grid, w)
    w, _ = phi_invert_array(g, p, np.asarray(z, dtype=float))
    return w


@dataclass
class EntireTrace:
    ball_radii: list
    per_ball: list  # SolveReport per ball
    w_profile: RadialProfile
    lower_bound_ok: bool
    nested_core_deltas: dict  # inner radius m -> list of sup changes on B_m across successive balls
    z_profile: Optional[RadialProfile] = None
    grids: list = field(default_factory=list)
    w_fields: list = field(default_factory=list)  # w on each ball grid
    w_n: list = field(default_factory=list)
    lower_margins: list = field(default_factory=list)  # min_i min_x (u_i - w) per ball
    upper_excess: list = field(default_factory=list)  # max_i max_x (u_i - w_n) per ball
    witnesses: list = field(default_factory=list)
    roundtrip_error: float = 0.0
    truncated: bool = False
    message: str = ""
    g: object = None
    p: float = 2.0

    @property
    def accepted(self):
        return (not self.truncated and self.lower_bound_ok
                and all(r.converged for r in self.per_ball)
                and all(e <= SANDWICH_TOL for e in self.upper_excess))


def radial_weight_sum(sys):
    """``r -> sum_i a_i(r)`` for a system with radial weights (1 each if unweighted)."""
    weights = [None] * sys.d if sys.weights is None else list(sys.weights)

    def A_sum(r):
        r = np.asarray(r, dtype=float)
        return sum(np.ones_like(r) if w is None else np.asarray(w(r), dtype=float) + 0.0 * r
                   for w in weights)
    return A_sum


def ball_exhaustion(sys, g, p, N, ball_radii, resolution, opts=None, z_profile=None, R_max=None,
                    profile_points=2001):
    """Solve the weighted system on balls ``B_n`` with boundary value ``w(n)``.

    ``resolution`` is the number of grid cells per unit radius, so the ball
    grids are nested and values on an inner ball compare node for node.
    ``sys.weights`` must be radial (functions of ``r``); their sum drives the
    radial upper solution (sampled on ``[0, R_max]``, default the largest
    ball) unless ``z_profile`` is given.
    """
    opts = opts or SolverOptions()
    g = parse_nonlinearity(g)
    radii = [float(r) for r in ball_radii]
    if not radii or any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise EntireError("ball radii must be positive and increasing", operation="ball_exhaustion",
                          witness={"ball_radii": radii})
    A_sum = radial_weight_sum(sys)
    if z_profile is None:
        R = max(radii) if R_max is None else R_max
        z_profile = radial_upper_solution(A_sum, p, N, R, profile_points)
    if not z_profile.decay_verified:
        log.info("z(R_max) is not below %.0e z(0); decay is not certified", DECAY_FRACTION)
    w_profile = build_subsolution_w(z_profile, g, p)
    per_ball, grids, wfields, wns, lows, ups, wits = [], [], [], [], [], [], []
    truncated, message = False, ""
    roundtrip = 0.0
    for R in radii:
        cells = int(round(resolution * R))
        if abs(cells - resolution * R) > 1e-9 * max(1.0, resolution * R):
            raise EntireError("resolution * radius must be an integer so the ball grids nest",
                              operation="ball_exhaustion", witness={"radius": R, "resolution": resolution})
        grid = build_grid(DomainSpec.radial_ball(R, N, cells + 1))
        r = grid.nodes[:, 0]
        zg = np.asarray(z_profile(r), dtype=float)
        w, phi_w = phi_invert_array(g, p, zg)
        roundtrip = max(roundtrip, float(np.max(np.abs(phi_w - zg))))
        w_n = float(phi_invert_array(g, p, np.asarray(z_profile(np.array([R]))))[0][0])
        init = np.tile(w, (sys.d, 1))
        init[:, grid.boundary_index] = w_n
        rep = solve_system_core(grid, sys, [w_n] * sys.d, p, opts, init=init)
        per_ball.append(rep)
        grids.append(grid)
        wfields.append(GridFunction(grid, w))
        wns.append(w_n)
        if not rep.converged:
            truncated = True
            message = f"ball of radius {R:g} did not converge (residual {rep.residual_sup:.3e})"
            log.warning(message)
            break
        U = rep.values
        gap = U - w[None, :]
        lows.append(float(gap.min()))
        ups.append(float(np.max(U - w_n)))
        wit = None
        if gap.min() < -SANDWICH_TOL:
            i, n = np.unravel_index(int(np.argmin(gap)), gap.shape)
            wit = {"ball": R, "bound": "lower", "component": int(i) + 1, "node": int(n),
                   "r": float(r[n]), "u": float(U[i, n]), "w": float(w[n])}
        elif ups[-1] > SANDWICH_TOL:
            i, n = np.unravel_index(int(np.argmax(U - w_n)), U.shape)
            wit = {"ball": R, "bound": "upper", "component": int(i) + 1, "node": int(n),
                   "r": float(r[n]), "u": float(U[i, n]), "w_n": w_n}
        wits.append(wit)
    deltas = {}
    for m_idx, m in enumerate(radii[:-1]):
        n_inner = int(round(resolution * m)) + 1
        changes = []
        for k in range(m_idx + 1, len(per_ball)):
            prev = per_ball[k - 1].values[:, :n_inner]
            cur = per_ball[k].values[:, :n_inner]
            changes.append(float(np.max(np.abs(cur - prev))))
        deltas[m] = changes
    return EntireTrace(
        ball_radii=radii, per_ball=per_ball, w_profile=w_profile,
        lower_bound_ok=bool(lows) and not truncated and min(lows) >= -SANDWICH_TOL,
        nested_core_deltas=deltas, z_profile=z_profile, grids=grids, w_fields=wfields, w_n=wns,
        lower_margins=lows, upper_excess=ups, witnesses=wits, roundtrip_error=roundtrip,
        truncated=truncated, message=message, g=g, p=p,
    )


@dataclass
class LargeAtInfinityReport:
    verdict: Optional[bool]  # None when withheld
    radius: float
    u_min: float
    w_value: float
    threshold: float
    w_divergence: bool
    reason: str = ""


def verify_large_at_infinity(trace, threshold=5.0):
    """Evidence that the exhaustion limit grows without bound at infinity.

    Looks at the outermost node of the largest ball: both ``min_i u_i`` and
    ``w`` there must exceed ``threshold``, and ``w`` must be certified to
    diverge (``Phi(W) -> 0`` along increasing ``W``, i.e. ``Phi^{-1}(z)``
    is unbounded as ``z -> 0``).
    """
    if not trace.per_ball or not trace.accepted:
        return LargeAtInfinityReport(None, float("nan"), float("nan"), float("nan"), threshold, False,
                                     "verdict withheld: trace not accepted")
    U = trace.per_ball[-1].values
    grid = trace.grids[-1]
    k = int(np.argmax(grid.nodes[:, 0]))
    u_min = float(U[:, k].min())
    w_val = float(trace.w_fields[-1].values[k])
    # Phi decreases to 0: scaling W by powers of 10 must drive Phi(W) towards 0
    W = max(w_val, 1.0)
    vals = [phi_transform(trace.g, trace.p, W * 10.0 ** j) for j in range(4)]
    divergence = all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-2 * vals[0]
    verdict = u_min > threshold and w_val > threshold and divergence
    return LargeAtInfinityReport(bool(verdict), float(grid.nodes[k, 0]), u_min, w_val, threshold,
                                 bool(divergence), "" if verdict else "growth threshold not reached")
