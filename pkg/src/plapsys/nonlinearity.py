"""Scalar nonlinearities, the Keller–Osserman integral test and the
implicit transform used to build entire sub-solutions.

A :class:`ClassFFunction` wraps a vectorised map ``h`` on ``[0, inf)``
together with its derivative and, when known, a closed-form primitive.
Built-in families are ``power(c, gamma)`` (``c t**gamma``), ``expm1(c)``
(``c (e**t - 1)``), ``sum(a, b)`` and free-form ``expr("...")`` in ``t``.
"""

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import (
    DomainError,
    EvaluationError,
    IndeterminateError,
    NonlinearityError,
    RangeError,
    TransformUndefinedError,
)
from .expr import Expression

KO_T_MAX = 1e8
KO_TOL = 1e-8
KO_MARGIN = 0.01
PHI_TOL = 1e-10
W_MIN = 1e-8
W_MAX = 1e12

# Gauss-Legendre rule shared by the vectorised quadratures below.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True, eq=False)
class ClassFFunction:
    """Candidate member of the class of admissible nonlinearities."""

    h: Callable
    h_prime: Callable
    label: str
    family_params: dict = field(default_factory=dict)
    H: Optional[Callable] = None

    def __call__(self, t):
        return self.h(t)

    def derivative(self, t):
        return self.h_prime(t)

    def primitive(self, t):
        """Vectorised primitive ``int_0^t h``; closed form when available."""
        if self.H is not None:
            return self.H(t)
        return _gl_primitive(self.h, t)

    def __repr__(self):
        return f"ClassFFunction({self.label})"


def _gl_primitive(h, t):
    # Composite Gauss-Legendre on geometric panels [t/2^(k+1), t/2^k].
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    n_panels = 40
    edges = flat[:, None] * 0.5 ** np.arange(n_panels, -1, -1)[None, :]
    edges[:, 0] = 0.0
    a, b = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[..., None] + half[..., None] * _GL_X
    with np.errstate(all="ignore"):
        vals = np.asarray(h(nodes), dtype=float)
    total = np.sum(vals * _GL_W, axis=-1) * half
    out = total.sum(axis=-1).reshape(t.shape)
    return float(out) if out.ndim == 0 else out


def power(c=1.0, gamma=2.0):
    """``h(t) = c t**gamma``."""
    c, gamma = float(c), float(gamma)

    def h(t):
        return c * np.power(np.maximum(t, 0.0), gamma)

    def hp(t):
        with np.errstate(divide="ignore"):
            return c * gamma * np.power(np.maximum(t, 0.0), gamma - 1.0)

    def H(t):
        return c * np.power(np.maximum(t, 0.0), gamma + 1.0) / (gamma + 1.0)

    return ClassFFunction(h, hp, f"power({c:g},{gamma:g})", {"c": c, "gamma": gamma}, H)


def expm1(c=1.0):
    """``h(t) = c (e**t - 1)``."""
    c = float(c)

    def h(t):
        return c * np.expm1(t)

    def hp(t):
        return c * np.exp(t)

    def H(t):
        t = np.asarray(t, dtype=float)
        return c * (np.expm1(t) - t)

    return ClassFFunction(h, hp, f"expm1({c:g})", {"c": c}, H)


def sum_of(first, second):
    H = None
    if first.H is not None and second.H is not None:
        def H(t):
            return first.H(t) + second.H(t)
    return ClassFFunction(
        lambda t: first.h(t) + second.h(t),
        lambda t: first.h_prime(t) + second.h_prime(t),
        f"sum({first.label},{second.label})",
        {"terms": (first.label, second.label)},
        H,
    )


def from_expression(source):
    """Nonlinearity from an arithmetic expression in ``t``.

    The derivative is a central difference with a relative step.
    """
    fn = Expression(source, ["t"])

    def hp(t):
        t = np.asarray(t, dtype=float)
        step = 1e-6 * np.maximum(1.0, np.abs(t))
        return (fn(t + step) - fn(t - step)) / (2 * step)

    return ClassFFunction(fn, hp, f'expr("{source}")', {"source": source})


def parse_nonlinearity(spec):
    """Parse ``power(c,gamma)``, ``expm1(c)``, ``sum(a,b)`` or ``expr("...")``."""
    if isinstance(spec, ClassFFunction):
        return spec
    try:
        tree = ast.parse(str(spec).strip(), mode="eval").body
    except SyntaxError:
        raise NonlinearityError(f"cannot parse nonlinearity {spec!r}", operation="parse") from None
    return _build(tree, spec)


def _number(node, spec):
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_number(node.operand, spec)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    raise NonlinearityError(f"expected a number in {spec!r}", operation="parse")


def _build(node, spec):
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)) or node.keywords:
        raise NonlinearityError(
            f"expected power(c,gamma), expm1(c), sum(a,b) or expr(\"...\"), got {spec!r}",
            operation="parse",
        )
    name, args = node.func.id, node.args
    if name == "power" and len(args) == 2:
        return power(_number(args[0], spec), _number(args[1], spec))
    if name == "expm1" and len(args) == 1:
        return expm1(_number(args[0], spec))
    if name == "sum" and len(args) == 2:
        return sum_of(_build(args[0], spec), _build(args[1], spec))
    if name == "expr" and len(args) == 1 and isinstance(args[0], ast.Constant) \
            and isinstance(args[0].value, str):
        return from_expression(args[0].value)
    raise NonlinearityError(f"bad nonlinearity term {name!r} in {spec!r}", operation="parse")


def primitive_H(f, t):
    """``H(t) = int_0^t h(s) ds`` by adaptive quadrature (absolute tol 1e-10)."""
    t = float(t)
    if t < 0:
        raise DomainError("primitive requires t >= 0", operation="primitive_H", witness={"t": t})
    if t == 0.0:
        return 0.0

    def integrand(s):
        v = float(f.h(s))
        if not math.isfinite(v):
            raise EvaluationError("non-finite h value", operation="primitive_H", witness={"t": s})
        return v

    # split at powers of ten so quad sees well-scaled pieces
    edges = [0.0] + [10.0 ** k for k in range(-6, 16) if 10.0 ** k < t] + [t]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-10 / len(edges), epsrel=1e-13, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class KellerOssermanVerdict:
    converges: bool
    tail_exponent: float
    integral_estimate: float
    tail_bound: float
    boundary_case: bool = False
    t_max: float = KO_T_MAX

    @property
    def total(self):
        return self.integral_estimate + self.tail_bound


def fit_tail_exponent(fun, T, margin=KO_MARGIN, points=11):
    """Local power-law decay exponent ``q`` of ``fun(t) ~ t**-q`` over ``[T/10, T]``.

    Returns ``(q, local_exponents)``. Raises :class:`IndeterminateError`
    when the local exponents scatter across the ``1 + margin`` threshold.
    """
    ts = np.logspace(math.log10(T) - 1.0, math.log10(T), points)
    vals = np.array([float(fun(t)) for t in ts])
    if np.all(vals == 0.0):
        return math.inf, np.full(points - 1, math.inf)
    if np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
        raise IndeterminateError(
            "tail integrand not positive and finite on the fit decade",
            operation="fit_tail_exponent", witness={"T": T},
        )
    logs = np.log(vals)
    lt = np.log(ts)
    local = -np.diff(logs) / np.diff(lt)
    q = -np.polyfit(lt, logs, 1)[0]
    threshold = 1.0 + margin
    if np.std(local) > 0.1 and local.min() <= threshold < local.max():
        raise IndeterminateError(
            "tail exponent oscillates across the convergence threshold; increase T_max",
            operation="fit_tail_exponent",
            witness={"T": T, "min_exponent": float(local.min()), "max_exponent": float(local.max())},
        )
    return float(q), local


def _log_decades(a, b):
    la, lb = math.log10(a), math.log10(b)
    cuts = [10.0 ** k for k in range(math.floor(la) + 1, math.ceil(lb))]
    return [a] + cuts + [b]


def keller_osserman_check(f, p, t_max=KO_T_MAX, tol=KO_TOL, margin=KO_MARGIN):
    """Test ``int_1^inf H(t)**(-1/p) dt < inf`` by truncation plus a fitted tail."""
    f = parse_nonlinearity(f)
    if not p > 1:
        raise DomainError("p must exceed 1", operation="keller_osserman_check", witness={"p": p})
    H1 = float(f.primitive(1.0))
    if not H1 > 0:
        raise DomainError("H vanishes on [1, inf): h is not positive",
                          operation="keller_osserman_check", witness={"t": 1.0, "H": H1})

    def integrand(t):
        with np.errstate(over="ignore"):
            Ht = float(f.primitive(t))
        if Ht == math.inf:
            return 0.0
        if not Ht > 0:
            raise DomainError("H vanishes on [1, inf)", operation="keller_osserman_check",
                              witness={"t": t})
        return Ht ** (-1.0 / p)

    # where H overflows the integrand is numerically zero; fit before that point
    T_fit = t_max
    while T_fit > 10.0 and integrand(T_fit) < 1e-290:
        T_fit /= 10.0

    edges = _log_decades(1.0, t_max)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        # substitute t = e^s so each decade is a smooth, short interval
        val, _ = integrate.quad(lambda s: integrand(math.exp(s)) * math.exp(s),
                                math.log(a), math.log(b),
                                epsabs=tol / len(edges), epsrel=1e-12, limit=200)
        total += val

    q, _ = fit_tail_exponent(integrand, T_fit, margin)
    converges = q > 1.0 + margin
    boundary = abs(q - 1.0) <= margin
    if converges:
        # a fit point below t_max (overflowed H) only makes the bound more conservative
        tail = 0.0 if math.isinf(q) else integrand(T_fit) * T_fit / (q - 1.0)
    else:
        tail = 0.0
    return KellerOssermanVerdict(
        converges=converges, tail_exponent=q, integral_estimate=total,
        tail_bound=tail, boundary_case=boundary, t_max=t_max,
    )


# ----------------------------------------------------------------------------
# transform  Phi(w) = int_w^inf g(t)^(-1/(p-1)) dt


def _phi_integrand(g, p):
    expo = -1.0 / (p - 1.0)

    def k(t):
        with np.errstate(all="ignore"):
            gt = np.asarray(g.h(t), dtype=float)
            out = np.where(gt == np.inf, 0.0, np.power(gt, expo))
        return out
    return k


def _log_gl(k, la, lb, width):
    """Composite GL of ``k(e^s) e^s`` over ``[la, lb]`` with panels of given width."""
    n = max(1, int(math.ceil((lb - la) / width)))
    edges = np.linspace(la, lb, n + 1)
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    s = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X
    et = np.exp(s)
    vals = k(et) * et
    return float(np.sum(np.sum(vals * _GL_W, axis=1) * half))


def _phi_tail(g, p, T):
    k = _phi_integrand(g, p)
    try:
        q, _ = fit_tail_exponent(lambda t: float(k(t)), T)
    except IndeterminateError as exc:
        raise TransformUndefinedError(
            f"transform undefined for g={g.label}, p={p}: {exc}",
            operation="phi_transform", witness={"g": g.label, "p": p},
        ) from None
    if not q > 1.0 + KO_MARGIN:
        raise TransformUndefinedError(
            f"int^inf g^(-1/(p-1)) diverges for g={g.label}, p={p} (tail exponent {q:.4f})",
            operation="phi_transform", witness={"g": g.label, "p": p, "tail_exponent": q},
        )
    if math.isinf(q):
        return 0.0
    return float(k(T)) * T / (q - 1.0)


def phi_transform(g, p, w, t_max=KO_T_MAX, tol=PHI_TOL):
    """``Phi(w) = int_w^inf g(t)**(-1/(p-1)) dt`` (absolute tolerance ``tol``)."""
    g = parse_nonlinearity(g)
    w = float(w)
    if not w > 0:
        raise DomainError("transform requires w > 0", operation="phi_transform", witness={"w": w})
    if not p > 1:
        raise DomainError("p must exceed 1", operation="phi_transform", witness={"p": p})
    T = max(t_max, 1e4 * w)
    tail = _phi_tail(g, p, T)
    k = _phi_integrand(g, p)
    la, lb = math.log(w), math.log(T)
    width = 0.5
    prev = _log_gl(k, la, lb, width)
    for _ in range(12):
        width /= 2.0
        cur = _log_gl(k, la, lb, width)
        if abs(cur - prev) <= 0.1 * tol:
            prev = cur
            break
        prev = cur
    return prev + tail


class _PhiTable:
    """Cumulative table of Phi on a fine log grid for fast vectorised inversion."""

    def __init__(self, g, p, w_min=W_MIN, w_max=W_MAX, width=0.02):
        self.g, self.p = g, p
        self.k = _phi_integrand(g, p)
        T = 1e4 * w_max
        self.tail = _phi_tail(g, p, T)
        la, lb = math.log(w_min), math.log(T)
        n = int(math.ceil((lb - la) / width))
        self.edges = np.linspace(la, lb, n + 1)
        pieces = self._panel(self.edges[:-1], self.edges[1:])
        # phi_at_edge[j] = integral from edge j to T, plus the tail
        self.phi_at_edge = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]]) + self.tail

    def _panel(self, a, b):
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X
        et = np.exp(s)
        return np.sum(self.k(et) * et * _GL_W, axis=1) * half

    def __call__(self, w):
        s = np.log(np.asarray(w, dtype=float))
        j = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        right = self.edges[j + 1]
        return self.phi_at_edge[j + 1] + self._panel(s, right)


def phi_invert(g, p, z, w_min=W_MIN, w_max=W_MAX):
    """Solve ``Phi(w) = z`` by bracket expansion from ``w = 1`` and bisection."""
    g = parse_nonlinearity(g)
    z = float(z)

    def phi(w):
        return phi_transform(g, p, w)

    hi_val, lo_val = phi(w_min), phi(w_max)
    if not (lo_val < z < hi_val):
        raise RangeError(
            f"z={z!r} outside the attainable range ({lo_val!r}, {hi_val!r})",
            operation="phi_invert", witness={"z": z, "phi_w_min": hi_val, "phi_w_max": lo_val},
        )
    lo = hi = 1.0
    if phi(1.0) > z:
        while phi(hi) > z:
            lo, hi = hi, min(2.0 * hi, w_max)
    else:
        while phi(lo) < z:
            lo, hi = max(0.5 * lo, w_min), lo
    while (hi - lo) > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if phi(mid) > z:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phi_invert_array(g, p, z, w_min=W_MIN, w_max=W_MAX):
    """Vectorised :func:`phi_invert` over an array of ``z`` values.

    Returns ``(w, phi_of_w)``; raises :class:`RangeError` naming the first
    offending index.
    """
    g = parse_nonlinearity(g)
    z = np.asarray(z, dtype=float)
    table = _PhiTable(g, p, w_min, w_max)
    top, bottom = float(table(np.array([w_min]))[0]), float(table(np.array([w_max]))[0])
    bad = np.flatnonzero(~((z > bottom) & (z < top)))
    if bad.size:
        i = int(bad[0])
        raise RangeError(
            f"z={z.flat[i]!r} outside the attainable range ({bottom!r}, {top!r})",
            operation="phi_invert", witness={"index": i, "z": float(z.flat[i]),
                                             "phi_w_min": top, "phi_w_max": bottom},
        )
    lo = np.full(z.shape, w_min)
    hi = np.full(z.shape, w_max)
    # bisection in log w to a relative width well below 1e-12
    llo, lhi = np.log(lo), np.log(hi)
    for _ in range(200):
        mid = 0.5 * (llo + lhi)
        above = table(np.exp(mid)) > z
        llo = np.where(above, mid, llo)
        lhi = np.where(above, lhi, mid)
        # stop once the bracket is down to a few ulps of log w
        if np.all(lhi - llo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(lhi))):
            break
    w = np.exp(0.5 * (llo + lhi))
    return w, table(w)


@dataclass
class CheckResult:
    passed: bool
    witness: Optional[dict] = None


@dataclass
class ClassFDiagnostics:
    label: str
    p: float
    checks: dict
    verdict: Optional[KellerOssermanVerdict] = None

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def failed(self):
        return [name for name, c in self.checks.items() if not c.passed]


def class_f_validate(f, p, sample_count=64):
    """Check membership of ``f`` in the admissible class on a log-spaced sample.

    Failures are recorded as data with witnesses; nothing is raised.
    """
    f = parse_nonlinearity(f)
    if sample_count < 16:
        raise ValueError("sample_count must be at least 16")
    ts = np.logspace(-6, 6, sample_count)
    checks = {}

    h0 = float(f.h(0.0))
    checks["h_zero"] = CheckResult(abs(h0) <= 1e-12, None if abs(h0) <= 1e-12 else {"t": 0.0, "h": h0})

    with np.errstate(all="ignore"):
        hv = np.asarray(f.h(ts), dtype=float)
        dv = np.asarray(f.h_prime(ts), dtype=float)
    finite = np.isfinite(hv) & np.isfinite(dv)
    # overflow to +inf of an increasing h is a float limit, not a defect
    overflow = (hv == np.inf) | ((dv == np.inf) & ~np.isnan(hv))
    broken = ~finite & ~overflow
    checks["finite"] = CheckResult(not broken.any(),
                                   None if not broken.any() else {"t": float(ts[broken][0])})

    if np.all(hv[finite] > 0):
        checks["positive"] = CheckResult(True)
    else:
        i = int(np.argmin(np.where(finite, hv, np.inf)))
        lo = ts[max(i - 1, 0)]
        hi = ts[min(i + 1, len(ts) - 1)]
        res = optimize.minimize_scalar(lambda t: float(f.h(t)), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        t_star = float(res.x) if res.fun <= hv[i] else float(ts[i])
        checks["positive"] = CheckResult(False, {"t": t_star, "h": float(f.h(t_star))})

    bad = finite & (dv < -1e-10)
    if bad.any():
        j = int(np.argmin(np.where(finite, dv, np.inf)))
        checks["monotone"] = CheckResult(False, {"t": float(ts[j]), "h_prime": float(dv[j])})
    else:
        checks["monotone"] = CheckResult(True)

    away = ts >= 1e-3
    step = 1e-5 * ts[away]
    with np.errstate(all="ignore"):
        fd = (np.asarray(f.h(ts[away] + step)) - np.asarray(f.h(ts[away] - step))) / (2 * step)
    ref = dv[away]
    scale = np.maximum(np.abs(ref), 1e-12)
    rel = np.abs(fd - ref) / scale
    ok = np.isfinite(rel) & (rel <= 1e-4)
    # overflowed samples are already reported by the finiteness check
    ok |= ~np.isfinite(fd) | ~np.isfinite(ref)
    if ok.all():
        checks["derivative"] = CheckResult(True)
    else:
        j = int(np.flatnonzero(~ok)[0])
        checks["derivative"] = CheckResult(False, {"t": float(ts[away][j]), "relative_error": float(rel[j])})

    verdict = None
    try:
        verdict = keller_osserman_check(f, p)
        checks["keller_osserman"] = CheckResult(
            verdict.converges,
            None if verdict.converges else {"tail_exponent": verdict.tail_exponent},
        )
    except NonlinearityError as exc:
        checks["keller_osserman"] = CheckResult(False, {"error": str(exc), **exc.witness})
    return ClassFDiagnostics(f.label, p, checks, verdict)
