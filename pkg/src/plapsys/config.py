"""TOML run configurations with a strict schema.

Every table and key is listed in ``SCHEMA``; anything else is an error that
names the dotted field path and its line.  Module preconditions that can be
checked without solving (expression syntax, grid validity, the
Keller–Osserman test for blow-up runs, schedule and window bounds) are
checked here, before any solve starts.

Component indices in configuration files are 1-based (``u1``, ``u2``...).
"""

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .construct import EscalationSchedule
from .errors import ConfigError, LabError
from .grid import DomainSpec, build_grid
from .expr import Expression
from .nonlinearity import keller_osserman_check, parse_nonlinearity, phi_transform
from .plap import SolverOptions, SystemSpec

COMMANDS = ("ko-check", "solve", "blowup", "mixed", "entire", "verify")

SCHEMA = {
    "": {"command", "p", "nonlinearity", "label"},
    "system": {"d", "grad_F", "F", "lower_bounds", "upper_bound", "weights"},
    "domain": {"kind", "bounds", "radius", "ambient_dim", "resolution", "grading", "ratio", "layers"},
    "solver": {"tol", "max_iters", "eps", "line_search_beta", "armijo", "newton_fallback"},
    "boundary": {"values"},
    "schedule": {"base", "growth", "ratio", "step", "max_levels", "core_margin", "stall_tol"},
    "fit": {"window"},
    "mixed": {"blowup_set", "fixed_boundary"},
    "entire": {"ambient_dim", "ball_radii", "resolution", "R_max", "profile_points",
               "growth_threshold", "g"},
    "ko": {"t_max", "margin"},
    "verify": {"check", "fields", "compare", "side", "tol", "boundary", "scale"},
}

REQUIRED = {
    "ko-check": ("nonlinearity",),
    "solve": ("domain", "boundary"),
    "blowup": ("domain", "schedule"),
    "mixed": ("domain", "schedule", "mixed"),
    "entire": ("entire",),
    "verify": ("verify",),
}


@dataclass
class RunConfig:
    command: str
    source: str
    p: float
    label: str = ""
    nonlinearity: Optional[object] = None
    system: Optional[SystemSpec] = None
    domain: Optional[DomainSpec] = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    boundary: Optional[list] = None
    schedule: Optional[EscalationSchedule] = None
    fit_window: Optional[tuple] = None
    blowup_set: Optional[list] = None  # 0-based
    fixed_boundary: Optional[dict] = None  # 0-based component -> value
    entire: dict = field(default_factory=dict)
    ko: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)


def _line_of(text, path):
    """Best-effort line number of a dotted ``table.key`` path in TOML text."""
    parts = path.split(".")
    table, key = ".".join(parts[:-1]), parts[-1]
    current = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if current == path:
                return n
            continue
        m = re.match(r"^([A-Za-z0-9_\-\"']+)\s*=", line)
        if m and current == table and m.group(1).strip("\"'") == key:
            return n
    return None


class _Reader:
    def __init__(self, text):
        self.text = text

    def fail(self, message, path, **kw):
        raise ConfigError(message, field=path, line=_line_of(self.text, path), **kw)

    def number(self, table, key, value, positive=False, integer=False):
        path = f"{table}.{key}" if table else key
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{path} must be a number", path)
        if integer and not float(value).is_integer():
            self.fail(f"{path} must be an integer", path)
        if not math.isfinite(value) or (positive and not value > 0):
            self.fail(f"{path} must be {'positive' if positive else 'finite'}", path)
        return int(value) if integer else float(value)

    def strings(self, table, key, value):
        path = f"{table}.{key}"
        if isinstance(value, str):
            return [value]
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            self.fail(f"{path} must be a string or a list of strings", path)
        return list(value)

    def numbers(self, table, key, value):
        path = f"{table}.{key}"
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [float(value)]
        if not isinstance(value, list):
            self.fail(f"{path} must be a number or a list of numbers", path)
        return [self.number(table, key, v) for v in value]


def _check_keys(doc, reader):
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                reader.fail(f"unknown table [{key}]", key)
            for sub in value:
                if sub not in SCHEMA[key]:
                    reader.fail(f"unknown key '{sub}' in [{key}]; allowed: {', '.join(sorted(SCHEMA[key]))}",
                                f"{key}.{sub}")
                if isinstance(value[sub], dict):
                    reader.fail(f"nested table {key}.{sub} is not allowed", f"{key}.{sub}")
        elif key not in SCHEMA[""]:
            reader.fail(f"unknown key '{key}'; allowed top-level keys: {', '.join(sorted(SCHEMA['']))}", key)


def _coordinate_names(domain, command, radial=False):
    if command == "entire" or radial or (domain is not None and domain.kind == "radial_ball"):
        return ("r",)
    if domain is not None and domain.kind == "rectangle":
        return ("x", "y")
    return ("x",)


def _parse_system(doc, reader, names):
    block = doc.get("system")
    if block is None:
        if "nonlinearity" not in doc:
            return None
        return SystemSpec.scalar(doc["nonlinearity"])
    for key in ("grad_F", "lower_bounds", "upper_bound"):
        if key not in block:
            reader.fail(f"[system] needs '{key}'", f"system.{key}")
    grad = reader.strings("system", "grad_F", block["grad_F"])
    d = reader.number("system", "d", block.get("d", len(grad)), positive=True, integer=True)
    if len(grad) != d:
        reader.fail(f"grad_F has {len(grad)} entries but d = {d}", "system.grad_F")
    lower = reader.strings("system", "lower_bounds", block["lower_bounds"])
    if len(lower) == 1 and d > 1:
        lower = lower * d
    if len(lower) != d:
        reader.fail(f"lower_bounds needs {d} entries", "system.lower_bounds")
    weights = None
    if "weights" in block:
        weights = reader.strings("system", "weights", block["weights"])
        if len(weights) == 1 and d > 1:
            weights = weights * d
        if len(weights) != d:
            reader.fail(f"weights needs {d} entries", "system.weights")
    upper = block["upper_bound"]
    if not isinstance(upper, str):
        reader.fail("upper_bound must be a nonlinearity string", "system.upper_bound")
    F = block.get("F")
    if F is not None and not isinstance(F, str):
        reader.fail("F must be an expression string", "system.F")
    try:
        return SystemSpec.from_expressions(grad, lower, upper, F=F, weights=weights,
                                           coordinate_names=names, label=doc.get("label", "system"))
    except LabError as exc:
        which = "system"
        for key in ("grad_F", "F", "weights", "lower_bounds", "upper_bound"):
            srcs = block.get(key)
            srcs = [srcs] if isinstance(srcs, str) else (srcs or [])
            if any(s in str(exc) for s in srcs):
                which = f"system.{key}"
                break
        reader.fail(f"{exc}", which)


def _parse_domain(block, reader):
    kw = {}
    kind = block.get("kind")
    if kind not in ("interval", "rectangle", "radial_ball"):
        reader.fail("domain.kind must be interval, rectangle or radial_ball", "domain.kind")
    kw["kind"] = kind
    if "bounds" in block:
        kw["bounds"] = tuple(reader.numbers("domain", "bounds", block["bounds"]))
        need = {"interval": 2, "rectangle": 4}.get(kind)
        if need and len(kw["bounds"]) != need:
            reader.fail(f"{kind} bounds need {need} numbers", "domain.bounds")
    elif kind != "radial_ball":
        reader.fail(f"{kind} needs domain.bounds", "domain.bounds")
    if kind == "radial_ball":
        kw["radius"] = reader.number("domain", "radius", block.get("radius", 1.0), positive=True)
        kw["bounds"] = (0.0, kw["radius"])
        kw["ambient_dim"] = reader.number("domain", "ambient_dim", block.get("ambient_dim", 2), integer=True)
    kw["resolution"] = reader.number("domain", "resolution", block.get("resolution", 64), integer=True)
    kw["grading"] = block.get("grading", "uniform")
    if "ratio" in block:
        kw["ratio"] = reader.number("domain", "ratio", block["ratio"], positive=True)
    if "layers" in block:
        kw["layers"] = reader.number("domain", "layers", block["layers"], integer=True)
    spec = DomainSpec(**kw)
    try:
        build_grid(spec)
    except LabError as exc:
        reader.fail(str(exc), "domain")
    return spec


def _parse_solver(block, reader):
    kw = {}
    for key in ("tol", "eps", "line_search_beta", "armijo"):
        if key in block:
            kw[key] = reader.number("solver", key, block[key], positive=True)
    if "max_iters" in block:
        kw["max_iters"] = reader.number("solver", "max_iters", block["max_iters"], positive=True, integer=True)
    if "newton_fallback" in block:
        if not isinstance(block["newton_fallback"], bool):
            reader.fail("newton_fallback must be true or false", "solver.newton_fallback")
        kw["newton_fallback"] = block["newton_fallback"]
    if "line_search_beta" in kw and not kw["line_search_beta"] < 1:
        reader.fail("line_search_beta must lie in (0, 1)", "solver.line_search_beta")
    return SolverOptions(**kw)


def _parse_schedule(block, reader, domain):
    kw = {}
    for key in ("base", "ratio", "step", "core_margin", "stall_tol"):
        if key in block:
            kw[key] = reader.number("schedule", key, block[key])
    if "max_levels" in block:
        kw["max_levels"] = reader.number("schedule", "max_levels", block["max_levels"], integer=True)
    if "growth" in block:
        kw["growth"] = block["growth"]
    sched = EscalationSchedule(**kw)
    try:
        sched.validate(build_grid(domain))
    except LabError as exc:
        key = {"ratio": "ratio", "step": "step", "max_levels": "max_levels", "core_margin": "core_margin",
               "base": "base"}
        target = next((f"schedule.{k}" for k in key if k in str(exc)), "schedule")
        reader.fail(str(exc), target)
    return sched


def _require_ko(f, p, reader, path):
    verdict = keller_osserman_check(f, p)
    if not verdict.converges:
        reader.fail(f"Keller-Osserman precondition fails for {f.label} at p={p} "
                    f"(tail exponent {verdict.tail_exponent:.4f}); no boundary blow-up is possible", path)


def load_config(path, command=None):
    """Parse and validate a TOML run configuration.

    ``command`` is the requested subcommand; a ``command`` key in the file
    must agree with it.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", operation="load_config") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", operation="load_config") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML parse error: {exc}", line=int(m.group(1)) if m else None,
                          operation="load_config") from None
    return config_from_dict(doc, text, command)


def config_from_dict(doc, text="", command=None):
    reader = _Reader(text)
    _check_keys(doc, reader)
    if command is not None and doc.get("command", command) != command:
        reader.fail(f"config declares command '{doc['command']}' but '{command}' was requested", "command")
    command = doc.get("command", command)
    if command not in COMMANDS:
        reader.fail(f"command must be one of {', '.join(COMMANDS)}", "command")
    for key in REQUIRED[command]:
        if key not in doc:
            reader.fail(f"'{command}' needs [{key}]" if key != "nonlinearity" else "'ko-check' needs nonlinearity",
                        key)
    p = reader.number("", "p", doc.get("p", 2.0))
    if not p > 1:
        reader.fail("p must exceed 1", "p")
    cfg = RunConfig(command=command, source=text, p=p, label=str(doc.get("label", "")))
    if "nonlinearity" in doc:
        try:
            cfg.nonlinearity = parse_nonlinearity(doc["nonlinearity"])
        except LabError as exc:
            reader.fail(str(exc), "nonlinearity")
    if "domain" in doc:
        cfg.domain = _parse_domain(doc["domain"], reader)
    names = _coordinate_names(cfg.domain, command, radial=cfg.domain is None and "entire" in doc)
    if command != "ko-check":
        cfg.system = _parse_system(doc, reader, names)
    cfg.solver = _parse_solver(doc.get("solver", {}), reader)
    if "ko" in doc:
        for key, value in doc["ko"].items():
            cfg.ko[key] = reader.number("ko", key, value, positive=True)

    if command in ("solve", "blowup", "mixed", "verify") and cfg.system is None:
        reader.fail(f"'{command}' needs [system] or nonlinearity", "system")
    if command in ("solve", "blowup", "mixed"):
        grid = build_grid(cfg.domain)
        checks = cfg.system.validate(grid)
        for name, (ok, witness) in checks.items():
            if not ok:
                target = {"lower_bounds": "system.lower_bounds", "upper_bound": "system.upper_bound",
                          "potential": "system.F"}[name]
                reader.fail(f"system hypothesis '{name}' fails: {witness}", target)
    if command == "solve":
        vals = reader.numbers("boundary", "values", doc["boundary"].get("values"))
        if len(vals) == 1:
            vals = vals * cfg.system.d
        if len(vals) != cfg.system.d:
            reader.fail(f"boundary.values needs {cfg.system.d} entries", "boundary.values")
        cfg.boundary = vals
    if command in ("blowup", "mixed"):
        cfg.schedule = _parse_schedule(doc["schedule"], reader, cfg.domain)
        if "fit" in doc:
            win = reader.numbers("fit", "window", doc["fit"].get("window"))
            if len(win) != 2 or not 0 < win[0] < win[1] < cfg.domain.inradius:
                reader.fail("fit.window must be [lo, hi] with 0 < lo < hi < inradius", "fit.window")
            cfg.fit_window = tuple(win)
    if command == "blowup":
        src = "system.lower_bounds" if "system" in doc else "nonlinearity"
        for f in cfg.system.lower_bounds:
            _require_ko(f, p, reader, src)
    if command == "mixed":
        block = doc["mixed"]
        raw = block.get("blowup_set")
        if not isinstance(raw, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in raw):
            reader.fail("mixed.blowup_set must be a list of 1-based component indices", "mixed.blowup_set")
        chosen = sorted(set(raw))
        d = cfg.system.d
        if not chosen or len(chosen) >= d or chosen[0] < 1 or chosen[-1] > d:
            reader.fail("mixed.blowup_set must be a nonempty proper subset of 1..d "
                        "(use the blowup command to escalate every component)", "mixed.blowup_set")
        rest = [j for j in range(1, d + 1) if j not in chosen]
        fixed = reader.numbers("mixed", "fixed_boundary", block.get("fixed_boundary"))
        if len(fixed) != len(rest):
            reader.fail(f"mixed.fixed_boundary needs {len(rest)} values (components {rest})",
                        "mixed.fixed_boundary")
        cfg.blowup_set = [i - 1 for i in chosen]
        cfg.fixed_boundary = {j - 1: v for j, v in zip(rest, fixed)}
        for i in cfg.blowup_set:
            _require_ko(cfg.system.lower_bounds[i], p, reader, "system.lower_bounds")
    if command in ("entire",) or (command == "verify" and "entire" in doc):
        cfg.entire = _parse_entire(doc, reader, cfg)
    if command == "verify":
        cfg.verify = _parse_verify(doc, reader, cfg)
    return cfg


def _parse_entire(doc, reader, cfg):
    block = doc.get("entire", {})
    out = {}
    out["N"] = reader.number("entire", "ambient_dim", block.get("ambient_dim", 3), integer=True)
    if out["N"] < 2:
        reader.fail("entire.ambient_dim must be at least 2", "entire.ambient_dim")
    radii = reader.numbers("entire", "ball_radii", block.get("ball_radii", [2.0, 4.0, 8.0]))
    if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
        reader.fail("entire.ball_radii must be positive and increasing", "entire.ball_radii")
    out["ball_radii"] = radii
    res = reader.number("entire", "resolution", block.get("resolution", 50), positive=True, integer=True)
    for R in radii:
        if abs(res * R - round(res * R)) > 1e-9 * max(1.0, res * R):
            reader.fail("resolution * radius must be an integer for every ball so the grids nest",
                        "entire.resolution")
    out["resolution"] = res
    out["R_max"] = reader.number("entire", "R_max", block.get("R_max", max(radii)), positive=True)
    out["profile_points"] = reader.number("entire", "profile_points", block.get("profile_points", 2001),
                                          positive=True, integer=True)
    out["growth_threshold"] = reader.number("entire", "growth_threshold", block.get("growth_threshold", 5.0))
    if cfg.system is None:
        reader.fail("'entire' needs [system] or nonlinearity", "system")
    g = block.get("g")
    try:
        out["g"] = parse_nonlinearity(g) if g is not None else cfg.system.upper_bound
    except LabError as exc:
        reader.fail(str(exc), "entire.g")
    try:
        phi_transform(out["g"], cfg.p, 1.0)
    except LabError as exc:
        reader.fail(f"transform precondition fails: {exc}", "entire.g" if g is not None else "system.upper_bound")
    coords = np.linspace(0.0, out["R_max"], 17)
    for i, w in enumerate(cfg.system.weights or []):
        vals = np.asarray(w(coords), dtype=float) + 0.0 * coords
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            reader.fail(f"weight {i + 1} must be positive and finite on [0, R_max]", "system.weights")
    return out


def _parse_verify(doc, reader, cfg):
    block = doc["verify"]
    out = {"check": block.get("check")}
    if out["check"] not in ("subsolution", "comparison", "psi", "w"):
        reader.fail("verify.check must be subsolution, comparison, psi or w", "verify.check")
    out["side"] = block.get("side", "sub")
    if out["side"] not in ("sub", "super"):
        reader.fail("verify.side must be 'sub' or 'super'", "verify.side")
    out["tol"] = reader.number("verify", "tol", block.get("tol", 1e-8), positive=True)
    out["scale"] = reader.number("verify", "scale", block.get("scale", 1.0), positive=True)
    if out["check"] in ("subsolution", "comparison", "psi") and cfg.domain is None:
        reader.fail(f"verify check '{out['check']}' needs [domain]", "domain")
    if out["check"] == "w" and not cfg.entire:
        reader.fail("verify check 'w' needs [entire]", "entire")
    names = _coordinate_names(cfg.domain, "verify")
    for key in ("fields", "compare"):
        if key in block:
            srcs = reader.strings("verify", key, block[key])
            try:
                out[key] = [Expression(s, names) for s in srcs]
            except LabError as exc:
                reader.fail(str(exc), f"verify.{key}")
    if out["check"] == "subsolution" and "fields" not in out:
        reader.fail("verify.fields is required for a subsolution check", "verify.fields")
    if out["check"] == "comparison" and not ("fields" in out and "compare" in out):
        reader.fail("a comparison check needs verify.fields and verify.compare", "verify.compare")
    if "boundary" in block:
        out["boundary"] = reader.numbers("verify", "boundary", block["boundary"])
    elif out["check"] == "psi":
        reader.fail("verify check 'psi' needs verify.boundary (the constant data)", "verify.boundary")
    return out
