"""Command-line front end: ``plapsys <command> --config PATH [--out DIR] [--quiet]``.

Exit status is 0 on full success, 2 when the run is well formed but does not
reach its goal (non-converged solve, unstabilized escalation, failed
verification), and 1 on errors.
"""

import argparse
import logging
import sys
from pathlib import Path

from .config import COMMANDS, load_config
from .construct import barrier_check, escalate_blowup, escalate_mixed
from .entire import (
    ball_exhaustion,
    build_subsolution_w,
    radial_upper_solution,
    radial_weight_sum,
    verify_large_at_infinity,
)
from .errors import LabError
from .grid import DomainSpec, build_grid
from .nonlinearity import keller_osserman_check
from .plap import (
    max_weight,
    solve_dirichlet_scalar,
    solve_dirichlet_system,
    verify_comparison,
    verify_subsolution,
)
from .report import write_outputs

log = logging.getLogger("plapsys")

OK, ERROR, INCOMPLETE = 0, 1, 2


def _ko(cfg, out):
    verdict = keller_osserman_check(cfg.nonlinearity, cfg.p, **cfg.ko)
    manifest = write_outputs(verdict, out, append_summary=[("nonlinearity", cfg.nonlinearity.label),
                                                           ("p", cfg.p)])
    lines = [f"{cfg.nonlinearity.label}, p={cfg.p:g}: "
             f"{'converges' if verdict.converges else 'diverges'} "
             f"(estimate {verdict.total:.6g}, tail exponent {verdict.tail_exponent:.4g})"]
    return OK, manifest, lines


def _solve(cfg, out):
    grid = build_grid(cfg.domain)
    rep = solve_dirichlet_system(grid, cfg.system, cfg.boundary, cfg.p, cfg.solver)
    manifest = write_outputs(rep, out)
    status = OK if rep.converged and rep.diagnostics.get("sandwich_ok", True) else INCOMPLETE
    lines = [f"converged={rep.converged} iterations={rep.iterations} residual={rep.residual_sup:.3e}"]
    if "sandwich_ok" in rep.diagnostics:
        lines.append(f"sandwich_ok={rep.diagnostics['sandwich_ok']}")
    return status, manifest, lines


def _escalation(cfg, out, mixed):
    grid = build_grid(cfg.domain)
    if mixed:
        trace = escalate_mixed(grid, cfg.system, cfg.p, cfg.blowup_set, cfg.fixed_boundary,
                               cfg.schedule, cfg.solver, cfg.fit_window)
    else:
        trace = escalate_blowup(grid, cfg.system, cfg.p, cfg.schedule, cfg.solver, cfg.fit_window)
    ok, worst, witness = barrier_check(trace, cfg.p)
    extra = [("barrier_ok", ok), ("barrier_worst_ratio", worst), ("barrier_witness", witness)]
    manifest = write_outputs(trace, out, append_summary=extra)
    # the barrier bounds a component only when F_{u_i} >= f_i(u_i) along the
    # solution, which the coupling breaks once the fixed components decay
    good = trace.stabilized and (ok if not mixed else trace.fixed_ok)
    lines = [f"levels={len(trace.levels)} stabilized={trace.stabilized} ring_growth={trace.ring_growth} "
             f"barrier_ok={ok}"]
    for i, fit in enumerate(trace.rate_fits):
        if fit is not None:
            lines.append(f"u{i + 1}: A={fit.A:.6g} beta={fit.beta:.6g} (rms {fit.residual:.2e})")
    if mixed:
        lines.append(f"fixed_ok={trace.fixed_ok} ring_deviation={trace.ring_deviation:.3e}")
    if trace.message:
        lines.append(trace.message)
    return (OK if good else INCOMPLETE), manifest, lines


def _entire(cfg, out):
    e = cfg.entire
    trace = ball_exhaustion(cfg.system, e["g"], cfg.p, e["N"], e["ball_radii"], e["resolution"],
                            cfg.solver, R_max=e["R_max"], profile_points=e["profile_points"])
    verdict = verify_large_at_infinity(trace, e["growth_threshold"])
    manifest = write_outputs(trace, out, extra=verdict)
    lines = [f"accepted={trace.accepted} lower_bound_ok={trace.lower_bound_ok} "
             f"sandwich={'satisfied' if trace.accepted else 'violated'} on {len(trace.per_ball)} balls",
             f"large_at_infinity={verdict.verdict} (u_min={verdict.u_min:.6g}, w={verdict.w_value:.6g})"]
    return (OK if trace.accepted and verdict.verdict else INCOMPLETE), manifest, lines


def _verify(cfg, out):
    v = cfg.verify
    check = v["check"]
    if check == "w":
        e = cfg.entire
        sys_ = cfg.system
        z = radial_upper_solution(radial_weight_sum(sys_), cfg.p, e["N"], e["R_max"], e["profile_points"])
        R = e["ball_radii"][0]
        grid = build_grid(DomainSpec.radial_ball(R, e["N"], int(round(e["resolution"] * R)) + 1))
        zg = grid.evaluate(z)
        w = build_subsolution_w(zg, e["g"], cfg.p).values * v["scale"]
        rep = verify_subsolution(grid, [w] * sys_.d, sys_, cfg.p, v["side"], v["tol"])
    elif check == "psi":
        grid = build_grid(cfg.domain)
        m = float(min(v["boundary"]))
        psi_rep = solve_dirichlet_scalar(grid, cfg.system.upper_bound, m, cfg.p, cfg.solver,
                                         weight=max_weight(cfg.system))
        psi = psi_rep.solution[0].values * v["scale"]
        rep = verify_subsolution(grid, [psi] * cfg.system.d, cfg.system, cfg.p, v["side"], v["tol"])
    elif check == "subsolution":
        grid = build_grid(cfg.domain)
        fields = [grid.evaluate(f).values * v["scale"] for f in v["fields"]]
        if len(fields) == 1 and cfg.system.d > 1:
            fields = fields * cfg.system.d
        rep = verify_subsolution(grid, fields, cfg.system, cfg.p, v["side"], v["tol"],
                                 boundary=v.get("boundary"))
    else:
        grid = build_grid(cfg.domain)
        u = grid.evaluate(v["fields"][0])
        w = grid.evaluate(v["compare"][0])
        rep = verify_comparison(grid, u, w, cfg.p, v["tol"])
    manifest = write_outputs(rep, out, append_summary=[("scale", v["scale"]), ("tol", v["tol"])])
    passed = rep.passed if check != "comparison" else (not rep.hypothesis_met or rep.conclusion_holds)
    lines = [f"check={check} passed={passed}"]
    return (OK if passed else INCOMPLETE), manifest, lines


def run_command(cfg, out=None, quiet=False):
    """Dispatch ``cfg`` and write its outputs; returns the exit status."""
    out = Path(out) if out is not None else Path("out") / cfg.command
    try:
        if cfg.command == "ko-check":
            status, manifest, lines = _ko(cfg, out)
        elif cfg.command == "solve":
            status, manifest, lines = _solve(cfg, out)
        elif cfg.command in ("blowup", "mixed"):
            status, manifest, lines = _escalation(cfg, out, cfg.command == "mixed")
        elif cfg.command == "entire":
            status, manifest, lines = _entire(cfg, out)
        else:
            status, manifest, lines = _verify(cfg, out)
    except LabError as exc:
        print(f"error: {exc.render()}", file=sys.stderr)
        return ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    if not quiet:
        for line in lines:
            print(line)
        print(f"wrote {len(manifest)} files to {out}")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="plapsys", description="p-Laplacian systems laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (default out/<command>)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command)
    except LabError as exc:
        print(f"error: {exc.render()}", file=sys.stderr)
        return ERROR
    return run_command(cfg, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
