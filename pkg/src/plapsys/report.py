"""Serialization of reports and traces to CSV and plain-text summaries.

Output is deterministic: floats are written with ``repr``, keys in a fixed
order, and the manifest lists every file with its SHA-256 digest.
"""

import hashlib
from pathlib import Path

import numpy as np

from .construct import EscalationTrace
from .entire import EntireTrace, LargeAtInfinityReport
from .nonlinearity import KellerOssermanVerdict
from .plap import ComparisonReport, SolveReport, SubsolutionReport

MANIFEST = "manifest.txt"


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}: {_fmt(v)}" for k, v in value.items()) + "}"
    return str(value)


def summary_text(items):
    """``key = value`` lines in the given order."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _solve_files(rep, prefix=""):
    files = {}
    for i, u in enumerate(rep.solution):
        files[f"{prefix}solution_{i + 1}.csv"] = u.to_csv()
    return files


def _solve_summary(rep):
    diag = {k: v for k, v in rep.diagnostics.items() if not hasattr(v, "values")}
    return [
        ("converged", rep.converged), ("iterations", rep.iterations),
        ("residual_sup", rep.residual_sup), ("regularization_eps", rep.regularization_eps),
        ("energy_initial", rep.energy_trace[0]), ("energy_final", rep.energy_trace[-1]),
    ] + sorted(diag.items())


def _files_for_solve(rep):
    files = _solve_files(rep)
    files["energy_trace.csv"] = csv_text(["iteration", "merit"], list(enumerate(rep.energy_trace)))
    files["summary.txt"] = summary_text([("artifact", "solve")] + _solve_summary(rep))
    return files


def _files_for_escalation(trace):
    files = {}
    d = len(trace.limit_fields)
    for k, (b, rep) in enumerate(trace.levels):
        files.update(_solve_files(rep, prefix=f"level_{k:02d}_"))
    header = ["level", "boundary_value", "core_delta", "residual_sup"]
    for i in range(d):
        header += [f"A_{i + 1}", f"beta_{i + 1}"]
    rows = []
    for k, (b, rep) in enumerate(trace.levels):
        row = [k, b, trace.core_deltas[k - 1] if k > 0 else None, rep.residual_sup]
        for fit in trace.level_fits[k]:
            row += [None, None] if fit is None else [fit.A, fit.beta]
        rows.append(row)
    files["escalation_summary.csv"] = csv_text(header, rows)
    ring = csv_text(["level"] + [f"ring_max_{i + 1}" for i in range(d)],
                    [[k] + list(v) for k, v in enumerate(trace.ring_values)])
    files["ring_values.csv"] = ring
    items = [
        ("artifact", "escalation"), ("levels", len(trace.levels)), ("stabilized", trace.stabilized),
        ("truncated", trace.truncated), ("message", trace.message),
        ("boundary_values", trace.boundary_values), ("core_deltas", trace.core_deltas),
        ("ring_growth", trace.ring_growth),
        ("min_monotone_margin", min(trace.monotone_margins) if trace.monotone_margins else None),
        ("fit_window", list(trace.fit_window)),
    ]
    for i, fit in enumerate(trace.rate_fits):
        if fit is not None:
            items += [(f"A_{i + 1}", fit.A), (f"beta_{i + 1}", fit.beta),
                      (f"fit_residual_{i + 1}", fit.residual), (f"fit_nodes_{i + 1}", fit.n_nodes)]
    if trace.blowup_set is not None:
        items += [("blowup_set", [i + 1 for i in trace.blowup_set]),
                  ("fixed_boundary", {j + 1: a for j, a in trace.fixed_boundary.items()}),
                  ("fixed_excess", trace.fixed_excess), ("fixed_ok", trace.fixed_ok),
                  ("ring_deviation", trace.ring_deviation)]
    files["summary.txt"] = summary_text(items)
    return files


def _files_for_entire(trace, verdict=None):
    files = {}
    z, w = trace.z_profile, trace.w_profile
    files["profile.csv"] = csv_text(["r", "z", "w"], zip(z.radii.tolist(), z.values.tolist(), w.values.tolist()))
    rows = []
    for k, (R, rep) in enumerate(zip(trace.ball_radii, trace.per_ball)):
        grid = trace.grids[k]
        r = grid.nodes[:, 0]
        U = rep.values
        zr = np.asarray(z(r), dtype=float)
        header = ["r", "z", "w"] + [f"u_{i + 1}" for i in range(U.shape[0])]
        cols = [r, zr, trace.w_fields[k].values] + list(U)
        files[f"ball_{k:02d}.csv"] = csv_text(header, zip(*[c.tolist() for c in cols]))
        first = trace.nested_core_deltas.get(trace.ball_radii[0], [])
        core = first[k - 1] if 0 < k <= len(first) else None
        gap = trace.lower_margins[k] if k < len(trace.lower_margins) else None
        rows.append([R, trace.w_n[k], gap, core])
    files["exhaustion_summary.csv"] = csv_text(["ball_radius", "w_n", "min_gap", "core_delta"], rows)
    items = [
        ("artifact", "entire"), ("ball_radii", trace.ball_radii), ("accepted", trace.accepted),
        ("lower_bound_ok", trace.lower_bound_ok), ("w_n", trace.w_n),
        ("min_gap", trace.lower_margins), ("upper_excess", trace.upper_excess),
        ("converged", [r.converged for r in trace.per_ball]),
        ("roundtrip_error", trace.roundtrip_error), ("z_decay_verified", z.decay_verified),
        ("z_flux_residual", z.diagnostics.get("flux_residual")),
        ("z_tail_exponent", z.diagnostics.get("tail_exponent")),
        ("nested_core_deltas", {k: v for k, v in trace.nested_core_deltas.items()}),
        ("truncated", trace.truncated), ("message", trace.message),
    ]
    if verdict is not None:
        items += [("large_at_infinity", verdict.verdict), ("outer_radius", verdict.radius),
                  ("u_min_outer", verdict.u_min), ("w_outer", verdict.w_value),
                  ("growth_threshold", verdict.threshold), ("w_divergence", verdict.w_divergence)]
    files["summary.txt"] = summary_text(items)
    return files


def _files_for_ko(verdict):
    items = [("artifact", "ko-check"), ("converges", verdict.converges),
             ("tail_exponent", verdict.tail_exponent), ("integral_estimate", verdict.integral_estimate),
             ("tail_bound", verdict.tail_bound), ("estimate_total", verdict.total),
             ("boundary_case", verdict.boundary_case), ("t_max", verdict.t_max)]
    return {"summary.txt": summary_text(items)}


def _files_for_verification(rep):
    if isinstance(rep, SubsolutionReport):
        rows = [[i + 1, c["passed"], c["worst_node"], c["worst_value"], c["failing_nodes"]]
                for i, c in enumerate(rep.components)]
        items = [("artifact", "verify"), ("check", f"{rep.side}solution"), ("passed", rep.passed)]
        return {"verify.csv": csv_text(["component", "passed", "worst_node", "worst_value", "failing_nodes"], rows),
                "summary.txt": summary_text(items)}
    items = [("artifact", "verify"), ("check", "comparison"), ("hypothesis_met", rep.hypothesis_met),
             ("interior_hypothesis", rep.interior_hypothesis), ("boundary_hypothesis", rep.boundary_hypothesis),
             ("conclusion_holds", rep.conclusion_holds), ("worst_node", rep.worst_node),
             ("worst_violation", rep.worst_violation), ("hypothesis_witness", rep.hypothesis_witness)]
    return {"summary.txt": summary_text(items)}


def render_files(artifact, extra=None):
    """Map of file name -> text for any supported report or trace."""
    if isinstance(artifact, SolveReport):
        files = _files_for_solve(artifact)
    elif isinstance(artifact, EscalationTrace):
        files = _files_for_escalation(artifact)
    elif isinstance(artifact, EntireTrace):
        files = _files_for_entire(artifact, extra)
    elif isinstance(artifact, KellerOssermanVerdict):
        files = _files_for_ko(artifact)
    elif isinstance(artifact, (SubsolutionReport, ComparisonReport)):
        files = _files_for_verification(artifact)
    else:
        raise TypeError(f"cannot serialise {type(artifact).__name__}")
    return files


def write_outputs(artifact, directory, extra=None, append_summary=()):
    """Write all files for ``artifact`` into ``directory`` and return the manifest.

    The manifest maps file name to SHA-256 digest and is itself written to
    ``manifest.txt`` (sorted by name).  ``append_summary`` adds
    ``(key, value)`` lines to ``summary.txt``.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = render_files(artifact, extra)
    if append_summary:
        files["summary.txt"] += summary_text(append_summary)
    manifest = {}
    for name in sorted(files):
        data = files[name].encode()
        (out / name).write_bytes(data)
        manifest[name] = hashlib.sha256(data).hexdigest()
    text = "".join(f"{digest}  {name}\n" for name, digest in manifest.items())
    (out / MANIFEST).write_text(text)
    return manifest
