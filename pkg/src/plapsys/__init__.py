"""Numerical laboratory for quasilinear p-Laplacian systems.

Modules: ``nonlinearity`` (admissible reaction terms, Keller-Osserman test,
the transform Phi), ``grid`` (domains and grid functions), ``plap``
(discrete operator, energy and Dirichlet solvers), ``construct`` (boundary
blow-up escalation and barriers), ``entire`` (radial entire solutions by
ball exhaustion) and ``cli``.
"""

from .construct import (
    EscalationSchedule,
    barrier_check,
    barrier_mu,
    escalate_blowup,
    escalate_mixed,
    fit_boundary_rate,
)
from .entire import (
    ball_exhaustion,
    build_subsolution_w,
    radial_upper_solution,
    verify_large_at_infinity,
)
from .grid import DomainSpec, GridFunction, build_grid
from .nonlinearity import (
    class_f_validate,
    keller_osserman_check,
    parse_nonlinearity,
    phi_invert,
    phi_transform,
    power,
)
from .plap import (
    SolverOptions,
    SystemSpec,
    apply_p_laplacian,
    discrete_energy,
    solve_dirichlet_scalar,
    solve_dirichlet_system,
    verify_comparison,
    verify_subsolution,
)

__version__ = "0.1.0"
