"""Numerical and stochastic laboratory for nonlocal diffusion across an
oscillating two-phase partition: finite-scale solves, the homogenized limit
system, corrector studies, and a jump-process Monte Carlo cross-check."""

from .assembly import (
    LimitOperator,
    OperatorMatrix,
    assemble_dirichlet,
    assemble_limit_system,
    assemble_neumann,
    dirichlet_form,
    dump_matrix,
    energy,
    min_rayleigh,
)
from .config import ExperimentSpec, normalize_config, parse_config
from .errors import ConfigError, PreconditionError, RefusalError, SolveError
from .grid import Field, Grid, build_grid, mean, project_mean_zero
from .kernels import (
    DomainKernel,
    Kernel,
    TabulatedKernel,
    constant_kernel,
    evaluate,
    gaussian_kernel,
    load_tabulated_csv,
    normalize_on_domain,
    tent_kernel,
    validate_hypotheses,
)
from .partitions import PartitionFamily, indicator, partition_family, weak_star_gap
from .report import Report, write_report
from .scenarios import run
from .solve import (
    LimitPair,
    SolveResult,
    combined_residual,
    corrector_error,
    corrector_field,
    solve_dirichlet,
    solve_limit_pair,
    solve_neumann,
)
from .stochastic import (
    McConfig,
    PathStats,
    build_chain,
    estimate_u_dirichlet,
    estimate_u_neumann,
    invariant_measure_check,
    q_inf,
    step,
)
from .version import VERSION as __version__

__all__ = [
    "ConfigError", "DomainKernel", "ExperimentSpec", "Field", "Grid",
    "Kernel", "LimitOperator", "LimitPair", "McConfig", "OperatorMatrix",
    "PartitionFamily", "PathStats", "PreconditionError", "RefusalError",
    "Report", "SolveError", "SolveResult", "TabulatedKernel",
    "assemble_dirichlet", "assemble_limit_system", "assemble_neumann",
    "build_chain", "build_grid", "combined_residual", "constant_kernel",
    "corrector_error", "corrector_field", "dirichlet_form", "dump_matrix",
    "energy", "estimate_u_dirichlet", "estimate_u_neumann", "evaluate",
    "gaussian_kernel", "indicator", "invariant_measure_check",
    "load_tabulated_csv", "mean", "min_rayleigh", "normalize_config",
    "normalize_on_domain", "parse_config", "partition_family",
    "project_mean_zero", "q_inf", "run", "solve_dirichlet",
    "solve_limit_pair", "solve_neumann", "step", "tent_kernel",
    "validate_hypotheses", "weak_star_gap", "write_report",
]
