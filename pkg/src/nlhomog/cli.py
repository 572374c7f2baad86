"""Command line interface.

Exit codes: 0 when every pass flag is true, 1 when a criterion fails,
2 on configuration or runtime errors.
"""

from __future__ import annotations

import dataclasses
import math
import sys
import time

import click

from .config import ENV_OUT_DIR, ENV_THREADS, parse_config
from .errors import ConfigError, PreconditionError, RefusalError, SolveError
from .kernels import validate_hypotheses
from .report import write_report
from .scenarios import run as run_scenario
from .version import VERSION


class _CliError(click.ClickException):
    exit_code = 2


def _load(config_path: str):
    try:
        return parse_config(config_path)
    except ConfigError as exc:
        raise _CliError(str(exc)) from exc


@click.group()
@click.version_option(VERSION, prog_name="nlhomog")
def main():
    """Nonlocal two-phase diffusion laboratory.

    Environment variables: NLHOMOG_OUT overrides the output directory,
    NLHOMOG_THREADS overrides the worker count.
    """


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Configuration file (JSON).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
              help="Report format; defaults to the config's output.format.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help=f"Output directory; env {ENV_OUT_DIR} also applies.")
@click.option("--seed", type=click.IntRange(min=0), default=None,
              help="Master seed override (replaces partition and MC seeds).")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help=f"Parallel sweep workers; env {ENV_THREADS} also applies.")
def run_cmd(config_path, fmt, out_dir, seed, threads):
    """Run a scenario and write its report."""
    spec = _load(config_path)
    if seed is not None:
        spec = dataclasses.replace(spec, mc_seed=seed, partition_seed=seed)
    if threads is not None:
        spec = dataclasses.replace(spec, threads=threads)
    if out_dir is not None:
        spec = dataclasses.replace(spec, out_dir=out_dir)
    if fmt is not None:
        spec = dataclasses.replace(spec, out_format=fmt)
    started = time.perf_counter()
    try:
        report = run_scenario(spec)
    except (PreconditionError, RefusalError, SolveError, ConfigError) as exc:
        raise _CliError(str(exc)) from exc
    elapsed = time.perf_counter() - started
    files = write_report(report, spec.out_format, spec.out_dir)
    for crit in report.criteria:
        status = "PASS" if crit["passed"] else "FAIL"
        click.echo(f"[{status}] {crit['name']}: {crit['detail']}")
    click.echo(f"report: {', '.join(str(p) for p in files)}")
    click.echo(f"wall-clock: {elapsed:.2f}s (not part of the report)", err=True)
    if not report.all_pass:
        sys.exit(1)


@main.command("validate")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Configuration file (JSON).")
def validate_cmd(config_path):
    """Validate a configuration file without running anything."""
    spec = _load(config_path)
    click.echo(f"configuration OK: scenario={spec.scenario}, grid m={spec.m} dim={spec.dim}")


@main.group("kernels")
def kernels_group():
    """Kernel-level checks."""


@kernels_group.command("check")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Configuration file (JSON).")
def kernels_check_cmd(config_path):
    """Validate the configured kernels against the structural hypotheses.

    The validation grid is padded far enough to cover every compact kernel
    support, so the unit-mass property can actually be quantified by
    quadrature.  Tabulated kernels are checked on their own grid.
    """
    spec = _load(config_path)
    pad_cells = spec.pad_cells
    if not any(ks["kind"] == "tabulated" for ks in spec.kernel_specs.values()):
        radii = [ks["delta"] for ks in spec.kernel_specs.values() if "delta" in ks]
        if radii:
            pad_cells = max(pad_cells, math.ceil(max(radii) * spec.m) + 1)
    g = dataclasses.replace(spec, pad_cells=pad_cells).build_grid()
    try:
        kernels = spec.build_kernels(g)
    except (ConfigError, PreconditionError) as exc:
        raise _CliError(str(exc)) from exc
    tol = spec.tol("kernel_norm")
    all_ok = True
    for k in kernels:
        rep = validate_hypotheses(k, g, tol)
        all_ok &= rep.all_ok
        status = "PASS" if rep.all_ok else "FAIL"
        click.echo(
            f"[{status}] kernel {rep.label} ({rep.kind}, {rep.norm_mode}): "
            f"nonneg={rep.nonnegative} diag>0={rep.diagonal_positive} "
            f"symmetric={rep.symmetric} normalized={rep.normalized} "
            f"worst={rep.worst_violation:.3e} c0={rep.c0:.3e}@rho={rep.positivity_rho:.3g}"
        )
    if not all_ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
