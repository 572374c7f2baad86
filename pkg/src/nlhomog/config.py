"""Experiment configuration: strict JSON schema, defaults, and builders.

Configurations are UTF-8 JSON.  Unknown keys are errors, not warnings, and
every error names the offending key.  The parsed spec carries builders for
the grid, kernels, partition family and load so scenario code stays thin.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import Field, Grid, build_grid, mean, project_mean_zero
from .kernels import (
    constant_kernel,
    gaussian_kernel,
    load_tabulated_csv,
    tent_kernel,
)
from .partitions import PARTITION_KINDS, PartitionFamily, partition_family
from .stochastic import McConfig

SCENARIOS = (
    "solve-neumann",
    "solve-dirichlet",
    "limit-system",
    "convergence-study",
    "corrector-study",
    "extreme-case",
    "mc-verify",
    "spectral-sweep",
)

EXTREME_CASES = ("X0", "X1", "dirichlet-X1")

DEFAULT_TOLERANCES = {
    "residual": 1e-10,
    "symmetry": 1e-12,
    "row_sum": 1e-10,
    "kernel_norm": 1e-3,
    "weak_gap_step_slack": 1.2,
    "decay_ratio": 0.25,
    "z_max": 3.0,
    "stat_level": 1e-3,
    "lambda_drop": 0.9,
    "null_norm": 1e-3,
    "capped_fraction": 0.01,
}

DEFAULT_N_LIST = (2, 4, 8, 16, 32)

ENV_OUT_DIR = "NLHOMOG_OUT"
ENV_THREADS = "NLHOMOG_THREADS"


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description with defaults filled in."""

    scenario: str
    dim: int
    m: int
    pad_cells: int
    partition_kind: str
    x_spec: object
    partition_seed: int
    kernel_specs: dict
    f_name: str
    f_path: str | None
    n_list: tuple[int, ...]
    bc: str
    extreme_case: str | None
    mc_paths: int
    mc_seed: int
    mc_horizon: float | None
    mc_max_jumps: int | None
    mc_start_nodes: tuple[int, ...]
    out_dir: str
    out_format: str
    threads: int
    tolerances: dict = field(default_factory=dict)
    base_dir: str = "."

    # -- builders -----------------------------------------------------------

    def build_grid(self) -> Grid:
        return build_grid(self.dim, self.m, self.pad_cells)

    def x_field(self, g: Grid) -> Field:
        return _x_field(self.x_spec, g)

    def build_partition(self, g: Grid) -> PartitionFamily:
        return partition_family(self.partition_kind, self.x_field(g), seed=self.partition_seed)

    def build_kernels(self, g: Grid):
        return tuple(
            _build_kernel(label, self.kernel_specs[label], g, self.base_dir)
            for label in ("J", "R", "G")
        )

    def build_f(self, g: Grid) -> tuple[Field, float]:
        """Load field and, for Neumann scenarios, the mean that was removed."""
        f = _build_f(self.f_name, self.f_path, g, self.base_dir)
        if self.bc == "neumann":
            removed = mean(f)
            return project_mean_zero(f), removed
        return f, 0.0

    def mc_config(self, g: Grid, mode: str) -> McConfig:
        starts = self.mc_start_nodes or _default_start_nodes(g)
        return McConfig(
            paths=self.mc_paths,
            seed=self.mc_seed,
            horizon=self.mc_horizon,
            max_jumps=self.mc_max_jumps,
            start_nodes=starts,
            mode=mode,
        )

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def echo(self) -> dict:
        """Canonical dictionary form (used for provenance and hashing)."""
        return {
            "scenario": self.scenario,
            "grid": {"dim": self.dim, "m": self.m, "pad_cells": self.pad_cells},
            "partition": {
                "kind": self.partition_kind,
                "x": self.x_spec,
                "seed": self.partition_seed,
            },
            "kernels": self.kernel_specs,
            "f": {"name": self.f_name, "path": self.f_path},
            "n_list": list(self.n_list),
            "bc": self.bc,
            "extreme": self.extreme_case,
            "mc": {
                "paths": self.mc_paths,
                "seed": self.mc_seed,
                "horizon": self.mc_horizon,
                "max_jumps": self.mc_max_jumps,
                "start_nodes": list(self.mc_start_nodes),
            },
            "output": {"dir": self.out_dir, "format": self.out_format},
            "threads": self.threads,
            "tolerances": dict(sorted(self.tolerances.items())),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _default_start_nodes(g: Grid) -> tuple[int, ...]:
    n = g.n_interior
    return tuple(sorted({(k * n) // 6 for k in range(1, 6)}))


def _x_field(x_spec, g: Grid) -> Field:
    if isinstance(x_spec, (int, float)):
        return g.field(float(x_spec))
    name = x_spec["name"]
    if name == "ramp":
        lo, hi = float(x_spec["lo"]), float(x_spec["hi"])
        vals = np.clip(lo + (hi - lo) * g.nodes[:, 0], 0.0, 1.0)
        return g.field(vals)
    raise ConfigError(f"unknown x form {name!r}")


def _build_kernel(label: str, spec: dict, g: Grid, base_dir: str):
    kind = spec["kind"]
    if kind == "constant":
        return constant_kernel(spec.get("amplitude", 1.0), dim=g.dim, label=label)
    if kind == "tent":
        return tent_kernel(spec["delta"], dim=g.dim, label=label)
    if kind == "gaussian_truncated":
        return gaussian_kernel(spec["delta"], dim=g.dim, sigma=spec.get("sigma"), label=label)
    if kind == "tabulated":
        return load_tabulated_csv(Path(base_dir) / spec["path"], g, label=label)
    raise ConfigError(f"unknown kernel kind {kind!r} for kernel {label}")


def _build_f(name: str, path: str | None, g: Grid, base_dir: str) -> Field:
    pts = g.nodes[g.interior]
    if name == "f1":
        return g.interior_field(pts[:, 0] - 0.5)
    if name == "f2":
        return g.interior_field(np.cos(2.0 * np.pi * pts[:, 0]))
    if name == "tabulated":
        vals = np.loadtxt(Path(base_dir) / str(path), delimiter=",", skiprows=1, usecols=1)
        return g.interior_field(np.asarray(vals, dtype=float))
    raise ConfigError(f"unknown load name {name!r}")


# -- schema validation -------------------------------------------------------


def _require_keys(block: dict, allowed: set[str], path: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}{key}'")


def _expect(block: dict, key: str, types, path: str, default=None, required=False):
    if key not in block:
        if required:
            raise ConfigError(f"missing required key '{path}{key}'")
        return default
    value = block[key]
    if value is None and not required:
        return default
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"key '{path}{key}' expects {names}, got {type(value).__name__}")
    return value


def _validate_kernel_spec(label: str, spec, path: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"key {path!r} expects an object")
    kind = _expect(spec, "kind", str, path + ".", required=True)
    allowed = {
        "constant": {"kind", "amplitude"},
        "tent": {"kind", "delta"},
        "gaussian_truncated": {"kind", "delta", "sigma"},
        "tabulated": {"kind", "path"},
    }
    if kind not in allowed:
        raise ConfigError(f"unknown kernel kind {kind!r} at {path}")
    _require_keys(spec, allowed[kind], path + ".")
    if kind == "constant":
        amp = _expect(spec, "amplitude", (int, float), path + ".", default=1.0)
        if amp < 0:
            raise ConfigError(f"key {path}.amplitude must be nonnegative")
        return {"kind": kind, "amplitude": float(amp)}
    if kind == "tabulated":
        return {"kind": kind, "path": _expect(spec, "path", str, path + ".", required=True)}
    delta = _expect(spec, "delta", (int, float), path + ".", required=True)
    if delta <= 0:
        raise ConfigError(f"key {path}.delta must be positive")
    out = {"kind": kind, "delta": float(delta)}
    if kind == "gaussian_truncated":
        sigma = _expect(spec, "sigma", (int, float), path + ".")
        if sigma is not None:
            if sigma <= 0:
                raise ConfigError(f"key {path}.sigma must be positive")
            out["sigma"] = float(sigma)
    return out


def _validate_x(x, path: str):
    if isinstance(x, bool):
        raise ConfigError(f"key {path} expects a number in [0, 1] or an object")
    if isinstance(x, (int, float)):
        if not 0.0 <= float(x) <= 1.0:
            raise ConfigError(f"key {path} must lie in [0, 1], got {x}")
        return float(x)
    if isinstance(x, dict):
        _require_keys(x, {"name", "lo", "hi"}, path + ".")
        name = _expect(x, "name", str, path + ".", required=True)
        if name != "ramp":
            raise ConfigError(f"unknown x form {name!r} at {path}")
        lo = _expect(x, "lo", (int, float), path + ".", required=True)
        hi = _expect(x, "hi", (int, float), path + ".", required=True)
        for v, k in ((lo, "lo"), (hi, "hi")):
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"key {path}.{k} must lie in [0, 1]")
        return {"name": "ramp", "lo": float(lo), "hi": float(hi)}
    raise ConfigError(f"key {path} expects a number or an object")


def parse_config(path) -> ExperimentSpec:
    """Read, validate and normalize a configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return normalize_config(raw, base_dir=str(path.parent))


def normalize_config(raw: dict, base_dir: str = ".") -> ExperimentSpec:
    """Validate a raw configuration dictionary and fill defaults."""
    top_allowed = {
        "scenario", "grid", "partition", "kernels", "f", "n_list", "bc",
        "extreme", "mc", "output", "tolerances", "threads",
    }
    _require_keys(raw, top_allowed, "")
    scenario = _expect(raw, "scenario", str, "", required=True)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")

    grid_block = _expect(raw, "grid", dict, "", required=True)
    _require_keys(grid_block, {"dim", "m", "pad_cells"}, "grid.")
    dim = _expect(grid_block, "dim", int, "grid.", required=True)
    m = _expect(grid_block, "m", int, "grid.", required=True)
    pad_cells = _expect(grid_block, "pad_cells", int, "grid.", default=0)

    part_block = _expect(raw, "partition", dict, "", default={})
    _require_keys(part_block, {"kind", "x", "seed"}, "partition.")
    kind = _expect(part_block, "kind", str, "partition.", default="stripes")
    if kind not in PARTITION_KINDS:
        raise ConfigError(f"unknown partition kind {kind!r}")
    x_spec = _validate_x(part_block.get("x", 0.5), "partition.x")
    part_seed = _expect(part_block, "seed", int, "partition.", default=0)

    kern_block = _expect(raw, "kernels", dict, "", required=True)
    _require_keys(kern_block, {"J", "R", "G"}, "kernels.")
    kernel_specs = {}
    for label in ("J", "R", "G"):
        if label not in kern_block:
            raise ConfigError(f"missing required key 'kernels.{label}'")
        kernel_specs[label] = _validate_kernel_spec(label, kern_block[label], f"kernels.{label}")

    f_block = _expect(raw, "f", dict, "", default={"name": "f1"})
    _require_keys(f_block, {"name", "path"}, "f.")
    f_name = _expect(f_block, "name", str, "f.", default="f1")
    if f_name not in ("f1", "f2", "tabulated"):
        raise ConfigError(f"unknown load name {f_name!r}")
    f_path = _expect(f_block, "path", str, "f.")
    if f_name == "tabulated":
        if not f_path:
            raise ConfigError("tabulated load needs key 'f.path'")
        if not (Path(base_dir) / f_path).exists():
            raise ConfigError(f"load table {f_path!r} does not exist")
    for label, kspec in kernel_specs.items():
        if kspec["kind"] == "tabulated" and not (Path(base_dir) / kspec["path"]).exists():
            raise ConfigError(f"kernel table {kspec['path']!r} does not exist")

    n_raw = _expect(raw, "n_list", list, "", default=list(DEFAULT_N_LIST))
    n_list = []
    for i, v in enumerate(n_raw):
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"key 'n_list[{i}]' must be a positive integer")
        n_list.append(v)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be strictly increasing")
    if kind in ("stripes", "checkerboard", "random") and n_list and m % max(n_list) != 0:
        raise ConfigError(
            f"m={m} must be divisible by max(n_list)={max(n_list)} for grid-aligned partitions"
        )

    bc = _expect(raw, "bc", str, "", default="neumann")
    if bc not in ("neumann", "dirichlet"):
        raise ConfigError(f"key 'bc' must be 'neumann' or 'dirichlet', got {bc!r}")

    extreme_block = _expect(raw, "extreme", dict, "", default=None)
    extreme_case = None
    if extreme_block is not None:
        _require_keys(extreme_block, {"case"}, "extreme.")
        extreme_case = _expect(extreme_block, "case", str, "extreme.", required=True)
        if extreme_case not in EXTREME_CASES:
            raise ConfigError(f"unknown extreme case {extreme_case!r}; expected one of {EXTREME_CASES}")
    if scenario == "extreme-case" and extreme_case is None:
        raise ConfigError("scenario 'extreme-case' needs key 'extreme.case'")

    # Scenario-implied boundary modes win over the bc key.
    if scenario == "solve-neumann":
        bc = "neumann"
    elif scenario == "solve-dirichlet":
        bc = "dirichlet"
    elif extreme_case == "dirichlet-X1":
        bc = "dirichlet"
    elif extreme_case in ("X0", "X1"):
        bc = "neumann"
    if bc == "dirichlet" and pad_cells < 1:
        raise ConfigError("Dirichlet scenarios need grid.pad_cells >= 1")
    if scenario == "mc-verify" and pad_cells < 1:
        raise ConfigError("mc-verify exercises both boundary modes and needs grid.pad_cells >= 1")

    mc_block = _expect(raw, "mc", dict, "", default={})
    _require_keys(mc_block, {"paths", "seed", "horizon", "max_jumps", "start_nodes"}, "mc.")
    mc_paths = _expect(mc_block, "paths", int, "mc.", default=10_000)
    if mc_paths < 1:
        raise ConfigError("key 'mc.paths' must be >= 1")
    if scenario == "mc-verify" and mc_paths < 1600:
        raise ConfigError(
            "mc-verify needs mc.paths >= 1600 so the path-quadrupling ladder "
            "keeps at least 100 paths per rung"
        )
    mc_seed = _expect(mc_block, "seed", int, "mc.", default=20_240_808)
    mc_horizon = _expect(mc_block, "horizon", (int, float), "mc.")
    mc_max_jumps = _expect(mc_block, "max_jumps", int, "mc.")
    starts_raw = _expect(mc_block, "start_nodes", list, "mc.", default=[])
    start_nodes = []
    for i, v in enumerate(starts_raw):
        if not isinstance(v, int) or v < 0:
            raise ConfigError(f"key 'mc.start_nodes[{i}]' must be a nonnegative integer")
        start_nodes.append(v)

    out_block = _expect(raw, "output", dict, "", default={})
    _require_keys(out_block, {"dir", "format"}, "output.")
    out_dir = _expect(out_block, "dir", str, "output.", default="out")
    out_format = _expect(out_block, "format", str, "output.", default="json")
    if out_format not in ("csv", "json"):
        raise ConfigError(f"key 'output.format' must be 'csv' or 'json', got {out_format!r}")

    tol_block = _expect(raw, "tolerances", dict, "", default={})
    for key, value in tol_block.items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown key 'tolerances.{key}'")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"key 'tolerances.{key}' expects a number")

    threads = _expect(raw, "threads", int, "", default=1)
    if threads < 1:
        raise ConfigError("key 'threads' must be >= 1")

    env_threads = os.environ.get(ENV_THREADS)
    if env_threads:
        try:
            threads = max(1, int(env_threads))
        except ValueError as exc:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env_threads!r}") from exc
    env_out = os.environ.get(ENV_OUT_DIR)
    if env_out:
        out_dir = env_out

    if dim == 2 and m > 64:
        raise ConfigError("2D grids are capped at m=64 at desk scale")

    return ExperimentSpec(
        scenario=scenario,
        dim=dim,
        m=m,
        pad_cells=pad_cells,
        partition_kind=kind,
        x_spec=x_spec,
        partition_seed=part_seed,
        kernel_specs=kernel_specs,
        f_name=f_name,
        f_path=f_path,
        n_list=tuple(n_list),
        bc=bc,
        extreme_case=extreme_case,
        mc_paths=mc_paths,
        mc_seed=mc_seed,
        mc_horizon=float(mc_horizon) if mc_horizon is not None else None,
        mc_max_jumps=mc_max_jumps,
        mc_start_nodes=tuple(start_nodes),
        out_dir=out_dir,
        out_format=out_format,
        threads=threads,
        tolerances={k: float(v) for k, v in tol_block.items()},
        base_dir=base_dir,
    )
