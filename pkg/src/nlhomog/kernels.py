"""Symmetric nonnegative interaction kernels and their hypothesis checks.

Three analytic shapes are built in: a flat kernel, a compactly supported
tent, and a truncated Gaussian shifted to vanish continuously at its
truncation radius (plain truncation would introduce a jump).  Tent and
Gaussian kernels are normalized to unit mass over the ambient space by
construction; the flat kernel has no finite ambient mass and is quantified
against the padded box it is used on.  A per-row rescaling produces the
domain-normalized variant whose quadrature row sums over the box equal one,
at the price of losing symmetry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError, PreconditionError, SolveError
from .grid import Grid

KERNEL_KINDS = ("constant", "tent", "gaussian_truncated", "tabulated")


@dataclass(frozen=True)
class Kernel:
    """Radial two-point kernel V(x, y) = profile(|x - y|).

    All analytic kinds are convolution-type (they depend on x - y only),
    symmetric by construction, and positive at the diagonal.
    """

    kind: str
    dim: int
    label: str = ""
    delta: float = np.inf
    amplitude: float = 1.0
    sigma: float = 0.0
    norm_mode: str = "ambient"

    @property
    def is_convolution(self) -> bool:
        return True

    @property
    def support_radius(self) -> float:
        return self.delta

    def _profile(self, r: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(r, self.amplitude)
        if self.kind == "tent":
            return self.amplitude * np.maximum(0.0, 1.0 - r / self.delta)
        if self.kind == "gaussian_truncated":
            rim = np.exp(-self.delta**2 / (2.0 * self.sigma**2))
            core = np.exp(-(r**2) / (2.0 * self.sigma**2)) - rim
            return self.amplitude * np.where(r <= self.delta, np.maximum(core, 0.0), 0.0)
        raise ConfigError(f"unknown kernel kind {self.kind!r}")

    def pairwise(self, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
        """Kernel values for every pair of rows of xa and xb."""
        diff = xa[:, None, :] - xb[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        return self._profile(r)

    def evaluate(self, x, y) -> float:
        xa = np.atleast_2d(np.asarray(x, dtype=float))
        xb = np.atleast_2d(np.asarray(y, dtype=float))
        return float(self.pairwise(xa, xb)[0, 0])

    def positivity_radius(self) -> tuple[float, float]:
        """Return (c0, rho) with V >= c0 > 0 on |x - y| <= rho."""
        if self.kind == "constant":
            return self.amplitude, np.inf
        rho = self.delta / 2.0
        c0 = float(self._profile(np.asarray([rho]))[0])
        return c0, rho


def constant_kernel(amplitude: float = 1.0, dim: int = 1, label: str = "") -> Kernel:
    """Flat kernel V = amplitude everywhere (infinite support).

    Amplitude zero is allowed so degenerate no-interaction cases can be
    studied; such a kernel fails the diagonal-positivity hypothesis.
    """
    if amplitude < 0:
        raise ConfigError("constant kernel needs a nonnegative amplitude")
    return Kernel(kind="constant", dim=dim, label=label, amplitude=amplitude)


def tent_kernel(delta: float, dim: int, label: str = "") -> Kernel:
    """Tent kernel with unit ambient mass; peak 1/delta in 1D."""
    if delta <= 0:
        raise ConfigError("tent kernel needs delta > 0")
    amp = 1.0 / delta if dim == 1 else 3.0 / (np.pi * delta**2)
    return Kernel(kind="tent", dim=dim, label=label, delta=delta, amplitude=amp)


def gaussian_kernel(delta: float, dim: int, sigma: float | None = None, label: str = "") -> Kernel:
    """Truncated Gaussian, shifted to reach zero at radius delta, unit mass."""
    if delta <= 0:
        raise ConfigError("gaussian kernel needs delta > 0")
    sig = float(sigma) if sigma is not None else delta / 3.0
    if sig <= 0:
        raise ConfigError("gaussian kernel needs sigma > 0")
    rim = np.exp(-(delta**2) / (2.0 * sig**2))
    if dim == 1:
        mass = sig * np.sqrt(2.0 * np.pi) * erf(delta / (sig * np.sqrt(2.0))) - 2.0 * delta * rim
    else:
        mass = 2.0 * np.pi * sig**2 * (1.0 - rim) - np.pi * delta**2 * rim
    if mass <= 0:
        raise ConfigError("gaussian truncation leaves no positive mass; increase delta/sigma")
    return Kernel(
        kind="gaussian_truncated", dim=dim, label=label, delta=delta,
        amplitude=1.0 / float(mass), sigma=sig,
    )


@dataclass(frozen=True)
class TabulatedKernel:
    """Kernel given by a full node-pair table on a specific grid."""

    grid: Grid
    table: np.ndarray = field(repr=False)
    label: str = ""
    norm_mode: str = "ambient"
    kind: str = "tabulated"

    @property
    def is_convolution(self) -> bool:
        return False

    @property
    def support_radius(self) -> float:
        g = self.grid
        diffs = g.nodes[:, None, :] - g.nodes[None, :, :]
        r = np.sqrt(np.sum(diffs**2, axis=-1))
        nz = self.table > 0
        return float(r[nz].max()) if nz.any() else 0.0

    def evaluate(self, x, y) -> float:
        return float(self.table[self.grid.node_index(x), self.grid.node_index(y)])

    def positivity_radius(self) -> tuple[float, float]:
        g = self.grid
        rho = g.h * 1.5
        diffs = g.nodes[:, None, :] - g.nodes[None, :, :]
        r = np.sqrt(np.sum(diffs**2, axis=-1))
        near = self.table[r <= rho]
        return (float(near.min()) if near.size else 0.0), rho


@dataclass(frozen=True)
class DomainKernel:
    """Row-rescaled kernel whose quadrature row sums over the box equal one.

    The rescaling is one-sided, so symmetry is lost in general; use
    ``asymmetry`` to quantify it.
    """

    base: Kernel | TabulatedKernel
    grid: Grid
    scales: np.ndarray = field(repr=False)
    norm_mode: str = "domain"

    @property
    def kind(self) -> str:
        return self.base.kind

    @property
    def label(self) -> str:
        return self.base.label

    @property
    def is_convolution(self) -> bool:
        return False

    @property
    def support_radius(self) -> float:
        return self.base.support_radius

    def evaluate(self, x, y) -> float:
        return float(self.scales[self.grid.node_index(x)]) * self.base.evaluate(x, y)

    def positivity_radius(self) -> tuple[float, float]:
        c0, rho = self.base.positivity_radius()
        return c0 * float(self.scales.min()), rho


def evaluate(k, x, y) -> float:
    """Evaluate any kernel at a pair of points."""
    return k.evaluate(x, y)


def kernel_node_matrix(k, g: Grid, rows: np.ndarray | None = None, cols: np.ndarray | None = None) -> np.ndarray:
    """Dense kernel values on node pairs of g (all nodes by default)."""
    if rows is None:
        rows = np.arange(g.n_total)
    if cols is None:
        cols = np.arange(g.n_total)
    if isinstance(k, Kernel):
        return k.pairwise(g.nodes[rows], g.nodes[cols])
    if isinstance(k, TabulatedKernel):
        if k.grid is not g and not k.grid.same_layout(g):
            raise PreconditionError("tabulated kernel belongs to a different grid")
        return k.table[np.ix_(rows, cols)]
    if isinstance(k, DomainKernel):
        base = kernel_node_matrix(k.base, g, rows, cols)
        return k.scales[rows][:, None] * base
    raise PreconditionError(f"unsupported kernel object {type(k).__name__}")


def normalize_on_domain(k, g: Grid) -> DomainKernel:
    """Rescale rows so that sum_{y in box} V(x, y) h^d == 1 for every node x."""
    base = kernel_node_matrix(k, g)
    mass = base[:, g.interior].sum(axis=1) * g.weight
    if np.any(mass <= 0):
        bad = int(np.argmin(mass))
        raise SolveError(f"domain normalization hit a zero row mass at node {bad}")
    return DomainKernel(base=k, grid=g, scales=1.0 / mass)


def asymmetry(k, g: Grid) -> float:
    """Largest |V(x,y) - V(y,x)| over interior node pairs."""
    idx = g.interior_indices
    mat = kernel_node_matrix(k, g, idx, idx)
    return float(np.max(np.abs(mat - mat.T)))


def load_tabulated_csv(path, g: Grid, label: str = "") -> TabulatedKernel:
    """Read a node-pair kernel table from CSV columns x_index, y_index, value."""
    table = np.full((g.n_total, g.n_total), np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3:
            raise ConfigError(f"{path}: expected header 'x_index,y_index,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, j, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad row {row!r}") from exc
            if not (0 <= i < g.n_total and 0 <= j < g.n_total):
                raise ConfigError(f"{path}:{lineno}: node index out of range")
            table[i, j] = v
    if np.isnan(table).any():
        missing = int(np.isnan(table).sum())
        raise ConfigError(f"{path}: table incomplete, {missing} node pairs missing")
    return TabulatedKernel(grid=g, table=table, label=label)


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of the kernel hypothesis suite on a grid."""

    label: str
    kind: str
    norm_mode: str
    nonnegative: bool
    diagonal_positive: bool
    symmetric: bool
    normalized: bool
    worst_negative: float
    min_diagonal: float
    max_asymmetry: float
    max_normalization_error: float
    c0: float
    positivity_rho: float

    @property
    def all_ok(self) -> bool:
        return self.nonnegative and self.diagonal_positive and self.symmetric and self.normalized

    @property
    def worst_violation(self) -> float:
        worst = 0.0
        if not self.nonnegative:
            worst = max(worst, self.worst_negative)
        if not self.diagonal_positive:
            worst = max(worst, -self.min_diagonal)
        if not self.symmetric:
            worst = max(worst, self.max_asymmetry)
        if not self.normalized:
            worst = max(worst, self.max_normalization_error)
        return worst


def validate_hypotheses(k, g: Grid, tol: float) -> HypothesisReport:
    """Check nonnegativity, diagonal positivity, symmetry and normalization.

    Rows run over box nodes.  The normalization integral is quadrature over
    the padded box in ambient mode and over the box in domain mode.  On large
    2D grids the rows are evenly strided to bound the pairwise matrices.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    rows = g.interior_indices
    stride = 1 + (len(rows) * g.n_total) // 8_000_000
    rows = rows[::stride]
    all_idx = np.arange(g.n_total)
    mat = kernel_node_matrix(k, g, rows, all_idx)
    sym_block = kernel_node_matrix(k, g, rows, rows)
    max_asym = float(np.max(np.abs(sym_block - sym_block.T)))
    worst_negative = float(max(0.0, -mat.min()))
    diag = np.array([mat[i, rows[i]] for i in range(len(rows))])
    mode = getattr(k, "norm_mode", "ambient")
    region = all_idx if mode == "ambient" else rows
    row_sums = kernel_node_matrix(k, g, rows, region).sum(axis=1) * g.weight
    norm_err = float(np.max(np.abs(row_sums - 1.0)))
    c0, rho = k.positivity_radius()
    return HypothesisReport(
        label=getattr(k, "label", ""),
        kind=getattr(k, "kind", "?"),
        norm_mode=mode,
        nonnegative=worst_negative == 0.0,
        diagonal_positive=bool(np.all(diag > 0.0)),
        symmetric=max_asym == 0.0,
        normalized=norm_err <= tol,
        worst_negative=worst_negative,
        min_diagonal=float(diag.min()),
        max_asymmetry=max_asym,
        max_normalization_error=norm_err,
        c0=float(c0),
        positivity_rho=float(rho),
    )
