"""Uniform cell-centered grids on a box domain, plus node-sampled fields.

The quadrature is the midpoint rule: every node sits at the center of a cell
of volume h^dim and carries that volume as its weight.  A grid may carry a
padded margin of extra cells around the box; padded nodes house the ambient
region outside the domain and are used only by the Dirichlet pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PreconditionError


@dataclass(frozen=True)
class Grid:
    """Cell-centered lattice over ``[origin, origin+side]^dim`` with padding.

    Nodes are ordered lexicographically over the padded lattice.  ``interior``
    flags the nodes inside the box; with ``pad_cells == 0`` every node is
    interior.
    """

    dim: int
    m: int
    pad_cells: int
    origin: float = 0.0
    side: float = 1.0
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    interior: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        per_axis = self.m + 2 * self.pad_cells
        h = self.h
        lo = self.origin - self.pad_cells * h
        axis = lo + (np.arange(per_axis) + 0.5) * h
        inside = (np.arange(per_axis) >= self.pad_cells) & (
            np.arange(per_axis) < self.pad_cells + self.m
        )
        if self.dim == 1:
            nodes = axis[:, None]
            interior = inside
        else:
            xx, yy = np.meshgrid(axis, axis, indexing="ij")
            nodes = np.column_stack([xx.ravel(), yy.ravel()])
            ii, jj = np.meshgrid(inside, inside, indexing="ij")
            interior = (ii & jj).ravel()
        nodes.setflags(write=False)
        interior.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "interior", interior)

    @property
    def h(self) -> float:
        return self.side / self.m

    @property
    def weight(self) -> float:
        """Quadrature weight of a single node (cell volume)."""
        return self.h**self.dim

    @property
    def pad(self) -> float:
        """Width of the padded margin in length units."""
        return self.pad_cells * self.h

    @property
    def n_interior(self) -> int:
        return self.m**self.dim

    @property
    def n_total(self) -> int:
        return (self.m + 2 * self.pad_cells) ** self.dim

    @property
    def box_volume(self) -> float:
        return self.side**self.dim

    @property
    def padded_volume(self) -> float:
        return (self.side + 2 * self.pad) ** self.dim

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def padded_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.interior)

    def node_index(self, point) -> int:
        """Flat index of the node at ``point``; raises if it is not a node."""
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        lo = self.origin - self.pad_cells * self.h
        idx_axis = np.round((pt - lo) / self.h - 0.5).astype(int)
        per_axis = self.m + 2 * self.pad_cells
        if np.any(idx_axis < 0) or np.any(idx_axis >= per_axis):
            raise PreconditionError(f"point {pt} lies off the grid")
        flat = int(idx_axis[0]) if self.dim == 1 else int(idx_axis[0] * per_axis + idx_axis[1])
        if not np.allclose(self.nodes[flat], pt, atol=1e-9 * self.h):
            raise PreconditionError(f"point {pt} is not a grid node")
        return flat

    def same_layout(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.m == other.m
            and self.pad_cells == other.pad_cells
            and self.origin == other.origin
            and self.side == other.side
        )

    def field(self, values) -> "Field":
        """Build a field from a scalar, an array over all nodes, or a callable."""
        if callable(values):
            vals = np.asarray([float(values(x)) for x in self.nodes])
        else:
            vals = np.asarray(values, dtype=float)
            if vals.ndim == 0:
                vals = np.full(self.n_total, float(vals))
        if vals.shape != (self.n_total,):
            raise PreconditionError(
                f"field needs {self.n_total} node values, got shape {vals.shape}"
            )
        return Field(self, vals)

    def interior_field(self, interior_values) -> "Field":
        """Build a field from interior-node values, zero on padded nodes."""
        vals = np.zeros(self.n_total)
        iv = np.asarray(interior_values, dtype=float)
        if iv.shape != (self.n_interior,):
            raise PreconditionError(
                f"expected {self.n_interior} interior values, got shape {iv.shape}"
            )
        vals[self.interior] = iv
        return Field(self, vals)


@dataclass(frozen=True)
class Field:
    """Real values sampled on the nodes of a grid.

    Values on padded nodes belong to the ambient extension; Dirichlet-mode
    fields keep them identically zero.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)

    @property
    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def norm_l2(self) -> float:
        """Quadrature-weighted L2 norm over the box."""
        return float(np.sqrt(np.sum(self.interior_values**2) * self.grid.weight))

    def inner(self, other: "Field") -> float:
        _check_same_grid(self, other)
        return float(
            np.sum(self.interior_values * other.interior_values) * self.grid.weight
        )

    def vanishes_on_pad(self, tol: float = 0.0) -> bool:
        if self.grid.pad_cells == 0:
            return True
        return bool(np.all(np.abs(self.values[~self.grid.interior]) <= tol))

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid is not b.grid and not a.grid.same_layout(b.grid):
        raise PreconditionError("fields live on different grids")


def build_grid(dim: int, m: int, pad_cells: int = 0, origin: float = 0.0, side: float = 1.0) -> Grid:
    """Construct a uniform cell-centered grid.

    ``dim`` must be 1 or 2 and ``m`` at least 2; ``pad_cells`` adds that many
    ambient cells on every side of the box.
    """
    if dim not in (1, 2):
        raise ConfigError(f"dim must be 1 or 2, got {dim}")
    if m < 2:
        raise ConfigError(f"m must be >= 2, got {m}")
    if pad_cells < 0:
        raise ConfigError(f"pad_cells must be >= 0, got {pad_cells}")
    if side <= 0:
        raise ConfigError(f"side must be positive, got {side}")
    return Grid(dim=dim, m=m, pad_cells=pad_cells, origin=origin, side=side)


def mean(u: Field) -> float:
    """Box average (1/|box|) * integral of u by quadrature."""
    g = u.grid
    return float(np.sum(u.interior_values) * g.weight / g.box_volume)


def project_mean_zero(u: Field) -> Field:
    """Subtract the box mean on interior nodes; padded values are untouched."""
    g = u.grid
    vals = u.values.copy()
    vals[g.interior] -= mean(u)
    return Field(g, vals)
