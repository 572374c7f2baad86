"""Oscillating two-phase partitions of the grid and their limit density.

A partition family produces, for every fine-scale index n, a 0/1 indicator
of phase A; phase B is its complement.  The family also carries the limit
density X (the local volume fraction of phase A), against which weak-star
discrepancies are measured with a fixed dictionary of test functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigError, PreconditionError
from .grid import Field, Grid

PARTITION_KINDS = ("stripes", "checkerboard", "random", "explicit")


@dataclass(frozen=True)
class PartitionFamily:
    """Rule generating the phase-A indicator for every fine-scale index n.

    ``X`` is the limit density on the same grid the indicators are built on.
    ``seed`` matters only for the random kind; ``explicit_table`` maps n to a
    prebuilt indicator field for the explicit kind.
    """

    kind: str
    X: Field
    seed: int = 0
    explicit_table: dict | None = None


def partition_family(kind: str, X: Field, seed: int = 0, explicit_table: dict | None = None) -> PartitionFamily:
    if kind not in PARTITION_KINDS:
        raise ConfigError(f"unknown partition kind {kind!r}; expected one of {PARTITION_KINDS}")
    if kind == "checkerboard" and X.grid.dim != 2:
        raise ConfigError("checkerboard partitions need dim == 2")
    if kind == "explicit" and not explicit_table:
        raise ConfigError("explicit partitions need a non-empty explicit_table")
    xv = X.values
    if np.any(xv < -1e-12) or np.any(xv > 1 + 1e-12):
        raise ConfigError("limit density X must take values in [0, 1]")
    return PartitionFamily(kind=kind, X=X, seed=seed, explicit_table=explicit_table)


def _fine_cell_index(coords: np.ndarray, n: int) -> np.ndarray:
    # Cells of side 1/n tiling the whole (padded) space; floor works off-box.
    return np.floor(n * coords).astype(np.int64)


def indicator(p: PartitionFamily, n: int, g: Grid) -> Field:
    """Phase-A indicator of the family at fine-scale index n on grid g."""
    if n < 1:
        raise PreconditionError(f"partition index n must be >= 1, got {n}")
    if g is not p.X.grid and not g.same_layout(p.X.grid):
        raise PreconditionError("indicator grid differs from the family grid")
    xv = np.clip(p.X.values, 0.0, 1.0)
    pts = g.nodes

    if p.kind == "stripes":
        s = n * pts[:, 0]
        frac = s - np.floor(s)
        member = frac < xv
    elif p.kind == "checkerboard":
        cells = _fine_cell_index(pts, n)
        parity = (cells[:, 0] + cells[:, 1]) % 2
        s = n * pts[:, 0]
        frac = s - np.floor(s)
        frac = np.where(parity == 0, frac, 1.0 - frac)
        member = frac < _cell_density(xv, cells)
    elif p.kind == "random":
        cells = _fine_cell_index(pts, n)
        member = _random_membership(xv, cells, p.seed ^ n)
    else:  # explicit
        table = p.explicit_table or {}
        if n not in table:
            raise ConfigError(f"explicit partition table has no entry for n={n}")
        chi = table[n]
        vals = np.asarray(chi.values, dtype=float)
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise ConfigError(f"explicit indicator for n={n} is not 0/1 valued")
        return Field(g, vals.copy())

    return Field(g, member.astype(float))


def _cell_key(cells: np.ndarray) -> np.ndarray:
    if cells.ndim == 1 or cells.shape[1] == 1:
        return cells.reshape(-1)
    lo = cells.min(axis=0)
    span = cells.max(axis=0) - lo + 1
    rel = cells - lo
    return rel[:, 0] * span[1] + rel[:, 1]


def _cell_density(xv: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Average X over each fine cell, broadcast back to the nodes."""
    key = _cell_key(cells)
    order = np.argsort(key, kind="stable")
    sk = key[order]
    boundaries = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    sums = np.add.reduceat(xv[order], boundaries)
    counts = np.diff(np.r_[boundaries, len(sk)])
    dens = np.empty_like(xv)
    dens[order] = np.repeat(sums / counts, counts)
    return dens


def _random_membership(xv: np.ndarray, cells: np.ndarray, stream: int) -> np.ndarray:
    key = _cell_key(cells)
    uniq, inverse = np.unique(key, return_inverse=True)
    rng = np.random.default_rng(int(stream) & 0xFFFFFFFFFFFFFFFF)
    draws = rng.random(len(uniq))
    dens = _cell_density(xv, cells)
    return draws[inverse] < dens


def weak_star_dictionary(g: Grid, order: int) -> list[np.ndarray]:
    """Test functions on interior nodes: monomials of total degree <= order
    plus cosine modes cos(pi k.x) with |k|_inf <= order."""
    if order < 0:
        raise PreconditionError(f"order must be >= 0, got {order}")
    pts = g.nodes[g.interior]
    dictionary: list[np.ndarray] = []
    if g.dim == 1:
        x = pts[:, 0]
        for p in range(order + 1):
            dictionary.append(x**p)
        for k in range(order + 1):
            dictionary.append(np.cos(np.pi * k * x))
    else:
        x, y = pts[:, 0], pts[:, 1]
        for a in range(order + 1):
            for b in range(order + 1 - a):
                dictionary.append(x**a * y**b)
        for k1, k2 in product(range(order + 1), range(-order, order + 1)):
            dictionary.append(np.cos(np.pi * (k1 * x + k2 * y)))
    return dictionary


def weak_star_gap(chi: Field, X: Field, order: int) -> float:
    """Largest quadrature pairing of chi - X against the test dictionary."""
    if chi.grid is not X.grid and not chi.grid.same_layout(X.grid):
        raise PreconditionError("weak_star_gap needs both fields on the same grid")
    g = chi.grid
    diff = chi.interior_values - X.interior_values
    w = g.weight
    return max(abs(float(np.sum(diff * phi) * w)) for phi in weak_star_dictionary(g, order))
