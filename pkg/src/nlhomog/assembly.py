"""Dense discrete nonlocal operators on the two-phase grid.

Assembles the finite-scale operator for both boundary modes, the quadratic
energy, the associated bilinear form, the smallest constrained eigenvalue,
and the coupled block operator of the homogenized limit system.  Energy,
bilinear form and matrices all share the same midpoint quadrature, so the
variational identities hold at the discrete level rather than only in the
limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import PreconditionError, SolveError
from .grid import Field, Grid
from .kernels import kernel_node_matrix

DENSE_EIG_LIMIT = 2000
EIG_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class OperatorMatrix:
    """Discrete nonlocal operator over interior nodes, quadrature baked in."""

    matrix: np.ndarray = field(repr=False)
    bc: str
    grid: Grid
    killing: np.ndarray | None = field(default=None, repr=False)
    domain_mode: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LimitOperator:
    """2x2 block operator acting on (u_A, u_B) over interior nodes."""

    matrix: np.ndarray = field(repr=False)
    bc: str
    grid: Grid
    X: Field
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    def nullspace_vector(self) -> np.ndarray:
        x = np.clip(self.X.interior_values, 0.0, 1.0)
        return np.concatenate([x, 1.0 - x])

    def singular_values(self, k: int = 2) -> np.ndarray:
        """Smallest k singular values, ascending."""
        sv = scipy.linalg.svdvals(self.matrix)
        return sv[::-1][:k]


def _check_indicator(chi: Field, idx: np.ndarray) -> np.ndarray:
    vals = chi.values[idx]
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise PreconditionError("indicator field must be exactly 0/1 valued")
    return vals


def phase_coupling(g: Grid, chi: Field, J, R, G, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pointwise jump coefficient c(x_i, x_j) combining the three kernels."""
    a_r = chi.values[rows]
    a_c = chi.values[cols]
    b_r, b_c = 1.0 - a_r, 1.0 - a_c
    Jm = kernel_node_matrix(J, g, rows, cols)
    Rm = kernel_node_matrix(R, g, rows, cols)
    Gm = kernel_node_matrix(G, g, rows, cols)
    return (
        np.outer(a_r, a_c) * Jm
        + (np.outer(a_r, b_c) + np.outer(b_r, a_c)) * Rm
        + np.outer(b_r, b_c) * Gm
    )


def _is_domain_mode(*kernels) -> bool:
    return any(getattr(k, "norm_mode", "ambient") == "domain" for k in kernels)


def assemble_neumann(g: Grid, chi: Field, J, R, G) -> OperatorMatrix:
    """Operator whose row i applies the phase-weighted jump integrals at x_i.

    Row sums vanish identically (constants are in the nullspace) and the
    matrix is symmetric whenever the kernels are.
    """
    idx = g.interior_indices
    _check_indicator(chi, idx)
    C = phase_coupling(g, chi, J, R, G, idx, idx) * g.weight
    np.fill_diagonal(C, 0.0)
    L = C.copy()
    np.fill_diagonal(L, -C.sum(axis=1))
    return OperatorMatrix(
        matrix=L,
        bc="neumann",
        grid=g,
        domain_mode=_is_domain_mode(J, R, G),
        meta={"labels": [getattr(k, "label", "") for k in (J, R, G)]},
    )


def assemble_dirichlet(g: Grid, chi: Field, J, R, G) -> OperatorMatrix:
    """Interior operator with the exterior handled as killing mass.

    The ambient value of the unknown is identically zero, so padded nodes
    contribute only through the -u(x) V(x, y) mass folded into the diagonal.
    Compactly supported kernels must fit inside the pad; kernels without a
    finite support radius are truncated at the padded box by construction.
    """
    if g.pad_cells < 1:
        raise PreconditionError("Dirichlet assembly needs a padded grid (pad_cells >= 1)")
    for k in (J, R, G):
        radius = k.support_radius
        if np.isfinite(radius) and g.pad < radius - 1e-12:
            raise PreconditionError(
                f"pad {g.pad:.6g} is smaller than the support radius {radius:.6g} of "
                f"kernel {getattr(k, 'label', '?') or k.kind}; enlarge pad_cells so the "
                "exterior interactions are fully represented"
            )
    rows = g.interior_indices
    all_idx = np.arange(g.n_total)
    _check_indicator(chi, all_idx)
    C_all = phase_coupling(g, chi, J, R, G, rows, all_idx) * g.weight
    for i, r in enumerate(rows):
        C_all[i, r] = 0.0
    total_out = C_all.sum(axis=1)
    killing = C_all[:, ~g.interior].sum(axis=1)
    L = C_all[:, g.interior].copy()
    np.fill_diagonal(L, -total_out)
    return OperatorMatrix(
        matrix=L,
        bc="dirichlet",
        grid=g,
        killing=killing,
        domain_mode=_is_domain_mode(J, R, G),
        meta={"labels": [getattr(k, "label", "") for k in (J, R, G)]},
    )


def energy(g: Grid, chi: Field, J, R, G, u: Field, f: Field, bc: str) -> float:
    """Quadratic interaction energy of u under load f.

    The load term enters with a plus sign: with it, the unique admissible
    minimizer is exactly the solution of the discrete equation.
    """
    if bc == "dirichlet":
        if not u.vanishes_on_pad(1e-13):
            raise PreconditionError("Dirichlet energy needs u to vanish on padded nodes")
        idx = np.arange(g.n_total)
    else:
        idx = g.interior_indices
    a = chi.values[idx]
    b = 1.0 - a
    uv = u.values[idx]
    d2 = (uv[None, :] - uv[:, None]) ** 2
    w2 = g.weight**2
    Jm = kernel_node_matrix(J, g, idx, idx)
    Rm = kernel_node_matrix(R, g, idx, idx)
    Gm = kernel_node_matrix(G, g, idx, idx)
    phi_j = float(np.sum(np.outer(a, a) * Jm * d2)) * w2
    phi_g = float(np.sum(np.outer(b, b) * Gm * d2)) * w2
    phi_r = float(np.sum(np.outer(a, b) * Rm * d2)) * w2
    load = float(np.sum(f.interior_values * u.interior_values)) * g.weight
    return 0.25 * phi_j + 0.25 * phi_g + 0.5 * phi_r + load


def dirichlet_form(L: OperatorMatrix, u: Field, v: Field) -> float:
    """Bilinear form a(u, v) = <L u, v> with quadrature weights."""
    return float((L.matrix @ u.interior_values) @ v.interior_values) * L.grid.weight


def _eigen_residual_check(A: np.ndarray, lam: float, vec: np.ndarray) -> None:
    resid = float(np.linalg.norm(A @ vec - lam * vec))
    scale = max(1.0, float(np.abs(A).sum(axis=1).max()))
    if resid > EIG_RESIDUAL_TOL * scale:
        raise SolveError(f"eigen-solve residual {resid:.3e} exceeds tolerance")


def min_rayleigh(L: OperatorMatrix, bc: str | None = None) -> float:
    """Smallest value of -a(u,u)/||u||^2 over the admissible subspace.

    Neumann restricts to mean-zero fields (the constant direction is
    deflated); Dirichlet minimizes over the whole interior space.
    """
    bc = bc or L.bc
    A = -0.5 * (L.matrix + L.matrix.T)
    n = A.shape[0]
    if bc == "neumann":
        if n <= DENSE_EIG_LIMIT:
            evals, evecs = scipy.linalg.eigh(A)
            lam, vec = float(evals[1]), evecs[:, 1]
        else:
            shift = 2.0 * float(np.abs(A).sum(axis=1).max())
            ones = np.full(n, 1.0 / np.sqrt(n))

            def matvec(x):
                return A @ x + shift * ones * (ones @ x)

            op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec)
            try:
                evals, evecs = scipy.sparse.linalg.eigsh(op, k=1, which="SA", tol=1e-10)
            except scipy.sparse.linalg.ArpackNoConvergence as exc:
                raise SolveError(f"eigen-solver did not converge: {exc}") from exc
            lam, vec = float(evals[0]), evecs[:, 0]
    else:
        if n <= DENSE_EIG_LIMIT:
            evals, evecs = scipy.linalg.eigh(A)
            lam, vec = float(evals[0]), evecs[:, 0]
        else:
            try:
                evals, evecs = scipy.sparse.linalg.eigsh(A, k=1, which="SA", tol=1e-10)
            except scipy.sparse.linalg.ArpackNoConvergence as exc:
                raise SolveError(f"eigen-solver did not converge: {exc}") from exc
            lam, vec = float(evals[0]), evecs[:, 0]
    _eigen_residual_check(A, lam, vec)
    return lam


def dump_matrix(op: OperatorMatrix, path) -> None:
    """Write the operator to CSV for external inspection.

    Layout: one header line ``bc,n_rows,n_cols`` followed by the matrix in
    row-major order, one comma-separated row per line.
    """
    n = op.n
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{op.bc},{n},{n}\n")
        for row in op.matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def assemble_limit_system(g: Grid, X: Field, J, R, G, bc: str) -> LimitOperator:
    """Block operator of the coupled homogenized system.

    In the Neumann mode the pair (c X, c (1-X)) spans the nullspace; in the
    Dirichlet mode both components vanish outside the box and exterior nodes
    act through the diagonal, as in the scalar assembly.
    """
    xv_all = X.values
    if np.any(xv_all < -1e-12) or np.any(xv_all > 1.0 + 1e-12):
        raise PreconditionError("limit density X must take values in [0, 1]")
    xv_all = np.clip(xv_all, 0.0, 1.0)
    rows = g.interior_indices
    x = xv_all[rows]
    w = g.weight
    if bc == "dirichlet":
        if g.pad_cells < 1:
            raise PreconditionError("Dirichlet limit system needs a padded grid")
        cols = np.arange(g.n_total)
        x_cols = xv_all
    elif bc == "neumann":
        cols = rows
        x_cols = x
    else:
        raise PreconditionError(f"unknown boundary mode {bc!r}")

    Jm = kernel_node_matrix(J, g, rows, cols)
    Rm = kernel_node_matrix(R, g, rows, cols)
    Gm = kernel_node_matrix(G, g, rows, cols)
    in_box = np.isin(cols, rows)

    M_aa = x[:, None] * Jm[:, in_box] * w
    M_ab = x[:, None] * Rm[:, in_box] * w
    M_ba = (1.0 - x)[:, None] * Rm[:, in_box] * w
    M_bb = (1.0 - x)[:, None] * Gm[:, in_box] * w
    diag_a = (Jm * x_cols[None, :]).sum(axis=1) * w + (Rm * (1.0 - x_cols)[None, :]).sum(axis=1) * w
    diag_b = (Gm * (1.0 - x_cols)[None, :]).sum(axis=1) * w + (Rm * x_cols[None, :]).sum(axis=1) * w
    M_aa[np.diag_indices_from(M_aa)] -= diag_a
    M_bb[np.diag_indices_from(M_bb)] -= diag_b

    matrix = np.block([[M_aa, M_ab], [M_ba, M_bb]])
    return LimitOperator(
        matrix=matrix,
        bc=bc,
        grid=g,
        X=X,
        meta={"labels": [getattr(k, "label", "") for k in (J, R, G)]},
    )
