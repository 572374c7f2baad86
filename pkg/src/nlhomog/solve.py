"""Direct solvers for the finite-scale problems and the homogenized system,
plus corrector fields and their errors.

Mean-zero constraints are handled with a single Lagrange multiplier paired
with the known nullspace direction, which keeps the augmented system square
and makes the multiplier a free compatibility diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import LimitOperator, OperatorMatrix
from .errors import PreconditionError, RefusalError, SolveError
from .grid import Field, mean, project_mean_zero
from .kernels import kernel_node_matrix

MEAN_ZERO_TOL = 1e-12
DEFAULT_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolveResult:
    """Solution field with solver diagnostics."""

    u: Field
    multiplier: float | None
    residual: float
    iterations: int


@dataclass(frozen=True)
class LimitPair:
    """Homogenized pair (u_A, u_B) with per-equation residuals."""

    u_A: Field
    u_B: Field
    residual_A: float
    residual_B: float
    constraint_value: float | None
    multiplier: float | None


def _weighted_norm(r: np.ndarray, weight: float) -> float:
    return float(np.sqrt(np.sum(r * r) * weight))


def solve_neumann(L: OperatorMatrix, f: Field, tol: float = DEFAULT_RESIDUAL_TOL) -> SolveResult:
    """Solve the Neumann problem through the saddle system with one multiplier.

    The load must have zero box mean; the returned field has zero mean and the
    multiplier reports the residual incompatibility of the load.
    """
    if L.bc != "neumann":
        raise PreconditionError(f"expected a Neumann operator, got {L.bc!r}")
    mf = mean(f)
    if abs(mf) > MEAN_ZERO_TOL:
        raise PreconditionError(
            f"Neumann load must have zero mean; got mean {mf:.3e} "
            "(project it first or use a mean-zero load)"
        )
    n = L.n
    g = L.grid
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = L.matrix
    aug[:n, n] = 1.0
    aug[n, :n] = g.weight
    rhs = np.concatenate([f.interior_values, [0.0]])
    try:
        sol = np.linalg.solve(aug, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"saddle solve failed: {exc}") from exc
    u_int = sol[:n]
    u_int = u_int - u_int.mean()  # row sums vanish, so this leaves the residual intact
    residual = _weighted_norm(L.matrix @ u_int - f.interior_values, g.weight)
    if residual > tol:
        raise SolveError(f"Neumann solve residual {residual:.3e} exceeds {tol:.1e}")
    return SolveResult(u=g.interior_field(u_int), multiplier=float(sol[n]), residual=residual, iterations=1)


def solve_dirichlet(L: OperatorMatrix, f: Field, tol: float = DEFAULT_RESIDUAL_TOL) -> SolveResult:
    """Solve the Dirichlet problem; the solution is extended by zero outside."""
    if L.bc != "dirichlet":
        raise PreconditionError(f"expected a Dirichlet operator, got {L.bc!r}")
    g = L.grid
    try:
        u_int = np.linalg.solve(L.matrix, f.interior_values)
    except np.linalg.LinAlgError as exc:
        raise SolveError(
            f"Dirichlet operator is singular ({exc}); the killing mass may vanish"
        ) from exc
    residual = _weighted_norm(L.matrix @ u_int - f.interior_values, g.weight)
    if residual > tol:
        raise SolveError(f"Dirichlet solve residual {residual:.3e} exceeds {tol:.1e}")
    return SolveResult(u=g.interior_field(u_int), multiplier=None, residual=residual, iterations=1)


def solve_limit_pair(M: LimitOperator, f: Field, X: Field, tol: float = DEFAULT_RESIDUAL_TOL) -> LimitPair:
    """Solve the coupled limit system for (u_A, u_B).

    Neumann augments the singular block system with the constraint
    integral(u_A + u_B) = 0 against the nullspace direction (X, 1-X);
    Dirichlet solves the blocks directly.
    """
    if X is not M.X and not np.allclose(X.values, M.X.values, atol=1e-14):
        raise PreconditionError("X passed to solve_limit_pair differs from the operator's X")
    g = M.grid
    n = M.n
    x = np.clip(X.interior_values, 0.0, 1.0)
    rhs = np.concatenate([x * f.interior_values, (1.0 - x) * f.interior_values])
    multiplier: float | None = None
    if M.bc == "neumann":
        if abs(mean(f)) > MEAN_ZERO_TOL:
            raise PreconditionError("Neumann limit system needs a mean-zero load")
        aug = np.zeros((2 * n + 1, 2 * n + 1))
        aug[: 2 * n, : 2 * n] = M.matrix
        aug[: 2 * n, 2 * n] = M.nullspace_vector()
        aug[2 * n, : 2 * n] = g.weight
        try:
            sol = np.linalg.solve(aug, np.concatenate([rhs, [0.0]]))
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"limit-system saddle solve failed: {exc}") from exc
        u = sol[: 2 * n]
        multiplier = float(sol[2 * n])
    else:
        try:
            u = np.linalg.solve(M.matrix, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"limit-system solve failed: {exc}") from exc
    r = M.matrix @ u - rhs
    res_a = _weighted_norm(r[:n], g.weight)
    res_b = _weighted_norm(r[n:], g.weight)
    if max(res_a, res_b) > tol:
        raise SolveError(
            f"limit-system residuals ({res_a:.3e}, {res_b:.3e}) exceed {tol:.1e}"
        )
    u_A = g.interior_field(u[:n])
    u_B = g.interior_field(u[n:])
    constraint = None
    if M.bc == "neumann":
        constraint = float(np.sum(u[:n] + u[n:]) * g.weight)
    return LimitPair(
        u_A=u_A, u_B=u_B, residual_A=res_a, residual_B=res_b,
        constraint_value=constraint, multiplier=multiplier,
    )


def combined_residual(pair: LimitPair, f: Field, X: Field, J, R, G, bc: str) -> float:
    """Defect of the summed homogenized equation, evaluated independently.

    By construction this never exceeds the sum of the two per-equation
    residuals (triangle inequality), which the tests pin down.
    """
    g = pair.u_A.grid
    rows = g.interior_indices
    cols = rows if bc == "neumann" else np.arange(g.n_total)
    xv = np.clip(X.values, 0.0, 1.0)
    x_r, x_c = xv[rows], xv[cols]
    ua_r, ua_c = pair.u_A.values[rows], pair.u_A.values[cols]
    ub_r, ub_c = pair.u_B.values[rows], pair.u_B.values[cols]
    w = g.weight
    Jm = kernel_node_matrix(J, g, rows, cols)
    Rm = kernel_node_matrix(R, g, rows, cols)
    Gm = kernel_node_matrix(G, g, rows, cols)
    term_j = (Jm * (x_r[:, None] * ua_c[None, :] - x_c[None, :] * ua_r[:, None])).sum(axis=1) * w
    term_g = (
        Gm * ((1.0 - x_r)[:, None] * ub_c[None, :] - (1.0 - x_c)[None, :] * ub_r[:, None])
    ).sum(axis=1) * w
    term_r = (
        Rm
        * (
            (1.0 - x_r)[:, None] * ua_c[None, :]
            - (1.0 - x_c)[None, :] * ua_r[:, None]
            + x_r[:, None] * ub_c[None, :]
            - x_c[None, :] * ub_r[:, None]
        )
    ).sum(axis=1) * w
    defect = term_j + term_g + term_r - f.interior_values
    return _weighted_norm(defect, w)


def corrector_field(chi: Field, X: Field, pair: LimitPair, bc: str) -> Field:
    """Oscillating corrector chi_A u_A / X + chi_B u_B / (1 - X).

    Requires X uniformly inside (0, 1); the Neumann variant is recentred to
    zero mean, the Dirichlet variant vanishes outside the box.
    """
    g = chi.grid
    x = X.interior_values
    c0 = float(x.min())
    c1 = float(1.0 - x.max())
    if c0 <= 0.0 or c1 <= 0.0:
        raise RefusalError(
            f"corrector needs X uniformly inside (0, 1); got bounds "
            f"c0={c0:.3e}, c1={c1:.3e}"
        )
    a = chi.interior_values
    vals = a * pair.u_A.interior_values / x + (1.0 - a) * pair.u_B.interior_values / (1.0 - x)
    omega = g.interior_field(vals)
    if bc == "neumann":
        return project_mean_zero(omega)
    return omega


def corrector_error(u_n: Field, corrector: Field) -> float:
    """Quadrature L2 distance between the finite-scale solution and the corrector."""
    return (u_n - corrector).norm_l2()
