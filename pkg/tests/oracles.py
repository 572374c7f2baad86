"""Independent brute-force reference implementations used as test oracles.

Everything here works with scalar kernel evaluations and explicit double
loops, deliberately avoiding the vectorized assembly paths under test.
"""

import numpy as np


def phase_coefficient(chi_i, chi_j, J, R, G, xi, xj):
    a_i, a_j = chi_i, chi_j
    b_i, b_j = 1.0 - a_i, 1.0 - a_j
    return (
        a_i * a_j * J.evaluate(xi, xj)
        + (a_i * b_j + b_i * a_j) * R.evaluate(xi, xj)
        + b_i * b_j * G.evaluate(xi, xj)
    )


def brute_neumann_matrix(g, chi, J, R, G):
    idx = g.interior_indices
    n = len(idx)
    L = np.zeros((n, n))
    for a, i in enumerate(idx):
        for b, j in enumerate(idx):
            if a == b:
                continue
            c = phase_coefficient(
                chi.values[i], chi.values[j], J, R, G, g.nodes[i], g.nodes[j]
            ) * g.weight
            L[a, b] = c
            L[a, a] -= c
    return L


def brute_dirichlet_matrix(g, chi, J, R, G):
    idx = g.interior_indices
    n = len(idx)
    L = np.zeros((n, n))
    pos = {int(i): a for a, i in enumerate(idx)}
    for a, i in enumerate(idx):
        for j in range(g.n_total):
            if j == i:
                continue
            c = phase_coefficient(
                chi.values[i], chi.values[j], J, R, G, g.nodes[i], g.nodes[j]
            ) * g.weight
            if j in pos:
                L[a, pos[j]] += c
            L[a, a] -= c
    return L


def brute_phi(g, V, mask_rows, mask_cols, u_vals, node_ids):
    """Double-loop interaction sum of V over masked node pairs."""
    total = 0.0
    for i in node_ids:
        for j in node_ids:
            total += (
                mask_rows[i]
                * mask_cols[j]
                * V.evaluate(g.nodes[i], g.nodes[j])
                * (u_vals[j] - u_vals[i]) ** 2
            )
    return total * g.weight**2


def brute_limit_matrix(g, X, J, R, G, bc):
    idx = g.interior_indices
    n = len(idx)
    cols = idx if bc == "neumann" else np.arange(g.n_total)
    x = np.clip(X.values, 0.0, 1.0)
    M = np.zeros((2 * n, 2 * n))
    pos = {int(i): a for a, i in enumerate(idx)}
    for a, i in enumerate(idx):
        xi = g.nodes[i]
        for j in cols:
            xj = g.nodes[j]
            Jv, Rv, Gv = J.evaluate(xi, xj), R.evaluate(xi, xj), G.evaluate(xi, xj)
            w = g.weight
            if int(j) in pos:
                b = pos[int(j)]
                M[a, b] += x[i] * Jv * w
                M[a, n + b] += x[i] * Rv * w
                M[n + a, b] += (1.0 - x[i]) * Rv * w
                M[n + a, n + b] += (1.0 - x[i]) * Gv * w
            M[a, a] -= (x[j] * Jv + (1.0 - x[j]) * Rv) * w
            M[n + a, n + a] -= ((1.0 - x[j]) * Gv + x[j] * Rv) * w
    return M


def eig_neumann_solve(L, f_int, weight):
    """Solve the singular Neumann system through a spectral pseudo-inverse,
    independently of the saddle-point route."""
    A = 0.5 * (L + L.T)
    evals, evecs = np.linalg.eigh(A)
    u = np.zeros_like(f_int)
    for lam, vec in zip(evals, evecs.T):
        if abs(lam) < 1e-11:
            continue
        u += (vec @ f_int / lam) * vec
    return u - u.mean()
