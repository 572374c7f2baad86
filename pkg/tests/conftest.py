import numpy as np
import pytest

from nlhomog import (
    build_grid,
    indicator,
    partition_family,
    tent_kernel,
)


@pytest.fixture(scope="session")
def tent_trio_1d():
    return (
        tent_kernel(0.25, 1, "J"),
        tent_kernel(0.3, 1, "R"),
        tent_kernel(0.2, 1, "G"),
    )


@pytest.fixture(scope="session")
def grid16():
    return build_grid(1, 16, 0)


def stripes_setup(m, n, theta=0.5, pad_cells=0, dim=1):
    """Grid, half-density stripes indicator and load used across tests."""
    g = build_grid(dim, m, pad_cells)
    fam = partition_family("stripes", g.field(theta))
    chi = indicator(fam, n, g)
    f = g.interior_field(g.nodes[g.interior, 0] - 0.5)
    return g, fam, chi, f


def mean_zero_noise(g, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(g.n_interior)
    return g.interior_field(v - v.mean())
