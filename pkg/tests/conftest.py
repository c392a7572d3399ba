import numpy as np
import pytest

from ringdensity.splines import cox_de_boor
from ringdensity.tensor_ring import TrCores


def random_cores(rng, ndim, max_mode=4, max_rank=3, lo=-1.0, hi=1.0) -> TrCores:
    """Random ring cores with independently drawn mode sizes and ranks."""
    modes = rng.integers(1, max_mode + 1, size=ndim)
    ranks = rng.integers(1, max_rank + 1, size=ndim + 1)
    ranks[-1] = ranks[0]
    return TrCores(
        [
            rng.uniform(lo, hi, size=(ranks[d], modes[d], ranks[d + 1]))
            for d in range(ndim)
        ]
    )


def basis_quadrature(grid, fn, a=0.0, b=1.0, panels=64):
    """Composite 3-point Gauss quadrature of fn over [a, b].

    Independent oracle: evaluates the integrand directly, never through the
    grid's own integral tables.
    """
    nodes3 = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
    weights3 = np.array([5.0, 8.0, 5.0]) / 18.0
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs = lo + (hi - lo) * nodes3
        total += (hi - lo) * np.sum(weights3 * np.array([fn(x) for x in xs]))
    return total


def basis_value_oracle(grid, k, x):
    """Basis value straight from the Cox-de Boor recursion."""
    return cox_de_boor(grid.knots, k, 2, float(x))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
