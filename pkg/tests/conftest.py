import warnings

import numpy as np
import pytest

from metaland import blume_capel as bc
from metaland.landscape import EnergyLandscape, chain


def grid_landscape(energies) -> EnergyLandscape:
    """Metropolis landscape on a rectangular grid graph, row-major ids."""
    E = np.asarray(energies, dtype=float)
    rows, cols = E.shape
    edges = []
    for i in range(rows):
        for j in range(cols):
            k = i * cols + j
            if j + 1 < cols:
                edges.append((k, k + 1))
            if i + 1 < rows:
                edges.append((k, k + cols))
    return EnergyLandscape.metropolis(E.ravel(), np.array(edges))


def toy_chain() -> EnergyLandscape:
    # wells at 0 (H=3) and 2 (H=1), ground state 4, barriers 10 and 8
    return chain([3, 10, 1, 8, 0])


def multiwell_landscapes() -> dict:
    """Small hand-built landscapes with several wells.

    Each entry maps a name to (landscape, negative control set), where the
    control replaces a metastable representative by its neighbouring saddle.
    """
    triple = chain([4, 9, 2, 11, 1, 6, 0])
    grid = grid_landscape([[2, 7, 5], [9, 12, 6], [0, 8, 1]])
    # two degenerate metastable wells 0 and 1 in one class, ground state 5
    twin = EnergyLandscape.metropolis(
        [1, 1, 6, 7, 2, 0], np.array([(0, 1), (0, 2), (2, 5), (1, 3), (3, 5), (4, 5)]))
    return {
        "toy": (toy_chain(), [1, 4]),
        "triple": (triple, [3, 6]),
        "grid": (grid, [4, 6]),
        "twin": (twin, [3, 5]),
    }


@pytest.fixture
def toy():
    return toy_chain()


@pytest.fixture(scope="session")
def torus3():
    """Full single-flip landscape of the 3x3 model at h = 0.7."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return bc.enumerate_torus(bc.ModelParams(3, 0.7))
