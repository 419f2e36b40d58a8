"""Synthetic 70-district fixture used by the tests, demos and simulation presets.

Everything here is synthetic: a Delaunay adjacency of seeded random points, a
smooth standardized covariate and integer expected counts. No real map or
crime data ship with the package.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .graph import from_edge_list, icar_structure
from .spectral import eigendecompose

N_DISTRICTS = 70
FIXTURE_SEED = 20240601


@dataclass(frozen=True, eq=False)
class SyntheticRegion:
    graph: object
    coords: np.ndarray
    X1: np.ndarray
    e: np.ndarray  # n x J integer-valued expected counts
    synthetic: bool = True


def delaunay_graph(coords):
    """Adjacency from the Delaunay triangulation of planar points."""
    tri = Delaunay(coords)
    pairs = set()
    for simplex in tri.simplices:
        a, b, c = sorted(int(v) for v in simplex)
        pairs.update({(a, b), (a, c), (b, c)})
    return from_edge_list(len(coords), sorted(pairs))


def synthetic_region(n=N_DISTRICTS, J=2, seed=FIXTURE_SEED, e_range=(20, 60), noise=0.3,
                     cutoff=2.5, order=4):
    """Seeded planar region with ``n`` districts.

    X1 is a smooth field: standard normal coefficients on the non-constant
    eigenvectors of Q passed through the low-pass filter
    ``1 / (1 + (eigenvalue / cutoff)**order)``, plus a little independent
    noise, standardized with divisor n - 1. The filter spreads the energy
    evenly over the smoothest eigenvectors instead of piling it on the first
    few.
    """
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    g = delaunay_graph(coords)
    basis = eigendecompose(icar_structure(g))
    U, lam = basis.U[:, :-1], basis.eigenvalues[:-1]
    smooth = U @ (rng.standard_normal(n - 1) / (1.0 + (lam / cutoff) ** order))
    smooth /= smooth.std(ddof=1)
    raw = smooth + noise * rng.standard_normal(n)
    X1 = (raw - raw.mean()) / raw.std(ddof=1)
    lo, hi = e_range
    e = np.round(rng.uniform(lo, hi, size=(n, J)))
    return SyntheticRegion(graph=g, coords=coords, X1=X1, e=e)
