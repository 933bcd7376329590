"""
Lattice Green's function of the 7-point Laplacian on Z^3.

g solves 6 g(m) - sum_{neighbours} g = delta_{m,0} and decays like
1/(4 pi |m|).  It is computed from the Bessel representation

    g(m) = int_0^inf prod_j exp(-2t) I_{m_j}(2t) dt,

split into t in [0, 1] (Gauss-Legendre) and t = u**-2 for the tail
(composite Gauss-Legendre in u on (0, 1]).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ive


def _nodes(mmax: int):
    x, w = leggauss(48)
    t1, w1 = 0.5 * (x + 1.0), 0.5 * w
    npan = max(40, 2 * mmax)
    xp, wp = leggauss(16)
    edges = np.linspace(0.0, 1.0, npan + 1)
    a, b = edges[:-1, None], edges[1:, None]
    u = (0.5 * (b - a) * (xp + 1.0) + a).ravel()
    wu = (0.5 * (b - a) * wp).ravel()
    t2 = 1.0 / u ** 2
    w2 = wu * 2.0 / u ** 3
    return np.concatenate([t1, t2]), np.concatenate([w1, w2])


@lru_cache(maxsize=8)
def _table(mmax: int) -> np.ndarray:
    t, wt = _nodes(mmax)
    m = np.arange(mmax + 1)
    T = ive(m[:, None], 2.0 * t[None, :])
    g = np.einsum("it,jt,kt,t->ijk", T, T, T, wt, optimize=True)
    g.setflags(write=False)
    return g


def lgf_table(mmax: int) -> np.ndarray:
    """Table g[i, j, k] for 0 <= i, j, k <= mmax (read-only, cached).

    The table is symmetric under permutations of the indices and under sign
    changes, so only the octant of nonnegative offsets is stored.
    """
    if mmax < 1:
        raise ValueError("mmax must be at least 1")
    return _table(int(mmax))


def lgf(m) -> np.ndarray:
    """g at integer offsets ``m`` (array of shape (..., 3))."""
    m = np.abs(np.asarray(m, dtype=int))
    g = lgf_table(max(1, int(m.max())))
    return g[m[..., 0], m[..., 1], m[..., 2]]
