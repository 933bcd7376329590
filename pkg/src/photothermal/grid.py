"""
Staggered (face) discretization of vector fields on a voxel domain.

A vector field on B is represented by its normal component on every face of
every voxel of B.  The face set X consists of all faces touching at least one
voxel of B; faces with exactly one such voxel are boundary faces.  For each
cell of a padded lattice (one layer of empty cells around the bounding cube)
the operator ``D`` returns minus the discrete divergence, so that ``D D^T`` is
the 7-point Laplacian and the lattice Green's function inverts it exactly.

All inner products use the uniform face weight h**3.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .domain import ReferenceDomain

_CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


class FaceGrid:
    """Face degrees of freedom of a ``ReferenceDomain``.

    Attributes
    ----------
    n, h, P : grid resolution, spacing and padded size n + 2
    axis : ndarray of int, shape (nf,)
        Normal direction of each face.
    index : ndarray of int, shape (nf, 3)
        Face grid index; along ``axis`` it runs over 0..n (the node planes).
    pos : ndarray, shape (nf, 3)
        Face centres in reference coordinates.
    boundary : ndarray of bool, shape (nf,)
    D : scipy.sparse.csr_matrix, shape (P**3, nf)
    """

    def __init__(self, domain: ReferenceDomain):
        self.domain = domain
        n = self.n = domain.resolution
        h = self.h = domain.h
        P = self.P = n + 2
        pm = np.zeros((P, P, P), dtype=bool)
        pm[1:-1, 1:-1, 1:-1] = domain.mask
        self.pmask = pm

        axis, index, bnd = [], [], []
        rows, cols, vals = [], [], []
        nf = 0
        for a in range(3):
            lo_sl = [slice(1, -1)] * 3
            hi_sl = [slice(1, -1)] * 3
            lo_sl[a] = slice(0, n + 1)
            hi_sl[a] = slice(1, n + 2)
            lo = pm[tuple(lo_sl)]
            hi = pm[tuple(hi_sl)]
            keep = lo | hi
            idx = np.argwhere(keep)
            cnt = len(idx)
            lo_c = idx + 1
            lo_c[:, a] -= 1
            hi_c = idx + 1
            fid = nf + np.arange(cnt)
            rows += [self.lin(hi_c), self.lin(lo_c)]
            cols += [fid, fid]
            vals += [np.full(cnt, -1.0 / h), np.full(cnt, 1.0 / h)]
            axis.append(np.full(cnt, a))
            index.append(idx)
            bnd.append((lo ^ hi)[keep])
            nf += cnt
        self.nf = nf
        self.axis = np.concatenate(axis)
        self.index = np.concatenate(index)
        self.boundary = np.concatenate(bnd)
        self.counts = tuple(int(np.sum(self.axis == a)) for a in range(3))
        self.D = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(P ** 3, nf),
        )
        off = domain.origin
        self.pos = off + (self.index + 0.5) * h
        self.pos[np.arange(nf), self.axis] -= 0.5 * h
        # padded linear ids of the cells of B, in domain order
        self.cells = self.lin(domain.index + 1)

    def lin(self, q) -> np.ndarray:
        q = np.asarray(q)
        return (q[..., 0] * self.P + q[..., 1]) * self.P + q[..., 2]

    @property
    def weight(self) -> float:
        return self.h ** 3

    @cached_property
    def DB(self) -> sp.csr_matrix:
        """Rows of ``D`` for the cells of B."""
        return self.D[self.cells].tocsr()

    @cached_property
    def support_cells(self) -> np.ndarray:
        """Padded ids of all cells touching a face of X (B plus its exterior shell)."""
        nz = np.unique(self.D.nonzero()[0])
        return nz

    @cached_property
    def exterior_cells(self) -> np.ndarray:
        c = self.support_cells
        return c[~self.pmask.ravel()[c]]

    @cached_property
    def DE(self) -> sp.csr_matrix:
        """Rows of ``D`` for every cell touching X."""
        return self.D[self.support_cells].tocsr()

    def normal_trace(self, u) -> np.ndarray:
        """Net flux of u into each exterior cell adjacent to B.

        On a voxel boundary this is the discrete normal trace: it vanishes
        exactly when the zero extension of u has no divergence outside B.
        """
        return (self.D[self.exterior_cells] @ u) * self.h

    @cached_property
    def face_lin(self) -> np.ndarray:
        """Position of each face inside a P**3 array of its own component."""
        return self.lin(self.index)

    @cached_property
    def boundary_index(self) -> np.ndarray:
        return np.nonzero(self.boundary)[0]

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.nonzero(~self.boundary)[0]

    # inner products and integrals

    def inner(self, u, v) -> complex:
        return self.weight * np.vdot(u, v)

    def norm(self, u) -> float:
        return float(np.sqrt(self.weight * np.vdot(u, u).real))

    def mean_integral(self, u) -> np.ndarray:
        """Face-quadrature approximation of the integral of a field over B."""
        u = np.asarray(u)
        return np.array([u[self.axis == a].sum() for a in range(3)]) * self.weight

    def component_sum(self, u) -> np.ndarray:
        """Per-component sums of a face vector (no weight)."""
        return np.array([u[self.axis == a].sum() for a in range(3)])

    def constant(self, c) -> np.ndarray:
        """Face vector of a constant field c."""
        c = np.asarray(c)
        return c[self.axis]

    def sample(self, fn) -> np.ndarray:
        """Normal components of a vector field fn(points) -> (m, 3) at the faces."""
        vals = np.asarray(fn(self.pos))
        return vals[np.arange(self.nf), self.axis]

    def cell_values(self, u) -> np.ndarray:
        """Average the two faces of each voxel per component, shape (V, 3)."""
        u = np.asarray(u)
        n = self.n
        out = np.zeros((self.domain.voxel_count, 3), dtype=np.result_type(u.dtype, float))
        ci = self.domain.index
        for a in range(3):
            shape = [n, n, n]
            shape[a] = n + 1
            arr = np.zeros(shape, dtype=out.dtype)
            sel = self.axis == a
            arr[tuple(self.index[sel].T)] = u[sel]
            up = ci.copy()
            up[:, a] += 1
            out[:, a] = 0.5 * (arr[tuple(ci.T)] + arr[tuple(up.T)])
        return out

    def cell_norms(self, u) -> np.ndarray:
        return np.linalg.norm(self.cell_values(u), axis=1)

    # edge and node complexes used for curl potentials

    def _edge_ids(self):
        """Ids of the edges whose four incident faces all belong to X."""
        n, pm = self.n, self.pmask
        ids, locs = [], []
        start = 0
        for a in range(3):
            shape = [n + 1] * 3
            shape[a] = n
            b, c = [x for x in range(3) if x != a]
            # edge at node indices (e_b, e_c) touches voxels e_b-1, e_b and e_c-1, e_c;
            # in padded coordinates those are e_b, e_b+1 and e_c, e_c+1
            quad = {}
            for db in (0, 1):
                for dc in (0, 1):
                    sl = [None] * 3
                    sl[a] = slice(1, n + 1)
                    sl[b] = slice(db, db + n + 1)
                    sl[c] = slice(dc, dc + n + 1)
                    quad[db, dc] = pm[tuple(sl)]
            # a face between two of the four voxels is in X if either voxel is in B
            full = ((quad[0, 0] | quad[1, 0]) & (quad[0, 1] | quad[1, 1])
                    & (quad[0, 0] | quad[0, 1]) & (quad[1, 0] | quad[1, 1]))
            loc = np.argwhere(full)
            idmap = -np.ones(shape, dtype=int)
            idmap[tuple(loc.T)] = start + np.arange(len(loc))
            start += len(loc)
            ids.append(idmap)
            locs.append(loc)
        return ids, locs, start

    @cached_property
    def edges(self):
        ids, locs, ne = self._edge_ids()
        return {"ids": ids, "locs": locs, "count": ne}

    @cached_property
    def curl(self) -> sp.csr_matrix:
        """Discrete curl from edges to faces, shape (nf, ne).

        Fields in its range have zero lattice divergence on every cell.
        """
        h = self.h
        ids = self.edges["ids"]
        n = self.n
        rows, cols, vals = [], [], []
        for a, b, c in _CYCLIC:
            sel = np.nonzero(self.axis == a)[0]
            idx = self.index[sel]
            # (curl A)_a = d_b A_c - d_c A_b
            for comp, d, sign in ((c, b, 1.0), (b, c, -1.0)):
                for step, s in ((1, 1.0), (0, -1.0)):
                    e = idx.copy()
                    e[:, d] += step
                    ok = np.all(e <= n, axis=1)
                    for x in range(3):
                        lim = n - 1 if x == comp else n
                        ok &= e[:, x] <= lim
                    eid = np.full(len(sel), -1)
                    eid[ok] = ids[comp][tuple(e[ok].T)]
                    good = eid >= 0
                    rows.append(sel[good])
                    cols.append(eid[good])
                    vals.append(np.full(good.sum(), sign * s / h))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.nf, self.edges["count"]),
        )

    @cached_property
    def node_gradient(self) -> sp.csr_matrix:
        """Gradient from gauge nodes to curl edges.

        Gauge nodes are the nodes all six of whose edges carry a potential.
        """
        n, h = self.n, self.h
        ids = self.edges["ids"]
        full = np.ones((n + 1,) * 3, dtype=bool)
        for a in range(3):
            m = np.zeros((n + 1,) * 3, dtype=bool)
            for step in (0, 1):
                # edge a with lower node at index e_a = node_a - 1 + step
                sl_e = [slice(None)] * 3
                sl_n = [slice(None)] * 3
                if step == 0:
                    sl_e[a] = slice(0, n)
                    sl_n[a] = slice(1, n + 1)
                else:
                    sl_e[a] = slice(0, n)
                    sl_n[a] = slice(0, n)
                ok = np.zeros((n + 1,) * 3, dtype=bool)
                ok[tuple(sl_n)] = ids[a][tuple(sl_e)] >= 0
                m = ok if step == 0 else (m & ok)
            full &= m
        loc = np.argwhere(full)
        nid = -np.ones((n + 1,) * 3, dtype=int)
        nid[tuple(loc.T)] = np.arange(len(loc))
        rows, cols, vals = [], [], []
        for a in range(3):
            eloc = self.edges["locs"][a]
            eid = ids[a][tuple(eloc.T)]
            for step, s in ((1, 1.0), (0, -1.0)):
                nd = eloc.copy()
                nd[:, a] += step
                k = nid[tuple(nd.T)]
                good = k >= 0
                rows.append(eid[good])
                cols.append(k[good])
                vals.append(np.full(good.sum(), s / h))
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.edges["count"], len(loc)),
        )

    def edge_integral(self, A) -> np.ndarray:
        """Integral over B of a vector field given by its edge values."""
        A = np.asarray(A)
        out = []
        start = 0
        for a in range(3):
            cnt = len(self.edges["locs"][a])
            out.append(A[start:start + cnt].sum())
            start += cnt
        return np.array(out) * self.weight
