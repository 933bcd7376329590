"""
Newtonian and magnetization operators, subspace projectors and eigen-systems.

Operators act on face vectors of a ``FaceGrid``.  The volume potential is
discretized with the lattice Green's function, which makes two identities
hold to rounding error: the static magnetization operator M = D^T K D
vanishes on divergence-free fields with zero normal trace and is the
identity on gradients of functions vanishing outside B.  The dynamic part
of the Helmholtz kernel, (exp(ikr) - 1)/(4 pi r), is smooth and added by
midpoint quadrature.

Products are evaluated matrix free with zero-padded FFT convolutions; a
dense matrix is available through ``to_dense`` for small grids.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy import fft
from scipy.sparse.csgraph import connected_components

from .errors import SubspaceError
from .grid import FaceGrid
from .lattice import lgf_table

_WORKERS = 1

NEWTONIAN = "newtonian"
MAGNETIZATION = "magnetization"
DIV_FREE, CURL_FREE, GRAD_HARMONIC = 1, 2, 3


def set_workers(n: int) -> None:
    """Cap the number of FFT worker threads."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def green(x, y, k: complex = 0.0) -> complex:
    """Helmholtz fundamental solution exp(ik|x-y|) / (4 pi |x-y|)."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r == 0.0:
        raise ValueError("green is singular at x == y")
    return complex(np.exp(1j * k * r) / (4.0 * math.pi * r))


def _sphere_self(k: complex, a: float, terms: int = 40) -> complex:
    # int_0^a r exp(ikr) dr as a power series, exact for small |k|a
    total = 0.0 + 0.0j
    term = 1.0 + 0.0j
    for j in range(terms):
        if j:
            term *= 1j * k * a / j
        total += term * a * a / (j + 2)
    return total


@dataclass(frozen=True)
class GreenKernel:
    """Discrete Helmholtz kernel on a cubic lattice of spacing h.

    Parameters
    ----------
    k : complex
        Wavenumber (k*delta for scaled problems).
    regularization : {"lattice", "sphere"}
        ``lattice``: static part from the lattice Green's function, so that
        the discrete Laplacian is inverted exactly.  ``sphere``: midpoint
        rule off the diagonal and the integral of G over the volume-equivalent
        sphere on it.
    series_order : int or None
        If given, the dynamic part is replaced by its Taylor series
        sum_{j=0..J} (ik)**(j+1) r**j / (4 pi (j+1)!).
    """

    k: complex = 0.0
    regularization: str = "lattice"
    series_order: int | None = None

    def __post_init__(self):
        if self.regularization not in ("lattice", "sphere"):
            raise ValueError(f"unknown regularization {self.regularization!r}")
        object.__setattr__(self, "k", complex(self.k))

    def __call__(self, x, y) -> complex:
        return green(x, y, self.k)

    @property
    def is_real(self) -> bool:
        return self.k == 0

    def values(self, m, h: float) -> np.ndarray:
        """Kernel weights (already multiplied by the cell volume) at offsets m."""
        m = np.abs(np.asarray(m, dtype=int))
        r = h * np.sqrt(np.sum(m.astype(float) ** 2, axis=-1))
        zero = r == 0
        rs = np.where(zero, 1.0, r)
        k = self.k
        if self.regularization == "lattice":
            g = lgf_table(max(1, int(m.max())))
            out = (h * h) * g[m[..., 0], m[..., 1], m[..., 2]].astype(complex)
            if k != 0:
                out += h ** 3 * self._dynamic(r, rs, zero)
        else:
            a = (3.0 * h ** 3 / (4.0 * math.pi)) ** (1.0 / 3.0)
            if self.series_order is None:
                out = h ** 3 * np.exp(1j * k * r) / (4.0 * math.pi * rs)
            else:
                out = h ** 3 / (4.0 * math.pi * rs) + h ** 3 * self._dynamic(r, rs, zero)
            out = np.where(zero, _sphere_self(k, a), out)
        return out if k != 0 else out.real

    def _dynamic(self, r, rs, zero):
        k = self.k
        if self.series_order is None:
            d = np.expm1(1j * k * r) / (4.0 * math.pi * rs)
            return np.where(zero, 1j * k / (4.0 * math.pi), d)
        d = np.zeros(np.shape(r), dtype=complex)
        fact = 1.0
        for j in range(self.series_order + 1):
            fact *= j + 1
            d = d + (1j * k) ** (j + 1) * r ** j / (4.0 * math.pi * fact)
        return d


@lru_cache(maxsize=16)
def _kernel_hat(P: int, h: float, kernel: GreenKernel):
    S = 2 * P
    m = np.arange(S)
    m = np.minimum(m, S - m)
    grid = np.stack(np.meshgrid(m, m, m, indexing="ij"), axis=-1)
    K = kernel.values(grid, h)
    if np.isrealobj(K):
        out = fft.rfftn(K, workers=_WORKERS)
    else:
        out = fft.fftn(K, workers=_WORKERS)
    out.setflags(write=False)
    return out


def _convolve(q, P: int, Khat) -> np.ndarray:
    """Aperiodic convolution of a P**3 lattice array with the kernel."""
    S = 2 * P
    q = np.asarray(q).reshape(P, P, P)
    if np.isrealobj(Khat):
        raise AssertionError("kernel transform must be complex")
    real_kernel = Khat.shape[-1] == S // 2 + 1
    if real_kernel:
        if np.iscomplexobj(q):
            return _convolve(q.real, P, Khat) + 1j * _convolve(q.imag, P, Khat)
        r = fft.irfftn(fft.rfftn(q, s=(S, S, S), workers=_WORKERS) * Khat, s=(S, S, S), workers=_WORKERS)
        return r[:P, :P, :P].ravel()
    r = fft.ifftn(fft.fftn(q, s=(S, S, S), workers=_WORKERS) * Khat, workers=_WORKERS)
    return r[:P, :P, :P].ravel()


class LatticeOperator:
    """Matrix-free Newtonian or magnetization operator on a face grid.

    Parameters
    ----------
    grid : FaceGrid
    kind : {"newtonian", "magnetization"}
    kernel : GreenKernel
    """

    def __init__(self, grid: FaceGrid, kind: str, kernel: GreenKernel):
        if kind not in (NEWTONIAN, MAGNETIZATION):
            raise ValueError(f"unknown operator kind {kind!r}")
        self.grid = grid
        self.kind = kind
        self.kernel = kernel
        self.k = kernel.k
        self.shape = (grid.nf, grid.nf)
        self.dtype = np.dtype(float) if kernel.is_real else np.dtype(complex)
        self._hat = _kernel_hat(grid.P, grid.h, kernel)

    def __repr__(self):
        return f"LatticeOperator({self.kind}, k={self.k}, nf={self.grid.nf})"

    def convolve_cells(self, q) -> np.ndarray:
        return _convolve(q, self.grid.P, self._hat)

    def matvec(self, u) -> np.ndarray:
        u = np.asarray(u)
        g = self.grid
        if self.kind == MAGNETIZATION:
            return g.D.T @ self.convolve_cells(g.D @ u)
        out = np.zeros(g.nf, dtype=np.result_type(u.dtype, self.dtype))
        P3 = g.P ** 3
        for a in range(3):
            sel = g.axis == a
            q = np.zeros(P3, dtype=u.dtype)
            q[g.face_lin[sel]] = u[sel]
            out[sel] = self.convolve_cells(q)[g.face_lin[sel]]
        return out

    def __matmul__(self, u):
        u = np.asarray(u)
        if u.ndim == 1:
            return self.matvec(u)
        return np.column_stack([self.matvec(c) for c in u.T])

    def as_linear_operator(self) -> spla.LinearOperator:
        dt = np.dtype(complex)
        return spla.LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.rmatvec, dtype=dt)

    def rmatvec(self, u):
        # the operator is complex symmetric, so A^H u = conj(A conj(u))
        return np.conj(self.matvec(np.conj(u)))

    def to_dense(self) -> np.ndarray:
        """Dense matrix (nf x nf); intended for small grids only."""
        nf = self.grid.nf
        out = np.empty((nf, nf), dtype=self.dtype)
        e = np.zeros(nf)
        for j in range(nf):
            e[j] = 1.0
            col = self.matvec(e)
            out[:, j] = col if self.dtype == complex else col.real
            e[j] = 0.0
        return out


def assemble_newtonian(grid: FaceGrid, k: complex = 0.0, regularization: str = "lattice") -> LatticeOperator:
    """Newtonian operator N^(k): componentwise volume convolution with G^(k)."""
    return LatticeOperator(grid, NEWTONIAN, GreenKernel(k, regularization))


def assemble_magnetization(grid: FaceGrid, k: complex = 0.0, regularization: str = "lattice") -> LatticeOperator:
    """Magnetization operator M^(k) = grad int grad G^(k) . u, as D^T N^(k) D."""
    return LatticeOperator(grid, MAGNETIZATION, GreenKernel(k, regularization))


def expand_newtonian_series(grid: FaceGrid, k: complex, order: int, regularization: str = "lattice") -> LatticeOperator:
    """Newtonian operator with the dynamic kernel replaced by its Taylor series.

    Keeps N^(0), the (ik/4pi) int term and the terms j = 1..order.

    Raises
    ------
    ValueError
        If order < 1 or |k| * diam(B) >= 1 (outside the quasi-static range
        where the truncation is meaningful).
    """
    if int(order) != order or order < 1:
        raise ValueError("series order must be an integer >= 1")
    diam = grid.domain.diameter
    if abs(k) * diam >= 1.0:
        raise ValueError(f"|k| * diam(B) = {abs(k) * diam:.3g} >= 1; series refused")
    return LatticeOperator(grid, NEWTONIAN, GreenKernel(k, regularization, int(order)))


def _split_solve(lu, b):
    if np.iscomplexobj(b):
        return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    return lu.solve(np.ascontiguousarray(b, dtype=float))


class SubspaceProjectors:
    """Orthogonal projectors onto the three subspaces of face fields.

    1: fields whose zero extension is divergence free on the whole lattice,
       i.e. D u = 0 on B and on the exterior cells touching it (zero
       divergence and zero normal trace)
    2: gradients D_B^T p of cell functions vanishing outside B
    3: the orthogonal complement of 1 and 2 (discrete harmonic gradients)
    """

    def __init__(self, grid: FaceGrid):
        self.grid = grid
        DB = grid.DB
        self._lu2 = spla.splu((DB @ DB.T).tocsc())
        DE = grid.DE
        self._DE = DE
        L1 = (DE @ DE.T).tocsr()
        ncomp, labels = connected_components(abs(L1) > 0, directed=False)
        # pin one cell per connected component of the singular (Neumann type) problem
        pins = np.array([np.nonzero(labels == c)[0][-1] for c in range(ncomp)])
        keep = np.setdiff1d(np.arange(L1.shape[0]), pins)
        self._keep = keep
        self._lu1 = spla.splu(L1[keep][:, keep].tocsc())
        nf, V = grid.nf, grid.domain.voxel_count
        d1 = nf - (DE.shape[0] - ncomp)
        self.dims = {DIV_FREE: d1, CURL_FREE: V, GRAD_HARMONIC: nf - d1 - V}

    def P2(self, u):
        DB = self.grid.DB
        return DB.T @ _split_solve(self._lu2, DB @ u)

    def P1(self, u):
        u = np.asarray(u)
        rhs = self._DE @ u
        p = np.zeros(rhs.shape, dtype=rhs.dtype)
        p[self._keep] = _split_solve(self._lu1, rhs[self._keep])
        return u - self._DE.T @ p

    def P3(self, u):
        return u - self.P1(u) - self.P2(u)

    def project(self, u, subspace: int):
        return {DIV_FREE: self.P1, CURL_FREE: self.P2, GRAD_HARMONIC: self.P3}[subspace](u)

    def __call__(self, u):
        return self.P1(u), self.P2(u), self.P3(u)

    def basis(self, subspace: int, tol: float = 1e-8) -> np.ndarray:
        """Orthonormal (face inner product) basis of a subspace; small grids only."""
        nf = self.grid.nf
        Pm = np.column_stack([self.project(e, subspace) for e in np.eye(nf)])
        w, V = np.linalg.eigh(0.5 * (Pm + Pm.T))
        Q = V[:, w > 0.5]
        if Q.shape[1] == 0:
            raise SubspaceError(f"subspace {subspace} is empty (dims {self.dims})")
        return Q / math.sqrt(self.grid.weight)


def subspace_projectors(grid: FaceGrid) -> SubspaceProjectors:
    proj = SubspaceProjectors(grid)
    bad = {s: d for s, d in proj.dims.items() if d <= 0}
    if bad:
        raise SubspaceError(f"rank deficient decomposition at n={grid.n}: dims {proj.dims}")
    return proj


@dataclass
class BoundaryCoupling:
    """Data linking boundary face values to exterior cell charges.

    For a field u with D_B u = 0 the lattice charge D u lives on the exterior
    cells adjacent to boundary faces: (D u)[cout_b] += s_b u_b.
    """

    faces: np.ndarray
    cout: np.ndarray
    cin: np.ndarray
    s: np.ndarray

    def charge(self, g, P: int) -> np.ndarray:
        q = np.zeros(P ** 3, dtype=np.result_type(g, float))
        np.add.at(q, self.cout, self.s * g)
        return q


def boundary_coupling(grid: FaceGrid) -> BoundaryCoupling:
    bi = grid.boundary_index
    Db = grid.D[:, bi].tocsc()
    Db.sort_indices()
    rows = Db.indices.reshape(-1, 2)
    vals = Db.data.reshape(-1, 2)
    inside = grid.pmask.ravel()[rows]
    first_out = ~inside[:, 0]
    cout = np.where(first_out, rows[:, 0], rows[:, 1])
    cin = np.where(first_out, rows[:, 1], rows[:, 0])
    s = np.where(first_out, vals[:, 0], vals[:, 1])
    return BoundaryCoupling(bi, cout, cin, s)


def boundary_flux_matrix(grid: FaceGrid, coupling: BoundaryCoupling | None = None, block: int = 512) -> np.ndarray:
    """Matrix B (nb x nb) with (M u)_b = B u_b for every u with D_B u = 0.

    Its nonzero eigenvalues are exactly the spectrum of the static
    magnetization operator on subspace 3.
    """
    c = coupling or boundary_coupling(grid)
    P, h = grid.P, grid.h

    def coords(l):
        return np.stack([l // (P * P), (l // P) % P, l % P], axis=1)

    Co, Ci = coords(c.cout), coords(c.cin)
    g = lgf_table(P)
    nb = len(c.s)
    Bm = np.empty((nb, nb))
    for i0 in range(0, nb, block):
        sl = slice(i0, min(nb, i0 + block))
        do = np.abs(Co[sl, None, :] - Co[None, :, :])
        di = np.abs(Ci[sl, None, :] - Co[None, :, :])
        Bm[sl] = (c.s[sl, None] * c.s[None, :]) * (h * h) * (
            g[do[..., 0], do[..., 1], do[..., 2]] - g[di[..., 0], di[..., 1], di[..., 2]]
        )
    return Bm


@dataclass
class EigenPair:
    lam: float
    field: np.ndarray = dc_field(repr=False)
    subspace: int
    residual: float = 0.0


@dataclass
class EigenSystem:
    """Eigenpairs of a static operator restricted to one subspace.

    Fields are orthonormal in the face inner product.  Pairs whose relative
    residual exceeded the threshold are listed in ``discarded``.
    """

    grid: FaceGrid = dc_field(repr=False)
    kind: str
    subspace: int
    pairs: list
    discarded: list = dc_field(default_factory=list)
    method: str = ""

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def fields(self) -> np.ndarray:
        return np.array([p.field for p in self.pairs])

    def gram_deviation(self) -> float:
        F = self.fields
        if len(F) == 0:
            return 0.0
        G = self.grid.weight * (F.conj() @ F.T)
        return float(np.abs(G - np.eye(len(F))).max())

    def clusters(self, rel_gap: float = 1e-3) -> list:
        """Groups of indices whose eigenvalues agree within a relative gap."""
        lam = self.lambdas
        order = np.argsort(-lam, kind="stable")
        out = []
        for i in order:
            if out and abs(lam[i] - lam[out[-1][-1]]) <= rel_gap * max(abs(lam[i]), abs(lam[out[-1][-1]]), 1e-300):
                out[-1].append(int(i))
            else:
                out.append([int(i)])
        return out


def mean_integral(grid: FaceGrid, u) -> np.ndarray:
    """Integral over B of a face field (face quadrature)."""
    return grid.mean_integral(u)


def _orthonormalize_clusters(grid, lam, U, rel_gap=1e-3):
    # eigenvectors of numerically degenerate clusters are only determined up
    # to a basis change; make them orthonormal in the face inner product
    order = np.argsort(-lam, kind="stable")
    lam, U = lam[order], U[:, order]
    w = math.sqrt(grid.weight)
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or abs(lam[i] - lam[i - 1]) > rel_gap * max(abs(lam[i - 1]), 1e-300):
            Q, _ = np.linalg.qr(U[:, start:i] * w)
            U[:, start:i] = Q / w
            start = i
    return lam, U


def _finish(grid, op, proj, subspace, lam, U, tol, method, kind):
    pairs, dropped = [], []
    for j in range(len(lam)):
        u = U[:, j]
        r = op.matvec(u)
        if proj is not None:
            r = proj.project(r, subspace)
        nu = grid.norm(u)
        res = grid.norm(r - lam[j] * u) / max(nu, 1e-300)
        if res <= tol * max(1.0, abs(lam[j])):
            pairs.append(EigenPair(float(lam[j]), u, subspace, float(res)))
        else:
            dropped.append((float(lam[j]), float(res)))
    if dropped:
        warnings.warn(f"discarded {len(dropped)} eigenpairs with residual above {tol:g}", RuntimeWarning)
    return EigenSystem(grid, kind, subspace, pairs, dropped, method)


def eigensystem_static(op: LatticeOperator, projectors: SubspaceProjectors, subspace: int,
                       count: int = 20, method: str = "auto", sigma: float | None = None,
                       tol: float = 1e-6, rel_gap: float = 1e-3) -> EigenSystem:
    """Eigenpairs of a static operator restricted to a subspace.

    Parameters
    ----------
    op : LatticeOperator
        Must have k = 0.
    projectors : SubspaceProjectors
    subspace : {1, 2, 3}
    count : int
        Number of pairs for the iterative methods (ignored by ``dense``).
    method : {"auto", "dense", "krylov", "subspace", "boundary"}
        ``dense`` diagonalizes the operator in an explicit subspace basis and
        returns the full restricted spectrum.  ``krylov`` returns the
        ``count`` largest eigenvalues by Lanczos.  ``subspace`` is a seeded
        block iteration, meant for subspaces 1 and 2 of the magnetization
        operator where the restriction is (nearly) scalar.  ``boundary`` (magnetization
        on subspace 3 only) works with the boundary flux matrix and returns
        the ``count`` eigenvalues nearest ``sigma`` (default 1/3).
    tol : float
        Pairs with relative residual above ``tol`` are discarded.

    Returns
    -------
    EigenSystem
        Sorted by decreasing eigenvalue.
    """
    if op.k != 0:
        raise ValueError("eigensystem_static needs a static (k = 0) operator")
    if subspace not in (1, 2, 3):
        raise ValueError("subspace must be 1, 2 or 3")
    grid = op.grid
    if projectors.dims[subspace] <= 0:
        raise SubspaceError(f"subspace {subspace} has dimension {projectors.dims[subspace]}")
    if method == "auto":
        if grid.nf <= 3000:
            method = "dense"
        elif op.kind == MAGNETIZATION and subspace == GRAD_HARMONIC:
            method = "boundary"
        elif op.kind == MAGNETIZATION:
            method = "subspace"
        else:
            method = "krylov"

    if method == "dense":
        Q = projectors.basis(subspace)
        AQ = op @ Q
        H = grid.weight * (Q.T @ AQ)
        w, Y = np.linalg.eigh(0.5 * (H + H.T))
        lam, U = _orthonormalize_clusters(grid, w, Q @ Y)
        return _finish(grid, op, projectors, subspace, lam, U, tol, method, op.kind)

    if method == "krylov":
        dim = projectors.dims[subspace]
        k = min(count, dim - 1)

        def mv(x):
            x = projectors.project(np.asarray(x).ravel(), subspace)
            return projectors.project(op.matvec(x), subspace).real

        A = spla.LinearOperator(op.shape, matvec=mv, dtype=float)
        v0 = projectors.project(np.ones(grid.nf) + 0.1 * grid.axis, subspace)
        if np.linalg.norm(v0) == 0:
            v0 = projectors.project(np.cos(np.arange(grid.nf)), subspace)
        w, U = spla.eigsh(A, k=k, which="LA", v0=v0, tol=1e-10, ncv=min(op.shape[0], 2 * k + 20))
        # Lanczos can miss copies of multiple eigenvalues: deflate the pairs
        # found so far and look again until nothing new reaches the window
        for _ in range(4):
            Q, _r = np.linalg.qr(U)

            def mv2(x, Q=Q):
                x = np.asarray(x).ravel()
                x = projectors.project(x - Q @ (Q.T @ x), subspace)
                y = projectors.project(op.matvec(x), subspace).real
                return y - Q @ (Q.T @ y)

            A2 = spla.LinearOperator(op.shape, matvec=mv2, dtype=float)
            k2 = min(6, dim - 1 - U.shape[1])
            if k2 < 1:
                break
            v2 = mv2(np.cos(np.arange(grid.nf) * 0.61) + 1.0)
            w2, U2 = spla.eigsh(A2, k=k2, which="LA", v0=v2, tol=1e-10, ncv=min(op.shape[0], 2 * k2 + 20))
            new = w2 >= w.min() - rel_gap * abs(w.min())
            if not np.any(new):
                break
            w, U = np.concatenate([w, w2[new]]), np.column_stack([U, U2[:, new]])
        U = np.column_stack([projectors.project(U[:, j], subspace) for j in range(U.shape[1])])
        lam, U = _orthonormalize_clusters(grid, w, U)
        U = U / np.array([grid.norm(U[:, j]) for j in range(U.shape[1])])
        return _finish(grid, op, projectors, subspace, lam, U, tol, method, op.kind)

    if method == "subspace":
        # block iteration with Rayleigh-Ritz; robust when the restriction is
        # (numerically) a multiple of the identity, where Lanczos breaks down
        dim = projectors.dims[subspace]
        k = min(count, dim)
        rng = np.random.default_rng(12345)
        X = np.column_stack([projectors.project(rng.standard_normal(grid.nf), subspace) for _ in range(k)])
        for _ in range(4):
            X, _r = np.linalg.qr(X)
            AX = np.column_stack([projectors.project(op.matvec(X[:, j]), subspace).real for j in range(k)])
            H = X.T @ AX
            w, Y = np.linalg.eigh(0.5 * (H + H.T))
            X = AX @ Y if np.max(np.abs(w)) > 1e-8 else X @ Y
        X, _r = np.linalg.qr(X)
        AX = np.column_stack([projectors.project(op.matvec(X[:, j]), subspace).real for j in range(k)])
        w, Y = np.linalg.eigh(0.5 * (X.T @ AX + AX.T @ X))
        U = X @ Y
        U = U / np.array([grid.norm(U[:, j]) for j in range(k)])
        lam, U = _orthonormalize_clusters(grid, w, U)
        return _finish(grid, op, projectors, subspace, lam, U, tol, method, op.kind)

    if method == "boundary":
        if op.kind != MAGNETIZATION or subspace != GRAD_HARMONIC:
            raise ValueError("the boundary method applies to the magnetization operator on subspace 3")
        lam, U = boundary_eigenpairs(grid, count=count, sigma=1.0 / 3.0 if sigma is None else sigma, op=op)
        return _finish(grid, op, projectors, subspace, lam, U, tol, method, op.kind)

    raise ValueError(f"unknown eigen method {method!r}")


def boundary_spectrum(grid: FaceGrid, Bm=None) -> np.ndarray:
    """All nonzero subspace-3 magnetization eigenvalues, descending (dense, O(nb**3))."""
    if Bm is None:
        Bm = boundary_flux_matrix(grid)
    w = np.linalg.eigvals(Bm).real
    return np.sort(w[np.abs(w) > 1e-10])[::-1]


def _cluster_space(Bm, lam, m, rng, tol=1e-13, maxit=40):
    # block inverse iteration until the block is invariant; the shift is
    # nudged off the (multiple) eigenvalue
    nb = Bm.shape[0]
    shift = lam + 1e-9 * max(1.0, abs(lam))
    lu = sla.lu_factor(Bm - shift * np.eye(nb))
    X = rng.standard_normal((nb, m))
    scale = np.linalg.norm(Bm, 1)
    for _ in range(maxit):
        X, _r = np.linalg.qr(sla.lu_solve(lu, X))
        BX = Bm @ X
        if np.linalg.norm(BX - X @ (X.T @ BX)) <= tol * scale:
            break
    return X


def boundary_eigenpairs(grid: FaceGrid, count: int = 60, sigma: float = 1.0 / 3.0, op=None, Bm=None,
                        rel_gap: float = 1e-3):
    """Subspace-3 magnetization eigenpairs near ``sigma`` via the boundary matrix.

    The eigenvalues of the (non-symmetric) boundary matrix are computed
    densely, so multiplicities are exact; the eigenspace of every selected
    cluster is then obtained by block inverse iteration.  Clusters are kept
    whole, so slightly more than ``count`` pairs may be returned.

    Returns eigenvalues (descending) and face fields normalized in the face
    inner product.
    """
    coup = boundary_coupling(grid)
    if Bm is None:
        Bm = boundary_flux_matrix(grid, coup)
    if op is None:
        op = assemble_magnetization(grid, 0.0)
    w = boundary_spectrum(grid, Bm)
    # clusters in descending order
    groups, start = [], 0
    for i in range(1, len(w) + 1):
        if i == len(w) or abs(w[i] - w[i - 1]) > rel_gap * abs(w[i - 1]):
            groups.append((start, i))
            start = i
    groups.sort(key=lambda g: abs(w[g[0]:g[1]].mean() - sigma))
    chosen, total = [], 0
    for g in groups:
        if total >= count:
            break
        chosen.append(g)
        total += g[1] - g[0]
    chosen.sort()
    rng = np.random.default_rng(2024)
    lams, cols = [], []
    for i0, i1 in chosen:
        m = i1 - i0
        if m == 1:
            X = _cluster_space(Bm, w[i0], 1, rng)
            lams.append(w[i0:i1])
        else:
            X = _cluster_space(Bm, float(w[i0:i1].mean()), m, rng)
            # Rayleigh-Ritz inside the cluster space
            H = X.T @ (Bm @ X)
            mu, Y = np.linalg.eig(H)
            X = X @ Y.real
            lams.append(mu.real)
        cols.append(X)
    lam = np.concatenate(lams)
    G = np.column_stack(cols)
    U = np.empty((grid.nf, len(lam)))
    for j in range(len(lam)):
        U[:, j] = (grid.D.T @ op.convolve_cells(coup.charge(G[:, j], grid.P))).real / lam[j]
    lam, U = _orthonormalize_clusters(grid, lam, U, rel_gap)
    U = U / np.array([grid.norm(U[:, j]) for j in range(U.shape[1])])
    return lam, U


def restricted_norm(op: LatticeOperator, projectors: SubspaceProjectors, subspace: int, shift: float = 0.0) -> float:
    """Operator norm of P_j (op - shift I) P_j, estimated by Lanczos."""
    def mv(x):
        x = projectors.project(np.asarray(x).ravel(), subspace)
        return projectors.project(op.matvec(x) - shift * x, subspace).real

    A = spla.LinearOperator(op.shape, matvec=mv, dtype=float)
    v0 = projectors.project(np.cos(np.arange(op.shape[0]) * 0.7) + 1.0, subspace)
    w = spla.eigsh(A, k=1, which="LM", v0=v0, tol=1e-10, return_eigenvectors=False)
    return float(abs(w[0]))
