"""
Scaled Lippmann-Schwinger solve for the field inside the particle.

On the reference domain B the field E~(x) = E(delta*x + z) solves

    E~ + s M^(k delta) E~ - omega**2 mu_m s delta**2 N^(k delta) E~ = E~_in,

with s the contrast.  The static part I + s M^(0) can be inverted exactly:
it is 1/(1+s) on gradients, the identity on divergence-free fields and on
the harmonic-gradient subspace it reduces to a dense system on the boundary
faces.  That exact inverse is used as a right preconditioner for GMRES, so
near-resonant plasmonic systems cost a handful of iterations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .dispersion import Contrast, MediumParams
from .domain import Particle, ReferenceDomain
from .errors import QuasiStaticError, ResonanceError
from .grid import FaceGrid
from .operators import (
    GRAD_HARMONIC, DIV_FREE, LatticeOperator, assemble_magnetization, assemble_newtonian,
    boundary_coupling, boundary_flux_matrix, subspace_projectors,
)

KDELTA_MAX = 0.5
STATIC_EXACT_MAX_NB = 6000


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave E0 exp(i k theta . x) with k = omega sqrt(eps_m mu_m)."""

    E0: tuple
    direction: tuple
    omega: float
    k: float

    def __post_init__(self):
        E0 = np.asarray(self.E0, dtype=float)
        th = np.asarray(self.direction, dtype=float)
        if E0.shape != (3,) or th.shape != (3,):
            raise ValueError("polarization and direction must be 3-vectors")
        if abs(np.linalg.norm(E0) - 1) > 1e-12 or abs(np.linalg.norm(th) - 1) > 1e-12:
            raise ValueError("polarization and direction must be unit vectors")
        if abs(E0 @ th) > 1e-12:
            raise ValueError("polarization must be orthogonal to the direction")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        object.__setattr__(self, "E0", tuple(E0))
        object.__setattr__(self, "direction", tuple(th))

    @classmethod
    def from_medium(cls, omega, medium: MediumParams, E0=(1.0, 0.0, 0.0), direction=(0.0, 0.0, 1.0)):
        return cls(E0, direction, omega, medium.wavenumber(omega))

    @property
    def H0(self) -> np.ndarray:
        return np.cross(self.direction, self.E0)

    def phase(self, points) -> np.ndarray:
        return np.exp(1j * self.k * (np.asarray(points, dtype=float) @ np.asarray(self.direction)))


def incident_field(wave: IncidentWave, points) -> np.ndarray:
    """E_in at physical points, shape (m, 3)."""
    return wave.phase(points)[..., None] * np.asarray(wave.E0)


def incident_H(wave: IncidentWave, points) -> np.ndarray:
    """Companion H_in = theta x E0 exp(i k theta . x)."""
    return wave.phase(points)[..., None] * wave.H0


class Discretization:
    """Grid, projectors and cached operators for one reference domain."""

    def __init__(self, domain: ReferenceDomain):
        self.domain = domain
        self.grid = FaceGrid(domain)
        self._ops = {}

    @cached_property
    def projectors(self):
        return subspace_projectors(self.grid)

    @cached_property
    def coupling(self):
        return boundary_coupling(self.grid)

    @cached_property
    def boundary_matrix(self) -> np.ndarray:
        return boundary_flux_matrix(self.grid, self.coupling)

    def magnetization(self, k=0.0) -> LatticeOperator:
        key = ("m", complex(k))
        if key not in self._ops:
            self._ops[key] = assemble_magnetization(self.grid, k)
        return self._ops[key]

    def newtonian(self, k=0.0) -> LatticeOperator:
        key = ("n", complex(k))
        if key not in self._ops:
            self._ops[key] = assemble_newtonian(self.grid, k)
        return self._ops[key]

    @cached_property
    def _curl_solver(self):
        C = self.grid.curl
        G = self.grid.node_gradient
        A = (C.T @ C + G @ G.T).tocsc()
        try:
            return spla.splu(A)
        except RuntimeError:
            return None

    def curl_potential(self, e):
        """Edge potential phi with curl(phi) = e for a subspace-1 field e.

        phi is the minimum-norm potential (orthogonal to discrete gradients),
        which fixes the gauge; the coupling H . int phi does not depend on it.

        Returns
        -------
        phi : ndarray
            Edge values.
        integral : ndarray, shape (3,)
            Integral of phi over B.
        residual : float
            ||curl(phi) - e|| / ||e||.
        """
        C = self.grid.curl
        rhs = C.T @ e
        lu = self._curl_solver
        if lu is not None:
            if np.iscomplexobj(rhs):
                phi = lu.solve(rhs.real.copy()) + 1j * lu.solve(rhs.imag.copy())
            else:
                phi = lu.solve(rhs)
        else:
            A = (C.T @ C + self.grid.node_gradient @ self.grid.node_gradient.T)
            phi, _ = spla.cg(A, rhs, rtol=1e-13, maxiter=20000)
        res = float(np.linalg.norm(C @ phi - e) / max(np.linalg.norm(e), 1e-300))
        return phi, self.grid.edge_integral(phi), res


_DISC_CACHE = {}


def discretization(domain: ReferenceDomain) -> Discretization:
    key = id(domain)
    hit = _DISC_CACHE.get(key)
    if hit is None or hit.domain is not domain:
        hit = Discretization(domain)
        _DISC_CACHE.clear()
        _DISC_CACHE[key] = hit
    return hit


@dataclass
class ScatteringProblem:
    """Particle, incident wave and contrast defining one scaled solve."""

    particle: Particle
    wave: IncidentWave
    contrast: Contrast
    mu_m: float = 1.0

    def __post_init__(self):
        if self.particle.domain is None:
            raise ValueError("particle must carry a reference domain")
        if not isinstance(self.contrast, Contrast):
            self.contrast = Contrast(complex(self.contrast))
        kd = abs(self.wave.k * self.particle.delta)
        if not kd < KDELTA_MAX:
            raise QuasiStaticError(f"|k delta| = {kd:.3g} violates the quasi-static guard {KDELTA_MAX}")

    @property
    def delta(self) -> float:
        return self.particle.delta

    @property
    def kdelta(self) -> float:
        return self.wave.k * self.particle.delta

    @property
    def s(self) -> complex:
        return complex(self.contrast.value)

    @property
    def newton_coefficient(self) -> complex:
        return self.wave.omega ** 2 * self.mu_m * self.s * self.delta ** 2

    def scaled_incident(self, grid: FaceGrid) -> np.ndarray:
        """Face samples of E_in(delta x + z) on the reference grid."""
        pts = self.particle.delta * grid.pos + self.particle.z
        return self.wave.phase(pts) * np.asarray(self.wave.E0)[grid.axis]


@dataclass
class FieldSolution:
    """Solved scaled field, as face values on the reference grid."""

    problem: ScatteringProblem
    grid: FaceGrid = dc_field(repr=False)
    field: np.ndarray = dc_field(repr=False)
    incident: np.ndarray = dc_field(repr=False)
    residual: float
    iterations: int

    @property
    def energy_integral_Omega(self) -> float:
        """int_Omega |E|^2 = delta**3 int_B |E~|^2 (face quadrature)."""
        return self.problem.delta ** 3 * self.grid.weight * float(np.vdot(self.field, self.field).real)

    @property
    def norm_B(self) -> float:
        return self.grid.norm(self.field)

    def cell_field(self) -> np.ndarray:
        return self.grid.cell_values(self.field)


class StaticInverse:
    """Exact inverse of I + s M^(0) on the face space."""

    def __init__(self, disc: Discretization, s: complex):
        self.disc = disc
        self.s = complex(s)
        Bm = disc.boundary_matrix
        A = np.eye(Bm.shape[0], dtype=complex) + self.s * Bm
        self._lu = sla.lu_factor(A, check_finite=False)
        anorm = np.abs(A).sum(axis=0).max()
        gecon = sla.get_lapack_funcs("gecon", (A,))
        rcond, _ = gecon(self._lu[0], anorm, norm="1")
        self.rcond = float(rcond)
        if s != -1 and self.rcond < 1e-12:
            raise ResonanceError(f"static system is numerically singular (rcond {self.rcond:.2e}); perturb zeta")
        if 1.0 + self.s == 0:
            raise ResonanceError("1 + s = 0: the gradient subspace is exactly resonant")

    def __call__(self, f):
        d = self.disc
        g = d.grid
        f = np.asarray(f, dtype=complex)
        p2 = d.projectors.P2(f)
        r = f - p2
        gb = sla.lu_solve(self._lu, r[g.boundary_index], check_finite=False)
        M0 = d.magnetization(0.0)
        u = r - self.s * (g.D.T @ M0.convolve_cells(d.coupling.charge(gb, g.P)))
        return p2 / (1.0 + self.s) + u


def _gmres(A, b, x0=None, rtol=1e-12, restart=200, maxiter=40):
    it = [0]

    def cb(_):
        it[0] += 1

    x, info = spla.gmres(A, b, x0=x0, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter,
                         callback=cb, callback_type="pr_norm")
    return x, info, it[0]


def solve(problem: ScatteringProblem, tol: float = 1e-8, disc: Discretization | None = None,
          preconditioner: str = "auto") -> FieldSolution:
    """Solve the scaled Lippmann-Schwinger system.

    Parameters
    ----------
    problem : ScatteringProblem
    tol : float
        Required true residual ||A E~ - E~_in|| / ||E~_in||.
    preconditioner : {"auto", "static", "gradient", "none"}
        ``static`` uses the exact inverse of I + s M^(0); ``gradient`` only
        rescales the gradient subspace.  ``auto`` picks ``static`` when the
        boundary system has at most 6000 unknowns.

    Raises
    ------
    ResonanceError
        When the system is numerically singular or the iteration stalls.
    """
    domain = problem.particle.domain
    disc = disc or discretization(domain)
    g = disc.grid
    s = problem.s
    b = problem.scaled_incident(g).astype(complex)
    if s == 0:
        return FieldSolution(problem, g, b.copy(), b, 0.0, 0)
    kd = problem.kdelta
    M = disc.magnetization(kd)
    c = problem.newton_coefficient
    N = disc.newtonian(kd) if c != 0 else None

    def apply_A(x):
        y = x + s * M.matvec(x)
        if N is not None:
            y = y - c * N.matvec(x)
        return y

    if preconditioner == "auto":
        preconditioner = "static" if len(g.boundary_index) <= STATIC_EXACT_MAX_NB else "gradient"
    if preconditioner == "static":
        Cinv = StaticInverse(disc, s)
    elif preconditioner == "gradient":
        if 1.0 + s == 0:
            raise ResonanceError("1 + s = 0: the gradient subspace is exactly resonant")
        P2 = disc.projectors.P2

        def Cinv(f):
            p = P2(f)
            return f - p + p / (1.0 + s)
    elif preconditioner == "none":
        def Cinv(f):
            return f
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    nf = g.nf
    AC = spla.LinearOperator((nf, nf), matvec=lambda y: apply_A(Cinv(y)), dtype=complex)
    bnorm = np.linalg.norm(b)
    x = np.zeros(nf, dtype=complex)
    total = 0
    res = 1.0
    for sweep in range(5):
        r = b - apply_A(x) if sweep else b
        # the static inverse itself is only accurate to ~1e-11 when |s| is large,
        # so the inner tolerance stays above that and the outer loop refines
        y, info, it = _gmres(AC, r, rtol=min(1e-9, 1e-2 * tol), restart=150, maxiter=4)
        total += it
        x = x + Cinv(y)
        res = float(np.linalg.norm(b - apply_A(x)) / bnorm)
        if res <= tol:
            break
    if not np.all(np.isfinite(x)) or res > tol:
        raise ResonanceError(f"solve did not reach residual {tol:g} (got {res:.2e}); near-singular system")
    return FieldSolution(problem, g, x, b, res, total)


def energy_integral(solution: FieldSolution) -> float:
    return solution.energy_integral_Omega


def norm_diagnostics(solution: FieldSolution) -> dict:
    """L2 and L4 norms of E on Omega and the L2 norm of |E|^2.

    Uses delta-Jacobians: ||E||_{L2(Omega)} = delta**(3/2) ||E~||_{L2(B)} and
    ||E||_{L4(Omega)} = delta**(3/4) ||E~||_{L4(B)}; L4 uses voxel averages.
    """
    d = solution.problem.delta
    g = solution.grid
    cells = solution.cell_field()
    a2 = np.sum(np.abs(cells) ** 2, axis=1)
    l4_B = float((g.weight * np.sum(a2 ** 2)) ** 0.25)
    L2 = math.sqrt(solution.energy_integral_Omega)
    L4 = d ** 0.75 * l4_B
    return {"L2_Omega": L2, "L4_Omega": L4, "L2_sq_of_square": L4 ** 2,
            "L2_B": solution.norm_B, "L4_B": l4_B}


@dataclass
class ModeCluster:
    """A (numerically) degenerate group of eigenpairs and its couplings."""

    subspace: int
    lambdas: np.ndarray
    fields: np.ndarray = dc_field(repr=False)
    integrals: np.ndarray = dc_field(repr=False)
    potential_integrals: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def lam(self) -> float:
        return float(np.mean(self.lambdas))

    def coupling(self, vec) -> np.ndarray:
        """|vec . int| per mode, using field integrals (subspace 3) or potential ones (1)."""
        ints = self.integrals if self.subspace == GRAD_HARMONIC else self.potential_integrals
        return np.abs(ints @ np.asarray(vec))


def mode_clusters(eigsys, disc: Discretization | None = None, rel_gap: float = 1e-3) -> list:
    """Group an EigenSystem into clusters, attaching the integrals needed for coupling."""
    g = eigsys.grid
    out = []
    for idx in eigsys.clusters(rel_gap):
        F = np.array([eigsys[i].field for i in idx])
        lam = np.array([eigsys[i].lam for i in idx])
        ints = np.array([g.mean_integral(f) for f in F])
        pots = None
        if eigsys.subspace == DIV_FREE and disc is not None:
            pots = np.array([disc.curl_potential(f)[1] for f in F])
        out.append(ModeCluster(eigsys.subspace, lam, F, ints, pots))
    return out


def select_mode(clusters, vec) -> ModeCluster:
    """Cluster with the largest summed squared coupling to ``vec``."""
    w = [float(np.sum(c.coupling(vec) ** 2)) for c in clusters]
    return clusters[int(np.argmax(w))]


def dominant_energy_plasmonic(problem: ScatteringProblem, cluster: ModeCluster) -> float:
    """delta**3 sum_n |E_in(z) . int e_n|**2 / |1 + s lam_n|**2 over the cluster."""
    Ez = incident_field(problem.wave, problem.particle.z[None, :])[0]
    coup = cluster.integrals @ Ez
    if np.max(np.abs(coup)) <= 1e-10:
        warnings.warn("vanishing coupling: dominant plasmonic term is degenerate", RuntimeWarning)
    den = np.abs(1.0 + problem.s * cluster.lambdas) ** 2
    return float(problem.delta ** 3 * np.sum(np.abs(coup) ** 2 / den))


def dominant_energy_dielectric(problem: ScatteringProblem, cluster: ModeCluster) -> float:
    """omega**2 mu_m**2 delta**5 sum_n |H_in(z) . int phi_n|**2 / |1 - omega**2 mu_m s delta**2 lam_n|**2."""
    if cluster.potential_integrals is None:
        raise ValueError("dielectric dominant term needs curl potentials of the cluster")
    Hz = incident_H(problem.wave, problem.particle.z[None, :])[0]
    coup = cluster.potential_integrals @ Hz
    if np.max(np.abs(coup)) <= 1e-10:
        warnings.warn("vanishing coupling: dominant dielectric term is degenerate", RuntimeWarning)
    w, mu, d = problem.wave.omega, problem.mu_m, problem.delta
    den = np.abs(1.0 - w ** 2 * mu * problem.s * d ** 2 * cluster.lambdas) ** 2
    return float(w ** 2 * mu ** 2 * d ** 5 * np.sum(np.abs(coup) ** 2 / den))


def export_field_csv(solution: FieldSolution, path):
    """Per-voxel field (voxel averages) as CSV."""
    from .io import write_csv

    cells = solution.cell_field()
    cen = solution.grid.domain.centroids
    rows = []
    for i in range(len(cen)):
        e = cells[i]
        rows.append([i, *map(float, cen[i]), *(float(v) for c in e for v in (c.real, c.imag))])
    hdr = ["index", "x", "y", "z", "re_ex", "im_ex", "re_ey", "im_ey", "re_ez", "im_ez"]
    return write_csv(path, hdr, rows)
