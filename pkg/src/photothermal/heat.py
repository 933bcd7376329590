"""
Heat kernel potentials and the dominant photothermal temperature rise.

The exterior heat kernel is Phi(x, t; y, tau) = (alpha / (4 pi (t - tau)))**1.5
* exp(-alpha |x - y|**2 / (4 (t - tau))) for t > tau and 0 otherwise.  Its
time integral from 0 to t at a fixed source point has the closed form

    J = alpha / (4 pi r) * erfc(sqrt(alpha) r / (2 sqrt(t))),   r = |xi - z|.

The leading temperature at xi collapses the electromagnetic heat source to
the particle centre, (omega Im eps_p / (2 pi gamma_m alpha_m)) * J * int |E|**2.
The oracle keeps the true spatial spread of |E|**2 and integrates in time
adaptively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .dispersion import RegimeKind
from .errors import ConfigError, QuadratureError


@dataclass(frozen=True)
class HeatCoefficients:
    """Thermal parameters; the particle conductivity is gamma_p_bar * delta**-2."""

    rho_p: float = 1.0
    c_p: float = 1.0
    gamma_p_bar: float = 1.0
    rho_m: float = 0.5
    c_m: float = 1.0
    gamma_m: float = 0.5

    def __post_init__(self):
        for name in ("rho_p", "c_p", "gamma_p_bar", "rho_m", "c_m", "gamma_m"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"HeatCoefficients.{name} must be positive, got {v!r}")
        if not self.gamma_m < math.sqrt(self.gamma_p_bar * self.rho_p * self.c_p):
            raise ConfigError("gamma_m must be below sqrt(gamma_p_bar * rho_p * c_p)")

    def gamma_p(self, delta: float) -> float:
        return self.gamma_p_bar * delta ** -2

    def alpha_p(self, delta: float) -> float:
        return self.rho_p * self.c_p / self.gamma_p(delta)

    @property
    def alpha_m(self) -> float:
        return self.rho_m * self.c_m / self.gamma_m


@dataclass(frozen=True)
class HeatQuery:
    xi: tuple
    t: float
    p: float = 0.0
    T0: float = 10.0
    r: float = 0.25

    def __post_init__(self):
        if len(tuple(self.xi)) != 3:
            raise ConfigError("xi must be a 3-vector")
        object.__setattr__(self, "xi", tuple(float(v) for v in self.xi))
        if not self.t > 0 or not self.T0 > 0:
            raise ConfigError("t and T0 must be positive")
        if not (0.0 <= self.p < 1.0):
            raise ConfigError("p must lie in [0, 1)")
        if not (0.0 < self.r < 0.5):
            raise ConfigError("r must lie in (0, 1/2)")


def heat_kernel(x, t, y, tau, alpha) -> np.ndarray:
    """Fundamental solution of alpha d_t - Laplace; zero for t <= tau.

    Broadcasts over leading dimensions of x, y (last axis of length 3) and
    over t, tau.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = np.sum((x - y) ** 2, axis=-1)
    dt = np.asarray(t, dtype=float) - np.asarray(tau, dtype=float)
    pos = dt > 0
    ds = np.where(pos, dt, 1.0)
    val = (alpha / (4.0 * math.pi * ds)) ** 1.5 * np.exp(-alpha * r2 / (4.0 * ds))
    out = np.where(pos, val, 0.0)
    return out if out.ndim else float(out)


def _distance(xi, z) -> float:
    r = float(np.linalg.norm(np.asarray(xi, dtype=float) - np.asarray(z, dtype=float)))
    if r == 0.0:
        raise ValueError("xi coincides with z; J is singular")
    return r


def time_integral_J(xi, z, t, alpha_m) -> float:
    """Closed form of int_0^t Phi(xi, t; z, tau) dtau."""
    r = _distance(xi, z)
    if not t > 0:
        raise ValueError("t must be positive")
    return float(alpha_m / (4.0 * math.pi * r) * special.erfc(math.sqrt(alpha_m) * r / (2.0 * math.sqrt(t))))


def J_limit(xi, z, alpha_m) -> float:
    """t -> infinity limit alpha_m / (4 pi |xi - z|)."""
    return alpha_m / (4.0 * math.pi * _distance(xi, z))


def erf_series(x: float, terms: int = 60) -> float:
    """Maclaurin series of erf, summed term by term."""
    total = 0.0
    term = x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def time_integral_J_series(xi, z, t, alpha_m, terms: int = 60) -> float:
    """J written as alpha/(4 pi r) [1 - erf(sqrt(b) a)] with the erf series."""
    r = _distance(xi, z)
    b = alpha_m * r * r
    a = 1.0 / (2.0 * math.sqrt(t))
    return alpha_m / (4.0 * math.pi * r) * (1.0 - erf_series(math.sqrt(b) * a, terms))


def time_integral_J_quadrature(xi, z, t, alpha_m, epsrel: float = 1e-12) -> float:
    """int_0^t Phi dtau by adaptive quadrature in log(t - tau)."""
    r = _distance(xi, z)
    c = alpha_m * r * r / 4.0

    def f(v):
        s = math.exp(v)
        return (alpha_m / (4.0 * math.pi * s)) ** 1.5 * math.exp(-c / s) * s

    lo = math.log(c / 800.0)
    hi = math.log(t)
    if hi <= lo:
        return 0.0
    peak = math.log(c / 1.5)
    pts = [p for p in (peak,) if lo < p < hi]
    val, err = integrate.quad(f, lo, hi, points=pts or None, epsabs=0.0, epsrel=epsrel, limit=400)
    if err > 100 * epsrel * abs(val) + 1e-300:
        raise QuadratureError(f"J quadrature reached only {err:.2e}")
    return val


@dataclass
class HeatSource:
    """Body heat source (omega / (2 pi gamma_p)) Im(eps_p) |E|**2 on (0, T0).

    Stored on quadrature points of Omega (face points of the reference grid
    mapped to physical space).
    """

    points: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    T0: float

    def at(self, t) -> np.ndarray:
        return self.density if 0.0 < t < self.T0 else np.zeros_like(self.density)

    def total(self) -> float:
        return float(np.sum(self.weights * self.density))


def heat_source(solution, omega: float, im_eps_p: float, gamma_p: float, T0: float,
                model: str = "faces") -> HeatSource:
    """Heat source of a solved field.

    ``faces`` places one quadrature point per face unknown; ``voxels``
    lumps the face energy onto voxel centroids (each face split evenly
    between its voxels in B), which keeps the total int |E|**2 unchanged.
    """
    g = solution.grid
    prob = solution.problem
    d = prob.delta
    c = omega / (2.0 * math.pi * gamma_p) * im_eps_p
    e2 = np.abs(solution.field) ** 2
    if model == "faces":
        pts = prob.particle.z + d * g.pos
        wts = np.full(g.nf, g.weight * d ** 3)
        return HeatSource(pts, wts, c * e2, float(T0))
    if model != "voxels":
        raise ValueError(f"unknown source model {model!r}")
    inc = abs(g.D[g.cells, :]).tocsr()
    inc.data[:] = 1.0
    mult = np.asarray(inc.sum(axis=0)).ravel()
    energy = inc @ (e2 * g.weight * d ** 3 / mult)
    pts = prob.particle.z + d * g.domain.centroids
    return HeatSource(pts, energy, np.full(len(energy), c), float(T0))


def point_source(z, energy: float, omega: float, im_eps_p: float, gamma_p: float, T0: float) -> HeatSource:
    """Source concentrated at z with the given int |E|**2."""
    dens = np.array([omega / (2.0 * math.pi * gamma_p) * im_eps_p])
    return HeatSource(np.asarray(z, dtype=float)[None, :], np.array([energy]), dens, float(T0))


def heat_prefactor(omega: float, im_eps_p: float, gamma_m: float, alpha_m: float) -> float:
    return omega * im_eps_p / (2.0 * math.pi * gamma_m * alpha_m)


def dominant_heat(regime, energy_dominant: float, xi, z, t, coefficients: HeatCoefficients,
                  omega: float, mu_m: float, im_eps_p: float) -> float:
    """Leading temperature (omega Im eps_p / (2 pi gamma_m alpha_m)) J(xi, z, t) E_dom.

    ``energy_dominant`` is the dominant int_Omega |E|**2 of the regime;
    ``mu_m`` is accepted for symmetry with the dielectric closed form.
    """
    RegimeKind.parse(regime)
    am = coefficients.alpha_m
    return heat_prefactor(omega, im_eps_p, coefficients.gamma_m, am) * time_integral_J(xi, z, t, am) * energy_dominant


def dominant_heat_closed(regime, delta: float, h: float, coupling_sq: float, xi, z,
                         coefficients: HeatCoefficients, omega: float, mu_m: float, im_eps_p: float) -> float:
    """Large-time closed forms with unit detuning constants.

    plasmonic: omega Im eps_p / (8 pi**2 gamma_m r) delta**(3-2h) |E_in(z) . int e|**2
    dielectric: omega**3 mu_m**2 Im eps_p / (8 pi**2 gamma_m r) delta**(5-2h) |H_in(z) . int phi|**2
    """
    r = _distance(xi, z)
    kind = RegimeKind.parse(regime)
    gm = coefficients.gamma_m
    if kind is RegimeKind.PLASMONIC:
        return omega * im_eps_p / (8.0 * math.pi ** 2 * gm * r) * delta ** (3 - 2 * h) * coupling_sq
    return omega ** 3 * mu_m ** 2 * im_eps_p / (8.0 * math.pi ** 2 * gm * r) * delta ** (5 - 2 * h) * coupling_sq


def heat_potential_oracle(source: HeatSource, xi, t: float, alpha_m: float, gamma_p: float, gamma_m: float,
                          epsrel: float = 1e-10) -> float:
    """(gamma_p / gamma_m)(1 / alpha_m) int_0^min(t,T0) int_Omega Phi(xi, t; y, tau) f(y) dy dtau.

    Midpoint rule in space over the source points and adaptive quadrature in
    time (in the variable log(t - tau)).
    """
    xi = np.asarray(xi, dtype=float)
    r2 = np.sum((source.points - xi) ** 2, axis=1)
    wf = source.weights * source.density
    if not np.any(wf):
        return 0.0
    tmax = min(t, source.T0)
    smin, smax = t - tmax, t

    def phi_sum(s):
        return float(np.sum(wf * (alpha_m / (4.0 * math.pi * s)) ** 1.5 * np.exp(-alpha_m * r2 / (4.0 * s))))

    c = alpha_m * float(r2.min()) / 4.0
    if c == 0.0:
        raise ValueError("observation point coincides with a source point")
    # below c/800 the kernel is smaller than exp(-800)
    lo = math.log(max(smin, c / 800.0))
    hi = math.log(smax)
    if hi <= lo:
        return 0.0
    peak = math.log(c / 1.5)
    pts = [p for p in (peak,) if lo < p < hi]
    val, err = integrate.quad(lambda v: phi_sum(math.exp(v)) * math.exp(v), lo, hi,
                              points=pts or None, epsabs=0.0, epsrel=epsrel, limit=400)
    if err > 1e3 * epsrel * abs(val) + 1e-300:
        raise QuadratureError(f"heat potential quadrature reached only {err:.2e} (value {val:.3e})")
    return gamma_p / gamma_m / alpha_m * val


def K_r(T0: float, r: float) -> float:
    """sup_t int_0^T0 (t - tau)**(-2r) dtau = T0**(1-2r) / (1-2r)."""
    if not (0.0 < r < 0.5):
        raise ValueError("K_r needs 0 < r < 1/2")
    return T0 ** (1.0 - 2.0 * r) / (1.0 - 2.0 * r)


def _appendix_parts(v, y, t, tau, alpha_p, xi, z, alpha_m):
    d = float(np.linalg.norm(np.asarray(y, dtype=float) - np.asarray(v, dtype=float)))
    if not (0.0 < tau < t):
        raise ValueError("appendix function needs 0 < tau < t")
    base = heat_kernel(xi, t, z, tau, alpha_m)
    a = math.sqrt(alpha_p) * d / (2.0 * math.sqrt(tau))
    c = alpha_p * d * d / 4.0

    def f(m, shift):
        s = c / (m * m)
        return m * m * math.exp(-m * m) * (heat_kernel(xi, t, z, tau - s, alpha_m) - shift)

    return d, base, a, f


def varphi_appendix(v, y, t, tau, alpha_p, xi, z, alpha_m) -> float:
    """(4/sqrt(pi)) int_a^inf m**2 exp(-m**2) Phi(xi, t; z, tau - alpha_p|y-v|**2/(4 m**2)) dm.

    a = sqrt(alpha_p)|y - v| / (2 sqrt(tau)); at y = v the limit Phi(xi, t; z, tau)
    is returned.
    """
    d, base, a, f = _appendix_parts(v, y, t, tau, alpha_p, xi, z, alpha_m)
    if d == 0.0:
        return float(base)
    val, _ = integrate.quad(f, a, np.inf, args=(0.0,), epsabs=1e-15, epsrel=1e-12, limit=400)
    return 4.0 / math.sqrt(math.pi) * val


def varphi_deviation(v, y, t, tau, alpha_p, xi, z, alpha_m) -> float:
    """phi - Phi(xi, t; z, tau), evaluated without cancellation.

    Uses int_0^a m**2 exp(-m**2) dm = (sqrt(pi)/4) erf(a) - (a/2) exp(-a**2) for
    the part of the weight cut off below the lower limit.
    """
    d, base, a, f = _appendix_parts(v, y, t, tau, alpha_p, xi, z, alpha_m)
    if d == 0.0:
        return 0.0
    head = math.sqrt(math.pi) / 4.0 * math.erf(a) - 0.5 * a * math.exp(-a * a)
    if a < 1e-3:
        # series a**3/3 - a**5/5 + ... avoids the subtraction above
        head = a ** 3 / 3.0 - a ** 5 / 5.0 + a ** 7 / 14.0
    val, _ = integrate.quad(f, a, np.inf, args=(float(base),), epsabs=1e-18, epsrel=1e-12, limit=400)
    return 4.0 / math.sqrt(math.pi) * (val - head * float(base))
