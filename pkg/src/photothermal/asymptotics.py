"""
Geometric delta sweeps, log-log slope fits and predicted exponents.

The voxel resolution is held fixed along a sweep: the scaled problem on B
only sees delta through its coefficients, so the fitted slopes are free of
mesh-refinement effects.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, asdict
from enum import Enum

import numpy as np
from scipy import optimize

from . import heat as _heat
from .dispersion import (LorentzModel, MediumParams, RegimeConfig, RegimeKind, select)
from .domain import Ball, Particle, voxelize
from .errors import FitError, PhotothermalError
from .maxwell import (IncidentWave, ScatteringProblem, discretization, dominant_energy_dielectric,
                      dominant_energy_plasmonic, mode_clusters, norm_diagnostics, select_mode, solve)
from .operators import (DIV_FREE, GRAD_HARMONIC, EigenPair, EigenSystem, boundary_eigenpairs,
                        eigensystem_static)

LEADING_TOL = 0.15
REMAINDER_TOL = 0.3
NOISE_FLOOR = 1e-10


class Quantity(str, Enum):
    L2E = "L2E"                        # ||E||_{L2(Omega)}
    L2E_SQ = "L2E_sq"                  # ||E~||^2_{L2(B)}
    L2_SQ_OF_SQUARE = "L2_sq_of_square"  # || |E|^2 ||_{L2(Omega)}
    ENERGY = "EnergyIntegral"
    DOMINANT_ENERGY = "DominantEnergy"
    HEAT_DOMINANT = "HeatDominant"       # dominant heat per unit Im(eps_p)
    HEAT_ORACLE = "HeatOracle"           # oracle heat per unit Im(eps_p)
    HEAT_DOMINANT_RAW = "HeatDominantRaw"
    DETUNING = "Detuning"

    @classmethod
    def parse(cls, text) -> "Quantity":
        if isinstance(text, cls):
            return text
        for q in cls:
            if q.value.lower() == str(text).strip().lower():
                return q
        raise ValueError(f"unknown quantity {text!r}")


def predicted_exponent(quantity, regime, h: float, p: float = 0.0) -> float:
    """Exponent e in quantity ~ delta**e predicted by the asymptotic theory.

    The heat quantities are normalized by Im(eps_p) (plasmonic Im(eps_p) ~
    delta**h, dielectric ~ delta**(h-2)); HeatDominantRaw keeps that factor.
    """
    q = Quantity.parse(quantity)
    kind = RegimeKind.parse(regime)
    pl = kind is RegimeKind.PLASMONIC
    table = {
        Quantity.L2E: 1.5 - h if pl else 2.5 - h,
        Quantity.L2E_SQ: -2 * h if pl else 2 - 2 * h,
        Quantity.L2_SQ_OF_SQUARE: 1.5 - 2 * h if pl else 2.5 - h,
        Quantity.ENERGY: 3 - 2 * h if pl else 5 - 2 * h,
        Quantity.DOMINANT_ENERGY: 3 - 2 * h if pl else 5 - 2 * h,
        Quantity.HEAT_DOMINANT: (3 - 2 * h if pl else 5 - 2 * h) - p,
        Quantity.HEAT_ORACLE: (3 - 2 * h if pl else 5 - 2 * h) - p,
        Quantity.HEAT_DOMINANT_RAW: (3 - h if pl else 3 - h) - p,
        Quantity.DETUNING: h,
    }
    return float(table[q])


def predicted_remainder(regime, h: float) -> float:
    """Exponent of |int |E|^2 - dominant| (absolute remainder)."""
    kind = RegimeKind.parse(regime)
    if kind is RegimeKind.PLASMONIC:
        return 4 - 2 * h if h < 1.5 else 7 - 4 * h
    return 5.0 if h < 1 else 9 - 4 * h


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    predicted: float | None = None
    tolerance: float | None = None
    one_sided: bool = False
    status: str = "unchecked"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def fit_slope(points, predicted: float | None = None, tolerance: float = LEADING_TOL) -> SlopeFit:
    """Least-squares line through (log delta, log value).

    Parameters
    ----------
    points : sequence of (delta, value)
    predicted : float, optional
        If given, ``status`` is ``pass`` when |slope - predicted| <= tolerance.
    """
    pts = [(float(d), float(v)) for d, v in points]
    if len(pts) < 3:
        raise FitError("need at least three points for a slope fit")
    d = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(d <= 0) or np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError("slope fit needs positive finite values")
    x, y = np.log(d), np.log(v)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(y ** 2))) else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    fit = SlopeFit(float(slope), float(icpt), float(r2), predicted, tolerance)
    if predicted is not None:
        fit.status = "pass" if abs(slope - predicted) <= tolerance else "fail"
    return fit


def remainder_order(full, dominant, deltas, predicted: float | None = None,
                    tolerance: float = REMAINDER_TOL) -> SlopeFit:
    """Slope of |full - dominant| against delta; one-sided check slope >= predicted - tol.

    When the discrepancy is below 1e-10 relative at some delta the result is
    reported as ``inconclusive``.
    """
    full = np.asarray(full, dtype=float)
    dom = np.asarray(dominant, dtype=float)
    diff = np.abs(full - dom)
    rel = diff / np.maximum(np.abs(dom), 1e-300)
    if np.any(rel <= NOISE_FLOOR):
        fit = SlopeFit(float("nan"), float("nan"), 0.0, predicted, tolerance, True, "inconclusive")
        return fit
    fit = fit_slope(list(zip(deltas, diff)), None)
    fit.predicted, fit.tolerance, fit.one_sided = predicted, tolerance, True
    if predicted is not None:
        fit.status = "pass" if fit.slope >= predicted - tolerance else "fail"
    return fit


def richardson(spacings, values) -> tuple:
    """Three-level extrapolation v(s) = v0 + C s**q.

    Parameters
    ----------
    spacings : three decreasing mesh spacings
    values : the quantity at those spacings

    Returns
    -------
    (q, v0) : observed order and extrapolated value

    Raises
    ------
    FitError
        When the differences change sign or no positive order reproduces
        their ratio.
    """
    s = [float(x) for x in spacings]
    v = [float(x) for x in values]
    if len(s) != 3 or len(v) != 3 or not s[0] > s[1] > s[2] > 0:
        raise FitError("richardson needs three strictly decreasing spacings")
    d1, d2 = v[1] - v[0], v[2] - v[1]
    if d1 == 0 or d2 == 0 or d1 * d2 < 0:
        raise FitError(f"values {v} are not monotonically convergent")
    target = d1 / d2

    def gap(q):
        return (s[0] ** q - s[1] ** q) / (s[1] ** q - s[2] ** q) - target

    lo, hi = 1e-6, 50.0
    if gap(lo) * gap(hi) > 0:
        raise FitError("no convergence order matches the differences")
    q = float(optimize.brentq(gap, lo, hi, xtol=1e-14))
    c = d2 / (s[2] ** q - s[1] ** q)
    return q, v[2] - c * s[2] ** q


def geometric_deltas(start: float, ratio: float, count: int) -> list:
    if count < 4:
        raise ValueError("a sweep needs at least four deltas")
    if not (0 < ratio < 1) or not (0 < start < 1):
        raise ValueError("need 0 < start < 1 and 0 < ratio < 1")
    return [start * ratio ** i for i in range(count)]


@dataclass
class SweepSpec:
    """What to sweep and how.

    ``deltas`` must be strictly decreasing with at least four entries.
    """

    deltas: list
    h: float
    regime: str
    quantity: str = "EnergyIntegral"
    p: float = 0.0
    shape: object = dc_field(default_factory=Ball)
    resolution: int = 24
    model: LorentzModel = dc_field(default_factory=LorentzModel)
    medium: MediumParams = dc_field(default_factory=MediumParams)
    heat: _heat.HeatCoefficients = dc_field(default_factory=_heat.HeatCoefficients)
    E0: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    xi_direction: tuple = (1.0, 0.0, 0.0)
    xi_distance: float = 0.5
    t: float = 10.0
    T0: float = 10.0
    with_heat: bool = False
    tolerance: float | None = None
    eig_count: int | None = None

    def __post_init__(self):
        d = [float(x) for x in self.deltas]
        if len(d) < 4:
            raise ValueError("a sweep needs at least four deltas")
        if any(b >= a for a, b in zip(d, d[1:])):
            raise ValueError("deltas must be strictly decreasing")
        self.deltas = d
        self.regime = RegimeKind.parse(self.regime).value
        self.quantity = Quantity.parse(self.quantity).value


class Pipeline:
    """Eigen-system, frequency selection, solve and heat evaluation for one domain."""

    def __init__(self, shape=None, resolution: int = 24, model=None, medium=None, regime="plasmonic",
                 E0=(1.0, 0.0, 0.0), direction=(0.0, 0.0, 1.0), eig_count: int | None = None, domain=None,
                 eigsys: EigenSystem | None = None, tol: float = 1e-8, preconditioner: str = "auto",
                 source_model: str = "faces"):
        self.domain = domain if domain is not None else voxelize(shape or Ball(), resolution)
        self.disc = discretization(self.domain)
        self.model = model or LorentzModel()
        self.medium = medium or MediumParams()
        self.regime = RegimeKind.parse(regime)
        self.E0 = np.asarray(E0, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.eig_count = eig_count
        self.tol = tol
        self.preconditioner = preconditioner
        self.source_model = source_model
        self._cluster = None
        self._eig = eigsys

    @property
    def H0(self) -> np.ndarray:
        return np.cross(self.direction, self.E0)

    def eigensystem(self) -> EigenSystem:
        if self._eig is None:
            g = self.disc.grid
            if self.regime is RegimeKind.PLASMONIC:
                op = self.disc.magnetization(0.0)
                if g.nf <= 3000:
                    self._eig = eigensystem_static(op, self.disc.projectors, GRAD_HARMONIC, method="dense")
                else:
                    lam, U = boundary_eigenpairs(g, count=self.eig_count or 60, op=op)
                    pairs = [EigenPair(float(l), U[:, j], GRAD_HARMONIC) for j, l in enumerate(lam)]
                    self._eig = EigenSystem(g, op.kind, GRAD_HARMONIC, pairs, method="boundary")
            else:
                op = self.disc.newtonian(0.0)
                self._eig = eigensystem_static(op, self.disc.projectors, DIV_FREE,
                                               count=self.eig_count or 12, method="krylov")
        return self._eig

    def mode(self):
        """The n0 cluster: strongest coupling to E0 (plasmonic) or to H0 (dielectric)."""
        if self._cluster is None:
            es = self.eigensystem()
            if self.regime is RegimeKind.PLASMONIC:
                cl = mode_clusters(es)
                self._cluster = select_mode(cl, self.E0)
            else:
                # only the strongest few clusters need curl potentials
                cl = mode_clusters(es, self.disc)
                self._cluster = select_mode(cl, self.H0)
        return self._cluster

    def evaluate(self, delta: float, h: float, heat_spec: dict | None = None) -> dict:
        """All pipeline scalars at one delta."""
        cl = self.mode()
        cfg = RegimeConfig(self.regime, cl.lam, h, delta)
        res = select(self.model, self.medium, cfg)
        wave = IncidentWave(tuple(self.E0), tuple(self.direction), res.omega, self.medium.wavenumber(res.omega))
        prob = ScatteringProblem(Particle(delta, (0.0, 0.0, 0.0), self.domain), wave, res.contrast, self.medium.mu_m)
        sol = solve(prob, tol=self.tol, disc=self.disc, preconditioner=self.preconditioner)
        nd = norm_diagnostics(sol)
        if self.regime is RegimeKind.PLASMONIC:
            dom = dominant_energy_plasmonic(prob, cl)
        else:
            dom = dominant_energy_dielectric(prob, cl)
        im_eps = res.eps_p.imag
        rec = {
            "delta": delta, "omega": res.omega, "zeta": res.zeta,
            "contrast": res.contrast.value, "im_eps_p": im_eps,
            "detuning": res.detuning, "target_eigenvalue": cl.lam,
            "L2E": nd["L2_Omega"], "L2E_sq": nd["L2_B"] ** 2,
            "L4_Omega": nd["L4_Omega"], "L2_sq_of_square": nd["L2_sq_of_square"],
            "EnergyIntegral": sol.energy_integral_Omega, "DominantEnergy": dom,
            "Detuning": res.detuning, "residual": sol.residual, "iterations": sol.iterations,
        }
        if heat_spec is not None:
            hc = heat_spec["coefficients"]
            xi = heat_spec["xi"](delta)
            t, T0 = heat_spec["t"], heat_spec["T0"]
            gp = hc.gamma_p(delta)
            hd = _heat.dominant_heat(self.regime, dom, xi, np.zeros(3), t, hc, res.omega, self.medium.mu_m, im_eps)
            src = _heat.heat_source(sol, res.omega, im_eps, gp, T0, self.source_model)
            ho = _heat.heat_potential_oracle(src, xi, t, hc.alpha_m, gp, hc.gamma_m)
            rec.update({
                "HeatDominantRaw": hd, "HeatOracleRaw": ho,
                "HeatDominant": hd / im_eps, "HeatOracle": ho / im_eps,
                "HeatRelativeDiscrepancy": abs(ho - hd) / hd,
                "J": _heat.time_integral_J(xi, np.zeros(3), t, hc.alpha_m),
                "xi_distance": float(np.linalg.norm(xi)),
            })
        return rec


@dataclass
class SweepReport:
    spec: SweepSpec
    points: list
    fit: SlopeFit | None
    remainder: SlopeFit | None
    failures: list = dc_field(default_factory=list)
    extra_fits: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        fits = [self.fit] + list(self.extra_fits.values())
        return not self.failures and all(f is not None and f.status in ("pass", "inconclusive") for f in fits)

    def to_dict(self) -> dict:
        s = self.spec
        spec = {"deltas": s.deltas, "h": s.h, "p": s.p, "regime": s.regime, "quantity": s.quantity,
                "resolution": s.resolution, "shape": getattr(s.shape, "tag", str(s.shape))}
        return {
            "spec": spec,
            "points": self.points,
            "fit": self.fit.to_dict() if self.fit else None,
            "remainder": self.remainder.to_dict() if self.remainder else None,
            "extra_fits": {k: v.to_dict() for k, v in self.extra_fits.items()},
            "failures": self.failures,
            "pass": self.passed,
        }

    def csv_rows(self):
        keys = sorted({k for p in self.points for k, v in p.items() if isinstance(v, (int, float))})
        rows = [[p.get(k, float("nan")) for k in keys] for p in self.points]
        return keys, rows

    def series(self, key: str) -> np.ndarray:
        return np.array([p[key] for p in self.points if key in p])


def run_sweep(spec: SweepSpec, pipeline: Pipeline | None = None) -> SweepReport:
    """Evaluate the pipeline over the delta grid and fit the requested quantity.

    Failures at individual deltas are recorded and the report is partial.
    """
    pipe = pipeline or Pipeline(spec.shape, spec.resolution, spec.model, spec.medium, spec.regime,
                                spec.E0, spec.direction, spec.eig_count)
    heat_spec = None
    q = Quantity.parse(spec.quantity)
    if spec.with_heat or q in (Quantity.HEAT_DOMINANT, Quantity.HEAT_ORACLE, Quantity.HEAT_DOMINANT_RAW):
        u = np.asarray(spec.xi_direction, dtype=float)
        u = u / np.linalg.norm(u)
        heat_spec = {
            "coefficients": spec.heat, "t": spec.t, "T0": spec.T0,
            "xi": (lambda d: spec.xi_distance * d ** spec.p * u),
        }
    points, failures = [], []
    for d in spec.deltas:
        try:
            points.append(pipe.evaluate(d, spec.h, heat_spec))
        except PhotothermalError as exc:
            failures.append({"delta": d, "error": f"{type(exc).__name__}: {exc}"})
    good = [p for p in points if p.get(q.value, 0) > 0]
    tol = spec.tolerance if spec.tolerance is not None else LEADING_TOL
    fit = None
    if len(good) >= 3:
        fit = fit_slope([(p["delta"], p[q.value]) for p in good],
                        predicted_exponent(q, spec.regime, spec.h, spec.p), tol)
    rem = None
    if len(points) >= 3:
        try:
            rem = remainder_order([p["EnergyIntegral"] for p in points], [p["DominantEnergy"] for p in points],
                                  [p["delta"] for p in points], predicted_remainder(spec.regime, spec.h))
        except FitError:
            rem = None
    return SweepReport(spec, points, fit, rem, failures)


def add_fits(report: SweepReport, quantities: dict) -> SweepReport:
    """Attach slope fits of further quantities; ``quantities`` maps name to tolerance."""
    s = report.spec
    for name, tol in quantities.items():
        q = Quantity.parse(name)
        pts = [(p["delta"], p[q.value]) for p in report.points if p.get(q.value, 0) > 0]
        if len(pts) < 3:
            report.extra_fits[q.value] = SlopeFit(float("nan"), float("nan"), 0.0,
                                                  predicted_exponent(q, s.regime, s.h, s.p), tol, False, "fail")
            continue
        report.extra_fits[q.value] = fit_slope(pts, predicted_exponent(q, s.regime, s.h, s.p), tol)
    return report


def monotone_decreasing(values) -> bool:
    v = list(values)
    return len(v) >= 2 and all(b < a for a, b in zip(v, v[1:]))
