"""
Lorentz dispersion and resonance selection.

The particle permittivity follows the single-pole Lorentz model

    eps_p(w) = eps_inf * (1 + w_p**2 / (w_0**2 - w**2 - i*zeta*w))

and the incident frequency together with the damping are tuned so that the
particle sits close to either a plasmonic resonance (1 + s*lam3 ~ delta**h,
with s = eps_p - eps_m the contrast) or a dielectric resonance
(1 - w**2*mu_m*s*delta**2*lam1 ~ delta**h).  All quantities are
dimensionless, free-space constants being absorbed in the relative
parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, LosslessError, PoleError, RegimeError


class RegimeKind(str, Enum):
    PLASMONIC = "plasmonic"
    DIELECTRIC = "dielectric"

    @classmethod
    def parse(cls, text) -> "RegimeKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown regime {text!r}; expected plasmonic or dielectric") from None


@dataclass(frozen=True)
class LorentzModel:
    """Single-pole Lorentz permittivity parameters.

    Parameters
    ----------
    eps_infinity : float
        High-frequency relative permittivity scale, > 0.
    omega_p : float
        Plasma frequency, > 0.
    omega_0 : float
        Undamped resonance frequency, > 0.
    zeta : float
        Damping frequency, >= 0.
    """

    eps_infinity: float = 1.0
    omega_p: float = 1.0
    omega_0: float = 1.0
    zeta: float = 0.0

    def __post_init__(self):
        for name in ("eps_infinity", "omega_p", "omega_0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"LorentzModel.{name} must be positive, got {v!r}")
        if not (np.isfinite(self.zeta) and self.zeta >= 0):
            raise ConfigError(f"LorentzModel.zeta must be nonnegative, got {self.zeta!r}")

    def with_zeta(self, zeta: float) -> "LorentzModel":
        return LorentzModel(self.eps_infinity, self.omega_p, self.omega_0, zeta)


@dataclass(frozen=True)
class MediumParams:
    """Relative permittivity and permeability of the host medium."""

    eps_m: float = 1.0
    mu_m: float = 1.0

    def __post_init__(self):
        for name in ("eps_m", "mu_m"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"MediumParams.{name} must be positive, got {v!r}")

    def wavenumber(self, omega: float) -> float:
        return omega * math.sqrt(self.eps_m * self.mu_m)


@dataclass(frozen=True)
class RegimeConfig:
    """Resonance regime request.

    Parameters
    ----------
    kind : RegimeKind
    mode_index : int
        Index n0 of the targeted eigenmode (bookkeeping only).
    target_eigenvalue : float
        Magnetization eigenvalue on the harmonic-gradient subspace
        (plasmonic) or Newtonian eigenvalue on the divergence-free
        subspace (dielectric).
    h : float
        Detuning exponent in (0, 2).
    delta : float
        Particle size in (0, 1).
    """

    kind: RegimeKind
    target_eigenvalue: float
    h: float
    delta: float
    mode_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", RegimeKind.parse(self.kind))
        if not (0.0 < self.h < 2.0):
            raise ConfigError(f"h must lie in (0, 2), got {self.h!r}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not (self.target_eigenvalue > 0):
            raise ConfigError(f"target eigenvalue must be positive, got {self.target_eigenvalue!r}")
        if int(self.mode_index) != self.mode_index or self.mode_index < 0:
            raise ConfigError(f"mode index must be a nonnegative integer, got {self.mode_index!r}")


@dataclass(frozen=True)
class Contrast:
    """Contrast s = eps_p(omega) - eps_m."""

    value: complex

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    @property
    def imag(self) -> float:
        return float(np.imag(self.value))


@dataclass(frozen=True)
class Resonance:
    """Outcome of a regime selection."""

    kind: RegimeKind
    omega: float
    zeta: float
    contrast: Contrast
    eps_p: complex
    detuning: float
    delta: float
    h: float
    target_eigenvalue: float

    def __iter__(self):
        # allows ``omega, zeta, contrast = select_plasmonic(...)``
        return iter((self.omega, self.zeta, self.contrast))

    @property
    def detuning_ratio(self) -> float:
        return self.detuning / self.delta ** self.h


def _lorentz(model: LorentzModel, omega):
    den = model.omega_0 ** 2 - omega ** 2 - 1j * model.zeta * omega
    return model.eps_infinity * (1.0 + model.omega_p ** 2 / den)


def permittivity(model: LorentzModel, omega: float) -> complex:
    """Evaluate the Lorentz permittivity at a positive frequency.

    Raises
    ------
    PoleError
        If ``zeta == 0`` and ``omega == omega_0``.
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    if model.zeta == 0 and omega == model.omega_0:
        raise PoleError("undamped Lorentz pole: omega equals omega_0 with zeta = 0")
    value = complex(_lorentz(model, omega))
    if not (np.isfinite(value.real) and np.isfinite(value.imag)):
        raise PoleError("permittivity is not finite at this frequency")
    return value


def q_factor(model: LorentzModel, omega: float) -> float:
    """Quality factor Re(eps_p) / Im(eps_p)."""
    eps = permittivity(model, omega)
    if eps.imag == 0:
        raise LosslessError("Im(eps_p) vanishes; the quality factor is undefined")
    return eps.real / eps.imag


def plasmonic_detuning(contrast, lam: float) -> float:
    """|1 + s*lam|."""
    s = contrast.value if isinstance(contrast, Contrast) else contrast
    return abs(1.0 + s * lam)


def dielectric_detuning(contrast, lam: float, omega: float, mu_m: float, delta: float) -> float:
    """|1 - omega**2 * mu_m * s * delta**2 * lam|."""
    s = contrast.value if isinstance(contrast, Contrast) else contrast
    return abs(1.0 - omega ** 2 * mu_m * s * delta ** 2 * lam)


def plasmonic_omega_squared(model: LorentzModel, medium: MediumParams, lam: float) -> float:
    """Undamped frequency at which 1 + (eps_p - eps_m)*lam vanishes.

    Solving eps_inf*(1 + w_p**2/(w_0**2 - w**2)) = eps_m - 1/lam gives

        w**2 = w_0**2 - w_p**2 * lam * eps_inf / (lam*(eps_m - eps_inf) - 1).
    """
    den = lam * (medium.eps_m - model.eps_infinity) - 1.0
    if den == 0:
        raise RegimeError("lam*(eps_m - eps_inf) - 1 vanishes; no plasmonic frequency")
    return model.omega_0 ** 2 - model.omega_p ** 2 * lam * model.eps_infinity / den


def select_plasmonic(model: LorentzModel, medium: MediumParams, cfg: RegimeConfig) -> Resonance:
    """Choose (omega, zeta) close to the plasmonic resonance of eigenvalue lam.

    The undamped resonance frequency is used exactly and the damping is set by
    ``zeta * omega = delta**h``, so that |1 + s*lam| scales like delta**h.
    """
    if cfg.kind is not RegimeKind.PLASMONIC:
        raise RegimeError("select_plasmonic needs a plasmonic regime configuration")
    lam = cfg.target_eigenvalue
    w2 = plasmonic_omega_squared(model, medium, lam)
    if not w2 > 0:
        raise RegimeError(f"plasmonic frequency squared is {w2!r}; eigenvalue/medium combination invalid")
    omega = math.sqrt(w2)
    zeta = cfg.delta ** cfg.h / omega
    eps = permittivity(model.with_zeta(zeta), omega)
    contrast = Contrast(eps - medium.eps_m)
    if not contrast.real < 0:
        raise RegimeError(f"Re(contrast) = {contrast.real!r} is not negative; not a plasmonic regime")
    return Resonance(RegimeKind.PLASMONIC, omega, zeta, contrast, eps,
                     plasmonic_detuning(contrast, lam), cfg.delta, cfg.h, lam)


def dielectric_omega_squared(model: LorentzModel, medium: MediumParams, lam: float, delta: float) -> float:
    """Undamped frequency near omega_0 at which 1 - w**2*mu*s*delta**2*lam vanishes.

    With a = eps_inf - eps_m, b = eps_inf*w_p**2 and c = mu_m*delta**2*lam the
    condition is the quadratic -c*a*x**2 + (c*a*w0**2 + c*b + 1)*x - w0**2 = 0
    in x = w**2.  The root that tends to w0**2 as delta -> 0 is returned; to
    leading order w0**2 - w**2 = delta**2 * lam * mu_m * w0**2 * b.
    """
    w02 = model.omega_0 ** 2
    a = model.eps_infinity - medium.eps_m
    b = model.eps_infinity * model.omega_p ** 2
    c = medium.mu_m * delta ** 2 * lam
    B = c * a * w02 + c * b + 1.0
    disc = B * B - 4.0 * c * a * w02
    if disc < 0:
        raise RegimeError("no real dielectric resonance frequency; delta too large for this eigenvalue")
    # stable form of the small root
    return 2.0 * w02 / (B + math.sqrt(disc))


def select_dielectric(model: LorentzModel, medium: MediumParams, cfg: RegimeConfig) -> Resonance:
    """Choose (omega, zeta) close to the dielectric resonance of eigenvalue lam.

    The undamped resonance is solved exactly and the damping is set to
    ``zeta * omega = delta**h * (omega_0**2 - omega**2)``, which makes
    |1 - omega**2*mu_m*s*delta**2*lam| equal to delta**h to leading order while
    Re(s) ~ delta**-2 / (lam*mu_m*omega_0**2) and Im(s) ~ delta**(h-2).
    """
    if cfg.kind is not RegimeKind.DIELECTRIC:
        raise RegimeError("select_dielectric needs a dielectric regime configuration")
    lam = cfg.target_eigenvalue
    w2 = dielectric_omega_squared(model, medium, lam, cfg.delta)
    if not w2 > 0:
        raise RegimeError(f"dielectric frequency squared is {w2!r}; delta too large")
    omega = math.sqrt(w2)
    gap = model.omega_0 ** 2 - w2
    if not gap > 0:
        raise RegimeError("dielectric frequency does not lie below omega_0")
    zeta = cfg.delta ** cfg.h * gap / omega
    eps = permittivity(model.with_zeta(zeta), omega)
    contrast = Contrast(eps - medium.eps_m)
    if not contrast.real > 0:
        raise RegimeError(f"Re(contrast) = {contrast.real!r} is not positive; not a dielectric regime")
    det = dielectric_detuning(contrast, lam, omega, medium.mu_m, cfg.delta)
    return Resonance(RegimeKind.DIELECTRIC, omega, zeta, contrast, eps, det, cfg.delta, cfg.h, lam)


def select(model: LorentzModel, medium: MediumParams, cfg: RegimeConfig) -> Resonance:
    """Dispatch on ``cfg.kind``."""
    if cfg.kind is RegimeKind.PLASMONIC:
        return select_plasmonic(model, medium, cfg)
    return select_dielectric(model, medium, cfg)
