"""
INI run configuration for the command-line interface.

Every section is optional; missing keys take the defaults below.  All values
are validated before any computation starts.

    [lorentz]   eps_infinity omega_p omega_0 zeta
    [medium]    eps_m mu_m
    [regime]    kind h delta mode_index target_eigenvalue (number or "auto")
    [domain]    shape (ball:R, cube:S, ellipsoid:a,b,c, voxel) resolution
    [wave]      polarization direction
    [particle]  center
    [heat]      rho_p c_p gamma_p_bar rho_m c_m gamma_m distance direction t T0 p r source
    [sweep]     deltas | start ratio count, quantity, tolerance
    [solve]     tol preconditioner contrast
    [output]    out cache threads
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .dispersion import LorentzModel, MediumParams, RegimeKind
from .domain import parse_shape
from .errors import ConfigError, PhotothermalError
from .heat import HeatCoefficients

SECTIONS = ("lorentz", "medium", "regime", "domain", "wave", "particle", "heat", "sweep", "solve", "output")


def _vec(text, n=3, name="vector"):
    try:
        v = tuple(float(x) for x in str(text).replace(";", ",").split(","))
    except ValueError:
        raise ConfigError(f"cannot parse {name} {text!r}") from None
    if len(v) != n or not all(math.isfinite(x) for x in v):
        raise ConfigError(f"{name} needs {n} finite components, got {text!r}")
    return v


@dataclass
class RunConfig:
    model: LorentzModel = dc_field(default_factory=LorentzModel)
    medium: MediumParams = dc_field(default_factory=MediumParams)
    regime: str = "plasmonic"
    h: float = 1.0
    delta: float = 0.05
    mode_index: int = 0
    target_eigenvalue: float | None = None
    shape_text: str = "ball"
    resolution: int = 24
    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)
    heat: HeatCoefficients = dc_field(default_factory=HeatCoefficients)
    xi_distance: float = 0.5
    xi_direction: tuple = (1.0, 0.0, 0.0)
    t: float = 10.0
    T0: float = 10.0
    p: float = 0.0
    r: float = 0.25
    heat_source: str = "faces"
    deltas: tuple = (0.1, 0.05, 0.025, 0.0125)
    quantity: str = "EnergyIntegral"
    tolerance: float | None = None
    tol: float = 1e-8
    preconditioner: str = "auto"
    contrast: complex | None = None
    out: Path = Path("out")
    cache: Path = Path(".cache")
    threads: int = 1

    @property
    def kind(self) -> RegimeKind:
        return RegimeKind.parse(self.regime)

    @property
    def shape(self):
        if self.shape_text == "voxel":
            return None
        return parse_shape(self.shape_text)

    def validate(self) -> "RunConfig":
        """Check every field; raises ConfigError on the first problem."""
        try:
            self.regime = RegimeKind.parse(self.regime).value
        except (ValueError, PhotothermalError) as exc:
            raise ConfigError(str(exc)) from None
        if not (0 < self.h < 2):
            raise ConfigError(f"h must lie in (0, 2), got {self.h}")
        if not (0 < self.delta < 1):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.target_eigenvalue is not None and not self.target_eigenvalue > 0:
            raise ConfigError("target_eigenvalue must be positive or 'auto'")
        if self.shape_text != "voxel":
            try:
                parse_shape(self.shape_text)
            except PhotothermalError as exc:
                raise ConfigError(str(exc)) from None
            if self.resolution < 4:
                raise ConfigError("resolution must be at least 4")
        if np.linalg.norm(self.polarization) == 0 or np.linalg.norm(self.direction) == 0:
            raise ConfigError("polarization and direction must be nonzero")
        d = np.asarray(self.direction) / np.linalg.norm(self.direction)
        if abs(float(np.dot(self.polarization, d))) > 1e-12 * np.linalg.norm(self.polarization):
            raise ConfigError("polarization must be orthogonal to the propagation direction")
        if not (self.xi_distance > 0 and self.t > 0 and self.T0 > 0):
            raise ConfigError("heat distance, t and T0 must be positive")
        if not (0 <= self.p < 1):
            raise ConfigError("p must lie in [0, 1)")
        if not (0 < self.r < 0.5):
            raise ConfigError("r must lie in (0, 1/2)")
        if self.heat_source not in ("faces", "voxels"):
            raise ConfigError("heat source must be 'faces' or 'voxels'")
        if len(self.deltas) < 4 or any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ConfigError("sweep deltas must be strictly decreasing with at least four entries")
        if not all(0 < x < 1 for x in self.deltas):
            raise ConfigError("sweep deltas must lie in (0, 1)")
        from .asymptotics import Quantity
        try:
            self.quantity = Quantity.parse(self.quantity).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.tol > 0:
            raise ConfigError("solve tol must be positive")
        if self.preconditioner not in ("auto", "static", "gradient", "none"):
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for path in (self.out, self.cache):
            _check_writable(Path(path))
        return self


def _check_writable(path: Path):
    p = path
    while not p.exists():
        if p.parent == p:
            break
        p = p.parent
    if not os.access(p, os.W_OK):
        raise ConfigError(f"{path} is not writable")


def _get(cp, sec, key, conv, default):
    if not cp.has_option(sec, key):
        return default
    raw = cp.get(sec, key).strip()
    try:
        return conv(raw)
    except (ValueError, PhotothermalError) as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None


def load_config(path=None, text: str | None = None) -> RunConfig:
    """Parse an INI file (or string) into an unvalidated RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} not found")
            cp.read_string(p.read_text(), source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    c = RunConfig()
    f = float
    try:
        c.model = LorentzModel(_get(cp, "lorentz", "eps_infinity", f, c.model.eps_infinity),
                               _get(cp, "lorentz", "omega_p", f, c.model.omega_p),
                               _get(cp, "lorentz", "omega_0", f, c.model.omega_0),
                               _get(cp, "lorentz", "zeta", f, c.model.zeta))
        c.medium = MediumParams(_get(cp, "medium", "eps_m", f, 1.0), _get(cp, "medium", "mu_m", f, 1.0))
        hc = HeatCoefficients()
        c.heat = HeatCoefficients(**{k: _get(cp, "heat", k, f, getattr(hc, k))
                                     for k in ("rho_p", "c_p", "gamma_p_bar", "rho_m", "c_m", "gamma_m")})
    except PhotothermalError as exc:
        raise ConfigError(str(exc)) from None
    c.regime = _get(cp, "regime", "kind", str, c.regime)
    c.h = _get(cp, "regime", "h", f, c.h)
    c.delta = _get(cp, "regime", "delta", f, c.delta)
    c.mode_index = _get(cp, "regime", "mode_index", int, c.mode_index)
    c.target_eigenvalue = _get(cp, "regime", "target_eigenvalue",
                               lambda s: None if s.lower() == "auto" else float(s), None)
    c.shape_text = _get(cp, "domain", "shape", lambda s: s.lower(), c.shape_text)
    c.resolution = _get(cp, "domain", "resolution", int, c.resolution)
    c.polarization = _get(cp, "wave", "polarization", lambda s: _vec(s, name="polarization"), c.polarization)
    c.direction = _get(cp, "wave", "direction", lambda s: _vec(s, name="direction"), c.direction)
    c.center = _get(cp, "particle", "center", lambda s: _vec(s, name="center"), c.center)
    c.xi_distance = _get(cp, "heat", "distance", f, c.xi_distance)
    c.xi_direction = _get(cp, "heat", "direction", lambda s: _vec(s, name="heat direction"), c.xi_direction)
    c.t = _get(cp, "heat", "t", f, c.t)
    c.T0 = _get(cp, "heat", "T0", f, c.T0)
    c.p = _get(cp, "heat", "p", f, c.p)
    c.r = _get(cp, "heat", "r", f, c.r)
    c.heat_source = _get(cp, "heat", "source", lambda s: s.lower(), c.heat_source)
    if cp.has_option("sweep", "deltas"):
        c.deltas = _get(cp, "sweep", "deltas", lambda s: tuple(float(x) for x in s.split(",")), c.deltas)
    elif cp.has_option("sweep", "start"):
        start = _get(cp, "sweep", "start", f, 0.1)
        ratio = _get(cp, "sweep", "ratio", f, 0.5)
        count = _get(cp, "sweep", "count", int, 4)
        c.deltas = tuple(start * ratio ** i for i in range(count))
    c.quantity = _get(cp, "sweep", "quantity", str, c.quantity)
    c.tolerance = _get(cp, "sweep", "tolerance", f, None)
    c.tol = _get(cp, "solve", "tol", f, c.tol)
    c.preconditioner = _get(cp, "solve", "preconditioner", lambda s: s.lower(), c.preconditioner)
    c.contrast = _get(cp, "solve", "contrast", lambda s: complex(s.replace(" ", "")), None)
    c.out = _get(cp, "output", "out", Path, c.out)
    c.cache = _get(cp, "output", "cache", Path, c.cache)
    c.threads = _get(cp, "output", "threads", int, c.threads)
    return c


def apply_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Command-line flags win over the file; ``None`` means not given."""
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
