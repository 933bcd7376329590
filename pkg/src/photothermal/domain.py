"""
Voxelized reference domain B and the physical particle delta*B + z.

B is centred at the origin and voxelized by centroid inclusion on a uniform
grid over its bounding cube [-R, R]^3, R being the largest semi-axis.  Voxels
are stored in lexicographic grid order so downstream linear algebra is
reproducible bit for bit.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

MIN_RESOLUTION = 4
CACHE_VERSION = 1


@dataclass(frozen=True)
class Ball:
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius!r}")

    @property
    def half_extent(self) -> float:
        return self.radius

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.einsum("...i,...i->...", p, p) <= self.radius ** 2

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.radius ** 3 / 3.0

    @property
    def tag(self) -> str:
        return f"ball(r={self.radius!r})"

    @property
    def symmetric(self) -> bool:
        return True


@dataclass(frozen=True)
class Cube:
    side: float = 1.0

    def __post_init__(self):
        if not self.side > 0:
            raise DomainError(f"cube side must be positive, got {self.side!r}")

    @property
    def half_extent(self) -> float:
        return 0.5 * self.side

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.all(np.abs(p) <= 0.5 * self.side, axis=-1)

    @property
    def volume(self) -> float:
        return self.side ** 3

    @property
    def tag(self) -> str:
        return f"cube(s={self.side!r})"

    @property
    def symmetric(self) -> bool:
        return True


@dataclass(frozen=True)
class Ellipsoid:
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise DomainError("ellipsoid semi-axes must be positive")

    @property
    def half_extent(self) -> float:
        return max(self.a, self.b, self.c)

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float) / np.array([self.a, self.b, self.c])
        return np.einsum("...i,...i->...", p, p) <= 1.0

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.a * self.b * self.c / 3.0

    @property
    def tag(self) -> str:
        return f"ellipsoid(a={self.a!r},b={self.b!r},c={self.c!r})"

    @property
    def symmetric(self) -> bool:
        return True


def parse_shape(text: str):
    """Parse ``ball``, ``ball:R``, ``cube``, ``cube:S`` or ``ellipsoid:a,b,c``."""
    text = str(text).strip().lower()
    name, _, args = text.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise DomainError(f"cannot parse shape arguments in {text!r}") from None
    if name == "ball":
        return Ball(*vals)
    if name == "cube":
        return Cube(*vals)
    if name == "ellipsoid":
        if len(vals) != 3:
            raise DomainError("ellipsoid needs three semi-axes, e.g. ellipsoid:1,0.8,0.6")
        return Ellipsoid(*vals)
    raise DomainError(f"unknown shape {name!r}")


@dataclass(frozen=True, eq=False)
class ReferenceDomain:
    """Centroid-inclusion voxelization of a reference shape.

    Attributes
    ----------
    shape
        The shape object (``Ball``, ``Cube`` or ``Ellipsoid``), or None for a
        domain built directly from a mask.
    resolution : int
        Voxels per axis across the bounding cube.
    h : float
        Voxel edge length.
    mask : ndarray of bool, shape (n, n, n)
    index : ndarray of int, shape (V, 3)
        Grid indices of the included voxels, lexicographic.
    centroids : ndarray, shape (V, 3)
    """

    shape: object
    resolution: int
    h: float
    origin: float
    mask: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)

    @property
    def voxel_count(self) -> int:
        return int(self.index.shape[0])

    def __len__(self):
        return self.voxel_count

    @property
    def voxel_volume(self) -> float:
        return self.h ** 3

    @property
    def total_volume(self) -> float:
        return self.voxel_count * self.voxel_volume

    @property
    def diameter(self) -> float:
        # diameter of the voxel union, bounded by the bounding-cube diagonal
        return math.sqrt(3.0) * self.resolution * self.h

    def key(self) -> str:
        """Stable digest identifying the voxel set, used in cache names."""
        hsh = hashlib.sha256()
        hsh.update(np.ascontiguousarray(self.mask).tobytes())
        hsh.update(repr((self.resolution, float(self.h), float(self.origin))).encode())
        return hsh.hexdigest()[:16]

    @classmethod
    def from_mask(cls, mask, h: float, origin: float | None = None, shape=None) -> "ReferenceDomain":
        mask = np.ascontiguousarray(mask, dtype=bool)
        if mask.ndim != 3 or len(set(mask.shape)) != 1:
            raise DomainError("mask must be a cubic 3D boolean array")
        n = mask.shape[0]
        if origin is None:
            origin = -0.5 * n * h
        index = np.argwhere(mask)
        if len(index) == 0:
            raise DomainError("voxelization is empty")
        centroids = origin + (index + 0.5) * h
        return cls(shape, n, float(h), float(origin), mask, index, centroids)


def voxelize(shape, resolution: int) -> ReferenceDomain:
    """Voxelize ``shape`` with ``resolution`` voxels per axis.

    Parameters
    ----------
    shape : Ball, Cube or Ellipsoid
    resolution : int
        At least 4.

    Returns
    -------
    ReferenceDomain
    """
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise DomainError(f"resolution must be an integer >= {MIN_RESOLUTION}, got {resolution!r}")
    n = int(resolution)
    R = shape.half_extent
    h = 2.0 * R / n
    c = -R + (np.arange(n) + 0.5) * h
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    mask = shape.contains(np.stack([X, Y, Z], axis=-1))
    return ReferenceDomain.from_mask(mask, h, -R, shape)


@dataclass(frozen=True)
class Particle:
    """Physical particle delta*B + z."""

    delta: float
    center: tuple = (0.0, 0.0, 0.0)
    domain: ReferenceDomain | None = None

    def __post_init__(self):
        if not (0.0 < self.delta <= 1.0):
            raise DomainError(f"delta must lie in (0, 1], got {self.delta!r}")
        c = tuple(float(v) for v in self.center)
        if len(c) != 3:
            raise DomainError("particle center must be a 3-vector")
        object.__setattr__(self, "center", c)

    @property
    def z(self) -> np.ndarray:
        return np.array(self.center)


def to_physical(domain, particle: Particle, point) -> np.ndarray:
    """Map reference coordinates to physical ones, x = delta*p + z."""
    return particle.delta * np.asarray(point, dtype=float) + particle.z


def to_reference(domain, particle: Particle, point) -> np.ndarray:
    """Inverse of ``to_physical``."""
    return (np.asarray(point, dtype=float) - particle.z) / particle.delta


def save_domain(domain: ReferenceDomain, path) -> None:
    """Write the voxel list as a versioned plain-text cache file."""
    from .io import atomic_write_text

    lines = [
        f"# photothermal-domain v{CACHE_VERSION}",
        f"shape {domain.shape.tag if domain.shape is not None else 'mask'}",
        f"resolution {domain.resolution}",
        f"h {domain.h!r}",
        f"origin {domain.origin!r}",
        f"count {domain.voxel_count}",
    ]
    lines += [f"{i} {j} {k}" for i, j, k in domain.index]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_domain(path, shape=None, resolution=None) -> ReferenceDomain | None:
    """Read a domain cache; None when missing, stale or malformed."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        lines = path.read_text().splitlines()
        if lines[0].strip() != f"# photothermal-domain v{CACHE_VERSION}":
            return None
        head = dict(ln.split(" ", 1) for ln in lines[1:6])
        n = int(head["resolution"])
        if resolution is not None and n != resolution:
            return None
        if shape is not None and head["shape"] != shape.tag:
            return None
        h = float(head["h"])
        origin = float(head["origin"])
        count = int(head["count"])
        idx = np.array([[int(v) for v in ln.split()] for ln in lines[6:6 + count]], dtype=int).reshape(-1, 3)
        if len(idx) != count:
            return None
        mask = np.zeros((n, n, n), dtype=bool)
        mask[tuple(idx.T)] = True
    except (ValueError, KeyError, IndexError):
        return None
    return ReferenceDomain.from_mask(mask, h, origin, shape)


def cached_voxelize(shape, resolution: int, cache_dir=None) -> ReferenceDomain:
    """``voxelize`` with an optional on-disk cache, regenerated on mismatch."""
    if cache_dir is None:
        return voxelize(shape, resolution)
    name = hashlib.sha256(shape.tag.encode()).hexdigest()[:12]
    path = Path(cache_dir) / f"domain-{name}-n{resolution}.txt"
    dom = load_domain(path, shape, resolution)
    if dom is None:
        dom = voxelize(shape, resolution)
        save_domain(dom, path)
    return dom
