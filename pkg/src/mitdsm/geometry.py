"""
Geometric ground truth for the MIT pipeline.

Measurement spheres and their quadrature grids, driving coils on the
dodecahedral orbit, box-shaped conductors with their volume quadrature, and
the sampling lattice over which the index function is evaluated.

All objects here are immutable once built.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

# Default receiver count used throughout the experiments.
DEFAULT_RECEIVERS = 9812


class GeometryError(ValueError):
    """Raised for inconsistent or degenerate geometry."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Sphere grids


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Quadrature nodes and area weights on the sphere of radius ``R``."""

    R: float
    points: np.ndarray
    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=float)))
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise GeometryError("points must have shape (M, 3)")
        if self.weights.shape != (self.points.shape[0],):
            raise GeometryError("one weight per point required")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def normals(self) -> np.ndarray:
        return self.points / self.R

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature of ``values`` sampled on the nodes (leading axis)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def rotated(self, Q: np.ndarray) -> "SphereGrid":
        return SphereGrid(self.R, self.points @ np.asarray(Q).T, self.weights, self.scheme)

    def scaled_weights(self, c: float) -> "SphereGrid":
        return SphereGrid(self.R, self.points, self.weights * c, self.scheme)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((float(self.R), self.scheme, self.points.shape)).encode())
        h.update(self.points.tobytes())
        h.update(self.weights.tobytes())
        return h.hexdigest()

    def validate(self, rtol_radius: float = 1e-12, rtol_area: float = 1e-10) -> None:
        """Check node radii and total area against the sphere."""
        radii = np.linalg.norm(self.points, axis=1)
        if np.max(np.abs(radii - self.R)) > rtol_radius * self.R:
            raise GeometryError("grid points are off the sphere")
        area = 4.0 * np.pi * self.R**2
        if abs(self.weights.sum() - area) > rtol_area * area:
            raise GeometryError("grid weights do not sum to the sphere area")


def build_fibonacci_grid(R: float, M: int = DEFAULT_RECEIVERS) -> SphereGrid:
    """Fibonacci lattice with ``M`` equal-area nodes on the sphere of radius ``R``."""
    if R <= 0:
        raise GeometryError("R must be positive")
    if M < 100:
        raise GeometryError("at least 100 receivers are required")
    i = np.arange(M, dtype=float) + 0.5
    cos_t = 1.0 - 2.0 * i / M
    sin_t = np.sqrt((1.0 - cos_t) * (1.0 + cos_t))
    phi = 2.0 * np.pi * np.mod(i / GOLDEN, 1.0)
    pts = R * np.column_stack((sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t))
    w = np.full(M, 4.0 * np.pi * R**2 / M)
    return SphereGrid(float(R), pts, w, "fibonacci")


def build_gauss_grid(R: float, L: int) -> SphereGrid:
    """Gauss-Legendre nodes in cos(theta) times ``2L`` uniform azimuths.

    Integrates spherical polynomials of degree up to ``2L - 1`` exactly.
    """
    if L < 4:
        raise GeometryError("band-limit L must be at least 4")
    u, wu = leggauss(L)
    n_phi = 2 * L
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    U, P = np.meshgrid(u, phi, indexing="ij")
    S = np.sqrt((1.0 - U) * (1.0 + U))
    pts = R * np.stack((S * np.cos(P), S * np.sin(P), U), axis=-1).reshape(-1, 3)
    w = np.outer(wu, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel() * R**2
    return SphereGrid(float(R), pts, w, "gauss-product")


def build_graded_grid(
    R: float,
    axis: Sequence[float],
    min_angle: float = 1e-4,
    ratio: float = 0.5,
    nodes_per_panel: int = 16,
    n_phi: int = 128,
) -> SphereGrid:
    """Product grid whose polar panels are geometrically refined around ``axis``.

    Resolves integrands concentrated near one point of the sphere, such as
    Green's-function kernels for sources approaching the surface.
    """
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    edges = [0.0]
    t = min_angle
    while t < np.pi:
        edges.append(t)
        t /= ratio
    edges.append(np.pi)
    edges = np.array(edges)
    x, wx = leggauss(nodes_per_panel)
    lo, hi = edges[:-1, None], edges[1:, None]
    theta = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    w_theta = (0.5 * (hi - lo) * wx).ravel() * np.sin(theta)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    local = np.stack((np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)), axis=-1)
    w = np.outer(w_theta, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel() * R**2
    frame = orthonormal_frame(a)  # rows x', y', z' with x' = axis
    # local polar axis maps to the requested axis
    basis = np.stack((frame[1], frame[2], frame[0]))
    pts = R * local.reshape(-1, 3) @ basis
    # renormalise the area to absorb the O(1e-16) panel error in sin(theta)
    w *= 4.0 * np.pi * R**2 / w.sum()
    return SphereGrid(float(R), pts, w, "graded")


# ---------------------------------------------------------------------------
# Coils


def orthonormal_frame(direction: Sequence[float]) -> np.ndarray:
    """Right-handed frame ``(x', y', z')`` (as rows) with ``x'`` along ``direction``.

    ``y' = normalize(e_a x x')`` where ``e_a`` is the standard basis vector
    least aligned with ``x'`` (lowest index on ties); ``z' = x' x y'``.
    """
    xp = np.asarray(direction, dtype=float)
    xp = xp / np.linalg.norm(xp)
    a = int(np.argmin(np.abs(xp)))  # argmin returns the first minimum
    e = np.zeros(3)
    e[a] = 1.0
    yp = np.cross(e, xp)
    yp /= np.linalg.norm(yp)
    zp = np.cross(xp, yp)
    return np.stack((xp, yp, zp))


@dataclass(frozen=True, eq=False)
class Coil:
    """Annular cylinder with its axis through the origin.

    ``frame`` holds the local axes as rows; the first row points from the
    origin to ``center``.
    """

    center: np.ndarray
    r1: float
    r2: float
    h: float
    frame: np.ndarray

    def __post_init__(self):
        if not (0 < self.r1 < self.r2) or self.h <= 0:
            raise GeometryError("coil needs 0 < r1 < r2 and h > 0")
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "frame", _frozen(np.asarray(self.frame, dtype=float)))

    @classmethod
    def at(cls, center, r1: float, r2: float, h: float) -> "Coil":
        return cls(np.asarray(center, dtype=float), r1, r2, h, orthonormal_frame(center))

    def to_local(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.center) @ self.frame.T

    def to_global(self, v_local: np.ndarray) -> np.ndarray:
        return np.asarray(v_local) @ self.frame

    def contains(self, y: np.ndarray) -> np.ndarray:
        loc = self.to_local(y)
        rho = np.hypot(loc[..., 1], loc[..., 2])
        return (rho >= self.r1) & (rho <= self.r2) & (np.abs(loc[..., 0]) <= self.h / 2)

    def quadrature(self, n_rho: int = 8, n_phi: int = 64, n_h: int = 4):
        """Tensor midpoint rule over (radius, angle, height).

        Returns global node positions, cell volumes and the local
        cylindrical coordinates ``(rho, phi)`` of each node.
        """
        d_rho = (self.r2 - self.r1) / n_rho
        d_phi = 2.0 * np.pi / n_phi
        d_h = self.h / n_h
        rho = self.r1 + (np.arange(n_rho) + 0.5) * d_rho
        phi = (np.arange(n_phi) + 0.5) * d_phi
        xs = -self.h / 2 + (np.arange(n_h) + 0.5) * d_h
        RHO, PHI, XS = np.meshgrid(rho, phi, xs, indexing="ij")
        local = np.stack((XS, RHO * np.cos(PHI), RHO * np.sin(PHI)), axis=-1).reshape(-1, 3)
        w = (RHO * d_rho * d_phi * d_h).ravel()
        return self.center + local @ self.frame, w


def dodecahedron_vertices() -> np.ndarray:
    """The 20 vertices of a regular dodecahedron on the unit sphere."""
    p, q = GOLDEN, 1.0 / GOLDEN
    v = [(sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    for s1 in (1, -1):
        for s2 in (1, -1):
            v.append((0.0, s1 * q, s2 * p))
            v.append((s1 * q, s2 * p, 0.0))
            v.append((s1 * p, 0.0, s2 * q))
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def place_dodecahedron_coils(orbit_radius: float, r1: float, r2: float, h: float) -> list[Coil]:
    """Twenty identical coils centred on the vertices of a dodecahedron."""
    if orbit_radius <= 0:
        raise GeometryError("orbit radius must be positive")
    return [Coil.at(orbit_radius * v, r1, r2, h) for v in dodecahedron_vertices()]


# ---------------------------------------------------------------------------
# Conductors


@dataclass(frozen=True)
class Box:
    center: tuple
    edges: tuple

    def __post_init__(self):
        if len(self.center) != 3 or len(self.edges) != 3:
            raise GeometryError("box needs a 3-vector center and three edges")
        if min(self.edges) <= 0:
            raise GeometryError("box edges must be strictly positive")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - 0.5 * np.asarray(self.edges)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + 0.5 * np.asarray(self.edges)

    @property
    def volume(self) -> float:
        return float(np.prod(self.edges))

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
                         for i in (0, 1) for j in (0, 1) for k in (0, 1)])

    def overlaps(self, other: "Box", tol: float = 1e-12) -> bool:
        """True if the interiors intersect; boxes sharing a face do not overlap."""
        return bool(np.all(self.lo < other.hi - tol) and np.all(other.lo < self.hi - tol))

    def contains(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        return np.all((y >= self.lo) & (y <= self.hi), axis=-1)


@dataclass(frozen=True)
class ConductorRegion:
    """Union of non-overlapping axis-aligned boxes with constant conductivity."""

    boxes: tuple
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise GeometryError("conductor has no boxes")
        if self.sigma < 0:
            raise GeometryError("conductivity must be non-negative")
        for i, a in enumerate(self.boxes):
            for b in self.boxes[i + 1:]:
                if a.overlaps(b):
                    raise GeometryError("boxes of one conductor must not overlap")

    @classmethod
    def box(cls, center, edges, sigma: float = 1.0) -> "ConductorRegion":
        return cls((Box(tuple(map(float, center)), tuple(map(float, edges))),), float(sigma))

    @property
    def volume(self) -> float:
        return sum(b.volume for b in self.boxes)

    def corners(self) -> np.ndarray:
        return np.concatenate([b.corners() for b in self.boxes])

    def contains(self, y: np.ndarray) -> np.ndarray:
        return np.any([b.contains(y) for b in self.boxes], axis=0)

    def distance(self, y: np.ndarray) -> np.ndarray:
        """Euclidean distance from points ``y`` to the region (0 inside)."""
        y = np.atleast_2d(y)
        d = []
        for b in self.boxes:
            gap = np.maximum(np.maximum(b.lo - y, y - b.hi), 0.0)
            d.append(np.linalg.norm(gap, axis=-1))
        return np.min(d, axis=0)


def conductor_quadrature(region: ConductorRegion, target_h: float):
    """Midpoint cells covering the region; cell size at most ``target_h``.

    Returns ``(points, weights)`` with weights summing to the region volume.
    """
    if target_h <= 0:
        raise GeometryError("target_h must be positive")
    if region.volume <= 0:
        raise GeometryError("degenerate conductor region")
    pts, wts = [], []
    for b in region.boxes:
        n = [max(1, math.ceil(e / target_h - 1e-9)) for e in b.edges]
        axes = [lo + (np.arange(k) + 0.5) * (e / k) for lo, e, k in zip(b.lo, b.edges, n)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        pts.append(np.stack((X, Y, Z), axis=-1).reshape(-1, 3))
        cell = b.volume / (n[0] * n[1] * n[2])
        wts.append(np.full(pts[-1].shape[0], cell))
    return np.concatenate(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# Scene


@dataclass(frozen=True)
class CoilSetSpec:
    orbit_radius: float = 1.5
    r1: float = 0.4
    r2: float = 0.6
    h: float = 0.2
    count: int = 20


@dataclass(frozen=True, eq=False)
class SceneConfig:
    """Complete description of one MIT experiment."""

    mu: float
    omega: float
    R: float
    omega_domain_radius: float
    conductors: tuple = ()
    coil_set: CoilSetSpec = field(default_factory=CoilSetSpec)

    def __post_init__(self):
        object.__setattr__(self, "conductors", tuple(self.conductors))
        self.validate()

    @property
    def coils(self) -> list[Coil]:
        cs = self.coil_set
        return place_dodecahedron_coils(cs.orbit_radius, cs.r1, cs.r2, cs.h)

    @property
    def separation(self) -> float:
        """Minimal distance between the conductor support and the sphere."""
        if not self.conductors:
            return self.R
        far = max(np.linalg.norm(c.corners(), axis=1).max() for c in self.conductors)
        return self.R - far

    def validate(self) -> None:
        if self.mu <= 0 or self.omega <= 0:
            raise GeometryError("mu and omega must be positive")
        if not (self.R > self.omega_domain_radius > 0):
            raise GeometryError("need R > omega_domain_radius > 0")
        if self.coil_set.count != 20:
            raise GeometryError("only the 20-coil dodecahedral set is supported")
        for c in self.conductors:
            # a box lies in the ball iff all its corners do
            if np.linalg.norm(c.corners(), axis=1).max() >= self.omega_domain_radius:
                raise GeometryError("conductor leaves the sampling domain")
        if self.separation <= 0:
            raise GeometryError("conductor touches the measurement sphere")


# ---------------------------------------------------------------------------
# Sampling lattice


@dataclass(frozen=True, eq=False)
class SamplingLattice:
    """Probe points ``z`` inside the sampling ball.

    For cross-sections, ``shape`` gives the raster shape and ``mask`` the
    raster cells that carry a lattice point (row-major order).
    """

    points: np.ndarray
    spacing: float
    radius: float
    section: Optional[str] = None
    shape: Optional[tuple] = None
    mask: Optional[np.ndarray] = None
    axes: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(np.asarray(self.points, dtype=float).reshape(-1, 3)))
        if len(self.points) and np.linalg.norm(self.points, axis=1).max() > self.radius * (1 + 1e-12):
            raise GeometryError("lattice point outside the sampling ball")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr((float(self.spacing), float(self.radius), self.section)).encode())
        h.update(self.points.tobytes())
        return h.hexdigest()

    def raster(self, values: np.ndarray) -> np.ndarray:
        """Scatter per-point values into the cross-section raster (NaN outside)."""
        if self.shape is None:
            raise GeometryError("lattice is not a cross-section")
        out = np.full(self.shape, np.nan)
        out[self.mask.reshape(self.shape)] = values
        return out


def _axis_values(radius: float, pitch: float) -> np.ndarray:
    n = int(math.floor(radius / pitch + 1e-9))
    return np.arange(-n, n + 1) * pitch


def build_lattice(radius: float, pitch: float) -> SamplingLattice:
    """Cartesian lattice of pitch ``pitch`` through the origin, clipped to the ball."""
    if pitch <= 0 or radius <= 0:
        raise GeometryError("pitch and radius must be positive")
    a = _axis_values(radius, pitch)
    X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
    pts = np.stack((X, Y, Z), axis=-1).reshape(-1, 3)
    keep = np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)
    return SamplingLattice(pts[keep], pitch, radius)


def parse_section(spec: str) -> tuple[int, float]:
    """``'z=0'`` -> (2, 0.0); the axis normal to the plane and its offset."""
    try:
        name, value = spec.replace(" ", "").split("=")
        return "xyz".index(name.lower()), float(value)
    except (ValueError, IndexError):
        raise GeometryError(f"bad cross-section {spec!r}; expected x=…, y=… or z=…") from None


def build_section(radius: float, pitch: float, section: str = "z=0") -> SamplingLattice:
    """Planar raster lattice on the cross-section ``section`` of the sampling ball."""
    normal, offset = parse_section(section)
    if abs(offset) > radius:
        raise GeometryError("cross-section misses the sampling ball")
    a = _axis_values(radius, pitch)
    inplane = [i for i in range(3) if i != normal]
    U, V = np.meshgrid(a, a, indexing="ij")
    pts = np.zeros(U.shape + (3,))
    pts[..., inplane[0]] = U
    pts[..., inplane[1]] = V
    pts[..., normal] = offset
    pts = pts.reshape(-1, 3)
    mask = np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)
    return SamplingLattice(pts[mask], pitch, radius, section=section,
                           shape=U.shape, mask=_frozen(mask), axes=(a, a))
