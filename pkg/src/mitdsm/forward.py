"""
Synthetic MIT data: coil background fields, Born scattered fields and noise.

The background field of a coil is the volume potential of its current,
``E₀ = iωμ ∫ G(·,y) J₀(y) dy`` and ``H₀ = ∫ ∇ₓG(·,y) × J₀(y) dy``. The
scattered field on the sphere uses the integral representation
``Hˢ(x) = ∫_D ∇ₓG(x,y) × σ(y)E(y) dy`` with ``E`` replaced by ``E₀``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fileio import atomic_write, fmt
from .geometry import Coil, SceneConfig, SphereGrid, conductor_quadrature
from .kernels import FOUR_PI

log = logging.getLogger(__name__)

COIL_RESOLUTION = (8, 64, 4)
CONDUCTOR_PITCH = 0.025
MEAS_FORMAT = "mitdsm-v1"


class MeasurementError(ValueError):
    pass


def coil_current(coil: Coil, y) -> np.ndarray:
    """Source current density of ``coil`` at the points ``y``.

    In the coil frame the current is ``(0, -z', y')`` inside the annulus
    ``r1 <= sqrt(y'^2 + z'^2) <= r2, |x'| <= h/2`` and zero elsewhere.
    """
    y = np.asarray(y, dtype=float)
    loc = coil.to_local(y)
    j_loc = np.stack((np.zeros(loc.shape[:-1]), -loc[..., 2], loc[..., 1]), axis=-1)
    j_loc = np.where(coil.contains(y)[..., None], j_loc, 0.0)
    return coil.to_global(j_loc)


@dataclass(frozen=True, eq=False)
class BackgroundField:
    coil_index: int
    points: np.ndarray
    E0: np.ndarray
    H0: np.ndarray
    inside: np.ndarray
    resolution: tuple


def _coil_sources(coil: Coil, resolution):
    nodes, w = coil.quadrature(*resolution)
    return nodes, w[:, None] * coil_current(coil, nodes)


def background_field(coil: Coil, points, omega: float, mu: float,
                     resolution: Sequence[int] = COIL_RESOLUTION, coil_index: int = -1,
                     chunk: int = 256) -> BackgroundField:
    """``E₀`` and ``H₀`` of one coil at ``points`` by midpoint quadrature.

    Points inside the coil volume are evaluated anyway and flagged in
    ``inside``; the quadrature there is unreliable.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nodes, jw = _coil_sources(coil, resolution)
    A = np.empty((len(pts), 3))
    H = np.empty((len(pts), 3))
    for s in range(0, len(pts), chunk):
        d = pts[s:s + chunk, None, :] - nodes[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        A[s:s + chunk] = np.einsum("ij,jk->ik", 1.0 / (FOUR_PI * r), jw)
        H[s:s + chunk] = _cross_sum(-d / (FOUR_PI * r[..., None] ** 3), jw).real
    inside = coil.contains(pts)
    if inside.any():
        log.warning("coil %d: %d evaluation points inside the coil volume",
                    coil_index, int(inside.sum()))
    E0 = 1j * omega * mu * A
    return BackgroundField(coil_index, pts, E0, H.astype(complex), inside, tuple(resolution))


def _cross_sum(G: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``Σ_j G[i, j] × V[j]`` for real ``G`` (N, C, 3) and complex ``V`` (C, 3)."""
    out = np.empty((G.shape[0], 3), dtype=np.result_type(G, V, complex))
    for i, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        out[:, i] = G[..., a] @ V[:, b] - G[..., b] @ V[:, a]
    return out


def born_sources(scene: SceneConfig, coil: Coil, pitch: float = CONDUCTOR_PITCH,
                 resolution: Sequence[int] = COIL_RESOLUTION):
    """Conductor nodes and the weighted currents ``w σ E₀`` carried by them."""
    pts, wts = [], []
    for region in scene.conductors:
        p, w = conductor_quadrature(region, pitch)
        pts.append(p)
        wts.append(w * region.sigma)
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=complex)
    pts = np.concatenate(pts)
    sw = np.concatenate(wts)
    E0 = background_field(coil, pts, scene.omega, scene.mu, resolution).E0
    return pts, sw[:, None] * E0


def born_scattered_field(scene: SceneConfig, coil: Coil, grid: SphereGrid,
                         pitch: float = CONDUCTOR_PITCH,
                         resolution: Sequence[int] = COIL_RESOLUTION) -> np.ndarray:
    """Born-approximate ``Hˢ`` of the scene's conductors on the grid nodes."""
    if scene.conductors and scene.separation <= 0:
        raise MeasurementError("conductor touches the measurement sphere")
    ys, src = born_sources(scene, coil, pitch, resolution)
    if len(ys) == 0:
        return np.zeros((grid.size, 3), dtype=complex)
    d = grid.points[:, None, :] - ys[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    gG = -d / (FOUR_PI * r[..., None] ** 3)
    return _cross_sum(gG, src)


# ---------------------------------------------------------------------------
# Measurements


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Complex field samples ``fields[k, q]`` of coil ``k`` at node ``q``."""

    grid: SphereGrid
    fields: np.ndarray
    epsilon: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=complex)
        if f.ndim != 3 or f.shape[1:] != (self.grid.size, 3):
            raise MeasurementError("fields must have shape (N, M, 3)")
        if not np.all(np.isfinite(f)):
            raise MeasurementError("non-finite measurement values")
        object.__setattr__(self, "fields", f)

    @property
    def n_coils(self) -> int:
        return self.fields.shape[0]

    def scaled(self, c) -> "MeasurementSet":
        return replace(self, fields=self.fields * c)


def background_on_grid(scene: SceneConfig, grid: SphereGrid,
                       resolution: Sequence[int] = COIL_RESOLUTION) -> np.ndarray:
    """``H₀`` of every coil on the grid nodes, shape ``(N, M, 3)``."""
    return np.stack([background_field(c, grid.points, scene.omega, scene.mu, resolution, k).H0
                     for k, c in enumerate(scene.coils)])


def simulate(scene: SceneConfig, grid: SphereGrid, pitch: float = CONDUCTOR_PITCH,
             resolution: Sequence[int] = COIL_RESOLUTION, background: Optional[np.ndarray] = None,
             ) -> MeasurementSet:
    """Noise-free total field ``H₀ + Hˢ`` of every coil."""
    if background is None:
        background = background_on_grid(scene, grid, resolution)
    hs = np.stack([born_scattered_field(scene, c, grid, pitch, resolution) for c in scene.coils])
    return MeasurementSet(grid, background + hs)


def noise_factors(shape, epsilon: float, seed: int, coil_index: int) -> np.ndarray:
    """``1 + εδ`` with ``Re δ, Im δ`` independent standard normals.

    Each coil draws from its own stream spawned from ``seed``, so results do
    not depend on the order in which coils are processed.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(coil_index,)))
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return 1.0 + epsilon * (re + 1j * im)


def apply_noise(ms: MeasurementSet, epsilon: float, seed: int) -> MeasurementSet:
    """Pointwise multiplicative noise on every component of every sample."""
    if epsilon < 0:
        raise MeasurementError("epsilon must be non-negative")
    if epsilon == 0:
        return replace(ms, epsilon=0.0, seed=seed)
    noisy = np.stack([f * noise_factors(f.shape, epsilon, seed, k)
                      for k, f in enumerate(ms.fields)])
    return MeasurementSet(ms.grid, noisy, float(epsilon), int(seed))


# ---------------------------------------------------------------------------
# Measurement files


def coil_filename(k: int) -> str:
    return f"coil_{k:02d}.dat"


def export_measurements(ms: MeasurementSet, path) -> list[Path]:
    """Write one text file per coil into the directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    g = ms.grid
    written = []
    for k in range(ms.n_coils):
        lines = [f"# format={MEAS_FORMAT}", f"# R={fmt(g.R)}", f"# M={g.size}",
                 f"# coil={k}", f"# epsilon={fmt(ms.epsilon)}",
                 f"# seed={'none' if ms.seed is None else ms.seed}",
                 f"# scheme={g.scheme}"]
        F = ms.fields[k]
        cols = np.column_stack((g.points, g.weights, F[:, 0].real, F[:, 0].imag,
                                F[:, 1].real, F[:, 1].imag, F[:, 2].real, F[:, 2].imag))
        lines += [" ".join(fmt(v) for v in row) for row in cols]
        p = out / coil_filename(k)
        atomic_write(p, "\n".join(lines) + "\n")
        written.append(p)
    return written


def _read_coil_file(path: Path):
    header = {}
    rows = []
    with open(path, encoding="ascii") as f:
        for n, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if not sep:
                    raise MeasurementError(f"{path}:{n}: malformed header line")
                header[key.strip()] = val.strip()
                continue
            parts = line.split()
            if len(parts) != 10:
                raise MeasurementError(f"{path}:{n}: expected 10 columns, found {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise MeasurementError(f"{path}:{n}: unparsable number") from None
            if not all(math.isfinite(v) for v in vals):
                raise MeasurementError(f"{path}:{n}: non-finite value")
            rows.append(vals)
    if header.get("format") != MEAS_FORMAT:
        raise MeasurementError(f"{path}: missing or unknown format header")
    for key in ("R", "M", "coil"):
        if key not in header:
            raise MeasurementError(f"{path}: header lacks '{key}'")
    M = int(header["M"])
    if len(rows) != M:
        raise MeasurementError(f"{path}:{n}: truncated, {len(rows)} of {M} rows")
    return header, np.array(rows)


def import_measurements(path, scene: Optional[SceneConfig] = None,
                        grid: Optional[SphereGrid] = None, n_coils: Optional[int] = None,
                        ) -> MeasurementSet:
    """Read ``coil_00.dat ...`` from a directory written by ``export_measurements``."""
    path = Path(path)
    files = sorted(path.glob("coil_*.dat"))
    if n_coils is None:
        n_coils = len(scene.coils) if scene is not None else len(files)
    if not files:
        raise MeasurementError(f"{path}: no coil files")
    fields = []
    ref = None
    eps = seed = None
    for k in range(n_coils):
        p = path / coil_filename(k)
        if not p.exists():
            raise MeasurementError(f"missing measurement file {p}")
        header, data = _read_coil_file(p)
        R = float(header["R"])
        if scene is not None and abs(R - scene.R) > 1e-12 * scene.R:
            raise MeasurementError(f"{p}: R={R} does not match the scene (R={scene.R})")
        if int(header["coil"]) != k:
            raise MeasurementError(f"{p}: coil index {header['coil']} != {k}")
        if ref is None:
            ref = (R, data[:, :3], data[:, 3], header.get("scheme", "imported"))
            eps = float(header.get("epsilon", "0"))
            s = header.get("seed", "none")
            seed = None if s == "none" else int(s)
        elif not (np.array_equal(ref[1], data[:, :3]) and np.array_equal(ref[2], data[:, 3])):
            raise MeasurementError(f"{p}: receiver grid differs from coil 0")
        F = np.stack((data[:, 4] + 1j * data[:, 5], data[:, 6] + 1j * data[:, 7],
                      data[:, 8] + 1j * data[:, 9]), axis=1)
        fields.append(F)
    R, pts, w, scheme = ref
    if grid is not None:
        if grid.size != len(pts) or not np.allclose(grid.points, pts, rtol=0, atol=1e-13 * R):
            raise MeasurementError("measurement grid does not match the configured grid")
        # keep the caller's grid object so kernels can be shared
        g = grid
    else:
        g = SphereGrid(R, pts, w, scheme)
    return MeasurementSet(g, np.stack(fields), eps, seed)
