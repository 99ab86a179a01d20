"""
Green's function kernels and their Laplace-Beltrami filtered versions.

The filtered kernel ``(-Δ_Γ)^p ∇ₓG(·, z)`` on the sphere ``|x| = R`` is
computed analytically, in one of two independent ways:

``"series"``
    Expand ``G(x, z)`` in exterior harmonics,
    ``G = (1/4π) Σ_l |z|^l |x|^{-(l+1)} P_l(x̂·ẑ)``. Each Cartesian component
    of ``∇ₓ`` of the l-th term is a spherical harmonic of degree ``l + 1`` on
    the sphere, so the operator multiplies it by ``((l+1)(l+2)/R²)^p``.

``"radial"``
    On the sphere, for a function harmonic near it,
    ``-Δ_Γ = R^{-2} E(E + 1)`` with ``E = x·∇`` the Euler operator. Powers of
    ``E`` are Taylor coefficients of ``s ↦ ∇ₓG(e^s x, z)``, which are
    generated exactly by power-series arithmetic. No truncation, and it stays
    accurate as ``|z| → R``.

Both are exact up to round-off (the series up to its truncation tail) and
serve as oracles for each other.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import SamplingLattice, SphereGrid

FOUR_PI = 4.0 * np.pi

# tail bound relative to the partial sum; 1e-12 leaves the pointwise error of
# the gamma = 0 series just above 1e-12, so two more digits are requested
SERIES_TOL = 1e-14
SERIES_CAP = 400
# explicit L_max requests above the automatic cap are honoured up to this
SERIES_HARD_LIMIT = 4000

BANK_FORMAT = "mitdsm-bank-v1"
CACHE_ENV = "MITDSM_CACHE_DIR"


class KernelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Green's function


def green(x, y):
    """Free-space Laplace fundamental solution ``1/(4π|x - y|)``."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    if np.any(r == 0):
        raise KernelError("green: coincident points")
    return 1.0 / (FOUR_PI * r)


def grad_green(x, y):
    """Gradient in ``x``: ``-(x - y)/(4π|x - y|³)``. Broadcasts over leading axes."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise KernelError("grad_green: coincident points")
    return -d / (FOUR_PI * r**3)


# ---------------------------------------------------------------------------
# Complex unit vectors


def unit_vector(v, atol: float = 1e-12) -> np.ndarray:
    """Return ``v`` as a complex 3-vector of unit norm (normalising it)."""
    v = np.asarray(v, dtype=complex).reshape(3)
    n = np.sqrt(np.sum(np.abs(v) ** 2))
    if n < 1e-300:
        raise KernelError("cannot normalise the zero vector")
    return v / n


def is_unit(v, atol: float = 1e-12) -> bool:
    return abs(np.sum(np.abs(np.asarray(v)) ** 2) - 1.0) <= atol


def random_unit_vectors(n: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    """``n`` vectors uniformly distributed on the complex (or real) unit sphere."""
    v = rng.standard_normal((n, 3))
    if not real:
        v = v + 1j * rng.standard_normal((n, 3))
    return v / np.sqrt(np.sum(np.abs(v) ** 2, axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# Series route


def eigenvalue(l, R: float):
    """Eigenvalue of ``-Δ_Γ`` on the degree-``l + 1`` components of the l-th term."""
    return (l + 1.0) * (l + 2.0) / R**2


def _tail_bound(rho: float, L: int, power: float) -> float:
    return rho ** (L + 1) * (L + 3.0) ** (2 * power + 1) / (1.0 - rho)


def required_degree(rho: float, power: float, tol: float = SERIES_TOL) -> int:
    """Smallest ``L`` whose geometric tail bound is below ``tol`` of the partial sum."""
    if rho == 0:
        return 0
    if rho >= 1:
        raise KernelError("source point must lie inside the sphere")
    acc = 0.0
    L = 0
    while True:
        acc += rho**L * (L + 2.0) ** (2 * power + 1)
        if _tail_bound(rho, L, power) < tol * acc:
            return L
        L += 1
        if L > 100 * SERIES_HARD_LIMIT:
            return L


def _series_profile(u, r, zn: float, R: float, power: float, L: int):
    """Coefficients ``A, B`` with kernel ``= A x̂ + B ẑ``."""
    A = np.zeros_like(u)
    B = np.zeros_like(u)
    P_prev = np.zeros_like(u)
    P = np.ones_like(u)
    dP = np.zeros_like(u)
    ratio = zn / r
    scale = 1.0 / (FOUR_PI * r * r)  # |z|^l r^-(l+2) / 4π, accumulated below
    for l in range(L + 1):
        c = eigenvalue(l, R) ** power * scale
        A += c * (-(l + 1) * P - u * dP)
        B += c * dP
        # upward three-term recurrence for P_l and P_l'
        P_next = ((2 * l + 1) * u * P - l * P_prev) / (l + 1)
        dP_next = (l + 1) * P + u * dP
        P_prev, P, dP = P, P_next, dP_next
        scale = scale * ratio
    return A, B


def _series_kernel(points, z, R: float, power: float, L: int) -> np.ndarray:
    r = np.linalg.norm(points, axis=-1)
    xh = points / r[..., None]
    zn = float(np.linalg.norm(z))
    if zn == 0:
        # only the l = 0 term survives
        return eigenvalue(0, R) ** power * (-xh / (FOUR_PI * r[..., None] ** 2))
    zh = np.asarray(z, dtype=float) / zn
    u = np.clip(xh @ zh, -1.0, 1.0)
    A, B = _series_profile(u, r, zn, R, power, L)
    return A[..., None] * xh + B[..., None] * zh


# ---------------------------------------------------------------------------
# Radial (Euler operator) route


def euler_polynomial(power: int) -> np.ndarray:
    """Coefficients of ``(E² + E)^power`` in ascending powers of ``E``."""
    p = np.array([1.0])
    for _ in range(int(power)):
        p = np.convolve(p, [0.0, 1.0, 1.0])
    return p


def _radial_kernels(points, Z, R: float, powers: Sequence[int]) -> list[np.ndarray]:
    """Filtered kernels for every ``z`` in ``Z`` (shape ``(P, 3)``) and each power.

    Returns arrays of shape ``(P, M, 3)``.
    """
    for p in powers:
        if p < 0 or int(p) != p:
            raise KernelError("the radial route needs non-negative integer powers")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    X = np.asarray(points, dtype=float)
    K = 2 * int(max(powers))
    r2 = np.einsum("ij,ij->i", X, X)[None, :]
    t = Z @ X.T
    z2 = np.einsum("ij,ij->i", Z, Z)[:, None]

    q0 = r2 - 2.0 * t + z2
    if np.any(q0 <= 0):
        raise KernelError("sampling point on a grid node")
    q = [q0]
    for k in range(1, K + 1):
        q.append((r2 * 2.0**k - 2.0 * t) / math.factorial(k))

    # h = q^(-3/2):  k q0 h_k = Σ_j ((a+1) j - k) q_j h_{k-j}
    a = -1.5
    inv_q0 = 1.0 / q0
    h = [inv_q0 * np.sqrt(inv_q0)]
    for k in range(1, K + 1):
        acc = ((a + 1.0) - k) * q[1] * h[k - 1]
        for j in range(2, k + 1):
            acc += ((a + 1.0) * j - k) * q[j] * h[k - j]
        h.append(acc * (inv_q0 / k))
    # g = e^s h
    g = []
    for k in range(K + 1):
        acc = h[k].copy()
        for j in range(1, k + 1):
            acc += h[k - j] / math.factorial(j)
        g.append(acc)

    out = []
    for p in powers:
        coef = euler_polynomial(p)
        S1 = np.zeros_like(q0)
        S2 = np.zeros_like(q0)
        for k, c in enumerate(coef):
            if c == 0:
                continue
            ck = c * math.factorial(k)
            S1 += ck * g[k]
            S2 += ck * h[k]
        scale = -1.0 / (FOUR_PI * R ** (2 * int(p)))
        out.append(scale * (S1[..., None] * X[None, :, :] - S2[..., None] * Z[:, None, :]))
    return out


# ---------------------------------------------------------------------------
# Public kernel API


@dataclass(frozen=True, eq=False)
class GammaKernel:
    """Values of ``(-Δ_Γ)^power ∇ₓG(x, z)`` at the nodes of ``grid``."""

    z: np.ndarray
    power: float
    R: float
    L_max: Optional[int]
    values: np.ndarray
    grid: SphereGrid
    method: str

    def cross(self, beta) -> np.ndarray:
        return np.cross(self.values, np.asarray(beta))


def _check_source(z, R: float) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(3)
    if np.linalg.norm(z) >= R:
        raise KernelError(f"|z| = {np.linalg.norm(z):.6g} must be below R = {R:.6g}")
    return z


def series_degree(z, R: float, power: float, L_max: Optional[int] = None) -> int:
    """Truncation degree for the series route, validating an explicit request."""
    rho = float(np.linalg.norm(z)) / R
    need = required_degree(rho, power)
    if L_max is None:
        if need > SERIES_CAP:
            raise KernelError(
                f"series needs L_max = {need} > cap {SERIES_CAP} at |z|/R = {rho:.4f}; "
                "use method='radial'")
        return need
    if L_max < need:
        raise KernelError(f"L_max = {L_max} too small; at least {need} is required")
    if L_max > SERIES_HARD_LIMIT:
        raise KernelError(f"L_max above {SERIES_HARD_LIMIT} is not supported")
    return int(L_max)


def gamma_kernel(grid: SphereGrid, z, power: float, L_max: Optional[int] = None,
                 method: str = "series") -> GammaKernel:
    """Filtered Green's-gradient kernel for the source point ``z`` on ``grid``.

    Parameters
    ----------
    grid : SphereGrid
        Nodes on the measurement sphere.
    z : array_like, shape (3,)
        Sampling point, ``|z| < R``.
    power : int
        Power of ``-Δ_Γ``; ``γ`` for products and ``γ/2`` for seminorms.
    L_max : int, optional
        Series truncation degree. Chosen automatically when omitted; an
        explicit value that leaves a tail above tolerance is rejected.
    method : {"series", "radial"}
    """
    z = _check_source(z, grid.R)
    if power < 0:
        raise KernelError("power must be non-negative")
    if method == "series":
        L = series_degree(z, grid.R, power, L_max)
        vals = _series_kernel(grid.points, z, grid.R, power, L)
    elif method == "radial":
        L = None
        vals = _radial_kernels(grid.points, z[None], grid.R, [int(power)])[0][0]
    else:
        raise KernelError(f"unknown method {method!r}")
    return GammaKernel(z, power, grid.R, L, vals, grid, method)


def kernel_batch(grid: SphereGrid, Z, powers: Sequence[int], method: str = "radial",
                 L_max: Optional[int] = None) -> list[np.ndarray]:
    """Kernels for many sampling points at once; one ``(P, M, 3)`` array per power."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if len(Z) and np.linalg.norm(Z, axis=1).max() >= grid.R:
        raise KernelError("sampling point outside the measurement sphere")
    if method == "radial":
        return _radial_kernels(grid.points, Z, grid.R, powers)
    out = []
    for p in powers:
        out.append(np.stack([gamma_kernel(grid, z, p, L_max, "series").values for z in Z]))
    return out


# ---------------------------------------------------------------------------
# Kernel bank


@dataclass(frozen=True, eq=False)
class KernelBank:
    """Precomputed kernels (power γ) and seminorm kernels (power γ/2) per lattice point."""

    gamma: int
    method: str
    L_max: Optional[int]
    grid_digest: str
    lattice_digest: str
    points: np.ndarray
    kernels: np.ndarray
    halves: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    @cached_property
    def key(self) -> str:
        return bank_key(self.grid_digest, self.lattice_digest, self.gamma, self.L_max, self.method)

    def entry(self, i: int, grid: SphereGrid) -> tuple[GammaKernel, GammaKernel]:
        z = self.points[i]
        return (GammaKernel(z, self.gamma, grid.R, self.L_max, self.kernels[i], grid, self.method),
                GammaKernel(z, self.gamma // 2, grid.R, self.L_max, self.halves[i], grid, self.method))


def bank_key(grid_digest: str, lattice_digest: str, gamma: int, L_max, method: str) -> str:
    h = hashlib.sha256(json.dumps([BANK_FORMAT, grid_digest, lattice_digest, int(gamma),
                                   L_max, method]).encode())
    return h.hexdigest()


def _check_gamma(gamma: int) -> int:
    if gamma < 0 or gamma % 2:
        raise KernelError("gamma must be a non-negative even integer")
    return int(gamma)


def kernel_bank(grid: SphereGrid, lattice: SamplingLattice, gamma: int,
                L_max: Optional[int] = None, method: str = "series",
                threads: int = 1, batch: int = 64) -> KernelBank:
    """Kernels for every lattice point; identical inputs give identical banks."""
    gamma = _check_gamma(gamma)
    Z = lattice.points
    if len(Z) and np.linalg.norm(Z, axis=1).max() >= grid.R:
        raise KernelError("lattice reaches the measurement sphere")
    chunks = [Z[i:i + batch] for i in range(0, len(Z), batch)]

    def work(chunk):
        return kernel_batch(grid, chunk, [gamma, gamma // 2], method, L_max)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    M = grid.size
    kern = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, M, 3))
    half = np.concatenate([p[1] for p in parts]) if parts else np.zeros((0, M, 3))
    return KernelBank(gamma, method, L_max, grid.digest(), lattice.digest(),
                      np.array(Z), kern, half)


def cache_dir() -> Optional[Path]:
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def save_bank(bank: KernelBank, path) -> None:
    """Write a bank as ``.npz``; the key is stored alongside for verification."""
    path = Path(path)
    meta = dict(format=BANK_FORMAT, key=bank.key, gamma=bank.gamma, method=bank.method,
                L_max=bank.L_max, grid=bank.grid_digest, lattice=bank.lattice_digest)
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta)), points=bank.points,
             kernels=bank.kernels, halves=bank.halves)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def load_bank(path, grid: SphereGrid, lattice: SamplingLattice, gamma: int,
              L_max: Optional[int] = None, method: str = "series") -> KernelBank:
    """Load a cached bank, refusing it unless its key matches the request."""
    with np.load(path) as f:
        meta = json.loads(str(f["meta"]))
        want = bank_key(grid.digest(), lattice.digest(), gamma, L_max, method)
        if meta.get("format") != BANK_FORMAT or meta.get("key") != want:
            raise KernelError(f"kernel bank {path} does not match the requested configuration")
        bank = KernelBank(int(meta["gamma"]), meta["method"], meta["L_max"], meta["grid"],
                          meta["lattice"], f["points"], f["kernels"], f["halves"])
    if bank.key != want:
        raise KernelError(f"kernel bank {path} is corrupt")
    return bank
