"""
Direct sampling reconstruction.

For every coil the perturbation field ``Hˢ = M - H₀`` is correlated with the
filtered kernels of each sampling point ``z``. The polarization is the
closed-form maximiser of the numerator,

    β_z = normalize( Σ_q w_q Hˢ(x_q) × K_z(x_q) ),

and the indicator ``J(z, β_z)`` is the ratio of the duality product to the
seminorm. Per-coil index functions are max-normalised, fused by their root
mean square and raised to a display power.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .forward import COIL_RESOLUTION, MeasurementSet, background_on_grid
from .geometry import SamplingLattice, SceneConfig, SphereGrid, build_lattice, build_section
from .kernels import GammaKernel, KernelBank, KernelError, _check_gamma, gamma_kernel, kernel_batch
from .products import duality_product, seminorm, seminorm_gram

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-300
FALLBACK_BETA = np.array([1.0, 0.0, 0.0], dtype=complex)


class ReconstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DsmParams:
    gamma: int = 4
    postprocess_power: int = 4
    method: str = "radial"
    L_max: Optional[int] = None
    pitch: float = 0.05
    section: Optional[str] = None
    batch: int = 96
    threads: int = 1

    def __post_init__(self):
        _check_gamma(self.gamma)
        if self.postprocess_power < 1 or int(self.postprocess_power) != self.postprocess_power:
            raise ValueError("postprocess_power must be a positive integer")
        if self.pitch <= 0 or self.batch < 1 or self.threads < 1:
            raise ValueError("pitch, batch and threads must be positive")

    def lattice(self, radius: float) -> SamplingLattice:
        if self.section:
            return build_section(radius, self.pitch, self.section)
        return build_lattice(radius, self.pitch)


@dataclass(frozen=True, eq=False)
class IndexField:
    """Indicator values over a sampling lattice.

    ``J[k]`` is the raw indicator of coil ``k``, ``I[k] = J[k]/max J[k]``,
    ``fused`` the normalised RMS of the ``I[k]`` and ``processed`` its
    ``power``-th power.
    """

    lattice: SamplingLattice
    J: np.ndarray
    I: np.ndarray
    fused: np.ndarray
    processed: np.ndarray
    beta: np.ndarray
    degenerate: np.ndarray
    gamma: int
    power: int


# ---------------------------------------------------------------------------
# Single-point operations


def perturbation_field(ms: MeasurementSet, background) -> np.ndarray:
    """``Hˢ = M - H₀`` per coil; ``background`` is ``(N, M, 3)`` or BackgroundFields."""
    if not isinstance(background, np.ndarray):
        background = np.stack([b.H0 for b in background])
    if background.shape != ms.fields.shape:
        raise ReconstructionError("background and measurements live on different grids")
    return ms.fields - background


def optimal_beta(hs, kernel: GammaKernel, grid: SphereGrid):
    """Polarization maximising ``|⟨Hˢ, ∇G(·,z)×β⟩_γ|``.

    Returns ``(beta, degenerate)``; a vanishing correlation falls back to
    ``(1, 0, 0)`` with ``degenerate=True``.
    """
    hs = np.asarray(hs)
    if hs.shape != (grid.size, 3) or kernel.values.shape != hs.shape:
        raise KernelError("field and kernel must share the grid")
    v = np.sum(grid.weights[:, None] * np.cross(hs, kernel.values), axis=0)
    n = np.sqrt(np.sum(np.abs(v) ** 2))
    if not n > DEGENERATE_NORM:
        return FALLBACK_BETA.copy(), True
    return v / n, False


def indicator(hs, z, beta, gamma: int, grid: SphereGrid, bank: Optional[KernelBank] = None,
              method: str = "series", L_max: Optional[int] = None) -> float:
    """``J(z, β) = |⟨Hˢ, ∇G(·,z)×β⟩_γ| / |∇G(·,z)×β|_γ``."""
    z = np.asarray(z, dtype=float)
    if bank is not None:
        hit = np.flatnonzero(np.all(bank.points == z, axis=1))
        if hit.size == 0:
            raise KernelError("sampling point not in the kernel bank")
        if bank.gamma != gamma:
            raise KernelError("kernel bank built for a different gamma")
        k, kh = bank.entry(int(hit[0]), grid)
    else:
        k = gamma_kernel(grid, z, gamma, L_max, method)
        kh = gamma_kernel(grid, z, gamma // 2, L_max, method)
    return abs(duality_product(hs, k, beta, grid)) / seminorm(kh, beta, grid)


# ---------------------------------------------------------------------------
# Lattice sweep


def _weighted_fields(H: np.ndarray, weights: np.ndarray):
    """Real and imaginary parts of ``w Hˢ`` as contiguous ``(3N, M)`` matrices."""
    N, M, _ = H.shape
    HW = (weights[None, :, None] * H).transpose(0, 2, 1).reshape(N * 3, M)
    # BLAS needs unit-stride operands; .real/.imag views of complex data are not
    return np.ascontiguousarray(HW.real), np.ascontiguousarray(HW.imag)


def _batch_indicator(HW, weights: np.ndarray, K: np.ndarray, Kh: np.ndarray):
    """β_z and J(z, β_z) for weighted fields ``HW`` and kernels ``(P, M, 3)``."""
    HWr, HWi = HW
    N = HWr.shape[0] // 3
    P, M, _ = K.shape
    Kt = np.ascontiguousarray(K.transpose(1, 0, 2).reshape(M, P * 3))
    C = (HWr @ Kt + 1j * (HWi @ Kt)).reshape(N, 3, P, 3)
    # v_i = ε_ijm C_jm
    v = np.stack((C[:, 1, :, 2] - C[:, 2, :, 1],
                  C[:, 2, :, 0] - C[:, 0, :, 2],
                  C[:, 0, :, 1] - C[:, 1, :, 0]), axis=-1)  # (N, P, 3)
    norm = np.sqrt(np.sum(np.abs(v) ** 2, axis=-1))
    degenerate = ~(norm > DEGENERATE_NORM)
    beta = np.where(degenerate[..., None], FALLBACK_BETA, v / np.where(degenerate, 1.0, norm)[..., None])
    num = np.abs(np.einsum("npi,npi->np", np.conj(beta), v))
    gram = seminorm_gram(Kh, weights)  # (P, 3, 3)
    tr = np.trace(gram, axis1=-2, axis2=-1)
    quad = np.einsum("npi,pij,npj->np", beta, gram, np.conj(beta)).real
    semi2 = tr[None, :] - quad
    if np.any(semi2 <= 0):
        raise KernelError("vanishing seminorm on the lattice")
    return beta, num / np.sqrt(semi2), degenerate


def _fuse(J: np.ndarray, power: int):
    peak = J.max(axis=1)
    if not np.any(peak > 0):
        raise ReconstructionError("degenerate measurement: the indicator vanishes everywhere")
    silent = ~(peak > 0)
    if silent.any():
        log.warning("coils %s carry no signal", np.flatnonzero(silent).tolist())
    I = J / np.where(silent, 1.0, peak)[:, None]
    rms = np.sqrt(np.mean(I**2, axis=0))
    fused = rms / rms.max()
    return I, fused, fused**power


def sweep(hs_list: Sequence[np.ndarray], grid: SphereGrid, lattice: SamplingLattice,
          params: DsmParams, bank: Optional[KernelBank] = None):
    """Raw indicators for several perturbation fields sharing one kernel pass.

    Returns a list of ``(beta, J, degenerate)`` per input field.
    """
    sizes = [h.shape[0] for h in hs_list]
    H = np.concatenate(hs_list, axis=0)
    HW = _weighted_fields(H, grid.weights)
    Z = lattice.points
    starts = list(range(0, len(Z), params.batch))

    def work(s):
        sl = slice(s, s + params.batch)
        if bank is not None:
            K, Kh = bank.kernels[sl], bank.halves[sl]
        else:
            K, Kh = kernel_batch(grid, Z[sl], [params.gamma, params.gamma // 2],
                                 params.method, params.L_max)
        return _batch_indicator(HW, grid.weights, K, Kh)

    if bank is not None:
        if bank.gamma != params.gamma or bank.grid_digest != grid.digest() \
                or bank.lattice_digest != lattice.digest():
            raise KernelError("kernel bank does not match grid, lattice or gamma")
    t0 = time.perf_counter()
    # single-threaded BLAS keeps every batch bitwise identical whatever the
    # worker count; parallelism comes from the batch pool instead
    with threadpool_limits(limits=1, user_api="blas"):
        if params.threads > 1:
            with ThreadPoolExecutor(params.threads) as ex:
                parts = list(ex.map(work, starts))
        else:
            parts = [work(s) for s in starts]
    log.info("indicator sweep: %d points, %d fields, %.1f s", len(Z), H.shape[0],
             time.perf_counter() - t0)
    beta = np.concatenate([p[0] for p in parts], axis=1)
    J = np.concatenate([p[1] for p in parts], axis=1)
    deg = np.concatenate([p[2] for p in parts], axis=1)
    out, o = [], 0
    for n in sizes:
        out.append((beta[o:o + n], J[o:o + n], deg[o:o + n]))
        o += n
    return out


def reconstruct_many(measurements: Sequence[MeasurementSet], scene: SceneConfig,
                     params: DsmParams = DsmParams(), background: Optional[np.ndarray] = None,
                     lattice: Optional[SamplingLattice] = None, bank: Optional[KernelBank] = None,
                     resolution=COIL_RESOLUTION) -> list[IndexField]:
    """Index fields for several measurement sets on a common grid.

    Kernels are evaluated once per lattice batch and shared by all sets.
    """
    grid = measurements[0].grid
    for ms in measurements:
        if ms.grid is not grid and ms.grid.digest() != grid.digest():
            raise ReconstructionError("measurement sets use different grids")
        if abs(ms.grid.R - scene.R) > 1e-12 * scene.R:
            raise ReconstructionError("measurement sphere does not match the scene")
    if lattice is None:
        lattice = params.lattice(scene.omega_domain_radius)
    t0 = time.perf_counter()
    if background is None:
        background = background_on_grid(scene, grid, resolution)
    log.info("background fields: %.1f s", time.perf_counter() - t0)
    hs = [perturbation_field(ms, background) for ms in measurements]
    results = []
    for (beta, J, deg) in sweep(hs, grid, lattice, params, bank):
        I, fused, processed = _fuse(J, params.postprocess_power)
        results.append(IndexField(lattice, J, I, fused, processed, beta, deg,
                                  params.gamma, params.postprocess_power))
    return results


def reconstruct(measurements: MeasurementSet, scene: SceneConfig,
                params: DsmParams = DsmParams(), **kw) -> IndexField:
    """Run the direct sampling method on one measurement set."""
    return reconstruct_many([measurements], scene, params, **kw)[0]


# ---------------------------------------------------------------------------
# Peak analysis


def local_maxima(lattice: SamplingLattice, values: np.ndarray, min_separation: float,
                 count: int) -> np.ndarray:
    """Indices of the ``count`` largest values that are pairwise ``min_separation`` apart."""
    order = np.argsort(-values, kind="stable")
    picked: list[int] = []
    for i in order:
        p = lattice.points[i]
        if all(np.linalg.norm(p - lattice.points[j]) >= min_separation for j in picked):
            picked.append(int(i))
            if len(picked) == count:
                break
    return np.array(picked, dtype=int)


def half_max_area(lattice: SamplingLattice, values: np.ndarray) -> float:
    """Area (section) or volume of lattice cells at or above half the peak value."""
    dim = 2 if lattice.section else 3
    v = np.abs(values)
    return float(np.count_nonzero(v >= 0.5 * v.max()) * lattice.spacing**dim)
