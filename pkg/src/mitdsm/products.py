"""
Discrete duality product, seminorm and point spread functions on the sphere.

With ``K_z = (-Δ_Γ)^γ ∇ₓG(·, z)`` (real) the product of a complex field ``a``
with ``∇ₓG(·, z) × β`` is ``Σ_q w_q a(x_q) · conj(K_z(x_q) × β)``; all powers
of the operator live in the kernel, never in the data.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .geometry import SphereGrid
from .kernels import GammaKernel, KernelError, gamma_kernel, grad_green


def _same_grid(kernel: GammaKernel, grid: SphereGrid) -> None:
    if kernel.grid is grid:
        return
    if kernel.values.shape[0] != grid.size or kernel.grid.digest() != grid.digest():
        raise KernelError("kernel and field live on different grids")


def duality_product(a, kernel: GammaKernel, beta, grid: SphereGrid) -> complex:
    """``⟨a, ∇G(·,z) × β⟩_γ`` for a complex field ``a`` sampled on ``grid``."""
    a = np.asarray(a)
    if a.shape != (grid.size, 3):
        raise KernelError("field must have shape (M, 3) on the grid")
    _same_grid(kernel, grid)
    b = np.cross(kernel.values, np.conj(np.asarray(beta)))
    return complex(np.sum(grid.weights * np.einsum("ij,ij->i", a, b)))


def seminorm_squared(kernel_half: GammaKernel, beta, grid: SphereGrid) -> float:
    _same_grid(kernel_half, grid)
    c = np.cross(kernel_half.values, np.asarray(beta))
    return float(np.sum(grid.weights * np.sum(np.abs(c) ** 2, axis=1)))


def seminorm(kernel_half: GammaKernel, beta, grid: SphereGrid) -> float:
    """``|∇G(·,z) × β|_γ`` from a kernel built with power ``γ/2``."""
    s2 = seminorm_squared(kernel_half, beta, grid)
    if not s2 > 0:
        raise KernelError("vanishing seminorm: grid or kernel is corrupt")
    return float(np.sqrt(s2))


def polarized_gradient(grid: SphereGrid, y, alpha) -> np.ndarray:
    """The field ``∇ₓG(·, y) × α`` on the grid nodes."""
    return np.cross(grad_green(grid.points, np.asarray(y, dtype=float)), np.asarray(alpha))


def psf(y, alpha, z, beta, gamma: int, grid: SphereGrid, method: str = "series",
        L_max: Optional[int] = None, adjoint: bool = False) -> complex:
    """Point spread function ``K_(y,α)(z, β)``.

    With ``adjoint=True`` the operator ``(-Δ_Γ)^γ`` is applied to the
    smooth field of ``y`` instead of the kernel of ``z``. Both forms are
    equal by self-adjointness, but for ``|z|`` close to ``R`` the filtered
    kernel of ``z`` is large and oscillatory and the direct quadrature
    loses all accuracy to cancellation.
    """
    if np.linalg.norm(y) >= grid.R:
        raise KernelError("y must lie inside the measurement sphere")
    kh = gamma_kernel(grid, z, gamma // 2, L_max, method)
    if adjoint:
        ky = gamma_kernel(grid, y, gamma, L_max, method)
        k0 = gamma_kernel(grid, z, 0, L_max, method)
        num = duality_product(np.cross(ky.values, np.asarray(alpha)), k0, beta, grid)
    else:
        k = gamma_kernel(grid, z, gamma, L_max, method)
        num = duality_product(polarized_gradient(grid, y, alpha), k, beta, grid)
    return num / seminorm(kh, beta, grid)


def seminorm_gram(kernel_half_values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``Σ_q w_q K_q K_qᵀ`` per sampling point; input ``(..., M, 3)``."""
    return np.einsum("q,...qi,...qj->...ij", weights, kernel_half_values, kernel_half_values)


def seminorm_squared_from_gram(gram: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``|K × β|²`` integrated, using ``|K×β|² = |K|²|β|² - |K·β|²``."""
    tr = np.trace(gram, axis1=-2, axis2=-1)
    nb = np.sum(np.abs(beta) ** 2, axis=-1)
    quad = np.einsum("...i,...ij,...j->...", beta, gram, np.conj(beta)).real
    return tr * nb - quad
