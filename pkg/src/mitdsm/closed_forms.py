"""
Closed-form integrals of Green's-gradient kernels over the sphere ``|x| = R``.

These are used as oracles for the quadrature and kernel code. The source
point sits on the first axis, ``z = (|z|, 0, 0)``, and ``g_i`` are the
components of ``∇ₓG(x, z)``.
"""

from __future__ import annotations

import numpy as np


def inverse_square_integral(R: float, z: float) -> float:
    """``∫_Γ |x - z|^{-2} dx = (2πR/|z|) ln((R+|z|)/(R-|z|))``."""
    if z == 0:
        return 4.0 * np.pi
    return 2.0 * np.pi * R / z * np.log((R + z) / (R - z))


def d0(R: float, z) -> np.ndarray:
    """Domination term for γ = 0: ``R² / (4π (R² - |z|²)²)``; equals ``∫ |∇G|²``."""
    z = np.asarray(z, dtype=float)
    return R**2 / (4.0 * np.pi * (R**2 - z**2) ** 2)


def d2(R: float, z) -> np.ndarray:
    """Domination term for γ = 2; equals ``∫ |(-Δ_Γ)∇G|²``."""
    z = np.asarray(z, dtype=float)
    num = R**6 + 12 * R**4 * z**2 + 15 * R**2 * z**4 + 2 * z**6
    return num / (np.pi * (R**2 - z**2) ** 6)


def domination(gamma: int, R: float, z):
    if gamma == 0:
        return d0(R, z)
    if gamma == 2:
        return d2(R, z)
    raise ValueError("closed forms exist for gamma 0 and 2 only")


def component_integrals(R: float, z: float) -> np.ndarray:
    """``(∫ g₁², ∫ g₂², ∫ g₃²)`` for ``0 < |z| < R``."""
    L = np.log((R + z) / (R - z))
    s = R**2 - z**2
    d1 = L - 4 * R * z / s + 2 * R * z * (R**2 + z**2) / s**2
    d23 = -0.5 * L + R * z * (R**2 + z**2) / s**2
    c = R / (32.0 * np.pi * z**3)
    return c * np.array([d1, d23, d23])


def component_integrals_gamma2(R: float, z: float) -> np.ndarray:
    """``(∫ ((-Δ_Γ)g_i)²)_i`` for ``0 < |z| < R``."""
    L = np.log((R + z) / (R - z))
    s6 = (R**2 - z**2) ** 6
    poly1 = (R**10 - 91 * R**8 * z**2 - 1318 * R**6 * z**4 - 2086 * R**4 * z**6
             - 347 * R**2 * z**8 + z**10)
    d1 = L - 2 * R * z * poly1 / s6
    poly2 = R**8 + 164 * R**6 * z**2 + 1590 * R**4 * z**4 + 164 * R**2 * z**6 + z**8
    d23 = -0.5 * L + R * z * (R**2 + z**2) * poly2 / s6
    c = 1.0 / (512.0 * np.pi * z**3 * R**3)
    return c * np.array([d1, d23, d23])


def origin_numerator(gamma: int, R: float) -> float:
    """``⟨∇G(·,0)×α, ∇G(·,z)×β⟩_γ / (α·β̄)``, independent of ``z``.

    Only the degree-one part of ``∇G(·, z)`` pairs with ``∇G(·, 0)``, and that
    part does not depend on ``z``; ``(-Δ_Γ)`` acts on it as ``2/R²``.
    """
    return (2.0 / R**2) ** gamma / (6.0 * np.pi * R**2)


def seminorm_band(gamma: int, R: float, z, stated: bool = True):
    """Bounds on ``|∇G(·,z)×β|²_γ`` valid for every ``β``.

    ``stated=True`` gives ``[D/2, 2D/3]``; ``stated=False`` the bound
    ``[D/2, 3D/4]`` that follows from the per-component integrals lying in
    ``[D/4, D/2]``.
    """
    D = domination(gamma, R, z)
    return 0.5 * D, (2.0 / 3.0 if stated else 0.75) * D


def psf_band(gamma: int, R: float, z, alpha, beta, stated: bool = True):
    """Bounds on ``|K_(0,α)(z, β)|`` implied by ``seminorm_band``."""
    c = origin_numerator(gamma, R) * abs(np.dot(alpha, np.conj(beta)))
    lo2, hi2 = seminorm_band(gamma, R, z, stated)
    return c / np.sqrt(hi2), c / np.sqrt(lo2)


def normalized_decay_curves(R: float, n: int = 101):
    """Samples of ``D₀^{-1/2}`` and ``D₂^{-1/2}`` over ``|z| ∈ [0, R)``, max-normalised."""
    z = np.linspace(0.0, R, n, endpoint=False)
    c0 = d0(R, z) ** -0.5
    c2 = d2(R, z) ** -0.5
    return z, c0 / c0.max(), c2 / c2.max()
