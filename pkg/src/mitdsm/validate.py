"""
Oracle battery for kernels, products and point spread functions.

Each check compares a discrete quantity against an independent reference
(closed-form integral, finite-difference operator, symmetry) and records the
measured error next to its tolerance. A check marked ``gating=False`` is
reported but does not affect the overall verdict.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import closed_forms as cf
from .geometry import SphereGrid, build_fibonacci_grid, build_gauss_grid, build_graded_grid, build_section
from .kernels import gamma_kernel, grad_green, kernel_batch, random_unit_vectors, required_degree
from .products import duality_product, polarized_gradient, seminorm_gram, seminorm_squared_from_gram

log = logging.getLogger(__name__)

R_DEFAULT = 1.5
RADII = (0.3, 0.6, 0.9, 1.2)
BAND_FRACTIONS = (0.05, 0.25, 0.45, 0.65, 0.8, 0.9, 0.95)
DECAY_FRACTIONS = (0.80, 0.90, 0.95, 0.99)
BAND_SLACK = 0.05


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    gating: bool = True
    note: str = ""


@dataclass
class Report:
    checks: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    def add(self, name, measured, tolerance, gating=True, note="", passed=None):
        measured = float(measured)
        if passed is None:
            passed = bool(np.isfinite(measured) and measured <= tolerance)
        self.checks.append(Check(name, bool(passed), measured, float(tolerance), gating, note))

    def failures(self) -> list:
        return [c for c in self.checks if c.gating and not c.passed]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "seconds": round(self.seconds, 3),
                "checks": [asdict(c) for c in self.checks], "curves": self.curves}


# ---------------------------------------------------------------------------
# Finite-difference surface Laplacian


def laplace_beltrami_fd(f: Callable, x, R: float, h: float = 1e-3) -> np.ndarray:
    """``-Δ_Γ f(x)`` from second differences along two great circles.

    In geodesic normal coordinates at ``x`` the surface Laplacian is the sum
    of the second derivatives along orthogonal geodesics. The five-point
    stencil with arc step ``h`` is Richardson-extrapolated from ``h`` and
    ``h/2``; ``f`` maps ``(n, 3)`` points to ``(n, ...)`` values.
    """
    x = np.asarray(x, dtype=float)
    n = x / np.linalg.norm(x)
    t1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)

    def lap(step):
        a = step / R
        pts = [R * (np.cos(a) * n + np.sin(s * a) * t) for t in (t1, t2) for s in (1, -1)]
        vals = f(np.array(pts))
        f0 = f(x[None])[0]
        return (vals.sum(axis=0) - 4.0 * f0) / step**2

    return -(4.0 * lap(h / 2) - lap(h)) / 3.0


# ---------------------------------------------------------------------------
# Individual oracle groups


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def _axis_source(r: float) -> np.ndarray:
    return np.array([r, 0.0, 0.0])


def check_component_integrals(rep: Report, R: float, gauss: SphereGrid, fib: SphereGrid) -> None:
    for r in RADII:
        exact = cf.component_integrals(R, r)
        for grid, tol in ((gauss, 1e-8), (fib, 1e-3)):
            g = grad_green(grid.points, _axis_source(r))
            rep.add(f"component_integrals[{grid.scheme},|z|={r}]",
                    _rel(grid.integrate(g**2), exact), tol)
        # off-diagonal moments and the mean vanish
        g = grad_green(gauss.points, _axis_source(r))
        gram = np.einsum("q,qi,qj->ij", gauss.weights, g, g)
        rep.add(f"cross_terms[|z|={r}]", np.max(np.abs(gram - np.diag(np.diag(gram)))) / cf.d0(R, r), 1e-10)
        rep.add(f"mean_zero[|z|={r}]",
                np.max(np.abs(gauss.integrate(g))) / gauss.integrate(np.abs(g)).max(), 1e-10)
        # the γ = 2 analogues pin the eigenvalue convention
        k = gamma_kernel(gauss, _axis_source(r), 1).values
        rep.add(f"component_integrals_gamma2[|z|={r}]",
                _rel(gauss.integrate(k**2), cf.component_integrals_gamma2(R, r)), 1e-6)
        rep.add(f"d2_closed_form[|z|={r}]", _rel(gauss.integrate(np.sum(k**2, axis=1)), cf.d2(R, r)), 1e-6)


def check_kernel_identities(rep: Report, R: float, fib: SphereGrid, rng) -> None:
    for i in range(5):
        z = rng.uniform(-1, 1, 3)
        z *= rng.uniform(0.05, 0.9) * R / np.linalg.norm(z)
        for method in ("series", "radial"):
            k = gamma_kernel(fib, z, 0, method=method).values
            rep.add(f"gamma0_is_gradient[{method},{i}]", _rel(k, grad_green(fib.points, z)), 1e-12)

    k = gamma_kernel(fib, np.zeros(3), 1).values
    rep.add("power1_origin", _rel(k, 2.0 / R**2 * grad_green(fib.points, np.zeros(3))), 1e-12)

    # surface Laplacian against finite differences
    errs = []
    for _ in range(20):
        x = rng.normal(size=3)
        x *= R / np.linalg.norm(x)
        z = rng.normal(size=3)
        z *= rng.uniform(0.0, 0.75) * R / np.linalg.norm(z)
        probe = SphereGrid(R, x[None], np.ones(1), "probe")
        k = gamma_kernel(probe, z, 1).values[0]
        fd = laplace_beltrami_fd(lambda p: grad_green(p, z), x, R)
        errs.append(np.linalg.norm(k - fd) / np.linalg.norm(fd))
    rep.add("laplace_beltrami_fd", max(errs), 1e-5)

    # series and radial routes agree; doubling the degree changes nothing
    errs, conv = [], []
    for frac in (0.25, 0.5, 0.75):
        z = rng.normal(size=3)
        z *= frac * R / np.linalg.norm(z)
        L = required_degree(frac, 4)
        s = gamma_kernel(fib, z, 4, L_max=L).values
        s2 = gamma_kernel(fib, z, 4, L_max=2 * L).values
        r = kernel_batch(fib, z[None], [4])[0][0]
        errs.append(_rel(r, s))
        conv.append(_rel(s2, s))
    rep.add("series_vs_radial[gamma=4]", max(errs), 1e-10)
    rep.add("degree_doubling[gamma=4]", max(conv), 1e-10)

    # rotations commute with the kernel
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    z = np.array([0.3, -0.5, 0.4])
    a = gamma_kernel(fib.rotated(Q), Q @ z, 2).values
    b = gamma_kernel(fib, z, 2).values @ Q.T
    rep.add("rotation_equivariance", _rel(a, b), 1e-10)


def check_self_adjoint(rep: Report, gauss: SphereGrid, rng) -> None:
    errs = []
    for _ in range(3):
        z1, z2 = (rng.normal(size=3) for _ in range(2))
        z1 *= 0.4 * gauss.R / np.linalg.norm(z1)
        z2 *= 0.3 * gauss.R / np.linalg.norm(z2)
        a = gauss.integrate(np.sum(gamma_kernel(gauss, z1, 2).values * grad_green(gauss.points, z2), axis=1))
        b = gauss.integrate(np.sum(grad_green(gauss.points, z1) * gamma_kernel(gauss, z2, 2).values, axis=1))
        errs.append(abs(a - b) / abs(a))
    rep.add("self_adjoint[gamma=2]", max(errs), 1e-8)


def check_origin_numerator(rep: Report, R: float, gauss: SphereGrid, fib: SphereGrid, rng) -> None:
    c = cf.origin_numerator(0, R)
    for grid, tol in ((gauss, 1e-8), (fib, 1e-3)):
        errs = []
        for _ in range(20):
            z = rng.normal(size=3)
            z *= rng.uniform(0.0, 0.8) * R / np.linalg.norm(z)
            alpha, beta = random_unit_vectors(2, rng)
            k = gamma_kernel(grid, z, 0)
            val = duality_product(polarized_gradient(grid, np.zeros(3), alpha), k, beta, grid)
            # normalised by c|α||β| so that near-orthogonal pairs stay meaningful
            errs.append(abs(val - c * np.dot(alpha, np.conj(beta))) / c)
        rep.add(f"origin_numerator[{grid.scheme}]", max(errs), tol)
    alpha = np.array([1.0, 1j, 0.0]) / np.sqrt(2)
    beta = np.array([1.0, -1j, 0.0]) / np.sqrt(2)  # α·β̄ = 0
    k = gamma_kernel(fib, np.array([0.2, 0.4, -0.3]), 0)
    val = duality_product(polarized_gradient(fib, np.zeros(3), alpha), k, beta, fib)
    rep.add("orthogonal_polarizations", abs(val) / c, 1e-3)


def _band_kernels(R: float, gamma: int, frac: float, direction):
    """Graded grid around the source direction and the γ, γ/2 series kernels there."""
    z = frac * R * direction
    grid = build_graded_grid(R, direction)
    half = gamma // 2
    kh = gamma_kernel(grid, z, half, L_max=max(required_degree(frac, half), 8))
    num_kernel = gamma_kernel(grid, z, gamma, L_max=max(required_degree(frac, gamma), 8))
    return grid, z, kh, num_kernel


def check_bands(rep: Report, R: float, rng, n_beta: int = 50) -> None:
    """Seminorm and origin-psf bands for γ ∈ {0, 2} up to |z| = 0.95R."""
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    betas = random_unit_vectors(n_beta, rng)
    alphas = random_unit_vectors(n_beta, rng)
    for gamma in (0, 2):
        worst = {"corrected": 0.0, "stated": 0.0, "lower": 0.0, "psf_stated": 0.0, "psf_corrected": 0.0}
        for frac in BAND_FRACTIONS:
            grid, z, kh, kn = _band_kernels(R, gamma, frac, direction)
            D = cf.domination(gamma, R, frac * R)
            # the squared half-kernel norm is the domination term itself
            rep.add(f"domination[gamma={gamma},|z|/R={frac}]",
                    abs(grid.integrate(np.sum(kh.values**2, axis=1)) / D - 1.0), 1e-6)
            s2 = seminorm_squared_from_gram(seminorm_gram(kh.values, grid.weights), betas) / D
            worst["lower"] = max(worst["lower"], 0.5 / (1 + BAND_SLACK) - s2.min())
            worst["corrected"] = max(worst["corrected"], s2.max() - 0.75 * (1 + BAND_SLACK))
            worst["stated"] = max(worst["stated"], s2.max() - 2.0 / 3.0 * (1 + BAND_SLACK))
            # |psf(0, α; z, β)| √D between the bounds implied by the seminorm band
            c = cf.origin_numerator(gamma, R)
            num = np.array([duality_product(polarized_gradient(grid, np.zeros(3), a), kn, b, grid)
                            for a, b in zip(alphas, betas)])
            ab = np.abs(np.einsum("ni,ni->n", alphas, np.conj(betas)))
            scaled = np.abs(num) / np.sqrt(s2 * D) * np.sqrt(D)
            for tag, hi in (("psf_stated", 2.0 / 3.0), ("psf_corrected", 0.75)):
                lo_b = c * ab / np.sqrt(hi) / (1 + BAND_SLACK)
                hi_b = c * ab / np.sqrt(0.5) * (1 + BAND_SLACK)
                viol = np.maximum(lo_b - scaled, scaled - hi_b) / (c * np.maximum(ab, 1e-300))
                worst[tag] = max(worst[tag], float(viol.max()))
        note = "upper bound 3D/4 follows from per-component integrals in [D/4, D/2]"
        rep.add(f"seminorm_lower_band[gamma={gamma}]", worst["lower"], 0.0)
        rep.add(f"seminorm_upper_band[gamma={gamma}]", worst["corrected"], 0.0, note=note)
        rep.add(f"seminorm_upper_band_2/3[gamma={gamma}]", worst["stated"], 0.0, gating=False,
                note="printed 2D/3 bound; exceeded near the sphere, reported only")
        rep.add(f"psf_band[gamma={gamma}]", worst["psf_corrected"], 0.0, note=note)
        rep.add(f"psf_band_2/3[gamma={gamma}]", worst["psf_stated"], 0.0, gating=False,
                note="band derived from the printed 2D/3 bound, reported only")


def psf_decay_maxima(R: float, y, alpha, gamma: int, betas, fractions=DECAY_FRACTIONS,
                     direction=None) -> np.ndarray:
    """``max_β |psf(y, α; z, β)|`` for sources at ``|z| = fR`` along ``direction``.

    The numerator is evaluated in adjoint form, ``⟨(-Δ_Γ)^γ ∇G(·,y)×α, ∇G(·,z)×β⟩``,
    which stays accurate as ``|z| → R``.
    """
    y = np.asarray(y, dtype=float)
    d = y / np.linalg.norm(y) if direction is None else np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    out = []
    for f in fractions:
        z = f * R * d
        grid = build_graded_grid(R, d)
        Ky = kernel_batch(grid, y[None], [gamma])[0][0]
        Kh = kernel_batch(grid, z[None], [gamma // 2])[0][0]
        # Σ w a·(K × β̄) = β̄ · Σ w (a × K)
        v = grid.integrate(np.cross(np.cross(Ky, alpha), grad_green(grid.points, z)))
        num = np.abs(np.conj(betas) @ v)
        s2 = seminorm_squared_from_gram(seminorm_gram(Kh, grid.weights), betas)
        out.append(float(np.max(num / np.sqrt(s2))))
    return np.array(out)


def check_decay(rep: Report, R: float, rng) -> None:
    y = np.array([0.3, 0.3, 0.0])
    alpha = random_unit_vectors(1, rng)[0]
    betas = random_unit_vectors(50, rng)
    for gamma in (0, 2, 4):
        m = psf_decay_maxima(R, y, alpha, gamma, betas)
        worst = float(np.max(np.diff(m) / m[:-1]))
        rep.add(f"psf_decay[gamma={gamma}]", worst, 0.0, passed=worst < 0,
                note="largest relative step between successive radii; must be negative")


def check_cauchy_schwarz(rep: Report, fib: SphereGrid, rng) -> None:
    worst = -np.inf
    for _ in range(10):
        z1, z2 = (rng.normal(size=3) for _ in range(2))
        z1 *= rng.uniform(0, 0.8) * fib.R / np.linalg.norm(z1)
        z2 *= rng.uniform(0, 0.8) * fib.R / np.linalg.norm(z2)
        alpha, beta = random_unit_vectors(2, rng)
        a = np.cross(grad_green(fib.points, z1), alpha)
        k2 = gamma_kernel(fib, z2, 0)
        lhs = abs(duality_product(a, k2, beta, fib))
        na = np.sqrt(fib.integrate(np.sum(np.abs(a) ** 2, axis=1)))
        nb = np.sqrt(fib.integrate(np.sum(np.abs(np.cross(k2.values, beta)) ** 2, axis=1)))
        worst = max(worst, lhs / (na * nb))
    rep.add("cauchy_schwarz", worst - 1.0, 1e-12, passed=worst <= 1.0 + 1e-12)


def psf_section(grid: SphereGrid, y, alpha, beta, gamma: int, section: str = "z=0",
                pitch: float = 0.05, radius: float = 1.0, batch: int = 96):
    """``|psf(y, α; z, β)|`` on a cross-section lattice (radial kernels)."""
    lat = build_section(radius, pitch, section)
    a = polarized_gradient(grid, y, alpha)
    beta = np.asarray(beta)
    vals = []
    for s in range(0, lat.size, batch):
        K, Kh = kernel_batch(grid, lat.points[s:s + batch], [gamma, gamma // 2])
        num = np.abs(np.einsum("q,pqi,i->p", grid.weights, np.cross(a[None], K), np.conj(beta)))
        s2 = seminorm_squared_from_gram(seminorm_gram(Kh, grid.weights), beta[None])
        vals.append(num / np.sqrt(s2))
    return lat, np.concatenate(vals)


def check_sharpening(rep: Report, fib: SphereGrid) -> None:
    y = np.array([0.3, 0.3, 0.0])
    e = np.array([1.0, 0.0, 0.0], dtype=complex)
    areas = {}
    for gamma in (0, 4):
        lat, v = psf_section(fib, y, e, e, gamma)
        areas[gamma] = np.count_nonzero(v >= 0.5 * v.max()) * lat.spacing**2
        peak = lat.points[np.argmax(v)]
        rep.add(f"psf_peak_at_source[gamma={gamma}]", np.linalg.norm(peak - y), 1e-9)
    rep.add("half_max_area_gamma4_below_gamma0", areas[4] / areas[0], 1.0,
            passed=areas[4] < areas[0], note=f"areas {areas[0]:.4f} vs {areas[4]:.4f}")


# ---------------------------------------------------------------------------


def run_validation(R: float = R_DEFAULT, seed: int = 20240601, quick: bool = False) -> Report:
    """Run every oracle; ``quick`` skips the slower peak-sharpening scan."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rep = Report()
    gauss = build_gauss_grid(R, 64)
    fib = build_fibonacci_grid(R)
    steps = [
        ("component integrals", lambda: check_component_integrals(rep, R, gauss, fib)),
        ("kernel identities", lambda: check_kernel_identities(rep, R, fib, rng)),
        ("self-adjointness", lambda: check_self_adjoint(rep, gauss, rng)),
        ("origin numerator", lambda: check_origin_numerator(rep, R, gauss, fib, rng)),
        ("bands", lambda: check_bands(rep, R, rng)),
        ("decay", lambda: check_decay(rep, R, rng)),
        ("cauchy-schwarz", lambda: check_cauchy_schwarz(rep, fib, rng)),
    ]
    if not quick:
        steps.append(("sharpening", lambda: check_sharpening(rep, fib)))
    for name, fn in steps:
        t = time.perf_counter()
        fn()
        log.info("validate %s: %.1f s", name, time.perf_counter() - t)
    z, c0, c2 = cf.normalized_decay_curves(R)
    rep.curves = {"z": z.tolist(), "D0^-1/2": c0.tolist(), "D2^-1/2": c2.tolist(),
                  "normalization": "divided by the value at z = 0 (the maximum)"}
    rep.seconds = time.perf_counter() - t0
    return rep
