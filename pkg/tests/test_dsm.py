from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mitdsm.dsm import (
    DsmParams, ReconstructionError, _fuse, half_max_area, indicator, local_maxima, optimal_beta,
    perturbation_field, reconstruct, reconstruct_many, sweep,
)
from mitdsm.forward import MeasurementSet, background_field, born_scattered_field, born_sources
from mitdsm.geometry import (
    ConductorRegion, SamplingLattice, SceneConfig, build_fibonacci_grid, build_section,
)
from mitdsm.kernels import KernelError, gamma_kernel, grad_green, kernel_bank, random_unit_vectors
from mitdsm.products import duality_product, psf

MU, OMEGA, R = 4e-7 * np.pi, 2 * np.pi * 1e8, 1.5
LOW = (4, 32, 2)


@pytest.fixture(scope="module")
def grid():
    return build_fibonacci_grid(R, 1500)


@pytest.fixture(scope="module")
def section():
    return build_section(1.0, 0.1, "z=0")


def _point_field(grid, y, alpha):
    return np.cross(grad_green(grid.points, y), alpha)


@pytest.fixture(scope="module")
def two_sources(grid):
    a = _point_field(grid, np.array([0.4, 0.4, 0.0]), np.array([0, 0, 1.0]))
    b = _point_field(grid, np.array([-0.4, -0.4, 0.0]), np.array([1, 1j, 0.0]) / np.sqrt(2))
    c = _point_field(grid, np.array([0.4, 0.4, 0.0]), np.array([0, 1.0, 0]))
    return np.stack([a + b, 2 * a - b, c])


def test_params_invariants():
    with pytest.raises(KernelError):
        DsmParams(gamma=3)
    with pytest.raises(ValueError):
        DsmParams(postprocess_power=0)
    with pytest.raises(ValueError):
        DsmParams(pitch=-1)
    p = DsmParams()
    assert (p.gamma, p.postprocess_power) == (4, 4)


def test_perturbation_field(grid):
    bg = np.ones((2, grid.size, 3), complex)
    ms = MeasurementSet(grid, bg.copy())
    assert np.all(perturbation_field(ms, bg) == 0)
    with pytest.raises(ReconstructionError):
        perturbation_field(ms, bg[:1])


def test_optimal_beta_beats_random_search(grid, rng):
    y = np.array([0.2, -0.3, 0.1])
    hs = _point_field(grid, y, np.array([0.0, 0.6, 0.8]))
    k = gamma_kernel(grid, y, 0)
    beta, deg = optimal_beta(hs, k, grid)
    assert not deg and abs(np.sum(np.abs(beta) ** 2) - 1) < 1e-12
    best = abs(duality_product(hs, k, beta, grid))
    for b in random_unit_vectors(200, rng):
        assert abs(duality_product(hs, k, b, grid)) <= best * (1 + 1e-12)


def test_optimal_beta_phase_covariance(grid):
    y = np.array([0.2, -0.3, 0.1])
    hs = _point_field(grid, y, np.array([0.0, 0.6, 0.8j]))
    k = gamma_kernel(grid, np.array([0.1, 0.0, 0.2]), 2)
    b1, _ = optimal_beta(hs, k, grid)
    c = 3.0 - 4.0j
    b2, _ = optimal_beta(c * hs, k, grid)
    assert np.allclose(b2, b1 * c / abs(c), rtol=1e-12, atol=1e-15)


def test_optimal_beta_degenerate_fallback(grid):
    beta, deg = optimal_beta(np.zeros((grid.size, 3)), gamma_kernel(grid, np.zeros(3), 0), grid)
    assert deg and np.array_equal(beta, [1, 0, 0])


def test_indicator_zero_field(grid):
    assert indicator(np.zeros((grid.size, 3)), np.zeros(3), np.array([1, 0, 0]), 2, grid) == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_indicator_phase_invariance(phase):
    grid = build_fibonacci_grid(R, 300)
    hs = _point_field(grid, np.array([0.3, 0, 0]), np.array([0, 1.0, 0]))
    z, b = np.array([0.1, 0.2, 0.0]), np.array([0, 1.0, 0])
    a = indicator(hs, z, b, 2, grid)
    assert indicator(np.exp(1j * phase) * hs, z, b, 2, grid) == pytest.approx(a, rel=1e-13)


def test_single_cell_equality(grid):
    # one Born cell: Hˢ = w σ E₀ × ... reduces J to |w σ E₀| |psf|
    y = np.array([0.25, -0.1, 0.3])
    src = np.array([2e-3 - 1e-3j, 5e-4j, -1e-3])
    hs = np.cross(grad_green(grid.points, y), src)
    n = np.linalg.norm(src)
    for z in (np.array([0.0, 0.3, 0.1]), y):
        for beta in (np.array([1.0, 0, 0]), np.array([0, 1, 1j]) / np.sqrt(2)):
            J = indicator(hs, z, beta, 2, grid)
            assert J == pytest.approx(n * abs(psf(y, src / n, z, beta, 2, grid)), rel=1e-12)


def test_born_triangle_bound(grid):
    scene = SceneConfig(MU, OMEGA, R, 1.0, (ConductorRegion.box((0.3, 0.2, 0.0), (0.2,) * 3),))
    coil = scene.coils[0]
    ys, src = born_sources(scene, coil, 0.1, LOW)
    hs = born_scattered_field(scene, coil, grid, 0.1, LOW)
    norms = np.linalg.norm(src, axis=1)
    for z in (np.array([0.0, 0.0, 0.0]), np.array([0.3, 0.2, 0.0]), np.array([-0.5, 0.2, 0.3])):
        beta, _ = optimal_beta(hs, gamma_kernel(grid, z, 4), grid)
        J = indicator(hs, z, beta, 4, grid)
        bound = sum(n * abs(psf(y, s / n, z, beta, 4, grid)) for y, s, n in zip(ys, src, norms))
        assert J <= bound * (1 + 1e-8)


def test_sweep_matches_pointwise(grid, section, two_sources):
    lat = SamplingLattice(section.points[::7], section.spacing, section.radius)
    (beta, J, deg), = sweep([two_sources], grid, lat, DsmParams(gamma=2, batch=5))
    assert not deg.any()
    for k in range(two_sources.shape[0]):
        for i in range(0, lat.size, 4):
            z = lat.points[i]
            ref_beta, _ = optimal_beta(two_sources[k], gamma_kernel(grid, z, 2), grid)
            assert np.allclose(beta[k, i], ref_beta, atol=1e-10)
            assert J[k, i] == pytest.approx(indicator(two_sources[k], z, ref_beta, 2, grid), rel=1e-10)


def test_sweep_bank_threads_and_batches_bitwise(grid, section, two_sources):
    p = DsmParams(gamma=4)
    bank = kernel_bank(grid, section, 4, method="radial", batch=p.batch)
    (b0, j0, _), = sweep([two_sources], grid, section, p)
    (b1, j1, _), = sweep([two_sources], grid, section, DsmParams(gamma=4, threads=2))
    (b2, j2, _), = sweep([two_sources], grid, section, p, bank=bank)
    assert np.array_equal(j0, j1) and np.array_equal(b0, b1)
    assert np.array_equal(j0, j2) and np.array_equal(b0, b2)
    with pytest.raises(KernelError):
        sweep([two_sources], grid, section, DsmParams(gamma=2), bank=bank)


def test_sweep_shared_pass_splits_inputs(grid, section, two_sources):
    both = sweep([two_sources, two_sources[:1]], grid, section, DsmParams())
    assert both[0][1].shape == (3, section.size) and both[1][1].shape == (1, section.size)
    assert np.allclose(both[1][1][0], both[0][1][0], rtol=1e-14, atol=0)


def test_fuse_normalisation(two_sources):
    J = np.abs(np.random.default_rng(3).normal(size=(3, 50)))
    I, fused, proc = _fuse(J, 4)
    assert np.all(I.max(axis=1) == 1.0) and fused.max() == 1.0
    assert np.all((0 <= proc) & (proc <= 1)) and np.array_equal(proc, fused**4)


def test_fuse_identical_copies():
    J = np.abs(np.random.default_rng(4).normal(size=(1, 200)))
    I1, f1, _ = _fuse(J, 4)
    In, fn, _ = _fuse(np.repeat(J, 5, axis=0), 4)
    assert np.allclose(fn, I1[0], rtol=4e-16, atol=0)
    assert np.array_equal(In[3], I1[0])


def test_fuse_degenerate():
    with pytest.raises(ReconstructionError, match="degenerate measurement"):
        _fuse(np.zeros((2, 5)), 4)


@pytest.fixture(scope="module")
def small_scene():
    return SceneConfig(MU, OMEGA, R, 1.0, (ConductorRegion.box((0.3, -0.2, 0.0), (0.1,) * 3),))


@pytest.fixture(scope="module")
def small_data(small_scene, grid):
    bg = np.stack([background_field(c, grid.points, OMEGA, MU, LOW).H0 for c in small_scene.coils[:2]])
    hs = np.stack([born_scattered_field(small_scene, c, grid, 0.025, LOW) for c in small_scene.coils[:2]])
    return bg, MeasurementSet(grid, bg + hs)


def test_single_coil_localization(small_scene, small_data):
    bg, ms = small_data
    one = MeasurementSet(ms.grid, ms.fields[:1])
    params = DsmParams(pitch=0.05, section="z=0")
    field = reconstruct(one, small_scene, params, background=bg[:1])
    peak = field.lattice.points[np.argmax(field.processed)]
    assert np.linalg.norm(peak - [0.3, -0.2, 0.0]) <= 0.05 + 0.15


def test_reconstruct_amplitude_invariance(small_scene, small_data):
    bg, ms = small_data
    params = DsmParams(pitch=0.1, section="z=0")
    ref = reconstruct(ms, small_scene, params, background=bg)
    c = 2.5 * np.exp(0.7j)
    scaled = MeasurementSet(ms.grid, bg + c * (ms.fields - bg))
    out = reconstruct(scaled, small_scene, params, background=bg)
    assert np.allclose(out.I, ref.I, rtol=1e-9, atol=1e-12)
    assert np.argmax(out.fused) == np.argmax(ref.fused)


def test_reconstruct_identical_copies(small_scene, small_data):
    bg, ms = small_data
    params = DsmParams(pitch=0.1, section="z=0")
    one = reconstruct(MeasurementSet(ms.grid, ms.fields[:1]), small_scene, params, background=bg[:1])
    rep = reconstruct(MeasurementSet(ms.grid, np.repeat(ms.fields[:1], 3, axis=0)), small_scene, params,
                      background=np.repeat(bg[:1], 3, axis=0))
    assert np.array_equal(rep.J[0], rep.J[2])
    assert np.allclose(rep.fused, rep.I[0], rtol=4e-16, atol=0)
    # a one-row and a three-row product round differently and the
    # correlation sum cancels, so the runs agree only to ~1e-12
    assert np.allclose(rep.fused, one.I[0], rtol=1e-10, atol=0)


def test_reconstruct_degenerate_measurement(small_scene, small_data):
    bg, ms = small_data
    with pytest.raises(ReconstructionError, match="degenerate"):
        reconstruct(MeasurementSet(ms.grid, bg), small_scene, DsmParams(pitch=0.2, section="z=0"),
                    background=bg)


def test_reconstruct_rejects_radius_mismatch(small_data):
    bg, ms = small_data
    other = SceneConfig(MU, OMEGA, 2.0, 1.0)
    with pytest.raises(ReconstructionError):
        reconstruct(ms, other, DsmParams(pitch=0.2, section="z=0"), background=bg)


def test_reconstruct_many_consistent(small_scene, small_data):
    bg, ms = small_data
    params = DsmParams(pitch=0.1, section="z=0")
    a, b = reconstruct_many([ms, ms.scaled(1.0)], small_scene, params, background=bg)
    assert np.array_equal(a.J, b.J)


def test_local_maxima_and_area():
    lat = build_section(1.0, 0.1, "z=0")
    v = np.exp(-np.sum((lat.points - [0.4, 0.4, 0]) ** 2, axis=1) / 0.04) \
        + 0.8 * np.exp(-np.sum((lat.points + [0.4, 0.4, 0]) ** 2, axis=1) / 0.04)
    idx = local_maxima(lat, v, 0.3, 2)
    assert np.allclose(lat.points[idx], [[0.4, 0.4, 0], [-0.4, -0.4, 0]])
    # first bump: centre, 4 edge and 4 diagonal neighbours (e^-0.5 > 1/2);
    # second bump at 0.8: centre and edge neighbours only (0.8 e^-0.5 < 1/2)
    assert half_max_area(lat, v) == pytest.approx(14 * 0.01)


@pytest.fixture(scope="module")
def example1_scattered():
    scene = SceneConfig(MU, OMEGA, R, 1.0, (ConductorRegion.box((0.40, 0.41, 0), (0.2,) * 3),
                                            ConductorRegion.box((-0.40, -0.40, 0), (0.2,) * 3)))
    grid = build_fibonacci_grid(R)
    return scene, grid, np.stack([born_scattered_field(scene, c, grid) for c in scene.coils])


def _shell_maxima(hs, grid, radii, gamma):
    u = build_fibonacci_grid(1.0, 400).points
    out = []
    for r in radii:
        (_, J, _), = sweep([hs], grid, SamplingLattice(r * u, 0.0, R), DsmParams(gamma=gamma))
        out.append(J.max(axis=1))
    return np.array(out).T


@pytest.mark.slow
def test_boundary_decay_inside_sampling_domain(example1_scattered):
    # shells between the conductor support (|z| < 0.75) and the domain rim
    scene, grid, hs = example1_scattered
    m = _shell_maxima(hs, grid, (0.8, 0.9, 0.95, 0.99), 4)
    assert np.all(np.diff(m, axis=1) < 0)


@pytest.mark.slow
def test_boundary_decay_towards_sphere_gamma0(example1_scattered):
    scene, grid, hs = example1_scattered
    m = _shell_maxima(hs, grid, (0.6 * R, 0.75 * R, 0.9 * R, 0.99 * R), 0)
    assert np.all(np.diff(m, axis=1) < 0)
