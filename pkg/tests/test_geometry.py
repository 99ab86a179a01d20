from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mitdsm.closed_forms import component_integrals, inverse_square_integral
from mitdsm.geometry import (
    GOLDEN, Box, ConductorRegion, GeometryError, SceneConfig, build_fibonacci_grid,
    build_gauss_grid, build_graded_grid, build_lattice, build_section, conductor_quadrature,
    dodecahedron_vertices, orthonormal_frame, parse_section, place_dodecahedron_coils,
)
from mitdsm.kernels import grad_green

MU, OMEGA = 4e-7 * np.pi, 2 * np.pi * 1e8


def test_fibonacci_weight_sum_and_radius(fib):
    assert fib.size == 9812
    assert fib.weights.sum() == pytest.approx(9 * np.pi, rel=1e-12)
    fib.validate()


def test_fibonacci_unit_sphere_small():
    g = build_fibonacci_grid(1.0, 100)
    assert np.allclose(np.linalg.norm(g.points, axis=1), 1.0, rtol=0, atol=1e-12)


def test_fibonacci_rejects_too_few():
    with pytest.raises(GeometryError):
        build_fibonacci_grid(1.0, 99)


def test_fibonacci_inverse_square_integral(fib):
    z = np.array([0.5, 0.0, 0.0])
    vals = 1.0 / np.sum((fib.points - z) ** 2, axis=1)
    exact = inverse_square_integral(1.5, 0.5)
    assert abs(fib.integrate(vals) / exact - 1) <= 1e-3


def test_inverse_square_closed_form_against_1d_quadrature():
    # ∫ |x - z|^-2 = 2πR² ∫_{-1}^{1} du / (R² + |z|² - 2R|z|u)
    R, z = 1.5, 0.5
    u, w = np.polynomial.legendre.leggauss(200)
    ref = 2 * np.pi * R**2 * np.sum(w / (R**2 + z**2 - 2 * R * z * u))
    assert inverse_square_integral(R, z) == pytest.approx(ref, rel=1e-13)


def test_gauss_integrates_constant():
    g = build_gauss_grid(1.0, 16)
    assert g.weights.sum() == pytest.approx(4 * np.pi, abs=1e-13)


def test_gauss_component_integral_at_half(gauss):
    g1 = grad_green(gauss.points, np.array([0.5, 0.0, 0.0]))[:, 0]
    assert gauss.integrate(g1**2) == pytest.approx(component_integrals(1.5, 0.5)[0], rel=1e-10)


def test_gauss_convergence_monotone():
    z = np.array([0.0, 0.4, 0.9])
    exact = inverse_square_integral(1.5, np.linalg.norm(z))
    errs = []
    for L in (8, 16, 32, 64):
        g = build_gauss_grid(1.5, L)
        errs.append(abs(g.integrate(1.0 / np.sum((g.points - z) ** 2, axis=1)) - exact))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_gauss_rejects_small_band():
    with pytest.raises(GeometryError):
        build_gauss_grid(1.0, 3)


def test_graded_grid_area_and_radius():
    g = build_graded_grid(1.5, [1.0, 2.0, -0.5])
    g.validate()


def test_graded_grid_resolves_peaked_integrand():
    d = np.array([0.0, 0.6, 0.8])
    z = 0.99 * 1.5 * d
    g = build_graded_grid(1.5, d)
    vals = 1.0 / np.sum((g.points - z) ** 2, axis=1)
    assert g.integrate(vals) == pytest.approx(inverse_square_integral(1.5, 0.99 * 1.5), rel=1e-10)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_frame_right_handed(v):
    F = orthonormal_frame(v)
    assert np.allclose(F @ F.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(F) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(F[0], np.asarray(v) / np.linalg.norm(v))


def test_frame_completion_rule():
    # x' = e3: least-aligned basis vectors e1, e2 tie, the lower index wins
    F = orthonormal_frame([0, 0, 1])
    assert np.allclose(F[1], np.cross([1, 0, 0], [0, 0, 1]))


def test_dodecahedron_coils_count_and_radius():
    coils = place_dodecahedron_coils(1.5, 0.4, 0.6, 0.2)
    assert len(coils) == 20
    assert np.allclose([np.linalg.norm(c.center) for c in coils], 1.5)
    unit = place_dodecahedron_coils(1.0, 0.4, 0.6, 0.2)
    assert np.allclose([np.linalg.norm(c.center) for c in unit], 1.0)


def _reference_dodecahedron():
    p, q = GOLDEN, 1.0 / GOLDEN
    pts = [v for v in itertools.product((-1, 1), repeat=3)]
    for a, b in itertools.product((-1, 1), repeat=2):
        pts += [(0, a * q, b * p), (a * q, b * p, 0), (a * p, 0, b * q)]
    pts = np.array(pts, dtype=float)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def test_dodecahedron_min_angle_brute_force():
    ref = _reference_dodecahedron()
    got = np.array([c.center for c in place_dodecahedron_coils(1.0, 0.4, 0.6, 0.2)])
    assert len(got) == 20

    def min_angle(P):
        return min(math.acos(np.clip(P[i] @ P[j], -1, 1)) for i, j in itertools.combinations(range(20), 2))

    assert min_angle(got) == pytest.approx(min_angle(ref), abs=1e-12)
    # same vertex set
    d = np.linalg.norm(got[:, None] - ref[None], axis=2)
    assert np.all(d.min(axis=1) < 1e-12)


def test_dodecahedron_symmetry_invariance():
    V = dodecahedron_vertices()
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    # cyclic coordinate permutation is a rotational symmetry of this embedding
    P = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
    W = V @ P.T
    d = np.linalg.norm(W[:, None] - V[None], axis=2)
    assert np.all(d.min(axis=1) < 1e-12)


def test_coil_contains_and_frame():
    c = place_dodecahedron_coils(1.5, 0.4, 0.6, 0.2)[0]
    y = c.center + c.to_global(np.array([0.0, 0.5, 0.0]))
    assert c.contains(y)
    assert not c.contains(c.center + c.to_global(np.array([0.0, 0.3, 0.0])))
    assert not c.contains(c.center + c.to_global(np.array([0.15, 0.5, 0.0])))
    assert np.allclose(c.to_local(y), [0.0, 0.5, 0.0])


def test_coil_quadrature_volume():
    c = place_dodecahedron_coils(1.5, 0.4, 0.6, 0.2)[3]
    _, w = c.quadrature()
    assert w.sum() == pytest.approx(np.pi * (0.6**2 - 0.4**2) * 0.2, rel=1e-12)


def test_conductor_quadrature_cube():
    region = ConductorRegion.box((0, 0, 0), (0.2, 0.2, 0.2))
    pts, w = conductor_quadrature(region, 0.05)
    assert len(pts) == 64
    assert w.sum() == pytest.approx(0.008, rel=1e-12)


def test_conductor_quadrature_union():
    region = ConductorRegion((Box((-0.3, -0.05, 0.0), (0.2, 0.9, 0.2)),
                              Box((0.05, -0.4, 0.0), (0.5, 0.2, 0.2))), 1.0)
    _, w = conductor_quadrature(region, 0.025)
    assert w.sum() == pytest.approx(0.2 * 0.9 * 0.2 + 0.5 * 0.2 * 0.2, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.tuples(st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(0.01, 0.3)),
       st.floats(0.005, 0.2))
def test_conductor_quadrature_exact_for_constants(edges, h):
    region = ConductorRegion.box((0.1, -0.2, 0.05), edges, 2.0)
    pts, w = conductor_quadrature(region, h)
    assert w.sum() == pytest.approx(np.prod(edges), rel=1e-12)
    assert np.all(region.contains(pts))


def test_overlapping_boxes_rejected():
    with pytest.raises(GeometryError):
        ConductorRegion((Box((0, 0, 0), (0.2, 0.2, 0.2)), Box((0.1, 0, 0), (0.2, 0.2, 0.2))), 1.0)


def test_zero_edge_rejected():
    with pytest.raises(GeometryError):
        Box((0, 0, 0), (0.2, 0.0, 0.2))


def test_scene_invariants():
    ok = SceneConfig(MU, OMEGA, 1.5, 1.0, (ConductorRegion.box((0.4, 0.41, 0), (0.2,) * 3),))
    assert ok.separation > 0
    with pytest.raises(GeometryError):
        SceneConfig(MU, OMEGA, 1.5, 1.0, (ConductorRegion.box((0.9, 0.0, 0), (0.2,) * 3),))
    with pytest.raises(GeometryError):
        SceneConfig(MU, OMEGA, 1.0, 1.5)
    with pytest.raises(GeometryError):
        SceneConfig(-MU, OMEGA, 1.5, 1.0)


def test_lattice_clipped_to_ball():
    lat = build_lattice(1.0, 0.05)
    assert np.linalg.norm(lat.points, axis=1).max() <= 1.0 + 1e-12
    assert np.any(np.all(lat.points == 0, axis=1))
    assert lat.size == 33401


def test_section_raster_round_trip():
    lat = build_section(1.0, 0.1, "y=0.3")
    assert np.all(lat.points[:, 1] == 0.3)
    img = lat.raster(np.arange(lat.size, dtype=float))
    assert np.count_nonzero(~np.isnan(img)) == lat.size


def test_parse_section():
    assert parse_section("z=0") == (2, 0.0)
    assert parse_section("X = -0.3") == (0, -0.3)
    with pytest.raises(GeometryError):
        parse_section("w=1")
