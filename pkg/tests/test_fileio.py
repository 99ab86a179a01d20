from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mitdsm.dsm import IndexField
from mitdsm.fileio import (
    SceneError, atomic_write, format_scene, parse_scene, read_index, read_raster, read_scene,
    write_index, write_raster, write_scene, write_vtk,
)
from mitdsm.geometry import ConductorRegion, SceneConfig, build_lattice, build_section

BASE = """mu = 1.2566370614359173e-06
omega = 628318530.7179586
R = 1.5
omega_domain_radius = 1.0
"""

CUBE = """
[conductor]
type = box
center = (0.40, 0.41, 0.0)
edges = (0.2, 0.2, 0.2)
sigma = 1.0
"""


def test_parse_minimal_scene():
    s = parse_scene(BASE + CUBE)
    assert s.R == 1.5 and len(s.conductors) == 1
    assert s.conductors[0].boxes[0].center == (0.40, 0.41, 0.0)
    assert s.coil_set.count == 20 and len(s.coils) == 20


def test_missing_omega_named():
    with pytest.raises(SceneError, match="'omega'"):
        parse_scene(BASE.replace("omega = 628318530.7179586\n", "") + CUBE)


def test_errors_name_line_or_key():
    with pytest.raises(SceneError, match="line 5"):
        parse_scene(BASE + "nonsense\n")
    with pytest.raises(SceneError, match="duplicate"):
        parse_scene(BASE + "R = 2\n")
    with pytest.raises(SceneError, match="unknown section"):
        parse_scene(BASE + "[lens]\n")
    with pytest.raises(SceneError, match="'sigma'"):
        parse_scene(BASE + CUBE.replace("sigma = 1.0\n", ""))
    with pytest.raises(SceneError, match="unknown conductor type"):
        parse_scene(BASE + CUBE.replace("type = box", "type = sphere"))


def test_locale_style_numbers_rejected():
    with pytest.raises(SceneError, match="decimal"):
        parse_scene(BASE.replace("R = 1.5", "R = 1,5") + CUBE)
    with pytest.raises(SceneError):
        parse_scene(BASE.replace("R = 1.5", "R = nan") + CUBE)


def test_geometry_errors_surface_as_scene_errors():
    with pytest.raises(SceneError, match="sampling domain"):
        parse_scene(BASE + CUBE.replace("(0.40, 0.41, 0.0)", "(0.9, 0.0, 0.0)"))


def test_union_conductor():
    text = BASE + """
[conductor]
type = union
boxes = (-0.3, -0.05, 0.0, 0.2, 0.9, 0.2) (0.05, -0.4, 0.0, 0.5, 0.2, 0.2)
sigma = 2.0
"""
    s = parse_scene(text)
    assert len(s.conductors[0].boxes) == 2 and s.conductors[0].sigma == 2.0
    assert s.conductors[0].volume == pytest.approx(0.2 * 0.9 * 0.2 + 0.5 * 0.2 * 0.2)
    with pytest.raises(SceneError):
        parse_scene(text.replace("(0.05, -0.4, 0.0, 0.5, 0.2, 0.2)", "junk"))


def test_demo_scenes_round_trip(scene_dir, tmp_path):
    paths = sorted(scene_dir.glob("*.scene"))
    assert [p.stem for p in paths] == ["example1", "example2", "example3", "example4"]
    for p in paths:
        s = read_scene(p)
        write_scene(s, tmp_path / p.name)
        again = read_scene(tmp_path / p.name)
        assert format_scene(again) == format_scene(s)


coord = st.floats(-0.3, 0.3, allow_nan=False)
edge = st.floats(0.01, 0.2, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord, edge, edge, edge, st.floats(0, 10)), min_size=0, max_size=3),
       st.floats(1e-7, 1e-5), st.floats(1.0, 1e9))
def test_scene_round_trip_property(boxes, mu, omega):
    conductors = []
    for i, (x, y, z, a, b, c, sigma) in enumerate(boxes):
        # keep boxes disjoint by stacking them along z
        conductors.append(ConductorRegion.box((x, y, -0.6 + 0.4 * i), (a, b, c), sigma))
    scene = SceneConfig(mu, omega, 1.5, 1.0, tuple(conductors))
    back = parse_scene(format_scene(scene))
    assert (back.mu, back.omega, back.R) == (scene.mu, scene.omega, scene.R)
    for c1, c2 in zip(back.conductors, scene.conductors):
        assert c1.boxes == c2.boxes and c1.sigma == c2.sigma


def _field(lat, n=2):
    rng = np.random.default_rng(0)
    J = rng.uniform(size=(n, lat.size))
    I = J / J.max(axis=1, keepdims=True)
    fused = np.sqrt(np.mean(I**2, axis=0))
    fused /= fused.max()
    return IndexField(lat, J, I, fused, fused**4, np.zeros((n, lat.size, 3), complex),
                      np.zeros((n, lat.size), bool), 4, 4)


def test_index_file_round_trip(tmp_path):
    lat = build_lattice(1.0, 0.25)
    f = _field(lat)
    write_index(f, tmp_path / "index.dat")
    data = read_index(tmp_path / "index.dat")
    assert data["meta"]["gamma"] == "4" and data["meta"]["pitch"] == "0.25"
    assert data["meta"]["columns"].split() == ["zx", "zy", "zz", "I1", "I2", "Itilde", "Itilde_p"]
    t = data["table"]
    assert np.array_equal(t[:, :3], lat.points)
    assert np.array_equal(t[:, 3:5], f.I.T) and np.array_equal(t[:, 6], f.processed)


def test_raster_and_sidecar(tmp_path):
    lat = build_section(1.0, 0.1, "y=0.2")
    vals = np.arange(lat.size, dtype=float)
    write_raster(lat, vals, tmp_path / "r.csv", quantity="test")
    img = read_raster(tmp_path / "r.csv")
    assert img.shape == lat.shape
    assert np.array_equal(img[~np.isnan(img)], vals)
    side = json.loads((tmp_path / "r.csv.json").read_text())
    assert side["section"] == "y=0.2" and side["quantity"] == "test" and side["rows"][2] == img.shape[0]


def test_vtk_output(tmp_path):
    lat = build_lattice(1.0, 0.5)
    write_vtk(lat, np.ones(lat.size), tmp_path / "v.vtk")
    lines = (tmp_path / "v.vtk").read_text().splitlines()
    assert lines[4] == "DIMENSIONS 5 5 5" and len(lines) == 10 + 125
    assert sum(float(x) for x in lines[10:]) == lat.size
    with pytest.raises(ValueError):
        write_vtk(build_section(1.0, 0.5), np.ones(9), tmp_path / "s.vtk")


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write(target, "old\n")

    with pytest.raises(TypeError):
        atomic_write(target, 123)  # not text: the write fails midway
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
