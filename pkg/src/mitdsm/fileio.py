"""
Text formats: scene descriptions, index fields and cross-section rasters.

Scene files are line oriented::

    # Example 1
    mu = 1.2566370614359173e-06
    omega = 628318530.7179586
    R = 1.5
    omega_domain_radius = 1.0

    [coil_set]
    orbit_radius = 1.5
    r1 = 0.4
    r2 = 0.6
    h = 0.2
    count = 20

    [conductor]
    type = box
    center = (0.40, 0.41, 0.0)
    edges = (0.2, 0.2, 0.2)
    sigma = 1.0

    [conductor]
    type = union
    boxes = (x, y, z, a, b, c) (x, y, z, a, b, c)
    sigma = 1.0

Numbers always use a decimal point; parsing never consults the locale.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import Box, ConductorRegion, CoilSetSpec, GeometryError, SamplingLattice, SceneConfig

TOP_KEYS = ("mu", "omega", "R", "omega_domain_radius")
COIL_KEYS = ("orbit_radius", "r1", "r2", "h", "count")
INDEX_FORMAT = "mitdsm-index-v1"

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class SceneError(ValueError):
    pass


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Scene files


def _number(text: str, where: str) -> float:
    t = text.strip()
    if not _NUMBER.match(t):
        raise SceneError(f"{where}: {t!r} is not a plain decimal number")
    return float(t)


def _vector(text: str, n: int, where: str) -> tuple:
    t = text.strip()
    if not (t.startswith("(") and t.endswith(")")):
        raise SceneError(f"{where}: expected a tuple like (x, y, z)")
    parts = t[1:-1].split(",")
    if len(parts) != n:
        raise SceneError(f"{where}: expected {n} components, got {len(parts)}")
    return tuple(_number(p, where) for p in parts)


def _sections(text: str):
    """Split into ``[(name, {key: (value, line)}, line)]``; the top level is named ''."""
    out = [("", {}, 0)]
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SceneError(f"line {no}: malformed section header")
            out.append((line[1:-1].strip().lower(), {}, no))
            continue
        if "=" not in line:
            raise SceneError(f"line {no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        table = out[-1][1]
        if key in table:
            raise SceneError(f"line {no}: duplicate key {key!r}")
        table[key] = (value, no)
    return out


def _take(table: dict, key: str, section: str):
    if key not in table:
        raise SceneError(f"missing key {key!r} in {section}")
    return table[key]


def _conductor(table: dict, line: int) -> ConductorRegion:
    where = f"[conductor] at line {line}"
    kind, _ = _take(table, "type", where)
    sigma = _number(_take(table, "sigma", where)[0], where)
    if kind == "box":
        c = _vector(_take(table, "center", where)[0], 3, where)
        e = _vector(_take(table, "edges", where)[0], 3, where)
        boxes = [Box(c, e)]
    elif kind == "union":
        raw = _take(table, "boxes", where)[0]
        groups = re.findall(r"\([^()]*\)", raw)
        if not groups or re.sub(r"\([^()]*\)", "", raw).strip():
            raise SceneError(f"{where}: boxes must be a list of (x, y, z, a, b, c) tuples")
        boxes = []
        for g in groups:
            v = _vector(g, 6, where)
            boxes.append(Box(v[:3], v[3:]))
    else:
        raise SceneError(f"{where}: unknown conductor type {kind!r}")
    return ConductorRegion(tuple(boxes), sigma)


def parse_scene(text: str) -> SceneConfig:
    """Build a SceneConfig from scene-file text; errors name the offending key."""
    sections = _sections(text)
    top = sections[0][1]
    vals = {k: _number(_take(top, k, "the top level")[0], k) for k in TOP_KEYS}
    coil_set = CoilSetSpec()
    conductors = []
    seen_coils = False
    for name, table, line in sections[1:]:
        if name == "coil_set":
            if seen_coils:
                raise SceneError(f"line {line}: second [coil_set] section")
            seen_coils = True
            c = {k: _number(_take(table, k, "[coil_set]")[0], k) for k in COIL_KEYS}
            if c["count"] != int(c["count"]):
                raise SceneError("count must be an integer")
            c["count"] = int(c["count"])
            coil_set = CoilSetSpec(**c)
        elif name == "conductor":
            conductors.append(_conductor(table, line))
        else:
            raise SceneError(f"line {line}: unknown section [{name}]")
    try:
        return SceneConfig(vals["mu"], vals["omega"], vals["R"], vals["omega_domain_radius"],
                           tuple(conductors), coil_set)
    except GeometryError as exc:
        raise SceneError(str(exc)) from None


def read_scene(path) -> SceneConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError(f"cannot read scene file: {exc}") from None
    return parse_scene(text)


def _short(x: float) -> str:
    # shortest text that reads back to the same double
    return repr(float(x))


def _tuple(v, conv=_short) -> str:
    return "(" + ", ".join(conv(x) for x in v) + ")"


def format_scene(scene: SceneConfig) -> str:
    lines = [f"{k} = {_short(getattr(scene, k))}" for k in TOP_KEYS]
    cs = scene.coil_set
    lines += ["", "[coil_set]"] + [f"{k} = {_short(getattr(cs, k)) if k != 'count' else cs.count}"
                                  for k in COIL_KEYS]
    for c in scene.conductors:
        lines += ["", "[conductor]"]
        if len(c.boxes) == 1:
            b = c.boxes[0]
            lines += ["type = box", f"center = {_tuple(b.center)}", f"edges = {_tuple(b.edges)}"]
        else:
            lines += ["type = union",
                      "boxes = " + " ".join(_tuple(tuple(b.center) + tuple(b.edges)) for b in c.boxes)]
        lines.append(f"sigma = {_short(c.sigma)}")
    return "\n".join(lines) + "\n"


def write_scene(scene: SceneConfig, path) -> None:
    atomic_write(path, format_scene(scene))


def scene_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Index fields and rasters


def format_index(field) -> str:
    """Text table of an IndexField, one lattice point per row."""
    lat = field.lattice
    lo = lat.points.min(axis=0) if lat.size else np.zeros(3)
    hi = lat.points.max(axis=0) if lat.size else np.zeros(3)
    n = field.I.shape[0]
    head = [
        f"# format={INDEX_FORMAT}",
        f"# pitch={fmt(lat.spacing)}",
        f"# bounds={_tuple(lo, fmt)} {_tuple(hi, fmt)}",
        f"# radius={fmt(lat.radius)}",
        f"# section={lat.section or 'none'}",
        f"# gamma={field.gamma}",
        f"# power={field.power}",
        "# columns=zx zy zz " + " ".join(f"I{k + 1}" for k in range(n)) + " Itilde Itilde_p",
    ]
    cols = np.column_stack([lat.points, field.I.T, field.fused, field.processed])
    body = [" ".join(fmt(x) for x in row) for row in cols]
    return "\n".join(head + body) + "\n"


def write_index(field, path) -> None:
    atomic_write(path, format_index(field))


def read_index(path) -> dict:
    """Header dictionary plus the numeric table of an index file."""
    meta, rows = {}, []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k] = v
        elif line.strip():
            rows.append([float(x) for x in line.split()])
    if meta.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path}: not an index file")
    return {"meta": meta, "table": np.array(rows)}


def write_raster(lattice: SamplingLattice, values, path, **meta) -> None:
    """CSV matrix of ``values`` over a cross-section plus a JSON sidecar.

    Rows follow the first in-plane axis, columns the second; cells outside
    the sampling ball are written as ``nan``.
    """
    grid = lattice.raster(np.asarray(values, dtype=float))
    text = "\n".join(",".join("nan" if math.isnan(x) else fmt(x) for x in row) for row in grid)
    path = Path(path)
    atomic_write(path, text + "\n")
    a, b = lattice.axes
    side = {"section": lattice.section, "pitch": lattice.spacing, "radius": lattice.radius,
            "rows": [float(a[0]), float(a[-1]), len(a)], "cols": [float(b[0]), float(b[-1]), len(b)]}
    side.update(meta)
    atomic_write(path.with_suffix(path.suffix + ".json"), json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_raster(path) -> np.ndarray:
    rows = Path(path).read_text(encoding="ascii").strip().splitlines()
    return np.array([[float(x) for x in r.split(",")] for r in rows])


def write_vtk(lattice: SamplingLattice, values, path, name: str = "index") -> None:
    """Legacy structured-points file of a full 3-D lattice (zero outside the ball)."""
    if lattice.section is not None:
        raise ValueError("VTK output needs a full 3-D lattice")
    h = lattice.spacing
    idx = np.rint(lattice.points / h).astype(int)
    n = int(idx.max()) if lattice.size else 0
    vol = np.zeros((2 * n + 1,) * 3)
    vol[idx[:, 0] + n, idx[:, 1] + n, idx[:, 2] + n] = values
    head = ["# vtk DataFile Version 3.0", name, "ASCII", "DATASET STRUCTURED_POINTS",
            f"DIMENSIONS {2 * n + 1} {2 * n + 1} {2 * n + 1}",
            f"ORIGIN {fmt(-n * h)} {fmt(-n * h)} {fmt(-n * h)}",
            f"SPACING {fmt(h)} {fmt(h)} {fmt(h)}",
            f"POINT_DATA {vol.size}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    # VTK orders x fastest
    body = [fmt(x) for x in vol.transpose(2, 1, 0).ravel()]
    atomic_write(path, "\n".join(head + body) + "\n")


def write_json(obj, path) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> Optional[dict]:
    p = Path(path)
    return json.loads(p.read_text()) if p.exists() else None
