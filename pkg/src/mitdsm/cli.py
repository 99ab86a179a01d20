"""
Command line entry point: ``mitdsm forward | reconstruct | validate | psf``.

Exit status is 0 on success, 2 when validation fails and 3 for bad input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .dsm import DsmParams, ReconstructionError, reconstruct
from .fileio import SceneError, read_scene, scene_hash, write_index, write_json, write_raster, write_vtk
from .forward import MeasurementError, apply_noise, background_on_grid, export_measurements, import_measurements, simulate
from .geometry import DEFAULT_RECEIVERS, GeometryError, build_fibonacci_grid
from .kernels import KernelError, bank_key, cache_dir, kernel_bank, load_bank, save_bank
from .validate import psf_section, run_validation

log = logging.getLogger("mitdsm")

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT = 0, 2, 3
INPUT_ERRORS = (SceneError, MeasurementError, GeometryError, KernelError, ReconstructionError,
                FileNotFoundError, NotADirectoryError, PermissionError)
# largest kernel bank (bytes) kept in memory and on disk; bigger lattices stream
BANK_BUDGET = 1 << 30


@contextmanager
def stage(name: str, timings: dict):
    t = time.perf_counter()
    yield
    timings[name] = round(time.perf_counter() - t, 3)
    log.info("%s: %.2f s", name, timings[name])


def _vector(text: str, complex_ok: bool = False):
    parts = [p.strip() for p in text.strip("()[] ").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    conv = complex if complex_ok else float
    try:
        return np.array([conv(p.replace(" ", "")) for p in parts])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad vector {text!r}") from None


# ---------------------------------------------------------------------------


def cmd_forward(args) -> int:
    timings: dict = {}
    scene = read_scene(args.scene)
    with stage("grid", timings):
        grid = build_fibonacci_grid(scene.R, args.grid_size)
    with stage("forward", timings):
        ms = simulate(scene, grid)
    if args.epsilon:
        with stage("noise", timings):
            ms = apply_noise(ms, args.epsilon, args.seed)
    else:
        ms = apply_noise(ms, 0.0, args.seed)
    with stage("write", timings):
        files = export_measurements(ms, args.out)
    write_json({"command": "forward", "version": __version__, "scene": str(args.scene),
                "scene_sha256": scene_hash(args.scene), "epsilon": args.epsilon, "seed": args.seed,
                "receivers": grid.size, "coils": len(files)},
               Path(args.out) / "manifest.json")
    log.info("wrote %d coil files to %s (timings %s)", len(files), args.out, timings)
    return EXIT_OK


def _bank_for(grid, lattice, params):
    """Cached kernel bank when the cache is enabled and the bank fits the budget."""
    root = cache_dir()
    size = lattice.size * grid.size * 3 * 8 * 2
    if root is None or size > BANK_BUDGET:
        if root is not None:
            log.info("lattice too large for the kernel cache (%.1f GB); streaming", size / 2**30)
        return None
    key = bank_key(grid.digest(), lattice.digest(), params.gamma, params.L_max, params.method)
    path = root / f"bank-{key[:24]}.npz"
    if path.exists():
        log.info("kernel bank cache hit %s", path.name)
        return load_bank(path, grid, lattice, params.gamma, params.L_max, params.method)
    bank = kernel_bank(grid, lattice, params.gamma, params.L_max, params.method,
                       params.threads, params.batch)
    root.mkdir(parents=True, exist_ok=True)
    save_bank(bank, path)
    return bank


def cmd_reconstruct(args) -> int:
    timings: dict = {}
    scene = read_scene(args.scene)
    params = DsmParams(gamma=args.gamma, postprocess_power=args.power, pitch=args.pitch,
                       section=args.section, threads=args.threads)
    with stage("read measurements", timings):
        ms = import_measurements(args.meas, scene)
    lattice = params.lattice(scene.omega_domain_radius)
    with stage("background", timings):
        bg = background_on_grid(scene, ms.grid)
    with stage("kernel bank", timings):
        bank = _bank_for(ms.grid, lattice, params)
    with stage("indicator", timings):
        field = reconstruct(ms, scene, params, background=bg, lattice=lattice, bank=bank)
    out = Path(args.out)
    with stage("write", timings):
        write_index(field, out / "index.dat")
        if lattice.section:
            meta = {"gamma": field.gamma, "power": field.power}
            write_raster(lattice, field.processed, out / "index_p.csv", quantity="Itilde^p", **meta)
            write_raster(lattice, field.fused, out / "index.csv", quantity="Itilde", **meta)
        elif args.vtk:
            write_vtk(lattice, field.processed, out / "index_p.vtk", "Itilde_p")
    write_json({"command": "reconstruct", "version": __version__, "scene": str(args.scene),
                "scene_sha256": scene_hash(args.scene), "measurements": str(args.meas),
                "epsilon": ms.epsilon, "seed": ms.seed, "gamma": args.gamma, "power": args.power,
                "pitch": args.pitch, "section": args.section, "lattice_points": lattice.size,
                "degenerate_points": int(field.degenerate.sum()), "timings": timings},
               out / "manifest.json")
    return EXIT_OK


def cmd_validate(args) -> int:
    rep = run_validation(quick=args.quick)
    for c in rep.checks:
        flag = "PASS" if c.passed else ("FAIL" if c.gating else "info")
        print(f"{flag:4s}  {c.name:48s} {c.measured:11.3e}  tol {c.tolerance:.1e}")
    print(f"{'OK' if rep.ok else 'FAILED'}: {sum(c.passed for c in rep.checks)}/{len(rep.checks)} "
          f"checks passed in {rep.seconds:.1f} s")
    if args.out:
        write_json(rep.to_dict(), args.out)
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_psf(args) -> int:
    R = args.R
    if np.linalg.norm(args.y) >= R:
        raise KernelError("y must lie inside the measurement sphere")
    grid = build_fibonacci_grid(R, args.grid_size)
    alpha = args.alpha / np.linalg.norm(args.alpha)
    lat, vals = psf_section(grid, args.y, alpha, alpha, args.gamma, args.section, args.pitch,
                            args.radius)
    write_raster(lat, vals, args.out, quantity="|psf|", gamma=args.gamma,
                 y=args.y.tolist(), alpha=[str(a) for a in alpha])
    log.info("psf peak %.6g at %s", vals.max(), lat.points[np.argmax(vals)].tolist())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mitdsm", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forward", help="simulate Born measurements for a scene")
    f.add_argument("--scene", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path, help="output directory")
    f.add_argument("--epsilon", type=float, default=0.0, help="relative noise level")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--grid-size", type=int, default=DEFAULT_RECEIVERS, help="receivers on the sphere")
    f.set_defaults(func=cmd_forward)

    r = sub.add_parser("reconstruct", help="direct sampling index field from measurements")
    r.add_argument("--scene", required=True, type=Path)
    r.add_argument("--meas", required=True, type=Path, help="directory of coil files")
    r.add_argument("--out", required=True, type=Path, help="output directory")
    r.add_argument("--gamma", type=int, default=4)
    r.add_argument("--power", type=int, default=4)
    r.add_argument("--pitch", type=float, default=0.05)
    r.add_argument("--section", default=None, help="cross-section such as z=0")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--vtk", action="store_true", help="also write a legacy VTK volume")
    r.set_defaults(func=cmd_reconstruct)

    v = sub.add_parser("validate", help="run the oracle battery")
    v.add_argument("--out", type=Path, help="JSON report path")
    v.add_argument("--quick", action="store_true", help="skip the slower scans")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("psf", help="point spread function on a cross-section")
    s.add_argument("--y", required=True, type=_vector)
    s.add_argument("--alpha", type=lambda t: _vector(t, True), default=np.array([1, 0, 0], complex))
    s.add_argument("--gamma", type=int, default=0)
    s.add_argument("--section", default="z=0")
    s.add_argument("--pitch", type=float, default=0.05)
    s.add_argument("--radius", type=float, default=1.0, help="sampling ball radius")
    s.add_argument("--R", type=float, default=1.5, help="measurement sphere radius")
    s.add_argument("--grid-size", type=int, default=DEFAULT_RECEIVERS)
    s.add_argument("--out", required=True, type=Path, help="CSV raster path")
    s.set_defaults(func=cmd_psf)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
