"""Direct sampling reconstruction for magnetic induction tomography."""

from __future__ import annotations

__version__ = "0.1.0"

from .dsm import DsmParams, IndexField, reconstruct, reconstruct_many
from .fileio import parse_scene, read_scene, write_scene
from .forward import MeasurementSet, apply_noise, export_measurements, import_measurements, simulate
from .geometry import (ConductorRegion, SceneConfig, SphereGrid, build_fibonacci_grid,
                       build_gauss_grid, build_lattice, build_section)
from .kernels import gamma_kernel, grad_green, green, kernel_bank
from .products import duality_product, psf, seminorm

__all__ = [
    "ConductorRegion", "DsmParams", "IndexField", "MeasurementSet", "SceneConfig", "SphereGrid",
    "apply_noise", "build_fibonacci_grid", "build_gauss_grid", "build_lattice", "build_section",
    "duality_product", "export_measurements", "gamma_kernel", "grad_green", "green",
    "import_measurements", "kernel_bank", "parse_scene", "psf", "read_scene", "reconstruct",
    "reconstruct_many", "seminorm", "simulate", "write_scene",
]
