"""
How the normalizing seminorm and the psf behave as the probe nears the sphere.

Part one tabulates ``D0^{-1/2}`` and ``D2^{-1/2}`` as functions of ``|z|``,
each scaled to 1 at the center.  These curves set the upper envelope of the
origin psf for gamma = 0 and gamma = 2, and they vanish as ``|z| -> R``.

Part two measures ``max_beta |psf(y, alpha; z, beta)|`` on probes moving out
along the direction of ``y``.  The numerator is taken in adjoint form on a
grid graded toward the probe, so the values stay accurate up to 0.99 R.

Run::

    python demos/decay_curves.py
"""

from __future__ import annotations

import argparse
import logging

import numpy as np

from mitdsm.closed_forms import normalized_decay_curves
from mitdsm.kernels import random_unit_vectors
from mitdsm.validate import DECAY_FRACTIONS, psf_decay_maxima

log = logging.getLogger("decay_curves")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    p.add_argument("--R", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    z, c0, c2 = normalized_decay_curves(args.R)
    log.info("  |z|/R   D0^-1/2   D2^-1/2")
    for i in range(0, len(z), 10):
        log.info("  %5.2f   %7.4f   %7.4f", z[i] / args.R, c0[i], c2[i])

    rng = np.random.default_rng(args.seed)
    y = np.array([0.3, 0.3, 0.0])
    alpha = random_unit_vectors(1, rng)[0]
    betas = random_unit_vectors(50, rng)
    log.info("")
    log.info("max over 50 probe polarizations, probes at |z|/R = %s",
             ", ".join(f"{f:.2f}" for f in DECAY_FRACTIONS))
    for gamma in (0, 2, 4):
        m = psf_decay_maxima(args.R, y, alpha, gamma, betas)
        log.info("  gamma=%d  %s", gamma, "  ".join(f"{x:.3e}" for x in m))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
