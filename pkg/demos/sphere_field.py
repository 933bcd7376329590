"""Interior field of a voxelized ball against the uniform-field ratio 3/(eps_p + 2).

    python demos/sphere_field.py 16 24
"""
import sys

import numpy as np

from photothermal.dispersion import Contrast, MediumParams
from photothermal.domain import Ball, Particle, voxelize
from photothermal.maxwell import IncidentWave, ScatteringProblem, discretization, solve


def main(resolutions):
    wave = IncidentWave.from_medium(1e-6, MediumParams())
    print("n  eps_p        max_err  core_err")
    for n in resolutions:
        disc = discretization(voxelize(Ball(), n))
        r = np.linalg.norm(disc.domain.centroids, axis=1)
        for eps in (3.0, 5.0, -3 + 0.5j):
            prob = ScatteringProblem(Particle(1e-3, domain=disc.domain), wave, Contrast(eps - 1))
            cells = solve(prob, disc=disc).cell_field()
            target = 3 / (eps + 2)
            err = np.linalg.norm(cells - [target, 0, 0], axis=1) / abs(target)
            print(f"{n:<3d}{str(eps):<13s}{err.max():8.4f}  {err[r < 0.5].max():8.4f}")


if __name__ == "__main__":
    main([int(a) for a in sys.argv[1:]] or [12, 16])
