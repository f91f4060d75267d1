"""Seeded batteries of smooth test fields.

Fields are defined in continuum form (random polynomial times a Gaussian
envelope) so the same seed reproduces the same field on every grid; that is
what makes fitted constants comparable across resolutions.
"""

from __future__ import annotations

import numpy as np

from .grid import Field, VelocityGrid, project_pi0


def smooth_field(grid: VelocityGrid, rng: np.random.Generator,
                 degree: int = 3, decay: float = 0.375,
                 normalize: bool = True) -> Field:
    """Random polynomial of fixed degree times exp(-decay |v|^2)."""
    coeffs = rng.standard_normal((degree + 1, degree + 1, degree + 1))
    mask = np.add.outer(np.add.outer(np.arange(degree + 1), np.arange(degree + 1)),
                        np.arange(degree + 1)) <= degree
    coeffs = coeffs * mask
    poly = np.polynomial.polynomial.polyval3d(grid.vx, grid.vy, grid.vz, coeffs)
    values = poly * np.exp(-decay * grid.r2)
    f = Field(grid, values, check=False)
    if normalize:
        n = f.l2()
        if n > 0:
            f = f * (1.0 / n)
    return f


def field_battery(grid: VelocityGrid, count: int, seed: int,
                  degree: int = 3, decay: float = 0.375,
                  project: bool = False) -> list[Field]:
    """Reproducible battery; with project=True the kernel component is removed."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        f = smooth_field(grid, rng, degree=degree, decay=decay)
        if project:
            f = project_pi0(f)[1]
            n = f.l2()
            if n > 0:
                f = f * (1.0 / n)
        out.append(f)
    return out


def oscillatory_field(grid: VelocityGrid, rng: np.random.Generator | None = None,
                      decay: float = 0.375) -> Field:
    """Checkerboard times Maxwellian-type envelope: high-frequency probe data."""
    i = np.arange(grid.N)
    sign = (-1.0) ** (i[:, None, None] + i[None, :, None] + i[None, None, :])
    values = sign * np.exp(-decay * grid.r2)
    f = Field(grid, values, check=False)
    return f * (1.0 / f.l2())
