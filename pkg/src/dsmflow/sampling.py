"""Seeded random test functions for ball sampling and direction probes.

Directions are low-order trigonometric polynomials: high frequencies would
make derivative-based norm ratios grid-dependent, so the default caps the
frequency at 8, which keeps discretization error below a percent at n = 201.
"""

from __future__ import annotations

import numpy as np

from .scale import GridFunction, sobolev_norm

MAX_FREQUENCY = 8


def trig_polynomial(rng: np.random.Generator, n: int,
                    max_frequency: int = MAX_FREQUENCY) -> GridFunction:
    """Random trigonometric polynomial with coefficients uniform in [-1, 1]."""
    x = np.linspace(0.0, 1.0, n)
    vals = np.zeros(n)
    for k in range(max_frequency + 1):
        vals += rng.uniform(-1.0, 1.0) * np.cos(k * np.pi * x)
    for k in range(1, max_frequency + 1):
        vals += rng.uniform(-1.0, 1.0) * np.sin(k * np.pi * x)
    return GridFunction(vals)


def sample_in_ball(rng: np.random.Generator, center: GridFunction, radius: float,
                   a: int, max_frequency: int = MAX_FREQUENCY) -> GridFunction:
    """Draw a point of the ball of the given H_a radius around `center`.

    The random direction is rescaled to a uniformly drawn fraction of the
    radius, so draws fill the ball rather than its boundary.
    """
    d = trig_polynomial(rng, center.n, max_frequency)
    xi = rng.uniform(0.0, 1.0)
    return center + d * (radius * xi / sobolev_norm(d, a))


def unit_direction(rng: np.random.Generator, n: int, a: int,
                   max_frequency: int = MAX_FREQUENCY) -> GridFunction:
    """Random direction with H_a norm one."""
    d = trig_polynomial(rng, n, max_frequency)
    return d * (1.0 / sobolev_norm(d, a))
