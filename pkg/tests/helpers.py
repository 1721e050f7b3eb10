import numpy as np

from condensity.grid import DensityGrid, normalize


def mixture(grid, comps):
    """Gaussian mixture ``[(weight, mean, std), ...]`` normalized on ``grid``."""
    x = grid.points
    f = sum(w * np.exp(-0.5 * ((x - m) / s) ** 2) / s for w, m, s in comps)
    return normalize(DensityGrid(grid, f))
