"""Densities stored as node values on a fixed one-dimensional state grid.

A :class:`StateGrid` carries its own quadrature. Weights are assembled cell by
cell (each cell contributes a left and a right node weight), which lets the
call-price code split a single cell at the strike while every other integral
keeps using the plain weighted sum.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ArbitrageError,
    ArgumentError,
    ClippedMassWarning,
    DegenerateDensityError,
)

NORMALIZE_SKIP = 1e-13
CLIPPED_MASS_FLAG = 1e-4


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateGrid:
    """Ordered state points with quadrature weights.

    ``cell_weights[i] = (left, right)`` are the weights cell ``[x_i, x_{i+1}]``
    puts on its two end nodes; ``weights`` is their node-wise sum. The default
    ``"trapezoid"`` rule uses half the cell width on each side. ``"mapped"``
    grids come out of :func:`condensity.bridge.transform_density` and carry the
    trapezoid rule of the pre-image variable.
    """

    points: np.ndarray
    weights: np.ndarray = None
    rule: str = "trapezoid"
    cell_weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        x = _frozen(self.points)
        if x.ndim != 1 or x.size < 3:
            raise ArgumentError("a state grid needs at least 3 points")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise ArgumentError("grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", x)

        if self.cell_weights is None:
            if self.rule != "trapezoid":
                raise ArgumentError(f"rule {self.rule!r} needs explicit cell weights")
            half = np.diff(x) / 2.0
            cells = np.column_stack([half, half])
        else:
            cells = np.asarray(self.cell_weights, dtype=float)
            if cells.shape != (x.size - 1, 2):
                raise ArgumentError("cell_weights must have shape (n-1, 2)")
        if np.any(cells <= 0) or not np.all(np.isfinite(cells)):
            raise ArgumentError("quadrature weights must be positive")
        object.__setattr__(self, "cell_weights", _frozen(cells))

        assembled = np.zeros(x.size)
        assembled[:-1] += cells[:, 0]
        assembled[1:] += cells[:, 1]
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != x.shape or not np.allclose(w, assembled, rtol=1e-12, atol=0):
                raise ArgumentError(f"weights inconsistent with the {self.rule} rule")
        object.__setattr__(self, "weights", _frozen(assembled))

    def __len__(self) -> int:
        return self.points.size

    @property
    def xmin(self) -> float:
        return float(self.points[0])

    @property
    def xmax(self) -> float:
        return float(self.points[-1])


def make_grid(xmin: float, xmax: float, n: int) -> StateGrid:
    """Uniform grid on ``[xmin, xmax]`` with ``n`` nodes and trapezoidal weights."""
    if not (np.isfinite(xmin) and np.isfinite(xmax)) or not xmin < xmax:
        raise ArgumentError(f"need finite xmin < xmax, got [{xmin}, {xmax}]")
    if int(n) != n or n < 3:
        raise ArgumentError(f"need n >= 3 grid points, got {n}")
    return StateGrid(np.linspace(xmin, xmax, int(n)))


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Nonnegative density values ``f(x_i)`` on the nodes of ``grid``."""

    grid: StateGrid
    values: np.ndarray

    def __post_init__(self):
        f = _frozen(self.values)
        if f.shape != self.grid.points.shape:
            raise ArgumentError("density values must match the grid size")
        if not np.all(np.isfinite(f)):
            raise DegenerateDensityError("density contains non-finite values")
        if np.any(f < 0):
            raise ArgumentError("density values must be nonnegative")
        object.__setattr__(self, "values", f)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def mass(self) -> float:
        return float(self.grid.weights @ self.values)

    def integrate(self, phi) -> float:
        """Quadrature of ``phi(x) * f(x)``; ``phi`` may be an array of node values."""
        vals = phi(self.x) if callable(phi) else np.asarray(phi, dtype=float)
        return float(self.grid.weights @ (vals * self.values))

    @classmethod
    def from_function(cls, grid: StateGrid, fn, normalized: bool = True) -> "DensityGrid":
        d = cls(grid, fn(grid.points))
        return normalize(d) if normalized else d


def normalize(d: DensityGrid) -> DensityGrid:
    """Rescale ``d`` to unit quadrature mass.

    Densities already at unit mass (within a few ulps) are returned unchanged,
    which makes the operation idempotent.
    """
    m = d.mass
    if not np.isfinite(m) or m <= 0:
        raise DegenerateDensityError(f"cannot normalize a density with mass {m}")
    if abs(m - 1.0) <= NORMALIZE_SKIP:
        return d
    return DensityGrid(d.grid, d.values / m)


def moment(d: DensityGrid, k: int) -> float:
    """Quadrature of ``x**k f(x)``; ``k = 0`` is the total mass."""
    if int(k) != k or k < 0:
        raise ArgumentError(f"moment order must be a nonnegative integer, got {k}")
    if k == 0:
        return d.mass
    return d.integrate(d.x ** int(k))


def mean_vol(d: DensityGrid, v, t: float) -> float:
    """Conditional mean of the volatility, the quadrature of ``v(t, x) f(x)``."""
    return d.integrate(v(t, d.x))


def gaussian_density(grid: StateGrid, mean: float, std: float) -> DensityGrid:
    """Gaussian kernel on ``grid`` normalized by the grid quadrature."""
    if not std > 0:
        raise ArgumentError("std must be positive")
    z = (grid.points - mean) / std
    return normalize(DensityGrid(grid, np.exp(-0.5 * z * z)))


# --------------------------------------------------------------------------- market


@dataclass(frozen=True, eq=False)
class MarketSnapshot:
    """Call prices quoted at t = 0 for one maturity, indexed by strike."""

    strikes: np.ndarray
    call_prices: np.ndarray
    maturity: float = 1.0

    def __post_init__(self):
        k = _frozen(self.strikes)
        c = _frozen(self.call_prices)
        if k.ndim != 1 or k.shape != c.shape:
            raise ArgumentError("strikes and prices must be 1-d arrays of equal length")
        if k.size < 3:
            raise ArgumentError("need at least 3 strikes")
        if np.any(np.diff(k) <= 0):
            raise ArgumentError("strikes must be strictly increasing")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(c))):
            raise ArgumentError("strikes and prices must be finite")
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "call_prices", c)

    def second_differences(self) -> np.ndarray:
        """Nonuniform three-point second derivative at interior strikes."""
        k, c = self.strikes, self.call_prices
        hl = k[1:-1] - k[:-2]
        hr = k[2:] - k[1:-1]
        slope_l = (c[1:-1] - c[:-2]) / hl
        slope_r = (c[2:] - c[1:-1]) / hr
        return 2.0 * (slope_r - slope_l) / (hl + hr)

    def noise_floor(self) -> float:
        """Size of second differences explainable by float rounding of the prices."""
        h = np.min(np.diff(self.strikes))
        scale = max(np.max(np.abs(self.call_prices)), np.finfo(float).tiny)
        return 64 * np.finfo(float).eps * scale / h**2

    def convexity_report(self, rtol: float = 1e-6) -> dict:
        """Strike triples where prices are concave, and strikes where they increase."""
        d2 = self.second_differences()
        tol = max(rtol * max(d2.max(initial=0.0), 0.0), self.noise_floor())
        bad = np.flatnonzero(d2 < -tol)
        triples = [tuple(float(v) for v in self.strikes[i : i + 3]) for i in bad]
        dc = np.diff(self.call_prices)
        rising_tol = self.noise_floor() * np.min(np.diff(self.strikes)) ** 2
        rising = [
            (float(self.strikes[i]), float(self.strikes[i + 1]))
            for i in np.flatnonzero(dc > rising_tol)
        ]
        return {
            "convex": not triples,
            "non_increasing": not rising,
            "concave_triples": triples,
            "increasing_pairs": rising,
        }


def _extrapolate_end(x: np.ndarray, y: np.ndarray, x0: float) -> float:
    """Quadratic (or lower, if fewer points) Lagrange extrapolation to ``x0``."""
    n = min(3, x.size)
    xs, ys = x[:n], y[:n]
    total = 0.0
    for i in range(n):
        li = 1.0
        for j in range(n):
            if j != i:
                li *= (x0 - xs[j]) / (xs[i] - xs[j])
        total += ys[i] * li
    return total


def recover_density(m: MarketSnapshot, rtol: float = 1e-6) -> tuple[DensityGrid, dict]:
    """Second-difference density with diagnostics; see :func:`breeden_litzenberger`."""
    report = m.convexity_report(rtol)
    if not report["convex"]:
        raise ArbitrageError(f"call prices not convex at strikes {report['concave_triples']}")
    if not report["non_increasing"]:
        raise ArbitrageError(f"call prices increase between strikes {report['increasing_pairs']}")

    k = m.strikes
    inner = m.second_differences()
    inner = np.where(np.abs(inner) <= m.noise_floor(), 0.0, inner)
    f = np.empty_like(k)
    f[1:-1] = inner
    f[0] = _extrapolate_end(k[1:-1], inner, k[0])
    f[-1] = _extrapolate_end(k[1:-1][::-1], inner[::-1], k[-1])

    grid = StateGrid(k)
    negative = grid.weights @ np.maximum(-f, 0.0)
    f = np.maximum(f, 0.0)
    raw_mass = float(grid.weights @ f)
    if raw_mass <= 0:
        raise DegenerateDensityError("call prices have zero curvature; no density to recover")
    # Call slopes run from -1 to 0 over the real line, so the curvature captured
    # on the strike range is the probability of landing inside it.
    outside = abs(1.0 - raw_mass)
    diag = {
        "raw_mass": raw_mass,
        "clipped_negative_mass": float(negative),
        "outside_mass": float(outside),
        "flagged": bool(negative + outside > CLIPPED_MASS_FLAG),
    }
    return normalize(DensityGrid(grid, f)), diag


def breeden_litzenberger(m: MarketSnapshot) -> DensityGrid:
    """Initial density as the second strike-derivative of call prices.

    Central second differences on interior strikes, quadratic extrapolation to
    the two end strikes, negative values clipped, mass renormalized to one.
    Emits :class:`ClippedMassWarning` when clipping plus mass outside the
    strike range exceeds 1e-4.
    """
    d, diag = recover_density(m)
    if diag["flagged"]:
        warnings.warn(
            f"recovered density lost {diag['clipped_negative_mass'] + diag['outside_mass']:.3g}"
            " mass to clipping/truncation",
            ClippedMassWarning,
            stacklevel=2,
        )
    return d


# --------------------------------------------------------------------------- csv io


def read_market_csv(path, maturity: float = 1.0) -> MarketSnapshot:
    """Read a ``strike,price`` CSV. Raises ``ArgumentError`` on schema problems."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["strike", "price"]:
        raise ArgumentError(f"{path}: header must be 'strike,price'")
    strikes, prices = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ArgumentError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            strikes.append(float(row[0]))
            prices.append(float(row[1]))
        except ValueError as exc:
            raise ArgumentError(f"{path}:{lineno}: {exc}") from None
    return MarketSnapshot(np.array(strikes), np.array(prices), maturity)


def write_market_csv(m: MarketSnapshot, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("strike,price\n")
        for k, c in zip(m.strikes, m.call_prices):
            fh.write(f"{k:.17g},{c:.17g}\n")


def write_density_csv(d: DensityGrid, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("x,f\n")
        for x, f in zip(d.x, d.values):
            fh.write(f"{x:.17g},{f:.17g}\n")
    return path
