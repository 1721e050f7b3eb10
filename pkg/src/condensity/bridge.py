"""Brownian-bridge information and the semilinear density family.

Information ``xi_t = sigma * A_T * t + beta_t`` with ``beta`` a standard
Brownian bridge on ``[0, T]``. The conditional density of ``A_T`` depends on
the path only through ``(t, xi_t)``; with a Gaussian prior it is the
Bachelier model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import rng as _rng
from .errors import ArgumentError, DomainError
from .filtering import TimeMesh, _posterior, draw_terminal, run_paths
from .grid import DensityGrid, StateGrid, gaussian_density
from .vol import Semilinear


def _check_before(t: float, T: float) -> None:
    if not 0 <= t < T:
        raise DomainError(f"time {t} outside [0, T) with T={T}")


def simulate_bridge(T: float, mesh: TimeMesh, rng) -> np.ndarray:
    """Standard Brownian bridge on ``mesh`` by exact Gaussian transitions."""
    t = mesh.times
    if t[-1] > T * (1 + 1e-12):
        raise DomainError(f"mesh ends at {t[-1]}, beyond T={T}")
    g = _rng.as_generator(rng)
    z = g.standard_normal(mesh.n_steps)
    beta = np.zeros(t.size)
    for k in range(mesh.n_steps):
        rem = T - t[k]
        d = t[k + 1] - t[k]
        after = max(rem - d, 0.0)
        beta[k + 1] = beta[k] * after / rem + np.sqrt(d * after / rem) * z[k]
    return beta


@dataclass(frozen=True, eq=False)
class BridgeScenario:
    sigma: float
    T: float
    A_T: float
    beta: np.ndarray
    xi: np.ndarray
    mesh: TimeMesh
    seed: int | None = None
    path_index: int = 0


def simulate_scenario(f0: DensityGrid, sigma: float, T: float, mesh: TimeMesh, seed: int, path_index: int = 0) -> BridgeScenario:
    if not sigma > 0:
        raise ArgumentError("sigma must be positive")
    A_T = draw_terminal(f0, _rng.path_rng(seed, path_index, _rng.TERMINAL))
    beta = simulate_bridge(T, mesh, _rng.path_rng(seed, path_index, _rng.BRIDGE))
    xi = sigma * A_T * mesh.times + beta
    return BridgeScenario(sigma, T, A_T, beta, xi, mesh, seed, path_index)


def semilinear_density(f0: DensityGrid, sigma: float, T: float, xi_t: float, t: float) -> DensityGrid:
    """``f0(x) exp[T/(T-t) (sigma xi x - sigma^2 x^2 t / 2)]``, normalized."""
    _check_before(t, T)
    if t == 0 and xi_t == 0:
        return f0
    x = f0.x
    L = T / (T - t) * (sigma * xi_t * x - 0.5 * sigma**2 * x**2 * t)
    return DensityGrid(f0.grid, _posterior(f0, L))


def bachelier_prior(grid: StateGrid, sigma: float, T: float) -> DensityGrid:
    """Gaussian prior ``N(0, 1/(T sigma^2))`` under which the model is Bachelier."""
    return gaussian_density(grid, 0.0, 1.0 / (sigma * np.sqrt(T)))


def bachelier_density(gamma: float, W_t: float, t: float, T: float, grid: StateGrid) -> DensityGrid:
    """Gaussian with mean ``gamma W_t`` and variance ``gamma^2 (T - t)``."""
    _check_before(t, T)
    return gaussian_density(grid, gamma * W_t, gamma * np.sqrt(T - t))


def conditional_means(scenario: BridgeScenario, f0: DensityGrid) -> np.ndarray:
    """``E[A_T | xi_t]`` along the scenario; equals ``A_T`` at ``t = T``."""
    out = np.empty(scenario.mesh.times.size)
    for k, (t, xi) in enumerate(zip(scenario.mesh.times, scenario.xi)):
        if t >= scenario.T:
            out[k] = scenario.A_T
        else:
            out[k] = semilinear_density(f0, scenario.sigma, scenario.T, xi, t).integrate(f0.x)
    return out


def bridge_innovation(scenario: BridgeScenario, f0: DensityGrid, means=None) -> np.ndarray:
    """``W_k = xi_k - sum_{j<k} (sigma T E[A_T|xi_j] - xi_j) / (T - t_j) dt_j``."""
    s, T, t = scenario.sigma, scenario.T, scenario.mesh.times
    if means is None:
        means = conditional_means(scenario, f0)
    drift = (s * T * means[:-1] - scenario.xi[:-1]) / (T - t[:-1]) * np.diff(t)
    return scenario.xi - np.concatenate([[0.0], np.cumsum(drift)])


def write_scenario_csv(path, scenario: BridgeScenario, f0: DensityGrid) -> Path:
    A = conditional_means(scenario, f0)
    W = bridge_innovation(scenario, f0, A)
    rows = np.column_stack([scenario.mesh.times, scenario.beta, scenario.xi, W, A])
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,beta,xi,W,A\n")
        for r in rows:
            fh.write(",".join(format(float(c), ".17g") for c in r) + "\n")
    return path


# --------------------------------------------------------------------------- transforms


@dataclass(frozen=True)
class Transform:
    """Increasing C1 bijection with its inverse and derivative."""

    name: str
    forward: Callable
    inverse: Callable
    derivative: Callable


def exp_transform() -> Transform:
    return Transform("exp", np.exp, np.log, np.exp)


def affine_transform(scale: float, shift: float = 0.0) -> Transform:
    if not scale > 0:
        raise ArgumentError("affine scale must be positive")
    return Transform(
        "affine",
        lambda x: scale * np.asarray(x, dtype=float) + shift,
        lambda z: (np.asarray(z, dtype=float) - shift) / scale,
        lambda x: np.full_like(np.asarray(x, dtype=float), scale),
    )


def table_transform(x_nodes, z_nodes) -> Transform:
    """Monotone cubic (PCHIP) bijection through sampled pairs."""
    x_nodes = np.asarray(x_nodes, dtype=float)
    z_nodes = np.asarray(z_nodes, dtype=float)
    if x_nodes.shape != z_nodes.shape or x_nodes.size < 2:
        raise ArgumentError("transform table needs matching node vectors")
    if np.any(np.diff(x_nodes) <= 0) or np.any(np.diff(z_nodes) <= 0):
        raise ArgumentError("transform table must be strictly increasing")
    fwd = PchipInterpolator(x_nodes, z_nodes, extrapolate=False)

    def inv(z):
        # bisection on the monotone forward spline, so inv(fwd(x)) == x to rounding
        z = np.asarray(z, dtype=float)
        lo = np.full(z.shape, x_nodes[0])
        hi = np.full(z.shape, x_nodes[-1])
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = fwd(mid) < z
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = 0.5 * (lo + hi)
        return np.where((z < z_nodes[0]) | (z > z_nodes[-1]), np.nan, out)

    return Transform("table", fwd, inv, fwd.derivative())


TRANSFORM_PRESETS = {"exp": exp_transform, "affine": affine_transform, "table": table_transform}


def transform_density(d: DensityGrid, psi, psi_inverse=None, psi_derivative=None) -> DensityGrid:
    """Density of ``psi(X)`` on the image grid ``z_i = psi(x_i)``.

    Values are ``f(x_i) / psi'(x_i)``. The image grid carries the mapped
    quadrature rule (cell weights ``psi'(x) dx / 2`` at each end), so total
    mass and ``int z g dz = int psi(x) f dx`` carry over exactly.
    """
    if isinstance(psi, Transform):
        psi, psi_inverse, psi_derivative = psi.forward, psi.inverse, psi.derivative
    if psi_derivative is None:
        raise ArgumentError("transform_density needs the derivative of psi")
    x = d.x
    z = np.asarray(psi(x), dtype=float)
    dpsi = np.asarray(psi_derivative(x), dtype=float) * np.ones_like(x)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(dpsi))):
        raise ArgumentError("psi is not finite on the grid")
    if np.any(np.diff(z) <= 0) or np.any(dpsi <= 0):
        raise ArgumentError("psi must be strictly increasing on the grid")
    if psi_inverse is not None:
        back = np.asarray(psi_inverse(z), dtype=float)
        if not np.allclose(back, x, rtol=1e-8, atol=1e-8 * (d.grid.xmax - d.grid.xmin)):
            raise ArgumentError("psi_inverse does not invert psi on the grid")
    cw = d.grid.cell_weights
    cell_weights = np.column_stack([cw[:, 0] * dpsi[:-1], cw[:, 1] * dpsi[1:]])
    grid = StateGrid(z, rule="mapped", cell_weights=cell_weights)
    return DensityGrid(grid, d.values / dpsi)


def lognormal_pdf(z, mu: float, s: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * ((np.log(z) - mu) / s) ** 2) / (s * z * np.sqrt(2 * np.pi))


# --------------------------------------------------------------------------- equivalence


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    """Sup-norm gap between the two densities at each reported time.

    ``bound`` is a first-order estimate of the gap caused by the left-endpoint
    drift sum, plus 1e-6; ``tolerance``, when set, is a fixed acceptance level.
    """

    times: np.ndarray
    sup_norm: np.ndarray
    linf_location: np.ndarray
    bound: np.ndarray
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        limit = self.bound if self.tolerance is None else self.tolerance
        return bool(np.all(self.sup_norm <= limit))

    def to_json(self) -> str:
        return json.dumps(
            {
                "times": self.times.tolist(),
                "sup_norm": self.sup_norm.tolist(),
                "linf_location": self.linf_location.tolist(),
                "bound": self.bound.tolist(),
                "tolerance": self.tolerance,
                "passed": self.passed,
            },
            indent=2,
        )


def bridge_from_noise(B, X: float, sigma: float, T: float, mesh: TimeMesh) -> np.ndarray:
    """``xi_t = (T - t) sum_j dB_j / (T - t_j) + sigma X t`` with left-endpoint sums."""
    t = mesh.times
    B = np.asarray(B, dtype=float)
    stoch = np.concatenate([[0.0], np.cumsum(np.diff(B) / (T - t[:-1]))])
    return (T - t) * stoch + sigma * X * t


def drift_sum_gap(X: float, sigma: float, T: float, mesh: TimeMesh) -> np.ndarray:
    """Slope ``c_k`` of the exponent gap ``c_k x`` between the two constructions.

    The filter integrates the drift of I against ``v(t_j, x)`` at left
    endpoints; the bridge uses the exact integral.
    """
    t = mesh.times
    u = T - t
    D = sigma * T * X * np.log(u[:-1] / u[1:])
    left = np.concatenate([[0.0], np.cumsum(D / u[:-1])])
    return sigma * T * (left - sigma * X * t / u)


def equivalence_check(
    f0: DensityGrid,
    sigma: float,
    T: float,
    B,
    X: float,
    mesh: TimeMesh,
    report_indices=None,
    tolerance: float | None = None,
) -> EquivalenceReport:
    """Compare the filter density on ``I = B + drift`` with the bridge density on the matching ``xi``."""
    v = Semilinear(sigma, T)
    if report_indices is None:
        report_indices = np.unique(np.linspace(0, mesh.n_steps, 11).round().astype(int))
    report_indices = [int(k) for k in report_indices]
    B = np.asarray(B, dtype=float)
    res = run_paths(f0, v, mesh, [X], B[None, :], snapshots=report_indices, full=False)
    xi = bridge_from_noise(B, X, sigma, T, mesh)
    gap = drift_sum_gap(X, sigma, T, mesh)
    sup, loc, bound = [], [], []
    for k in report_indices:
        a = res["snapshots"][k][0]
        b = semilinear_density(f0, sigma, T, xi[k], mesh.times[k])
        diff = np.abs(a - b.values)
        i = int(np.argmax(diff))
        sup.append(diff[i])
        loc.append(f0.x[i])
        spread = np.max(b.values * np.abs(b.x - b.integrate(b.x)))
        bound.append(1e-6 + 1.5 * abs(gap[k]) * spread)
    return EquivalenceReport(
        mesh.times[report_indices], np.array(sup), np.array(loc), np.array(bound), tolerance
    )
