"""Information-process construction of conditional density models.

A terminal value X is drawn from f0, an information process
``I_t = B_t + int_0^t v(s, X) ds`` is simulated, and the conditional density
of X given the path of I is evaluated by Bayes' formula on the state grid.
The innovation W, asset price A and absolute volatility V follow from the
density path. :func:`master_equation_euler` evolves f0 directly along a given
W path and serves as an independent cross-check.

Stochastic integrals use left-endpoint sums on the simulation mesh; drift
integrals of v use :meth:`VolStructure.integrate` (closed form where
available). Exponents are shifted by their maximum before exponentiation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import ArgumentError, DegenerateDensityError, DomainError, StabilityWarning
from .grid import DensityGrid, StateGrid, normalize
from .vol import VolStructure


@dataclass(frozen=True, eq=False)
class TimeMesh:
    """Strictly increasing simulation times starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ArgumentError("a time mesh needs at least two times")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
            raise ArgumentError("mesh times must start at 0 and increase strictly")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, t_end: float, steps: int) -> "TimeMesh":
        return cls(np.linspace(0.0, t_end, int(steps) + 1))

    @classmethod
    def graded(cls, T: float, eps: float, steps: int) -> "TimeMesh":
        """Mesh ending at ``T - eps`` whose steps shrink in proportion to ``T - t``."""
        if not 0 < eps < T:
            raise ArgumentError("need 0 < eps < T")
        k = np.arange(int(steps) + 1) / steps
        return cls(T - T * (eps / T) ** k)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def max_step(self) -> float:
        return float(self.dt.max())

    def __len__(self) -> int:
        return self.times.size

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ArgumentError(f"time {t} is not on the mesh")
        return k

    def coarsen(self, factor: int) -> "TimeMesh":
        if self.n_steps % factor:
            raise ArgumentError(f"{self.n_steps} steps not divisible by {factor}")
        return TimeMesh(self.times[::factor])

    def check_within(self, v: VolStructure) -> None:
        if self.t_end >= v.T:
            raise DomainError(f"mesh ends at {self.t_end}, not before the horizon T={v.T}")


# --------------------------------------------------------------------------- sampling


def _inverse_cdf(f0: DensityGrid, u) -> np.ndarray:
    x, f = f0.x, f0.values
    cdf = np.concatenate([[0.0], np.cumsum(np.diff(x) * (f[:-1] + f[1:]) / 2.0)])
    if not cdf[-1] > 0:
        raise DegenerateDensityError("cannot sample from a density with zero mass")
    cdf /= cdf[-1]
    # drop flat stretches so the inverse is single-valued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(u, cdf[keep], x[keep])


def draw_terminal(f0: DensityGrid, rng) -> float:
    """Inverse-CDF draw from the piecewise-linear CDF of ``f0``."""
    u = _rng.as_generator(rng).random()
    return float(_inverse_cdf(f0, u))


def brownian_increments(mesh: TimeMesh, rng) -> np.ndarray:
    g = _rng.as_generator(rng)
    return g.standard_normal(mesh.n_steps) * np.sqrt(mesh.dt)


def _drift(v: VolStructure, mesh: TimeMesh, X) -> np.ndarray:
    """``int_0^{t_k} v(s, X) ds`` for every mesh time; shape ``X.shape + (n_t,)``."""
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape + (len(mesh),))
    for k, t in enumerate(mesh.times):
        out[..., k] = v.integrate(0.0, t, X)[0]
    return out


def simulate_information(X: float, v: VolStructure, mesh: TimeMesh, rng):
    """Return ``(I, B)`` with B a Brownian path and ``I = B + int v(s, X) ds``."""
    mesh.check_within(v)
    B = np.concatenate([[0.0], np.cumsum(brownian_increments(mesh, rng))])
    return B + _drift(v, mesh, X), B


# --------------------------------------------------------------------------- densities


def _posterior(f0: DensityGrid, L: np.ndarray) -> np.ndarray:
    """Normalized ``f0 * exp(L)`` along the last axis, computed with a max shift."""
    with np.errstate(divide="ignore"):
        lf = np.log(f0.values) + L
    m = np.max(np.where(np.isfinite(lf), lf, -np.inf), axis=-1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise DegenerateDensityError("all grid weights underflowed")
    vals = np.exp(lf - m)
    mass = vals @ f0.grid.weights
    if not np.all(np.isfinite(mass)) or np.any(mass <= 0):
        raise DegenerateDensityError("conditional density has no mass on the grid")
    return vals / mass[..., None]


def _check_path(path, mesh: TimeMesh, name: str) -> np.ndarray:
    path = np.asarray(path, dtype=float)
    if path.ndim != 1 or not 1 <= path.size <= len(mesh):
        raise ArgumentError(f"{name} must be a vector no longer than the mesh")
    return path


def conditional_density(f0: DensityGrid, v: VolStructure, I, mesh: TimeMesh) -> DensityGrid:
    """Conditional density at ``mesh.times[len(I) - 1]`` given the information path ``I``.

    ``f0(x) exp(sum_j v(t_j, x) dI_j - 1/2 int_0^t v(s, x)^2 ds)``, normalized.
    """
    I = _check_path(I, mesh, "I")
    k = I.size - 1
    x = f0.x
    t = mesh.times[k]
    if k == 0:
        return f0
    dI = np.diff(I)
    L = np.zeros_like(x)
    for j in range(k):
        L += v(mesh.times[j], x) * dI[j]
    L -= 0.5 * v.integrate(0.0, t, x)[1]
    return DensityGrid(f0.grid, _posterior(f0, L))


def alt_conditional_density(f0: DensityGrid, v: VolStructure, B, X: float, mesh: TimeMesh) -> DensityGrid:
    """Same density written through the driving noise ``B`` and the terminal value ``X``.

    The exponent is ``sum_j [v(t_j,x) - v(t_j,X)] dB_j - 1/2 Q(x)`` where the
    quadratic term ``Q(x) = int v(x)^2 - 2 C(x) + 2 C(X) - int v(X)^2`` uses the
    cross term ``C(y) = sum_j v(t_j, y) D_j`` with ``D_j`` the drift increments
    of the information process. ``Q`` vanishes at ``x = X`` and the result
    equals :func:`conditional_density` on the matching ``I`` to rounding.
    """
    B = _check_path(B, mesh, "B")
    k = B.size - 1
    if k == 0:
        return f0
    x = f0.x
    t = mesh.times[k]
    dB = np.diff(B)
    D = np.diff(_drift(v, mesh.__class__(mesh.times[: k + 1]), X))
    L = np.zeros_like(x)
    cross_x = np.zeros_like(x)
    cross_X = 0.0
    for j in range(k):
        vx = v(mesh.times[j], x)
        vX = float(v(mesh.times[j], X))
        L += (vx - vX) * dB[j]
        cross_x += vx * D[j]
        cross_X += vX * D[j]
    q_x = v.integrate(0.0, t, x)[1]
    q_X = float(v.integrate(0.0, t, X)[1])
    L -= 0.5 * (q_x - 2.0 * cross_x + 2.0 * cross_X - q_X)
    return DensityGrid(f0.grid, _posterior(f0, L))


def absolute_volatility(d: DensityGrid, v: VolStructure, t: float) -> float:
    """Conditional covariance of X and v(t, X) under ``d``."""
    vx = v(t, d.x)
    w = d.grid.weights * d.values
    return float(w @ (d.x * vx) - (w @ d.x) * (w @ vx))


def innovation_path(densities, v: VolStructure, I, mesh: TimeMesh) -> np.ndarray:
    """``W_k = I_k - sum_{j<k} <v>_j dt_j`` with ``<v>_j`` the mean volatility under density j."""
    I = _check_path(I, mesh, "I")
    mv = np.array([d.integrate(v(mesh.times[j], d.x)) for j, d in zip(range(I.size - 1), densities)])
    if mv.size != I.size - 1:
        raise ArgumentError("need one density per mesh time before the last")
    return I - np.concatenate([[0.0], np.cumsum(mv * mesh.dt[: I.size - 1])])


# --------------------------------------------------------------------------- path engine


@dataclass(frozen=True, eq=False)
class PathBundle:
    """One simulated scenario. ``density[k]`` is None where not retained."""

    mesh: TimeMesh
    I: np.ndarray
    W: np.ndarray
    density: tuple
    A: np.ndarray
    V: np.ndarray
    X: float
    seed: int | None = None
    path_index: int = 0
    B: np.ndarray = field(default=None, repr=False)
    mean_vol: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Vectorised simulation output, one row per path.

    ``A``, ``V``, ``W`` and ``mean_vol`` are ``None`` when the batch ran in
    snapshot-only mode; ``A_snap`` then holds the asset price at the snapshot
    indices only.
    """

    mesh: TimeMesh
    grid: StateGrid
    X: np.ndarray
    B: np.ndarray
    I: np.ndarray
    W: np.ndarray | None
    A: np.ndarray | None
    V: np.ndarray | None
    mean_vol: np.ndarray | None
    snapshots: dict
    A_snap: dict
    seed: int | None = None
    first_path: int = 0

    @property
    def n_paths(self) -> int:
        return self.X.size

    def bundle(self, p: int) -> PathBundle:
        if self.A is None:
            raise ArgumentError("bundles need a full-path batch")
        dens = [None] * len(self.mesh)
        for k, vals in self.snapshots.items():
            dens[k] = DensityGrid(self.grid, vals[p])
        return PathBundle(
            self.mesh, self.I[p], self.W[p], tuple(dens), self.A[p], self.V[p],
            float(self.X[p]), self.seed, self.first_path + p, self.B[p], self.mean_vol[p],
        )


class _LogLikelihood:
    """Running exponent ``sum_j v(t_j, x) dI_j - 1/2 int_0^{t_k} v^2`` for many paths."""

    def __init__(self, v: VolStructure, x: np.ndarray, n_paths: int):
        self.v = v
        self.x = x
        fac = v.factors
        if fac is not None:
            self.c = fac[0]
            self.h = np.asarray(fac[1](x), dtype=float) * np.ones_like(x)
            self.acc = np.zeros(n_paths)
        else:
            self.c = None
            self.acc = np.zeros((n_paths, x.size))

    def value(self, t: float) -> np.ndarray:
        if self.c is not None:
            q = self.v.time_factor_integrals(0.0, t)[1] if t > 0 else 0.0
            return self.acc[:, None] * self.h - 0.5 * q * self.h * self.h
        q = self.v.integrate(0.0, t, self.x)[1] if t > 0 else 0.0
        return self.acc - 0.5 * q

    def step(self, t: float, dI: np.ndarray) -> None:
        if self.c is not None:
            self.acc += self.c(t) * dI
        else:
            self.acc += dI[:, None] * self.v(t, self.x)


def run_paths(
    f0: DensityGrid,
    v: VolStructure,
    mesh: TimeMesh,
    X,
    B,
    *,
    snapshots=(),
    full: bool = True,
) -> dict:
    """Evaluate density paths for given terminal values and Brownian paths.

    ``X`` has shape ``(n,)`` and ``B`` shape ``(n, len(mesh))`` with ``B[:, 0] = 0``.
    With ``full=True`` the density is evaluated at every mesh time to produce
    ``A``, ``V``, ``mean_vol`` and ``W``; otherwise only at ``snapshots``.
    """
    mesh.check_within(v)
    X = np.atleast_1d(np.asarray(X, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, n_t = X.size, len(mesh)
    if B.shape != (n, n_t):
        raise ArgumentError(f"B must have shape ({n}, {n_t})")
    x, w = f0.x, f0.grid.weights
    I = B + _drift(v, mesh, X)
    dI = np.diff(I, axis=1)
    snapshots = sorted({int(k) % n_t for k in snapshots})
    snaps, a_snap = {}, {}
    if full:
        A = np.empty((n, n_t))
        V = np.empty((n, n_t))
        mv = np.empty((n, n_t))
    loglik = _LogLikelihood(v, x, n)
    wanted = set(snapshots)
    for k, t in enumerate(mesh.times):
        if full or k in wanted:
            if k == 0:
                f = np.broadcast_to(f0.values, (n, x.size))
            else:
                f = _posterior(f0, loglik.value(t))
            wf = f * w
            a = wf @ x
            if full:
                vk = v(t, x)
                A[:, k] = a
                mv[:, k] = wf @ vk
                V[:, k] = wf @ (x * vk) - a * mv[:, k]
            if k in wanted:
                snaps[k] = np.array(f)
                a_snap[k] = a
        if k < n_t - 1:
            loglik.step(t, dI[:, k])
    out = {"X": X, "B": B, "I": I, "snapshots": snaps, "A_snap": a_snap}
    if full:
        comp = np.concatenate([np.zeros((n, 1)), np.cumsum(mv[:, :-1] * mesh.dt, axis=1)], axis=1)
        out.update(A=A, V=V, mean_vol=mv, W=I - comp)
    return out


def path_noise(f0: DensityGrid, mesh: TimeMesh, seed: int, paths):
    """Terminal draws and Brownian paths for the given path indices of a seeded family.

    Path ``p`` uses only the streams keyed by ``(seed, p)``.
    """
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    u = np.array([_rng.path_rng(seed, p, _rng.TERMINAL).random() for p in paths])
    z = np.array([_rng.path_rng(seed, p, _rng.NOISE).standard_normal(mesh.n_steps) for p in paths])
    B = np.zeros((paths.size, len(mesh)))
    B[:, 1:] = np.cumsum(z * np.sqrt(mesh.dt), axis=1)
    return _inverse_cdf(f0, u), B


def simulate_batch(
    f0: DensityGrid,
    v: VolStructure,
    mesh: TimeMesh,
    n_paths: int,
    seed: int,
    *,
    first_path: int = 0,
    snapshots=(),
    full: bool = True,
    chunk: int = 1000,
) -> BatchResult:
    """Simulate paths ``first_path .. first_path + n_paths - 1`` of the seeded family."""
    if n_paths < 1:
        raise ArgumentError("n_paths must be >= 1")
    parts = []
    for start in range(first_path, first_path + n_paths, chunk):
        stop = min(start + chunk, first_path + n_paths)
        X, B = path_noise(f0, mesh, seed, np.arange(start, stop))
        parts.append(run_paths(f0, v, mesh, X, B, snapshots=snapshots, full=full))

    def cat(key):
        if parts[0].get(key) is None:
            return None
        return np.concatenate([p[key] for p in parts])

    snaps = {k: np.concatenate([p["snapshots"][k] for p in parts]) for k in parts[0]["snapshots"]}
    a_snap = {k: np.concatenate([p["A_snap"][k] for p in parts]) for k in parts[0]["A_snap"]}
    return BatchResult(
        mesh, f0.grid, cat("X"), cat("B"), cat("I"), cat("W"), cat("A"), cat("V"),
        cat("mean_vol"), snaps, a_snap, seed, first_path,
    )


def simulate_path(
    f0: DensityGrid,
    v: VolStructure,
    mesh: TimeMesh,
    seed: int,
    path_index: int = 0,
    keep_densities=True,
) -> PathBundle:
    """One full scenario. ``keep_densities`` is True (all), False, or mesh indices."""
    if keep_densities is True:
        keep = range(len(mesh))
    elif keep_densities is False:
        keep = ()
    else:
        keep = keep_densities
    res = simulate_batch(f0, v, mesh, 1, seed, first_path=path_index, snapshots=keep)
    return res.bundle(0)


# --------------------------------------------------------------------------- master equation


@dataclass(frozen=True, eq=False)
class EulerPath:
    """Density path from explicit stepping of the master equation.

    ``mass_before[k]`` is the quadrature mass after step k before any
    renormalization; ``clipped[k]`` the mass removed by clipping negatives.
    """

    grid: StateGrid
    mesh: TimeMesh
    values: np.ndarray
    mass_before: np.ndarray
    clipped: np.ndarray
    unstable_steps: int

    def density(self, k: int) -> DensityGrid:
        return DensityGrid(self.grid, self.values[k])

    @property
    def clipped_fraction(self) -> float:
        return float(self.clipped.sum())


def master_equation_euler(
    f0: DensityGrid,
    v: VolStructure,
    W,
    mesh: TimeMesh,
    *,
    renormalize: bool = True,
) -> EulerPath:
    """``f_{k+1} = f_k (1 + [v(t_k, x) - <v>_k] dW_k)``, negatives clipped.

    ``<v>_k`` is the quadrature of ``v f_k`` (no division by the mass, so the
    unrenormalized scheme conserves mass up to clipping). Warns with
    :class:`StabilityWarning` when more than 1% of the support gets a
    nonpositive multiplier in some step.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != mesh.times.shape:
        raise ArgumentError("W must have one value per mesh time")
    mesh.check_within(v)
    x, w = f0.x, f0.grid.weights
    f = np.array(f0.values)
    out = np.empty((len(mesh), x.size))
    out[0] = f
    mass = np.empty(len(mesh))
    mass[0] = f0.mass
    clipped = np.zeros(len(mesh))
    unstable = 0
    dW = np.diff(W)
    for k in range(mesh.n_steps):
        vk = v(mesh.times[k], x)
        mvk = w @ (vk * f)
        mult = 1.0 + (vk - mvk) * dW[k]
        support = f > 0
        if support.any() and np.mean(mult[support] <= 0) > 0.01:
            unstable += 1
        f = f * mult
        clipped[k + 1] = w @ np.maximum(-f, 0.0)
        f = np.maximum(f, 0.0)
        mass[k + 1] = w @ f
        if renormalize:
            if not mass[k + 1] > 0:
                raise DegenerateDensityError(f"Euler density lost all mass at step {k}")
            f = f / mass[k + 1]
        out[k + 1] = f
    if unstable:
        warnings.warn(
            f"{unstable} Euler steps had nonpositive multipliers on >1% of the support;"
            " reduce the step size",
            StabilityWarning,
            stacklevel=2,
        )
    return EulerPath(f0.grid, mesh, out, mass, clipped, unstable)


def renormalized(d: DensityGrid) -> DensityGrid:
    return normalize(d)
