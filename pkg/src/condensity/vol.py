"""Deterministic volatility structures v(t, x).

Every structure is callable as ``v(t, x)`` with scalar ``t`` and scalar or
array ``x``. Separable structures ``c(t) h(x)`` expose their two factors via
:attr:`VolStructure.factors`; the path engine uses them to keep one running
scalar per path instead of one per grid node.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError


def _interp_extrap(x, xp, fp):
    """Piecewise-linear interpolation, extended linearly past both ends."""
    x = np.asarray(x, dtype=float)
    y = np.interp(x, xp, fp)
    lo = x < xp[0]
    hi = x > xp[-1]
    if np.any(lo):
        slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
        y = np.where(lo, fp[0] + slope * (x - xp[0]), y)
    if np.any(hi):
        slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
        y = np.where(hi, fp[-1] + slope * (x - xp[-1]), y)
    return y


def _nodes(a, name) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
        raise ArgumentError(f"{name} must be a strictly increasing vector of length >= 2")
    a.setflags(write=False)
    return a


class VolStructure:
    """Base class. Subclasses implement ``_eval`` and ``integrate``."""

    kind: str = "abstract"
    T: float = math.inf

    def check_time(self, t: float) -> None:
        if not t >= 0:
            raise DomainError(f"{self.kind}: negative time {t}")
        if t >= self.T:
            raise DomainError(f"{self.kind}: t={t} outside [0, T={self.T})")

    def __call__(self, t: float, x):
        self.check_time(t)
        return self._eval(t, np.asarray(x, dtype=float))

    def _eval(self, t, x):
        raise NotImplementedError

    @property
    def factors(self):
        """``(c, h)`` with ``v(t, x) = c(t) h(x)``, or ``None`` when not separable."""
        return None

    def time_factor_integrals(self, t0: float, t1: float) -> tuple[float, float]:
        """``(int c, int c^2)`` over ``[t0, t1]`` for separable structures."""
        raise NotImplementedError

    def integrate(self, t0: float, t1: float, x):
        """``(int v ds, int v^2 ds)`` over ``[t0, t1]`` at state(s) ``x``."""
        _check_interval(self, t0, t1)
        c1, c2 = self.time_factor_integrals(t0, t1)
        h = self.factors[1](np.asarray(x, dtype=float))
        return c1 * h, c2 * h * h

    def to_config(self) -> dict:
        raise NotImplementedError


def _check_interval(v: VolStructure, t0: float, t1: float) -> None:
    if not 0 <= t0 <= t1:
        raise ArgumentError(f"need 0 <= t0 <= t1, got [{t0}, {t1}]")
    if t1 >= v.T:
        raise DomainError(f"{v.kind}: t1={t1} reaches the horizon T={v.T}")


@dataclass(frozen=True)
class Semilinear(VolStructure):
    """``v(t, x) = sigma T x / (T - t)`` on ``[0, T)``."""

    sigma: float
    T: float
    kind = "semilinear"

    def __post_init__(self):
        # sigma = 0 is admitted as the degenerate no-information model
        if not self.sigma >= 0 or not (self.T > 0 and math.isfinite(self.T)):
            raise ArgumentError(f"semilinear needs sigma >= 0 and finite T > 0, got {self}")

    def _eval(self, t, x):
        return self.sigma * self.T / (self.T - t) * x

    @property
    def factors(self):
        s, T = self.sigma, self.T
        return (lambda t: s * T / (T - t)), (lambda x: np.asarray(x, dtype=float))

    def time_factor_integrals(self, t0, t1):
        _check_interval(self, t0, t1)
        s, T = self.sigma, self.T
        c1 = s * T * math.log((T - t0) / (T - t1))
        c2 = (s * T) ** 2 * (t1 - t0) / ((T - t0) * (T - t1))
        return c1, c2

    def to_config(self):
        return {"kind": "semilinear", "sigma": self.sigma, "T": self.T}


@dataclass(frozen=True, eq=False)
class ConstantInTime(VolStructure):
    """``v(t, x) = h(x)`` with ``h`` tabulated (linear in between and beyond)."""

    x_nodes: np.ndarray
    h_values: np.ndarray
    T: float = math.inf
    kind = "constant_in_time"

    def __post_init__(self):
        object.__setattr__(self, "x_nodes", _nodes(self.x_nodes, "x_nodes"))
        h = np.array(self.h_values, dtype=float)
        if h.shape != self.x_nodes.shape or not np.all(np.isfinite(h)):
            raise ArgumentError("h_values must be finite and match x_nodes")
        h.setflags(write=False)
        object.__setattr__(self, "h_values", h)

    @classmethod
    def constant(cls, value: float, T: float = math.inf) -> "ConstantInTime":
        return cls([-1.0, 1.0], [value, value], T)

    @classmethod
    def linear(cls, slope: float, T: float = math.inf) -> "ConstantInTime":
        return cls([-1.0, 1.0], [-slope, slope], T)

    def _h(self, x):
        return _interp_extrap(x, self.x_nodes, self.h_values)

    def _eval(self, t, x):
        return self._h(x)

    @property
    def factors(self):
        return (lambda t: 1.0), self._h

    def time_factor_integrals(self, t0, t1):
        _check_interval(self, t0, t1)
        return t1 - t0, t1 - t0

    def to_config(self):
        return {
            "kind": "constant_in_time",
            "x": self.x_nodes.tolist(),
            "h": self.h_values.tolist(),
            "T": self.T,
        }


def _pl_time_integrals(t0, t1, t_nodes, values_at):
    """Exact integrals of a function piecewise linear in t between ``t_nodes``.

    ``values_at(t)`` returns the function (and any trailing state axis) at t.
    Beyond the node range the function is flat, which is still linear.
    """
    inside = t_nodes[(t_nodes > t0) & (t_nodes < t1)]
    knots = np.concatenate([[t0], inside, [t1]])
    vals = np.array([values_at(t) for t in knots])
    a, b = vals[:-1], vals[1:]
    L = np.diff(knots).reshape((-1,) + (1,) * (vals.ndim - 1))
    i1 = np.sum(L * (a + b) / 2.0, axis=0)
    i2 = np.sum(L * (a * a + a * b + b * b) / 3.0, axis=0)
    return i1, i2


@dataclass(frozen=True, eq=False)
class Separable(VolStructure):
    """``v(t, x) = c(t) h(x)`` with both factors tabulated.

    ``c`` is linear between its nodes and flat outside them; ``h`` is linear
    between its nodes and extended linearly outside.
    """

    t_nodes: np.ndarray
    c_values: np.ndarray
    x_nodes: np.ndarray
    h_values: np.ndarray
    T: float = math.inf
    kind = "separable"

    def __post_init__(self):
        for nodes, vals in (("t_nodes", "c_values"), ("x_nodes", "h_values")):
            n = _nodes(getattr(self, nodes), nodes)
            a = np.array(getattr(self, vals), dtype=float)
            if a.shape != n.shape or not np.all(np.isfinite(a)):
                raise ArgumentError(f"{vals} must be finite and match {nodes}")
            a.setflags(write=False)
            object.__setattr__(self, nodes, n)
            object.__setattr__(self, vals, a)

    def _c(self, t):
        return float(np.interp(t, self.t_nodes, self.c_values))

    def _h(self, x):
        return _interp_extrap(x, self.x_nodes, self.h_values)

    def _eval(self, t, x):
        return self._c(t) * self._h(x)

    @property
    def factors(self):
        return self._c, self._h

    def time_factor_integrals(self, t0, t1):
        _check_interval(self, t0, t1)
        i1, i2 = _pl_time_integrals(t0, t1, self.t_nodes, self._c)
        return float(i1), float(i2)

    def to_config(self):
        return {
            "kind": "separable",
            "t": self.t_nodes.tolist(),
            "c": self.c_values.tolist(),
            "x": self.x_nodes.tolist(),
            "h": self.h_values.tolist(),
            "T": self.T,
        }


@dataclass(frozen=True, eq=False)
class Tabulated(VolStructure):
    """``v`` given on a ``(t, x)`` product grid, interpolated bilinearly.

    Flat in t outside the time nodes, linear in x outside the state nodes.
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    table: np.ndarray
    T: float = math.inf
    kind = "tabulated"
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "t_nodes", _nodes(self.t_nodes, "t_nodes"))
        object.__setattr__(self, "x_nodes", _nodes(self.x_nodes, "x_nodes"))
        tab = np.array(self.table, dtype=float)
        if tab.shape != (self.t_nodes.size, self.x_nodes.size) or not np.all(np.isfinite(tab)):
            raise ArgumentError("table must be finite with shape (len(t_nodes), len(x_nodes))")
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)

    def _row(self, t):
        tn = self.t_nodes
        if t <= tn[0]:
            return self.table[0]
        if t >= tn[-1]:
            return self.table[-1]
        j = int(np.searchsorted(tn, t, side="right")) - 1
        a = (t - tn[j]) / (tn[j + 1] - tn[j])
        return (1 - a) * self.table[j] + a * self.table[j + 1]

    def _eval(self, t, x):
        return _interp_extrap(x, self.x_nodes, self._row(t))

    def integrate(self, t0, t1, x):
        _check_interval(self, t0, t1)
        x = np.asarray(x, dtype=float)
        return _pl_time_integrals(t0, t1, self.t_nodes, lambda t: self._eval(t, x))

    def to_config(self):
        if self.source:
            return {"kind": "table", "path": self.source, "T": self.T}
        return {
            "kind": "table",
            "t": self.t_nodes.tolist(),
            "x": self.x_nodes.tolist(),
            "v": self.table.tolist(),
            "T": self.T,
        }


def eval_vol(v: VolStructure, t: float, x):
    """``v(t, x)``; raises :class:`DomainError` outside ``[0, T)``."""
    return v(t, x)


def integrate_v(v: VolStructure, t0: float, t1: float, x):
    """``(int_{t0}^{t1} v(s,x) ds, int_{t0}^{t1} v(s,x)^2 ds)``.

    Closed form for the semilinear structure, exact piecewise-linear integrals
    for the tabulated kinds.
    """
    return v.integrate(t0, t1, x)


def load_vol_csv(path, T: float = math.inf) -> Tabulated:
    """Read a ``t,x,v`` CSV covering a full product grid of (t, x)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["t", "x", "v"]:
            raise ArgumentError(f"{path}: header must be 't,x,v'")
        rows = [(float(r["t"]), float(r["x"]), float(r["v"])) for r in reader]
    if not rows:
        raise ArgumentError(f"{path}: no data rows")
    arr = np.array(rows)
    ts, xs = np.unique(arr[:, 0]), np.unique(arr[:, 1])
    if arr.shape[0] != ts.size * xs.size:
        raise ArgumentError(f"{path}: rows do not form a full (t, x) product grid")
    table = np.full((ts.size, xs.size), np.nan)
    table[np.searchsorted(ts, arr[:, 0]), np.searchsorted(xs, arr[:, 1])] = arr[:, 2]
    if np.any(np.isnan(table)):
        raise ArgumentError(f"{path}: duplicate (t, x) rows")
    return Tabulated(ts, xs, table, T, source=str(path))


def vol_from_config(spec: dict) -> VolStructure:
    """Build a structure from a config mapping such as ``{kind: semilinear, sigma: 1, T: 1}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    T = float(spec.pop("T", math.inf))
    try:
        if kind == "semilinear":
            return Semilinear(float(spec["sigma"]), T)
        if kind == "constant":
            return ConstantInTime.constant(float(spec["value"]), T)
        if kind == "linear":
            return ConstantInTime.linear(float(spec["slope"]), T)
        if kind == "constant_in_time":
            return ConstantInTime(spec["x"], spec["h"], T)
        if kind == "separable":
            return Separable(spec["t"], spec["c"], spec["x"], spec["h"], T)
        if kind == "table":
            if "path" in spec:
                return load_vol_csv(spec["path"], T)
            return Tabulated(spec["t"], spec["x"], spec["v"], T)
    except KeyError as exc:
        raise ArgumentError(f"vol structure {kind!r} is missing field {exc.args[0]!r}") from None
    raise ArgumentError(f"unknown vol structure kind {kind!r}")


# --------------------------------------------------------------------------- measurability


@dataclass(frozen=True)
class GammaPreset:
    """Named normalizing functions gamma(t) on [0, T).

    ``log``: 1 / ln(T / (T - t));  ``power``: (T - t)**p;  ``inverse``: 1 / t.
    """

    name: str
    T: float
    p: float = 1.0

    def __post_init__(self):
        if self.name not in ("log", "power", "inverse"):
            raise ArgumentError(f"unknown gamma preset {self.name!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ArgumentError("gamma preset needs a finite horizon T > 0")

    def __call__(self, t: float) -> float:
        if self.name == "log":
            return 1.0 / math.log(self.T / (self.T - t))
        if self.name == "power":
            return (self.T - t) ** self.p
        return 1.0 / t

    @property
    def limit(self) -> float:
        """Analytic value of gamma as t -> T."""
        if self.name == "log":
            return 0.0
        if self.name == "power":
            return 0.0 if self.p > 0 else (1.0 if self.p == 0 else math.inf)
        return 1.0 / self.T


@dataclass(frozen=True, eq=False)
class MeasurabilityCertificate:
    gamma_limit_ok: bool
    x: np.ndarray
    g_samples: np.ndarray
    converged: bool
    invertible: bool
    sample_times: np.ndarray = field(repr=False, default=None)
    history: np.ndarray = field(repr=False, default=None)

    def as_table(self) -> dict:
        return dict(zip(self.x.tolist(), self.g_samples.tolist()))


def check_terminal_measurability(
    v: VolStructure, gamma: GammaPreset, grid, vanish_tol: float = 1e-6
) -> MeasurabilityCertificate:
    """Numerically test ``gamma(t) -> 0`` and ``gamma(t) int_0^t v(s,x) ds -> g(x)``.

    Samples ``t_k = T (1 - 2**-k)`` for k = 4..20; the limit table is the Aitken
    extrapolation of the last three samples. ``g`` counts as invertible when it
    is strictly monotone on the grid and not identically (near) zero.
    """
    T = gamma.T
    x = np.asarray(getattr(grid, "points", grid), dtype=float)
    ks = np.arange(4, 21)
    times = T * (1.0 - 2.0 ** (-ks.astype(float)))
    gammas = np.array([gamma(t) for t in times])
    hist = np.array([g * v.integrate(0.0, t, x)[0] for g, t in zip(gammas, times)])

    gamma_ok = bool(
        gamma.limit == 0.0 and np.all(np.diff(np.abs(gammas)) < 0) and np.all(np.isfinite(gammas))
    )

    s0, s1, s2 = hist[-3], hist[-2], hist[-1]
    d1, d2 = s1 - s0, s2 - s1
    denom = d2 - d1
    scale = np.maximum(np.abs(s2), 1.0)
    safe = np.abs(denom) > 1e-14 * scale
    g = np.where(safe, s2 - np.where(safe, d2 * d2 / np.where(safe, denom, 1.0), 0.0), s2)
    converged = bool(np.all(np.abs(g - s2) <= 1e-3 * scale) and np.all(np.isfinite(g)))

    dg = np.diff(g)
    gmax = float(np.max(np.abs(g)))
    monotone = bool(np.all(dg > 0) or np.all(dg < 0))
    invertible = bool(converged and gmax > vanish_tol and monotone)
    return MeasurabilityCertificate(gamma_ok, x, g, converged, invertible, times, hist)
