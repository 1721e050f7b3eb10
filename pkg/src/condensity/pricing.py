"""Option prices from conditional densities and normal implied volatility."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.special import erfcx, ndtr

from .errors import ArgumentError, DomainError
from .filtering import TimeMesh
from .grid import DensityGrid, moment
from .vol import VolStructure

_SQRT2PI = math.sqrt(2.0 * math.pi)


# --------------------------------------------------------------------------- density prices


def _hinge_parts(d: DensityGrid, K: float):
    """Split ``int (x - K) f`` into ``(above, below, call_kink, put_kink)``.

    ``above``/``below`` are cell-rule sums over cells strictly right/left of
    the cell holding K. On that cell the hinge is integrated exactly against
    the linear interpolant of f; the gap ``delta`` between the cell rule and
    the exact integral of ``(x - K) f`` is shared linearly in the position of
    K, so ``call_kink - put_kink`` is the cell rule (exact parity) and both
    prices are continuous in K. The pieces are clipped at zero, which only
    binds on densities that are far from linear across a cell.
    """
    x, f, cw = d.x, d.values, d.grid.cell_weights
    g = (x - K) * f
    cell = cw[:, 0] * g[:-1] + cw[:, 1] * g[1:]
    i = int(np.searchsorted(x, K, side="right")) - 1
    if i < 0:
        return float(cell.sum()), 0.0, 0.0, 0.0
    if i >= x.size - 1:
        return 0.0, float(-cell.sum()), 0.0, 0.0
    a, b = x[i], x[i + 1]
    h = b - a
    theta = (K - a) / h
    f_k = f[i] + (f[i + 1] - f[i]) * theta
    call_exact = (b - K) ** 2 * (f_k + 2.0 * f[i + 1]) / 6.0
    put_exact = (K - a) ** 2 * (f_k + 2.0 * f[i]) / 6.0
    delta = cell[i] - (call_exact - put_exact)
    put_kink = max(put_exact - theta * delta, 0.0, -cell[i])
    call_kink = put_kink + cell[i]
    return float(cell[i + 1 :].sum()), float(-cell[:i].sum()), float(call_kink), float(put_kink)


def call_price(d: DensityGrid, K: float) -> float:
    """``int (x - K)^+ f(x) dx`` with the kink cell integrated on the linear interpolant of f."""
    if not np.isfinite(K):
        raise ArgumentError("strike must be finite")
    above, _, kink, _ = _hinge_parts(d, K)
    return above + kink


def put_price(d: DensityGrid, K: float) -> float:
    """Put on the same quadrature, so that ``C - P`` is the quadrature of ``x - K``."""
    if not np.isfinite(K):
        raise ArgumentError("strike must be finite")
    _, below, _, kink = _hinge_parts(d, K)
    return below + kink


def put_call_parity_check(d: DensityGrid, K: float) -> float:
    """``C - P - (A - K)``; zero up to rounding for a normalized density."""
    return call_price(d, K) - put_price(d, K) - (moment(d, 1) - K)


# --------------------------------------------------------------------------- Bachelier


def _otm_value(s: float, m: float) -> float:
    """Bachelier value of an option with moneyness ``m <= 0`` and total std ``s``."""
    if s <= 0:
        return 0.0
    d = m / s
    if d > -1.0:
        return s * (math.exp(-0.5 * d * d) / _SQRT2PI + d * float(ndtr(d)))
    # phi(d) (1 + d R) with the Mills ratio R = N(d)/phi(d) from erfcx
    r = math.sqrt(math.pi / 2.0) * float(erfcx(-d / math.sqrt(2.0)))
    return s * math.exp(-0.5 * d * d) / _SQRT2PI * (1.0 + d * r)


def bachelier_price(forward: float, K: float, vol: float, tau: float, put: bool = False) -> float:
    s = vol * math.sqrt(tau)
    intrinsic = max(K - forward, 0.0) if put else max(forward - K, 0.0)
    return intrinsic + _otm_value(s, -abs(forward - K))


@dataclass(frozen=True)
class ImpliedVol:
    vol: float
    flag: str = ""


def implied_normal_vol(price: float, forward: float, K: float, tau: float, *, put: bool = False, rtol: float = 1e-10) -> ImpliedVol:
    """Normal (Bachelier) volatility matching ``price``.

    Works on the out-of-the-money time value. A price at or below intrinsic
    gives ``vol = 0`` with flag ``"intrinsic"``.
    """
    if not all(np.isfinite([price, forward, K])):
        raise ArgumentError("price, forward and strike must be finite")
    if not tau > 0:
        raise ArgumentError("time to expiry must be positive")
    intrinsic = max(K - forward, 0.0) if put else max(forward - K, 0.0)
    target = price - intrinsic
    # an in-the-money quote carries cancellation noise of order eps * intrinsic
    if target <= 4e-16 * intrinsic or target <= 0.0:
        return ImpliedVol(0.0, "intrinsic")
    m = -abs(forward - K)
    if m == 0.0:
        return ImpliedVol(target * _SQRT2PI / math.sqrt(tau))

    lo, hi = 0.0, max(target * _SQRT2PI, abs(m))
    while _otm_value(hi, m) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _otm_value(mid, m) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * hi:
            break
    s = 0.5 * (lo + hi)
    for _ in range(50):
        d = m / s
        vega = math.exp(-0.5 * d * d) / _SQRT2PI
        if vega <= 0:
            break
        step = (_otm_value(s, m) - target) / vega
        s_new = min(max(s - step, lo), hi)
        if abs(s_new - s) <= rtol * s:
            s = s_new
            break
        s = s_new
    else:
        return ImpliedVol(s / math.sqrt(tau), "no_convergence")
    return ImpliedVol(s / math.sqrt(tau))


# --------------------------------------------------------------------------- smile


@dataclass(frozen=True, eq=False)
class SmileTable:
    times: np.ndarray
    strikes: np.ndarray
    prices: np.ndarray
    vols: np.ndarray
    flags: np.ndarray

    @property
    def spread(self) -> float:
        ok = self.flags == ""
        return float(np.ptp(self.vols[ok])) if ok.any() else math.nan

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write("t,K,price,implied_normal_vol,flag\n")
            for i, t in enumerate(self.times):
                for j, K in enumerate(self.strikes):
                    fh.write(f"{t:.17g},{K:.17g},{self.prices[i, j]:.17g},{self.vols[i, j]:.17g},{self.flags[i, j]}\n")
        return path


def smile(densities, times, strikes, T: float) -> SmileTable:
    """Call prices and normal implied vols on a time by strike table.

    Inversion uses the out-of-the-money side (puts below the forward).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    densities = list(densities)
    if len(densities) != times.size:
        raise ArgumentError("need one density per time")
    shape = (times.size, strikes.size)
    prices = np.empty(shape)
    vols = np.empty(shape)
    flags = np.empty(shape, dtype=object)
    for i, (t, d) in enumerate(zip(times, densities)):
        if not t < T:
            raise DomainError(f"smile time {t} not before T={T}")
        F = moment(d, 1)
        for j, K in enumerate(strikes):
            C = call_price(d, K)
            prices[i, j] = C
            if K < F:
                iv = implied_normal_vol(put_price(d, K), F, K, T - t, put=True)
            else:
                iv = implied_normal_vol(C, F, K, T - t)
            vols[i, j] = iv.vol
            flags[i, j] = iv.flag
    return SmileTable(times, strikes, prices, vols, flags.astype(str))


# --------------------------------------------------------------------------- binary prior


@dataclass(frozen=True)
class BinaryModel:
    """Two-point prior ``q1 delta(x - x1) + q2 delta(x - x2)``."""

    x1: float
    x2: float
    q1: float
    q2: float
    v: VolStructure

    def __post_init__(self):
        if not self.x1 < self.x2:
            raise ArgumentError("need x1 < x2")
        if not (self.q1 > 0 and self.q2 > 0) or abs(self.q1 + self.q2 - 1.0) > 1e-12:
            raise ArgumentError("weights must be positive and sum to 1")

    @property
    def mean(self) -> float:
        return self.q1 * self.x1 + self.q2 * self.x2


@dataclass(frozen=True)
class ClosedFormParts:
    Lambda_s: float
    E_s1: float
    E_s2: float
    R_0s: float
    V_st: float
    d_minus: float
    d_plus: float
    p1: float
    p2: float
    price: float
    regime: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _diff_sq_integral(v: VolStructure, s: float, t: float, x1: float, x2: float) -> float:
    if t <= s:
        return 0.0
    fac = v.factors
    if fac is not None:
        h = fac[1]
        dh = float(h(np.float64(x2)) - h(np.float64(x1)))
        return v.time_factor_integrals(s, t)[1] * dh * dh
    val, _ = quad(lambda u: float(v(u, x2) - v(u, x1)) ** 2, s, t, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def _log_weight(v: VolStructure, x: float, I, mesh: TimeMesh | None) -> float:
    """``ln E_s(x) = sum_j v(t_j, x) dI_j - 1/2 int_0^s v(u, x)^2 du``."""
    if I is None or len(I) < 2:
        return 0.0
    I = np.asarray(I, dtype=float)
    t = mesh.times[: I.size]
    vs = np.array([float(v(tj, x)) for tj in t[:-1]])
    return float(vs @ np.diff(I)) - 0.5 * float(v.integrate(0.0, t[-1], x)[1])


def binary_call_closed_form(
    m: BinaryModel,
    K: float,
    s: float,
    t: float,
    I=None,
    mesh: TimeMesh | None = None,
    *,
    V_st: float | None = None,
    return_parts: bool = False,
):
    """Time-s value of a call on ``A_t`` under the two-point prior.

    The information path ``I`` on ``mesh`` up to time ``s`` fixes the atom
    weights; ``V_st`` defaults to ``int_s^t [v(u, x2) - v(u, x1)]^2 du``.
    """
    if not 0 <= s <= t:
        raise ArgumentError("need 0 <= s <= t")
    if I is not None and mesh is None:
        raise ArgumentError("an information path needs its mesh")
    if I is not None and abs(mesh.times[len(I) - 1] - s) > 1e-12 * max(1.0, s):
        raise ArgumentError("information path must end at time s")
    l1 = _log_weight(m.v, m.x1, I, mesh)
    l2 = _log_weight(m.v, m.x2, I, mesh)
    shift = max(l1, l2)
    E1, E2 = math.exp(l1), math.exp(l2)
    lnR = l2 - l1
    R = math.exp(lnR)
    Lam = m.q1 * E1 + m.q2 * E2
    # posterior atom weights, written to stay finite for extreme R
    w1 = m.q1 * math.exp(l1 - shift)
    w2 = m.q2 * math.exp(l2 - shift)
    p1, p2 = w1 / (w1 + w2), w2 / (w1 + w2)
    if V_st is None:
        V_st = _diff_sq_integral(m.v, s, t, m.x1, m.x2)
    if V_st < 0:
        raise ArgumentError("V_st must be nonnegative")
    A_s = p1 * m.x1 + p2 * m.x2

    if K <= m.x1 or K >= m.x2 or V_st == 0.0:
        price = max(A_s - K, 0.0)
        regime = "linear" if V_st > 0 else "deterministic"
        dm = -math.inf if A_s > K else math.inf
        dp = dm
    else:
        sv = math.sqrt(V_st)
        L = math.log(m.q1 * (K - m.x1) / (m.q2 * (m.x2 - K))) - lnR
        y = (L + 0.5 * V_st) / sv
        dm = -y
        dp = dm + sv
        price = (m.x1 - K) * p1 * float(ndtr(dm)) + (m.x2 - K) * p2 * float(ndtr(dp))
        price = max(price, 0.0)
        regime = "interior"
    if not return_parts:
        return price
    parts = ClosedFormParts(Lam, E1, E2, R, V_st, dm, dp, p1, p2, price, regime)
    return price, parts
