"""End-to-end checks of the model invariants.

Each ``check_*`` function runs one experiment and returns its raw metrics;
thresholds are applied by the caller (the acceptance tests and the
``selftest`` CLI verb). Sizes are parameters so a quick variant can run in
seconds.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
from scipy.stats import norm

from .bridge import (
    bachelier_density,
    bachelier_prior,
    equivalence_check,
    exp_transform,
    lognormal_pdf,
    semilinear_density,
    simulate_scenario,
    transform_density,
)
from .errors import StabilityWarning
from .filtering import TimeMesh, master_equation_euler, path_noise, simulate_batch
from .grid import DensityGrid, MarketSnapshot, gaussian_density, make_grid, normalize, recover_density
from .pricing import BinaryModel, binary_call_closed_form, call_price, smile
from .runner import binary_oracle
from .vol import ConstantInTime, Semilinear


def mixture_prior(grid):
    """Skewed two-component prior used where a non-Gaussian f0 is wanted."""
    x = grid.points
    f = 0.6 * np.exp(-0.5 * ((x + 0.5) / 0.6) ** 2) / 0.6 + 0.4 * np.exp(-0.5 * ((x - 1.0) / 0.8) ** 2) / 0.8
    return normalize(DensityGrid(grid, f))


def check_bachelier_equivalence(n_grid=2001, n_times=20, sigma=1.0, T=1.0, seed=11) -> dict:
    t0 = time.perf_counter()
    grid = make_grid(-8, 8, n_grid)
    f0 = bachelier_prior(grid, sigma, T)
    gamma = 1.0 / (sigma * T)
    mesh = TimeMesh.uniform(T * (1 - 1e-3), n_times - 1)
    sc = simulate_scenario(f0, sigma, T, mesh, seed)
    sup = 0.0
    for t, xi in zip(mesh.times, sc.xi):
        a = semilinear_density(f0, sigma, T, xi, t).values
        b = bachelier_density(gamma, xi, t, T, grid).values
        sup = max(sup, float(np.max(np.abs(a - b))))
    return {"sup_norm": sup, "n_times": mesh.times.size, "seconds": time.perf_counter() - t0}


def check_filter_bridge_equivalence(finest_steps=5000, levels=4, t_end=0.5, seeds=(3, 5, 8), n_grid=2001) -> dict:
    """Sup-norm gap at ``t_end`` on shared noise, at the finest step and across halvings."""
    t0 = time.perf_counter()
    sigma, T = 1.0, 1.0
    grid = make_grid(-8, 8, n_grid)
    f0 = bachelier_prior(grid, sigma, T)
    fine = TimeMesh.uniform(t_end, finest_steps)
    factors = [2 ** j for j in range(levels - 1, -1, -1)]
    errs = np.empty((len(seeds), len(factors)))
    for i, s in enumerate(seeds):
        X, B = path_noise(f0, fine, s, 0)
        for j, f in enumerate(factors):
            m = fine.coarsen(f)
            rep = equivalence_check(f0, sigma, T, B[0, ::f], float(X[0]), m, report_indices=[m.n_steps])
            errs[i, j] = rep.sup_norm[0]
    orders = np.log2(errs[:, :-1] / errs[:, 1:])
    return {
        "dt": [t_end / (finest_steps / f) for f in factors],
        "sup_norm": errs.tolist(),
        "sup_norm_finest": float(errs[:, -1].max()),
        "orders": orders.tolist(),
        "min_order": float(orders.min()),
        "seconds": time.perf_counter() - t0,
    }


BINARY_POINTS = ((0.5, 1.0), (0.3, 0.5), (0.7, 2.0))


def check_binary(n_paths=100_000, width=0.01, seed=2024, points=BINARY_POINTS) -> dict:
    t0 = time.perf_counter()
    worked = binary_call_closed_form(BinaryModel(0.0, 1.0, 0.5, 0.5, ConstantInTime.linear(1.0)), 0.5, 0.0, 1.0)
    hand = 0.25 * (norm.cdf(0.5) - norm.cdf(-0.5))
    rows = []
    for K, V in points:
        m = BinaryModel(0.0, 1.0, 0.5, 0.5, ConstantInTime.linear(math.sqrt(V)))
        cf = binary_call_closed_form(m, K, 0.0, 1.0)
        est, se = binary_oracle(m, K, 1.0, n_paths, seed, width)
        rows.append({"K": K, "V": V, "closed_form": cf, "mc": est, "se": se, "z": (est - cf) / se})
    return {"worked_example": worked, "hand_value": hand, "points": rows,
            "max_abs_z": max(abs(r["z"]) for r in rows), "seconds": time.perf_counter() - t0}


def check_martingale(n_paths=10_000, steps=900, seed=7, n_grid=2001) -> dict:
    t0 = time.perf_counter()
    grid = make_grid(-8, 8, n_grid)
    f0 = mixture_prior(grid)
    v = Semilinear(1.0, 1.0)
    mesh = TimeMesh.uniform(0.9, steps)
    snaps = [steps // 3, 2 * steps // 3, steps]
    nodes = [int(np.argmin(np.abs(grid.points - x))) for x in (-1.5, -0.5, 0.0, 1.0, 2.0)]
    res = simulate_batch(f0, v, mesh, n_paths, seed, snapshots=snaps, full=False, chunk=1000)
    A0 = f0.integrate(f0.x)
    zf, za = [], []
    for k in snaps:
        vals = res.snapshots[k][:, nodes]
        se = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
        zf.append(((vals.mean(axis=0) - f0.values[nodes]) / se).tolist())
        a = res.A_snap[k]
        za.append(float((a.mean() - A0) / (a.std(ddof=1) / math.sqrt(n_paths))))
    zf = np.array(zf)
    return {"times": mesh.times[snaps].tolist(), "nodes": grid.points[nodes].tolist(), "z_density": zf.tolist(),
            "z_asset": za, "max_abs_z_density": float(np.abs(zf).max()), "max_abs_z_asset": float(np.max(np.abs(za))),
            "seconds": time.perf_counter() - t0}


def check_euler_mass(dts=(1e-3, 5e-4), n_paths=8, seed=5, n_grid=2001) -> dict:
    """Mass drift of the un-renormalized Euler scheme driven by simulated innovations."""
    t0 = time.perf_counter()
    grid = make_grid(-8, 8, n_grid)
    f0 = mixture_prior(grid)
    v = Semilinear(1.0, 1.0)
    out = []
    for dt in dts:
        mesh = TimeMesh.uniform(0.9, int(round(0.9 / dt)))
        res = simulate_batch(f0, v, mesh, n_paths, seed)
        worst, clipped = 0.0, 0.0
        for p in range(n_paths):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", StabilityWarning)
                e = master_equation_euler(f0, v, res.W[p], mesh, renormalize=False)
            worst = max(worst, float(np.max(np.abs(e.mass_before - 1.0))))
            clipped = max(clipped, e.clipped_fraction)
        out.append({"dt": mesh.max_step, "max_mass_drift": worst, "max_clipped": clipped})
    return {"runs": out, "max_mass_drift": max(r["max_mass_drift"] for r in out),
            "seconds": time.perf_counter() - t0}


def check_terminal(n_paths=1000, steps=300, seed=13, n_grid=4001) -> dict:
    """Median |A - X| at T - eps for eps in {0.1, 0.01, 0.001} T on one graded mesh."""
    t0 = time.perf_counter()
    T = 1.0
    grid = make_grid(-8, 8, n_grid)
    f0 = mixture_prior(grid)
    v = Semilinear(1.0, T)
    mesh = TimeMesh.graded(T, 1e-3 * T, steps)
    idx = [steps // 3, 2 * steps // 3, steps]
    res = simulate_batch(f0, v, mesh, n_paths, seed, snapshots=idx, full=False)
    eps = [T - mesh.times[k] for k in idx]
    med = [float(np.median(np.abs(res.A_snap[k] - res.X))) for k in idx]
    return {"eps": eps, "median_abs_error": med,
            "scaled": [m / math.sqrt(e) for m, e in zip(med, eps)],
            "seconds": time.perf_counter() - t0}


def bl_roundtrip(step: float, lo=-4.0, hi=4.0) -> dict:
    """N(0,1) density -> call prices (density quadrature) -> recovered density."""
    fine = gaussian_density(make_grid(-10, 10, 20001), 0.0, 1.0)
    strikes = np.arange(lo, hi + step / 2, step)
    prices = np.array([call_price(fine, k) for k in strikes])
    d, diag = recover_density(MarketSnapshot(strikes, prices))
    exact = np.exp(-0.5 * strikes**2) / math.sqrt(2 * math.pi)
    return {"step": step, "linf": float(np.max(np.abs(d.values - exact))), **diag}


def check_breeden_litzenberger(steps=(0.1, 0.05)) -> dict:
    runs = [bl_roundtrip(s) for s in steps]
    orders = [math.log2(a["linf"] / b["linf"]) / math.log2(sa / sb)
              for a, b, sa, sb in zip(runs, runs[1:], steps, steps[1:])]
    return {"runs": runs, "linf_coarse": runs[0]["linf"], "orders": orders}


def check_smile(n_grid=4001, seed=17, gamma=1.0, T=1.0) -> dict:
    t0 = time.perf_counter()
    grid = make_grid(-8, 8, n_grid)
    sigma = 1.0 / (gamma * T)
    f0 = bachelier_prior(grid, sigma, T)
    mesh = TimeMesh.uniform(0.9 * T, 9)
    sc = simulate_scenario(f0, sigma, T, mesh, seed)
    dens = [bachelier_density(gamma, w, t, T, grid) for t, w in zip(mesh.times, sc.xi)]
    table = smile(dens, mesh.times, np.linspace(-1, 1, 21) * gamma, T)
    lognormal = 0.0
    for t, w, d in zip(mesh.times, sc.xi, dens):
        g = transform_density(d, exp_transform())
        lognormal = max(lognormal, float(np.max(np.abs(g.values - lognormal_pdf(g.x, gamma * w, gamma * math.sqrt(T - t))))))
    return {"shape": list(table.vols.shape), "spread": float(np.ptp(table.vols)),
            "flagged": int(np.sum(table.flags != "")), "max_abs_vol_error": float(np.max(np.abs(table.vols - gamma))),
            "lognormal_sup_norm": lognormal, "seconds": time.perf_counter() - t0}


def check_innovation(n_paths=16, steps=10_000, seed=19, n_grid=2001, chunk=4) -> dict:
    """Quadratic variation and lag-1 autocorrelation of the innovation on [0, 0.9 T]."""
    t0 = time.perf_counter()
    grid = make_grid(-8, 8, n_grid)
    f0 = mixture_prior(grid)
    v = Semilinear(1.0, 1.0)
    mesh = TimeMesh.uniform(0.9, steps)
    res = simulate_batch(f0, v, mesh, n_paths, seed, chunk=chunk)
    dW = np.diff(res.W, axis=1)
    qv = np.sum(dW**2, axis=1)
    z = dW / np.sqrt(mesh.dt)
    z = z - z.mean()
    rho = float(np.sum(z[:, 1:] * z[:, :-1]) / np.sum(z * z))
    n_pairs = z[:, 1:].size
    return {"qv": qv.tolist(), "max_rel_qv_error": float(np.max(np.abs(qv / 0.9 - 1))), "rho": rho,
            "rho_bound": 3 / math.sqrt(n_pairs), "seconds": time.perf_counter() - t0}


QUICK = {
    "bachelier": {},
    "equivalence": {"finest_steps": 1000, "levels": 3, "seeds": (3,)},
    "binary": {"n_paths": 10_000},
    "martingale": {"n_paths": 2000, "steps": 300},
    "euler": {"dts": (1e-3,), "n_paths": 2},
    "terminal": {"n_paths": 300},
    "bl": {},
    "smile": {},
    "innovation": {"n_paths": 4, "steps": 4000},
}


def run_selftest(quick: bool = True) -> list:
    """Run every check and apply the acceptance thresholds; returns ``(name, ok, detail)`` rows."""
    kw = QUICK if quick else {k: {} for k in QUICK}
    rows = []

    r = check_bachelier_equivalence(**kw["bachelier"])
    rows.append(("bachelier_equivalence", r["sup_norm"] <= 1e-6, f"sup={r['sup_norm']:.2e}"))
    r = check_filter_bridge_equivalence(**kw["equivalence"])
    rows.append(("filter_bridge_equivalence", r["min_order"] >= 1.0 and (quick or r["sup_norm_finest"] <= 1e-4),
                 f"sup={r['sup_norm_finest']:.2e} min_order={r['min_order']:.5f}"))
    r = check_binary(**kw["binary"])
    rows.append(("binary_closed_form", abs(r["worked_example"] - 0.09573) < 5e-6 and r["max_abs_z"] <= 3,
                 f"C={r['worked_example']:.5f} max|z|={r['max_abs_z']:.2f}"))
    r = check_martingale(**kw["martingale"])
    rows.append(("martingale", max(r["max_abs_z_density"], r["max_abs_z_asset"]) <= 3,
                 f"max|z| f={r['max_abs_z_density']:.2f} A={r['max_abs_z_asset']:.2f}"))
    r = check_euler_mass(**kw["euler"])
    rows.append(("euler_normalization", r["max_mass_drift"] <= 1e-3, f"drift={r['max_mass_drift']:.2e}"))
    r = check_terminal(**kw["terminal"])
    m = r["median_abs_error"]
    rows.append(("terminal_convergence", m[0] > m[1] > m[2], "medians=" + ", ".join(f"{v:.3g}" for v in m)))
    r = check_breeden_litzenberger(**kw["bl"])
    rows.append(("breeden_litzenberger", r["linf_coarse"] <= 1e-3 and r["orders"][0] >= 1.8,
                 f"linf={r['linf_coarse']:.2e} order={r['orders'][0]:.2f}"))
    r = check_smile(**kw["smile"])
    rows.append(("smile", r["spread"] <= 1e-4 and r["lognormal_sup_norm"] <= 1e-6 and not r["flagged"],
                 f"spread={r['spread']:.2e} lognormal={r['lognormal_sup_norm']:.2e}"))
    r = check_innovation(**kw["innovation"])
    rows.append(("innovation", r["max_rel_qv_error"] <= 0.05 and abs(r["rho"]) < r["rho_bound"],
                 f"qv_err={r['max_rel_qv_error']:.3f} rho={r['rho']:.4f}"))
    return rows
