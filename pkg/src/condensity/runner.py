"""Scenario execution, market ingestion and run comparison."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .bridge import (
    bachelier_density,
    bachelier_prior,
    bridge_innovation,
    conditional_means,
    equivalence_check,
    exp_transform,
    lognormal_pdf,
    semilinear_density,
    simulate_scenario,
    transform_density,
    write_scenario_csv,
)
from .config import ScenarioConfig
from .errors import (
    ArbitrageError,
    ArgumentError,
    ConfigError,
    DegenerateDensityError,
    DomainError,
    IngestionError,
    StabilityWarning,
)
from .filtering import TimeMesh, master_equation_euler, path_noise, simulate_batch
from .grid import (
    DensityGrid,
    MarketSnapshot,
    StateGrid,
    breeden_litzenberger,
    gaussian_density,
    make_grid,
    moment,
    normalize,
    read_market_csv,
    write_density_csv,
)
from .pricing import BinaryModel, binary_call_closed_form, call_price, put_call_parity_check, smile
from .vol import ConstantInTime, VolStructure, vol_from_config

SCHEMA = 1


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    artifacts: list
    tool_version: str
    wall_clock_s: float
    invariants: dict
    summary: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    config: dict = field(default_factory=dict)
    schema: int = SCHEMA

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(r["passed"] for r in self.invariants.values())

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def _check(value: float, tol: float, *, z: bool = False) -> dict:
    value = float(value)
    return {"passed": bool(np.isfinite(value) and abs(value) <= tol), "value": value, "tolerance": tol, **({"kind": "z-score"} if z else {})}


def _z(diff: float, se: float) -> float:
    """Standardized deviation; a deterministic quantity has se = 0."""
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= 1e-12 else math.inf


def _skipped(reason: str) -> dict:
    return {"passed": True, "value": None, "tolerance": None, "skipped": reason}


# --------------------------------------------------------------------------- builders


def build_grid(cfg: ScenarioConfig) -> StateGrid:
    return make_grid(cfg.grid.xmin, cfg.grid.xmax, cfg.grid.n)


def build_mesh(cfg: ScenarioConfig) -> TimeMesh:
    m = cfg.mesh
    if m.graded:
        return TimeMesh.graded(m.T, m.eps_T, m.steps)
    return TimeMesh.uniform(m.T - m.eps_T, m.steps)


def build_vol(cfg: ScenarioConfig) -> VolStructure:
    spec = dict(cfg.vol)
    if "T" not in spec and spec.get("kind") == "semilinear":
        spec["T"] = cfg.mesh.T
    if spec.get("kind") == "table" and "path" in spec:
        spec["path"] = str(cfg.resolve(spec["path"]))
    try:
        return vol_from_config(spec)
    except (ArgumentError, DomainError) as exc:
        raise ConfigError(str(exc), "vol") from None


def atoms_density(grid: StateGrid, x1, x2, q1, q2, width) -> DensityGrid:
    """Two narrow Gaussians standing in for point masses."""
    x = grid.points
    f = q1 * np.exp(-0.5 * ((x - x1) / width) ** 2) + q2 * np.exp(-0.5 * ((x - x2) / width) ** 2)
    return normalize(DensityGrid(grid, f / (width * math.sqrt(2 * math.pi))))


def build_prior(cfg: ScenarioConfig, grid: StateGrid) -> DensityGrid:
    p = cfg.prior
    if p.kind == "gaussian":
        return gaussian_density(grid, p.mean, p.std)
    if p.kind == "mixture":
        x = grid.points
        f = sum(w * np.exp(-0.5 * ((x - m) / s) ** 2) / s for w, m, s in p.components)
        return normalize(DensityGrid(grid, f))
    if p.kind == "bachelier":
        return bachelier_prior(grid, 1.0 / (cfg.gamma * cfg.mesh.T), cfg.mesh.T)
    if p.kind == "binary":
        b = cfg.binary
        return atoms_density(grid, b.x1, b.x2, b.q1, b.q2, b.width)
    snap = ingest_market(cfg.resolve(p.path), p.maturity or cfg.mesh.T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = breeden_litzenberger(snap)
    f = np.interp(grid.points, d.x, d.values, left=0.0, right=0.0)
    try:
        return normalize(DensityGrid(grid, f))
    except DegenerateDensityError:
        raise ConfigError("market density has no mass on the state grid", "grid") from None


def _snapshot_indices(cfg: ScenarioConfig, mesh: TimeMesh, default: int = 2) -> list:
    times = cfg.outputs.density_times
    if not times:
        return sorted({int(k) for k in np.linspace(0, mesh.n_steps, default).round()})
    return sorted({int(np.argmin(np.abs(mesh.times - t))) for t in times})


def _write_rows(path: Path, header: str, cols) -> Path:
    rows = np.column_stack(cols)
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(",".join(format(float(c), ".17g") for c in r) + "\n")
    return path


def _mean_se(a) -> tuple[float, float]:
    a = np.asarray(a, dtype=float)
    mean = math.fsum(a) / a.size
    se = float(np.std(a, ddof=1) / math.sqrt(a.size)) if a.size > 1 else math.nan
    return mean, se


# --------------------------------------------------------------------------- models


def _run_filter(cfg, out: Path):
    grid, mesh, v = build_grid(cfg), build_mesh(cfg), build_vol(cfg)
    f0 = build_prior(cfg, grid)
    seed, n = cfg.seeds.base, cfg.seeds.paths
    snaps = _snapshot_indices(cfg, mesh)
    batch = simulate_batch(f0, v, mesh, n, seed, full=True, chunk=cfg.seeds.chunk)
    first = simulate_batch(f0, v, mesh, 1, seed, snapshots=snaps, full=True)
    dens = [DensityGrid(grid, first.snapshots[k][0]) for k in snaps]

    artifacts = []
    pdir = out / "paths"
    pdir.mkdir(parents=True, exist_ok=True)
    for p in range(min(n, cfg.outputs.path_files)):
        artifacts.append(_write_rows(pdir / f"path_{p:05d}.csv", "t,I,W,A,V",
                                     [mesh.times, batch.I[p], batch.W[p], batch.A[p], batch.V[p]]))
    ddir = out / "densities"
    ddir.mkdir(exist_ok=True)
    for k, d in zip(snaps, dens):
        artifacts.append(write_density_csv(d, ddir / f"density_p00000_k{k:06d}.csv"))
    if cfg.strikes and cfg.outputs.smile:
        table = smile(dens, mesh.times[snaps], cfg.strikes, cfg.mesh.T)
        artifacts.append(table.write_csv(out / "smile.csv"))

    A0 = moment(f0, 1)
    a_end, a_se = _mean_se(batch.A[:, -1])
    w_end, w_se = _mean_se(batch.W[:, -1])
    qv = np.sum(np.diff(batch.W, axis=1) ** 2, axis=1)
    summary = {
        "model": "filter",
        "n_paths": n,
        "t_end": mesh.t_end,
        "max_step": mesh.max_step,
        "A0": A0,
        "A_end_mean": a_end,
        "A_end_se": a_se,
        "W_end_mean": w_end,
        "W_end_se": w_se,
        "qv_mean": float(np.mean(qv)),
        "median_abs_A_minus_X": float(np.median(np.abs(batch.A[:, -1] - batch.X))),
        "snapshot_times": mesh.times[snaps].tolist(),
    }

    inv = {}
    names = cfg.invariant_names
    if "normalization" in names:
        inv["normalization"] = _check(max(abs(d.mass - 1) for d in dens), 1e-9)
    if "asset_moment" in names:
        inv["asset_moment"] = _check(max(abs(first.A[0, k] - moment(d, 1)) for k, d in zip(snaps, dens)), 1e-9)
    if "innovation_start" in names:
        inv["innovation_start"] = _check(max(np.max(np.abs(batch.I[:, 0])), np.max(np.abs(batch.W[:, 0]))), 0.0)
    if "martingale" in names:
        inv["martingale"] = _check(_z(a_end - A0, a_se), 3.0, z=True) if n > 1 else _skipped("needs >1 path")
    if "parity" in names:
        ks = cfg.strikes or [A0]
        inv["parity"] = _check(max(abs(put_call_parity_check(d, k)) for d in dens for k in ks), 1e-10)
    if "euler_mass" in names:
        if mesh.max_step > 1e-3:
            inv["euler_mass"] = _skipped("mesh step above 1e-3")
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", StabilityWarning)
                e = master_equation_euler(f0, v, batch.W[0], mesh, renormalize=False)
            inv["euler_mass"] = _check(np.max(np.abs(e.mass_before - 1.0)), 1e-3)
            summary["euler_clipped_mass"] = e.clipped_fraction
    return artifacts, summary, inv


def _run_bridge(cfg, out: Path):
    grid, mesh, v = build_grid(cfg), build_mesh(cfg), build_vol(cfg)
    f0 = build_prior(cfg, grid)
    sigma, T = v.sigma, cfg.mesh.T
    seed, n = cfg.seeds.base, cfg.seeds.paths
    artifacts = []
    sdir = out / "scenarios"
    sdir.mkdir(parents=True, exist_ok=True)
    qv, a_end, w0 = [], [], 0.0
    for p in range(n):
        sc = simulate_scenario(f0, sigma, T, mesh, seed, p)
        A = conditional_means(sc, f0)
        W = bridge_innovation(sc, f0, A)
        qv.append(float(np.sum(np.diff(W) ** 2)))
        a_end.append(A[-1])
        w0 = max(w0, abs(W[0]))
        if p < cfg.outputs.path_files:
            artifacts.append(write_scenario_csv(sdir / f"scenario_{p:05d}.csv", sc, f0))
        if p == 0:
            first = sc
    snaps = _snapshot_indices(cfg, mesh)
    dens = [semilinear_density(f0, sigma, T, first.xi[k], mesh.times[k]) for k in snaps]
    A0 = moment(f0, 1)
    m, se = _mean_se(a_end)
    summary = {"model": "bridge", "n_paths": n, "sigma": sigma, "A0": A0, "A_end_mean": m,
               "A_end_se": se, "qv_mean": float(np.mean(qv)), "t_end": mesh.t_end}

    inv = {}
    names = cfg.invariant_names
    if "normalization" in names:
        inv["normalization"] = _check(max(abs(d.mass - 1) for d in dens), 1e-9)
    if "innovation_start" in names:
        inv["innovation_start"] = _check(w0, 0.0)
    if "bachelier_match" in names:
        gauss = cfg.prior.kind == "bachelier" or (
            cfg.prior.kind == "gaussian" and cfg.prior.mean == 0.0
            and abs(cfg.prior.std * sigma * math.sqrt(T) - 1) < 1e-12
        )
        if gauss:
            gamma = 1.0 / (sigma * T)
            err = max(np.max(np.abs(d.values - bachelier_density(gamma, first.xi[k], mesh.times[k], T, grid).values))
                      for k, d in zip(snaps, dens))
            inv["bachelier_match"] = _check(err, 1e-6)
        else:
            inv["bachelier_match"] = _skipped("prior is not the Bachelier Gaussian")
    if "equivalence" in names:
        X, B = path_noise(f0, mesh, seed, 0)
        rep = equivalence_check(f0, sigma, T, B[0], float(X[0]), mesh)
        (out / "equivalence.json").write_text(rep.to_json() + "\n")
        artifacts.append(out / "equivalence.json")
        inv["equivalence"] = {"passed": rep.passed, "value": float(np.max(rep.sup_norm)),
                              "tolerance": float(np.max(rep.bound))}
        summary["equivalence_sup_norm"] = float(np.max(rep.sup_norm))
    return artifacts, summary, inv


def _run_bachelier(cfg, out: Path):
    grid, mesh = build_grid(cfg), build_mesh(cfg)
    gamma, T = cfg.gamma, cfg.mesh.T
    sigma = 1.0 / (gamma * T)
    f0 = bachelier_prior(grid, sigma, T)
    seed, n = cfg.seeds.base, cfg.seeds.paths
    snaps = _snapshot_indices(cfg, mesh, default=10)
    artifacts = []
    pdir = out / "paths"
    pdir.mkdir(parents=True, exist_ok=True)
    a_end = []
    for p in range(n):
        sc = simulate_scenario(f0, sigma, T, mesh, seed, p)
        W = sc.xi  # the bridge information is itself the innovation here
        a_end.append(gamma * W[-1])
        if p < cfg.outputs.path_files:
            artifacts.append(_write_rows(pdir / f"path_{p:05d}.csv", "t,W,A", [mesh.times, W, gamma * W]))
        if p == 0:
            first = sc
    times = mesh.times[snaps]
    dens = [bachelier_density(gamma, first.xi[k], mesh.times[k], T, grid) for k in snaps]
    summary = {"model": "bachelier", "n_paths": n, "gamma": gamma, "A_end_mean": _mean_se(a_end)[0],
               "snapshot_times": times.tolist()}
    table = None
    if cfg.strikes:
        table = smile(dens, times, cfg.strikes, T)
        if cfg.outputs.smile:
            artifacts.append(table.write_csv(out / "smile.csv"))
        summary["smile_spread"] = table.spread

    inv = {}
    names = cfg.invariant_names
    if "normalization" in names:
        inv["normalization"] = _check(max(abs(d.mass - 1) for d in dens), 1e-9)
    if "bachelier_match" in names:
        err = max(np.max(np.abs(semilinear_density(f0, sigma, T, first.xi[k], mesh.times[k]).values - d.values))
                  for k, d in zip(snaps, dens))
        inv["bachelier_match"] = _check(err, 1e-6)
    if "smile_flat" in names:
        if table is None:
            inv["smile_flat"] = _skipped("no strikes configured")
        else:
            flagged = int(np.sum(table.flags != ""))
            inv["smile_flat"] = _check(table.spread if not flagged else math.inf, 1e-4)
            inv["smile_flat"]["max_abs_vol_error"] = float(np.max(np.abs(table.vols - gamma)))
    if "transform_lognormal" in names:
        err = 0.0
        for k, d in zip(snaps, dens):
            g = transform_density(d, exp_transform())
            s = gamma * math.sqrt(T - mesh.times[k])
            err = max(err, float(np.max(np.abs(g.values - lognormal_pdf(g.x, gamma * first.xi[k], s)))))
        inv["transform_lognormal"] = _check(err, 1e-6)
    if "parity" in names:
        ks = cfg.strikes or [0.0]
        inv["parity"] = _check(max(abs(put_call_parity_check(d, k)) for d in dens for k in ks), 1e-10)
    return artifacts, summary, inv


def binary_oracle(model: BinaryModel, K: float, t: float, n_paths: int, seed: int, width: float,
                  grid: StateGrid | None = None, chunk: int = 2000) -> tuple[float, float]:
    """Monte Carlo value of ``E[(A_t - K)^+]`` with narrow-Gaussian atoms.

    Runs widths ``w`` and ``w/2`` on common random numbers and combines them
    as ``(4 P(w/2) - P(w)) / 3`` path by path. Returns ``(estimate, se)``.
    """
    if grid is None:
        pad = 10 * width
        h = width / 20
        grid = make_grid(model.x1 - pad, model.x2 + pad, int(round((model.x2 - model.x1 + 2 * pad) / h)) + 1)
    if isinstance(model.v, ConstantInTime):
        # one step is exact when v does not depend on time
        mesh = TimeMesh.uniform(t, 1)
    else:
        mesh = TimeMesh.uniform(t, 400)
    payoff = []
    for w in (width, width / 2):
        f0 = atoms_density(grid, model.x1, model.x2, model.q1, model.q2, w)
        r = simulate_batch(f0, model.v, mesh, n_paths, seed, snapshots=[mesh.n_steps], full=False, chunk=chunk)
        payoff.append(np.maximum(r.A_snap[mesh.n_steps] - K, 0.0))
    est = (4.0 * payoff[1] - payoff[0]) / 3.0
    return _mean_se(est)


def _run_binary(cfg, out: Path):
    b = cfg.binary
    spec = dict(cfg.vol)
    v = build_vol(cfg)
    model = BinaryModel(b.x1, b.x2, b.q1, b.q2, v)
    I = mesh = None
    if b.s > 0:
        mesh = TimeMesh.uniform(b.s, cfg.mesh.steps)
        g = _rng.path_rng(cfg.seeds.base, 0, _rng.TERMINAL)
        X = b.x1 if g.random() < b.q1 else b.x2
        dB = _rng.path_rng(cfg.seeds.base, 0, _rng.NOISE).standard_normal(mesh.n_steps) * np.sqrt(mesh.dt)
        drift = np.array([v.integrate(0.0, t, X)[0] for t in mesh.times])
        I = np.concatenate([[0.0], np.cumsum(dB)]) + drift
    strikes = cfg.strikes or [0.5 * (b.x1 + b.x2)]
    rows, parts_out = [], []
    for K in strikes:
        price, parts = binary_call_closed_form(model, K, b.s, b.t, I, mesh, V_st=b.V, return_parts=True)
        rows.append({"K": float(K), "price": price})
        parts_out.append({"K": float(K), **asdict(parts)})
    (out / "closed_form_parts.json").write_text(json.dumps(parts_out, indent=2, sort_keys=True) + "\n")
    artifacts = [out / "closed_form_parts.json"]
    summary = {"model": "binary", "prices": rows, "vol": spec}

    inv = {}
    names = cfg.invariant_names
    if "price_bounds" in names:
        worst = 0.0
        for (r, p) in zip(rows, parts_out):
            A_s = p["p1"] * b.x1 + p["p2"] * b.x2
            lo, hi = max(A_s - r["K"], 0.0), max(b.x2 - r["K"], 0.0)
            worst = max(worst, lo - r["price"], r["price"] - hi)
        inv["price_bounds"] = _check(max(worst, 0.0), 1e-12)
    if "parity" in names:
        grid = build_grid(cfg)
        d = atoms_density(grid, b.x1, b.x2, b.q1, b.q2, b.width)
        inv["parity"] = _check(max(abs(put_call_parity_check(d, k)) for k in strikes), 1e-10)
    if "mc_oracle" in names:
        if b.oracle_paths < 2 or b.s > 0 or b.V is not None:
            inv["mc_oracle"] = _skipped("oracle runs for s = 0 with V from the structure and oracle_paths > 1")
        else:
            zs = []
            for r in rows:
                est, se = binary_oracle(model, r["K"], b.t, b.oracle_paths, cfg.seeds.base, b.width)
                r["oracle"], r["oracle_se"] = est, se
                zs.append(_z(est - r["price"], se))
            inv["mc_oracle"] = _check(max(zs, key=abs), 3.0, z=True)
    return artifacts, summary, inv


_RUNNERS = {"filter": _run_filter, "bridge": _run_bridge, "bachelier": _run_bachelier, "binary": _run_binary}


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> RunManifest:
    """Run the configured model, write its artifacts and ``manifest.json``."""
    out = cfg.output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status, error = "ok", None
    try:
        artifacts, summary, inv = _RUNNERS[cfg.model](cfg, out)
    except (DegenerateDensityError, DomainError, ArbitrageError) as exc:
        artifacts, summary, inv = [], {}, {}
        status, error = "error", f"{type(exc).__name__}: {exc}"
    if status == "ok" and not all(r["passed"] for r in inv.values()):
        status = "invariant_failure"
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps({"seed": cfg.seeds.base, **summary}, indent=2, sort_keys=True,
                                       default=_json_default) + "\n")
    artifacts = [summary_path, *artifacts]
    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        seed=cfg.seeds.base,
        artifacts=sorted(str(Path(a).relative_to(out)) for a in artifacts),
        tool_version=__version__,
        wall_clock_s=time.perf_counter() - t0,
        invariants=inv,
        summary=json.loads(json.dumps(summary, default=_json_default)),
        status=status,
        error=error,
        config=cfg.to_dict(),
    )
    manifest.write(out / "manifest.json")
    return manifest


# --------------------------------------------------------------------------- ingestion


def ingest_market(path, maturity: float = 1.0) -> MarketSnapshot:
    """Validated call-price snapshot; ``snapshot.report`` holds the convexity report.

    Schema problems, unsorted strikes and static-arbitrage violations raise
    :class:`IngestionError` with the offending CSV rows (header is row 1).
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    with path.open(newline="") as fh:
        raw = list(csv.reader(fh))
    body = [(i, r) for i, r in enumerate(raw[1:], start=2) if r and any(c.strip() for c in r)]
    bad = []
    for i, r in body:
        try:
            if len(r) != 2 or not all(np.isfinite([float(r[0]), float(r[1])])):
                bad.append(i)
        except ValueError:
            bad.append(i)
    if not raw or [c.strip() for c in raw[0]] != ["strike", "price"]:
        raise IngestionError(f"{path}: header must be 'strike,price'", [1])
    if bad:
        raise IngestionError(f"{path}: malformed rows {bad}", bad)
    strikes = np.array([float(r[0]) for _, r in body])
    rownum = [i for i, _ in body]
    order = np.flatnonzero(np.diff(strikes) <= 0)
    if order.size:
        rows = sorted({rownum[j] for i in order for j in (i, i + 1)})
        raise IngestionError(f"{path}: strikes not strictly increasing at rows {rows}", rows)
    try:
        snap = read_market_csv(path, maturity)
    except ArgumentError as exc:
        raise IngestionError(str(exc), rownum) from None
    report = snap.convexity_report()
    if not (report["convex"] and report["non_increasing"]):
        k = list(snap.strikes)
        rows = sorted(
            {rownum[k.index(s)] for tri in report["concave_triples"] for s in tri}
            | {rownum[k.index(s)] for pair in report["increasing_pairs"] for s in pair}
        )
        parts = []
        if report["concave_triples"]:
            parts.append(f"concave at strike triples {report['concave_triples']}")
        if report["increasing_pairs"]:
            parts.append(f"increasing between strikes {report['increasing_pairs']}")
        raise IngestionError(f"{path}: " + "; ".join(parts), rows)
    object.__setattr__(snap, "report", report)
    return snap


# --------------------------------------------------------------------------- comparison


@dataclass
class DiffReport:
    entries: list
    only_in_a: list
    only_in_b: list
    seeds: tuple
    config_hashes: tuple

    @property
    def empty(self) -> bool:
        return not self.entries

    def to_dict(self) -> dict:
        return asdict(self)


def _flatten(tree, prefix="") -> dict:
    out = {}
    if isinstance(tree, dict):
        for k, v in tree.items():
            out.update(_flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(tree, list):
        for i, v in enumerate(tree):
            out.update(_flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = tree
    return out


def _load_manifest(m) -> dict:
    if isinstance(m, RunManifest):
        return asdict(m)
    if isinstance(m, dict):
        return m
    return json.loads(Path(m).read_text())


def compare_runs(a, b, *, rtol: float = 1e-9, atol: float = 1e-12, tolerances: dict | None = None) -> DiffReport:
    """Field-by-field differences between the summaries and invariant values of two runs.

    ``tolerances`` maps a flattened field name (``summary.A_end_mean``) to an
    absolute tolerance overriding ``rtol``/``atol``. Only out-of-tolerance
    fields are listed.
    """
    ma, mb = _load_manifest(a), _load_manifest(b)
    if ma.get("schema") != mb.get("schema"):
        raise ConfigError(f"manifest schema mismatch: {ma.get('schema')} vs {mb.get('schema')}")
    tolerances = tolerances or {}
    fa = _flatten({"summary": ma.get("summary", {}), "invariants": ma.get("invariants", {})})
    fb = _flatten({"summary": mb.get("summary", {}), "invariants": mb.get("invariants", {})})
    entries = []
    for key in sorted(set(fa) & set(fb)):
        x, y = fa[key], fb[key]
        num = all(isinstance(z, (int, float)) and not isinstance(z, bool) for z in (x, y))
        if num:
            tol = tolerances.get(key, atol + rtol * max(abs(x), abs(y)))
            diff = abs(x - y)
            if not (diff <= tol or (math.isnan(x) and math.isnan(y))):
                entries.append({"field": key, "a": x, "b": y, "abs_diff": diff, "tolerance": tol})
        elif x != y:
            entries.append({"field": key, "a": x, "b": y, "abs_diff": None, "tolerance": None})
    return DiffReport(
        entries,
        sorted(set(fa) - set(fb)),
        sorted(set(fb) - set(fa)),
        (ma.get("seed"), mb.get("seed")),
        (ma.get("config_hash"), mb.get("config_hash")),
    )
