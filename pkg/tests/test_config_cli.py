import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from condensity.cli import main
from condensity.config import OUTPUT_ENV, apply_overrides, from_dict, load_config
from condensity.errors import ConfigError, IngestionError
from condensity.pricing import bachelier_price
from condensity.runner import compare_runs, ingest_market, run_scenario

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _cfg(name, **over):
    return load_config(CONFIGS / f"{name}.yaml", [f"{k}={v}" for k, v in over.items()])


# --------------------------------------------------------------------------- config


def test_overrides_dotted():
    cfg = _cfg("bachelier", **{"mesh.steps": 50, "seeds.paths": 2})
    assert cfg.mesh.steps == 50 and cfg.seeds.paths == 2
    data = apply_overrides({"a": {"b": 1}}, ["a.c=[1, 2]", "d=x"])
    assert data == {"a": {"b": 1, "c": [1, 2]}, "d": "x"}


@pytest.mark.parametrize(
    "data, field",
    [
        ({"model": "nope"}, "model"),
        ({"mesh": {"T": 1.0, "eps": 2.0}}, "mesh.eps"),
        ({"seeds": {"paths": 0}}, "seeds.paths"),
        ({"grid": {"n": "many"}}, "grid.n"),
        ({"grid": {"wat": 1}}, "grid.wat"),
        ({"prior": {"kind": "market", "path": "missing.csv"}}, "prior.path"),
        ({"prior": {"kind": "mixture", "components": [[0.5, 0.0, -1.0]]}}, "prior.components[0]"),
        ({"model": "binary", "binary": {"q1": 0.7, "q2": 0.7}}, "binary.q2"),
        ({"invariants": ["bogus"]}, "invariants[0]"),
    ],
)
def test_config_errors_name_field(data, field):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.field == field


def test_config_hash_stable():
    a, b = _cfg("filter"), _cfg("filter")
    assert a.config_hash() == b.config_hash()
    assert _cfg("filter", **{"seeds.base": 8}).config_hash() != a.config_hash()


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = _cfg("binary")
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert cfg.output_dir() == CONFIGS / "runs/binary"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cfg.output_dir() == tmp_path / "env"
    assert cfg.output_dir(str(tmp_path / "cli")) == tmp_path / "cli"


# --------------------------------------------------------------------------- runs


def _csv_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_bachelier_run_deterministic(tmp_path):
    cfg = _cfg("bachelier", **{"seeds.paths": 4})
    m1 = run_scenario(cfg, tmp_path / "a")
    m2 = run_scenario(cfg, tmp_path / "b")
    assert m1.passed and m2.passed
    a, b = _csv_bytes(tmp_path / "a"), _csv_bytes(tmp_path / "b")
    assert a and a == b
    assert m1.config_hash == m2.config_hash
    listed = set(m1.artifacts)
    on_disk = {str(p.relative_to(tmp_path / "a")) for p in (tmp_path / "a").rglob("*") if p.is_file()}
    assert on_disk == listed | {"manifest.json"}


def test_filter_run_deterministic(tmp_path):
    cfg = _cfg("filter", **{"seeds.paths": 6, "mesh.steps": 100})
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    assert _csv_bytes(tmp_path / "a") == _csv_bytes(tmp_path / "b")


def test_filter_without_signal(tmp_path):
    m = run_scenario(_cfg("filter_no_signal"), tmp_path)
    assert m.passed
    for p in (tmp_path / "paths").glob("*.csv"):
        A = np.loadtxt(p, delimiter=",", skiprows=1)[:, 3]
        assert np.ptp(A) <= 1e-15
    rows = np.genfromtxt(tmp_path / "smile.csv", delimiter=",", names=True, dtype=None, encoding=None)
    prices = rows["price"].reshape(3, 3)
    np.testing.assert_allclose(prices, np.broadcast_to(prices[0], prices.shape), rtol=0, atol=1e-15)
    # the same prices quoted over a shorter horizon: sigma * sqrt(T - t) is constant
    vols = rows["implied_normal_vol"].reshape(3, 3)
    tau = 1.0 - np.unique(rows["t"])
    np.testing.assert_allclose(vols * np.sqrt(tau)[:, None], np.broadcast_to(vols[0] * np.sqrt(tau[0]), vols.shape), rtol=1e-8)


def test_binary_preset_summary(tmp_path):
    m = run_scenario(_cfg("binary"), tmp_path)
    assert m.passed
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["prices"][0]["price"] == pytest.approx(0.09573, abs=5e-6)
    parts = json.loads((tmp_path / "closed_form_parts.json").read_text())
    assert parts[0]["regime"] == "interior"


def test_bridge_run(tmp_path):
    m = run_scenario(_cfg("bridge", **{"seeds.paths": 3, "mesh.steps": 400}), tmp_path)
    assert m.passed
    assert (tmp_path / "equivalence.json").is_file()


def test_market_prior_run(tmp_path):
    m = run_scenario(_cfg("market", **{"seeds.paths": 5}), tmp_path)
    assert m.passed


def test_runtime_degeneracy_recorded(tmp_path):
    # a prior living entirely outside the state grid's reach underflows
    cfg = _cfg("filter_no_signal", **{"prior.mean": 60.0})
    m = run_scenario(cfg, tmp_path)
    assert m.status == "error" and "Degenerate" in m.error
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "error"


# --------------------------------------------------------------------------- ingestion


def _write_prices(path, strikes, prices):
    path.write_text("strike,price\n" + "".join(f"{float(k)!r},{float(c)!r}\n" for k, c in zip(strikes, prices)))
    return path


def test_ingest_well_formed(tmp_path):
    k = np.linspace(-4, 4, 81)
    snap = ingest_market(_write_prices(tmp_path / "m.csv", k, [bachelier_price(0, K, 1, 1) for K in k]))
    assert snap.strikes.size == 81
    assert snap.report["convex"] and snap.report["non_increasing"]


def test_ingest_shuffled(tmp_path):
    k = np.linspace(-1, 1, 5)
    c = [bachelier_price(0, K, 1, 1) for K in k]
    k[[1, 3]] = k[[3, 1]]
    with pytest.raises(IngestionError) as exc:
        ingest_market(_write_prices(tmp_path / "m.csv", k, c))
    assert exc.value.rows


def test_ingest_concavity_triple(tmp_path):
    k = np.linspace(-1, 1, 9)
    c = np.array([bachelier_price(0, K, 1, 1) for K in k])
    c[4] += 0.05
    with pytest.raises(IngestionError) as exc:
        ingest_market(_write_prices(tmp_path / "m.csv", k, c))
    msg = str(exc.value)
    assert "(-0.25, 0.0, 0.25)" in msg
    assert 6 in exc.value.rows


def test_ingest_bad_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("K;C\n1;2\n")
    with pytest.raises(IngestionError):
        ingest_market(p)


# --------------------------------------------------------------------------- comparison


def test_compare_identical(tmp_path):
    cfg = _cfg("bachelier", **{"seeds.paths": 3})
    m = run_scenario(cfg, tmp_path / "a")
    assert compare_runs(m, tmp_path / "a" / "manifest.json").empty


def test_compare_seeds_flags_stochastic_only(tmp_path):
    a = run_scenario(_cfg("bridge", **{"seeds.paths": 3, "mesh.steps": 200}), tmp_path / "a")
    b = run_scenario(_cfg("bridge", **{"seeds.paths": 3, "mesh.steps": 200, "seeds.base": 12}), tmp_path / "b")
    fields = {e["field"] for e in compare_runs(a, b).entries}
    assert "summary.A_end_mean" in fields
    assert not fields & {"summary.A0", "summary.sigma", "summary.t_end", "summary.n_paths"}


def test_compare_schema_mismatch(tmp_path):
    m = run_scenario(_cfg("binary"), tmp_path)
    other = json.loads((tmp_path / "manifest.json").read_text())
    other["schema"] = 99
    with pytest.raises(ConfigError):
        compare_runs(m, other)


def test_compare_equivalence_within_tolerance(tmp_path):
    cfg = _cfg("bridge", **{"seeds.paths": 2, "mesh.steps": 400})
    m = run_scenario(cfg, tmp_path)
    rep = json.loads((tmp_path / "equivalence.json").read_text())
    assert rep["passed"]
    assert all(s <= b for s, b in zip(rep["sup_norm"], rep["bound"]))
    assert m.invariants["equivalence"]["passed"]


# --------------------------------------------------------------------------- CLI


def test_cli_run_ok(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "binary.yaml"), "--out", str(tmp_path)]) == 0
    assert "pass" in capsys.readouterr().out


def test_cli_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", str(CONFIGS / "binary.yaml")]) == 0
    assert (tmp_path / "env" / "manifest.json").is_file()


def test_cli_config_error(tmp_path, capsys):
    assert main(["run", str(CONFIGS / "binary.yaml"), "--set", "mesh.steps=0", "--out", str(tmp_path)]) == 2
    assert "mesh.steps" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_cli_ingest_codes(tmp_path):
    k = np.linspace(-1, 1, 9)
    c = np.array([bachelier_price(0, K, 1, 1) for K in k])
    assert main(["ingest", str(_write_prices(tmp_path / "ok.csv", k, c))]) == 0
    c[4] += 0.05
    assert main(["ingest", str(_write_prices(tmp_path / "bad.csv", k, c))]) == 3


def test_cli_invariant_failure(tmp_path):
    # an impossible tolerance cannot be configured, so break the smile instead:
    # strikes far out of the money at t near T give intrinsic-only cells
    code = main([
        "run", str(CONFIGS / "bachelier.yaml"), "--out", str(tmp_path),
        "--set", "seeds.paths=2", "--set", "outputs.density_times=[0.999]", "--set", "strikes=[-3.0, 3.0]",
    ])
    assert code == 4


def test_cli_runtime_error(tmp_path):
    code = main(["run", str(CONFIGS / "filter_no_signal.yaml"), "--out", str(tmp_path), "--set", "prior.mean=60"])
    assert code == 1


def test_cli_compare(tmp_path, capsys):
    for d in ("a", "b"):
        main(["run", str(CONFIGS / "binary.yaml"), "--out", str(tmp_path / d)])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a" / "manifest.json"), str(tmp_path / "b" / "manifest.json")]) == 0
    assert json.loads(capsys.readouterr().out)["entries"] == []


def test_cli_selftest_quick(capsys):
    code = main(["selftest"])
    out = capsys.readouterr().out
    assert out.count("\n") >= 9
    assert code in (0, 4)
