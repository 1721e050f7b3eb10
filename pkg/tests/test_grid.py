import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from condensity.errors import ArbitrageError, ArgumentError, DegenerateDensityError
from condensity.grid import (
    DensityGrid,
    MarketSnapshot,
    StateGrid,
    breeden_litzenberger,
    gaussian_density,
    make_grid,
    mean_vol,
    moment,
    normalize,
    read_market_csv,
    recover_density,
    write_density_csv,
    write_market_csv,
)
from condensity.pricing import bachelier_price
from condensity.vol import ConstantInTime, Semilinear


def test_make_grid_three_points():
    g = make_grid(0.0, 1.0, 3)
    np.testing.assert_allclose(g.points, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.25])


def test_make_grid_weight_sum():
    g = make_grid(-5.0, 5.0, 11)
    assert len(g) == 11
    np.testing.assert_allclose(np.diff(g.points), 1.0)
    assert g.weights.sum() == pytest.approx(10.0, abs=1e-12)


@pytest.mark.parametrize("args", [(1.0, 1.0, 5), (2.0, 1.0, 5), (0.0, 1.0, 2), (0.0, math.inf, 5)])
def test_make_grid_rejects_bad_input(args):
    with pytest.raises(ArgumentError):
        make_grid(*args)


def test_state_grid_rejects_unsorted():
    with pytest.raises(ArgumentError):
        StateGrid(np.array([0.0, 2.0, 1.0]))


def test_normalize_constant():
    g = make_grid(0.0, 1.0, 11)
    d = normalize(DensityGrid(g, np.full(11, 2.0)))
    np.testing.assert_allclose(d.values, 1.0, atol=1e-14)


def test_normalize_gaussian_kernel(grid):
    d = normalize(DensityGrid(grid, np.exp(-0.5 * grid.points**2)))
    assert d.mass == pytest.approx(1.0, abs=1e-12)
    assert d.values[1000] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-5)
    assert d.values[1000] == pytest.approx(0.39894, abs=5e-6)


def test_normalize_zero_mass(grid):
    with pytest.raises(DegenerateDensityError):
        normalize(DensityGrid(grid, np.zeros(len(grid))))


def test_normalize_idempotent(std_normal):
    once = normalize(std_normal)
    twice = normalize(once)
    assert np.array_equal(once.values, twice.values)


def test_negative_values_rejected(grid):
    v = np.ones(len(grid))
    v[3] = -1e-3
    with pytest.raises(ArgumentError):
        DensityGrid(grid, v)


def test_moments_of_standard_normal(std_normal):
    assert moment(std_normal, 0) == pytest.approx(1.0, abs=1e-12)
    assert abs(moment(std_normal, 1)) <= 1e-9
    assert moment(std_normal, 2) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ArgumentError):
        moment(std_normal, -1)


def test_moment_narrow_gaussian(grid):
    d = gaussian_density(grid, 3.0, 0.05)
    assert moment(d, 1) == pytest.approx(3.0, abs=1e-4)


def test_mean_vol_constant(grid):
    d = gaussian_density(grid, 0.7, 1.3)
    assert mean_vol(d, ConstantInTime.constant(0.4), 0.2) == pytest.approx(0.4, abs=1e-12)


def test_mean_vol_semilinear(grid):
    v = Semilinear(1.0, 1.0)
    assert abs(mean_vol(gaussian_density(grid, 0.0, 1.0), v, 0.5)) < 1e-12
    d = gaussian_density(grid, 0.3, 1.0)
    assert mean_vol(d, v, 0.5) == pytest.approx(0.6, abs=1e-9)
    assert mean_vol(d, v, 0.5) == pytest.approx(2.0 * moment(d, 1), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    mu=st.floats(-2, 2),
    s=st.floats(0.3, 2),
    sigma=st.floats(0.1, 3),
    t=st.floats(0, 0.95),
)
def test_mean_vol_pull_through(mu, s, sigma, t):
    g = make_grid(-10, 10, 801)
    d = gaussian_density(g, mu, s)
    v = Semilinear(sigma, 1.0)
    assert mean_vol(d, v, t) == pytest.approx(sigma / (1 - t) * moment(d, 1), abs=1e-10 * (1 + sigma / (1 - t)))


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(st.floats(0, 100, allow_subnormal=False), min_size=3, max_size=40).filter(lambda v: sum(v) > 1e-3))
def test_normalize_properties(vals):
    g = make_grid(0.0, 1.0, len(vals))
    d = DensityGrid(g, np.array(vals))
    if d.mass <= 0:
        return
    n = normalize(d)
    assert moment(n, 0) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(normalize(n).values, n.values)
    ratio = n.values[d.values > 0] / d.values[d.values > 0]
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-13)


# --------------------------------------------------------------------------- Breeden-Litzenberger


def _bachelier_snapshot(h):
    k = np.round(np.arange(-4.0, 4.0 + h / 2, h), 12)
    c = np.array([bachelier_price(0.0, K, 1.0, 1.0) for K in k])
    return MarketSnapshot(k, c, 1.0)


def test_bl_roundtrip_bachelier():
    d = breeden_litzenberger(_bachelier_snapshot(0.1))
    err = np.max(np.abs(d.values - norm.pdf(d.x)))
    assert err <= 1e-3


def test_bl_two_point_distribution():
    x1, x2, q1, q2 = -1.0, 1.0, 0.4, 0.6
    k = np.linspace(-2, 2, 41)
    c = q1 * np.maximum(x1 - k, 0) + q2 * np.maximum(x2 - k, 0)
    d = breeden_litzenberger(MarketSnapshot(k, c))
    top = np.sort(np.argsort(d.values)[-2:])
    np.testing.assert_allclose(d.x[top], [x1, x2], atol=1e-12)
    mass_at_kinks = d.grid.weights[top] @ d.values[top]
    assert mass_at_kinks == pytest.approx(1.0, abs=1e-9)


def test_bl_linear_prices_rejected():
    k = np.linspace(-1, 1, 11)
    with pytest.raises((ArbitrageError, DegenerateDensityError)):
        breeden_litzenberger(MarketSnapshot(k, 2.0 - k))


def test_bl_concave_prices_rejected():
    k = np.linspace(-1, 1, 11)
    c = np.maximum(-k, 0) - 0.05 * (1 - k**2)
    with pytest.raises(ArbitrageError):
        breeden_litzenberger(MarketSnapshot(k, c + 2))


def test_bl_convergence_order():
    errs = []
    for h in (0.1, 0.05):
        d = breeden_litzenberger(_bachelier_snapshot(h))
        errs.append(np.max(np.abs(d.values - norm.pdf(d.x))))
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_bl_flags_truncated_mass():
    k = np.linspace(-1, 1, 41)
    c = np.array([bachelier_price(0.0, K, 1.0, 1.0) for K in k])
    _, diag = recover_density(MarketSnapshot(k, c))
    assert diag["flagged"]
    assert diag["outside_mass"] == pytest.approx(1 - (norm.cdf(1) - norm.cdf(-1)), abs=5e-3)


def test_market_csv_roundtrip(tmp_path):
    snap = _bachelier_snapshot(0.5)
    p = tmp_path / "m.csv"
    write_market_csv(snap, p)
    back = read_market_csv(p, 1.0)
    assert np.array_equal(back.strikes, snap.strikes)
    assert np.array_equal(back.call_prices, snap.call_prices)


def test_market_csv_bad_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("K,C\n0,1\n1,0.5\n2,0.2\n")
    with pytest.raises(ArgumentError):
        read_market_csv(p)


def test_density_csv_format(tmp_path, std_normal):
    p = write_density_csv(std_normal, tmp_path / "d.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "x,f"
    x, f = map(float, lines[1001].split(","))
    assert x == std_normal.x[1000] and f == std_normal.values[1000]
