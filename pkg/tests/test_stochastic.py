import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rgpf.dataset import Dataset
from rgpf.errors import BreakdownExceededError, ConfigError, InputShapeError
from rgpf.gp import ModelSpec, predict, train
from rgpf.stochastic import (PV_DEFAULT, WIND_DEFAULT, DistributionSpec, OutlierSpec, Protocol, SeriesSpec,
                             case_simulator, contamination_sweep, generate_datasets, generate_profiles,
                             inject_outliers, instance_from_loads, lhs_sample, mae, monte_carlo,
                             monte_carlo_reference, rmse, substream, sweep_means, write_sweep_csv)


def test_lhs_stratification():
    u = lhs_sample([DistributionSpec.uniform()], 4, 0)[:, 0]
    assert sorted(np.floor(u * 4).astype(int)) == [0, 1, 2, 3]


def test_lhs_means():
    w = lhs_sample([WIND_DEFAULT], 1000, 1)[:, 0]
    assert w.mean() == pytest.approx(7.1 * math.gamma(1 + 1 / 2.06), rel=0.02)
    b = lhs_sample([PV_DEFAULT], 1000, 2)[:, 0]
    assert b.mean() == pytest.approx(2.06 / 4.56, rel=0.02)


@pytest.mark.parametrize("spec", [WIND_DEFAULT, PV_DEFAULT, DistributionSpec.gaussian(3.0, 0.5),
                                  DistributionSpec.student_t(10)], ids=lambda s: s.kind)
def test_lhs_marginals_ks(spec):
    s = lhs_sample([spec], 1000, 3)[:, 0]
    assert stats.kstest(s, spec.frozen().cdf).statistic < 0.05


def test_lhs_reproducible_and_substreams():
    specs = [WIND_DEFAULT, PV_DEFAULT]
    assert np.array_equal(lhs_sample(specs, 50, 9), lhs_sample(specs, 50, 9))
    assert not np.array_equal(lhs_sample(specs, 50, 9), lhs_sample(specs, 50, 10))
    a = substream(5, "lhs", 0).random(3)
    assert np.array_equal(a, substream(5, "lhs", 0).random(3))
    assert not np.array_equal(a, substream(5, "lhs", 1).random(3))
    assert not np.array_equal(a, substream(5, "outliers", 0).random(3))
    with pytest.raises(ConfigError):
        lhs_sample(specs, 0, 1)


def test_distribution_specs():
    assert DistributionSpec.constant(2.5).ppf([0.1, 0.9]).tolist() == [2.5, 2.5]
    d = DistributionSpec.from_dict(WIND_DEFAULT.to_dict())
    assert d == WIND_DEFAULT
    assert PV_DEFAULT.mean() == pytest.approx(2.06 / 4.56)
    with pytest.raises(ConfigError):
        DistributionSpec.weibull(-1.0, 2.0)
    with pytest.raises(ConfigError):
        DistributionSpec("cauchy", {})


def test_profiles_shape_and_seed(ieee33):
    p, q, res = generate_profiles(ieee33, 20, 3)
    assert p.shape == q.shape == res.shape == (20, 33)
    p2, _, _ = generate_profiles(ieee33, 20, 3)
    assert np.array_equal(p, p2)
    assert np.all(res >= 0)
    cap = {u.bus: u.capacity_kw for u in ieee33.res}
    for bus, c in cap.items():
        assert res[:, ieee33.index[bus]].max() <= c


def test_generate_datasets_split(ieee33):
    tr, te = generate_datasets(ieee33, 30, 10, ["vmag_19", "vang_19"], 4)
    assert tr.X.shape == (30, 66) and te.X.shape == (10, 66)
    assert tr.timestamps[0] == 1 and te.timestamps[0] == 31
    noisy, _ = generate_datasets(ieee33, 30, 10, ["vmag_19"], 4, SeriesSpec(measurement_noise=0.5))
    assert np.array_equal(noisy.X, tr.X)
    assert not np.array_equal(noisy.Y[:, 0], tr.Y[:, 0])


def _toy(n=40, d=3, m=1, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(np.arange(1, n + 1), rng.normal(size=(n, d)), rng.normal(size=(n, m)))


def test_inject_prefix_rows():
    ds = _toy(150)
    out, mask = inject_outliers(ds, OutlierSpec(fraction=0.25), 0)
    assert mask.indices.tolist() == list(range(37))
    assert np.all(mask.inputs[:37]) and not mask.inputs[37:].any()
    assert np.all(out.X[:37] != ds.X[:37])


def test_inject_fraction_zero_and_isolation():
    ds = _toy()
    out, mask = inject_outliers(ds, OutlierSpec(fraction=0.0), 0)
    assert np.array_equal(out.X, ds.X) and np.array_equal(out.Y, ds.Y) and not mask.rows.any()
    out, mask = inject_outliers(ds, OutlierSpec(fraction=0.2, targets=("vertical",)), 0)
    assert np.array_equal(out.X, ds.X)
    assert not mask.inputs.any() and mask.outputs[:8].all()


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.49), st.sampled_from(["prefix", "random"]), st.integers(0, 1000))
def test_inject_counts_and_unmasked_rows(fraction, placement, seed):
    ds = _toy(60)
    spec = OutlierSpec(fraction=fraction, placement=placement)
    if 0 < fraction and spec.n_rows(60) == 0:
        with pytest.raises(ConfigError):
            inject_outliers(ds, spec, seed)
        return
    out, mask = inject_outliers(ds, spec, seed)
    assert mask.rows.sum() == math.floor(fraction * 60 + 1e-12)
    keep = ~mask.rows
    assert np.array_equal(out.X[keep], ds.X[keep]) and np.array_equal(out.Y[keep], ds.Y[keep])


def test_breakdown_error():
    with pytest.raises(BreakdownExceededError):
        OutlierSpec(fraction=0.5)
    with pytest.raises(ConfigError):
        OutlierSpec(targets=("sideways",))
    assert OutlierSpec.from_dict(OutlierSpec().to_dict()) == OutlierSpec()


def test_good_leverage_stays_consistent(ieee33):
    tr, _ = generate_datasets(ieee33, 40, 5, ["vmag_19"], 1)
    sim = case_simulator(ieee33, ["vmag_19"])
    out, mask = inject_outliers(tr, OutlierSpec(fraction=0.1, targets=("good_leverage",), magnitude_scale=2.0),
                                1, simulator=sim)
    rows = mask.indices
    X2, Y2 = sim(out.X[rows])
    np.testing.assert_allclose(out.X[rows], X2, atol=1e-9)
    np.testing.assert_allclose(out.Y[rows], Y2, atol=1e-12)


def test_metrics():
    assert rmse([1, 2], [1, 2]) == 0 and mae([1, 2], [1, 2]) == 0
    assert rmse([3, -4], [0, 0]) == pytest.approx(math.sqrt(12.5))
    assert mae([3, -4], [0, 0]) == 3.5
    assert rmse([6, -8], [0, 0]) == 2 * rmse([3, -4], [0, 0])
    with pytest.raises(InputShapeError):
        rmse([1, 2], [1])


def test_mc_single_sample_is_deterministic_run(ieee33):
    p, q = ieee33.base_injections()
    inst = instance_from_loads(ieee33, -p, -q)
    ens = monte_carlo_reference(ieee33, [inst], 1, 0, ["vmag_19"])
    X = ens.inputs[0]
    again, Y = case_simulator(ieee33, ["vmag_19"])(X)
    np.testing.assert_allclose(ens.outputs[0], Y, atol=1e-12)
    assert np.all(ens.summary().std == 0)


def test_mc_constant_distributions(ieee33):
    p, q = ieee33.base_injections()
    inst = instance_from_loads(ieee33, -p, -q, rel_std=0.0,
                               wind=DistributionSpec.constant(5.0), pv=DistributionSpec.constant(0.5))
    ens = monte_carlo_reference(ieee33, [inst], 20, 0, ["vmag_19"])
    assert np.all(ens.summary().std == 0)


def test_mc_linear_toy_oracle():
    specs = [DistributionSpec.gaussian(1.0, 0.3), WIND_DEFAULT, PV_DEFAULT]
    a = np.array([2.0, -0.5, 3.0])

    def sim(S):
        return S, (S @ a + 1.0)[:, None]

    ens = monte_carlo([specs], 500, 4, sim)
    mean = ens.summary().mean[0, 0]
    truth = 1.0 + a @ [1.0, WIND_DEFAULT.mean(), PV_DEFAULT.mean()]
    se = ens.summary().std[0, 0] / math.sqrt(500)
    assert abs(mean - truth) <= 3 * se


def test_reference_density_against_rpm(ieee33):
    tr, te = generate_datasets(ieee33, 150, 1, ["vang_19"], 0)
    model = train(tr.X, tr.y("vang_19"), ModelSpec(basis="linear", n_starts=2))
    pred = predict(model, te.X)
    p_load, q_load, _ = generate_profiles(ieee33, 151, 0)
    inst = instance_from_loads(ieee33, p_load[-1], q_load[-1])
    ens = monte_carlo_reference(ieee33, [inst], 7000, 0, ["vang_19"])
    s = ens.summary()
    assert abs(pred.mean[0] - s.mean[0, 0]) <= 3 * s.std[0, 0]
    _, _, dens = ens.histogram(0, bins=15)
    peak = int(np.argmax(dens))
    assert np.all(np.diff(dens[:peak + 1]) >= -0.25 * dens[peak])
    assert np.all(np.diff(dens[peak:]) <= 0.25 * dens[peak])


def test_small_sweep_writes_csv(ieee33, tmp_path):
    pr = Protocol(n_train=30, n_test=5, model=ModelSpec(basis="constant", n_starts=1, outer_max_iter=2))
    rows = contamination_sweep(ieee33, pr, [0.0, 0.1], [0])
    assert len(rows) == 4 and all(r.error is None for r in rows)
    means = sweep_means(rows)
    assert set(means) == {(f, m, "vmag_19") for f in (0.0, 0.1) for m in ("rpm", "gpm")}
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "fraction,seed,mode,quantity,rmse,mae" and len(lines) == 5
    with pytest.raises(ConfigError):
        contamination_sweep(ieee33, pr, [0.3], [0])
