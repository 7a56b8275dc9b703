"""Tests for synthetic markets, planted datasets and the reference oracles."""

from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from mining_etl.core.config import read_key_values
from mining_etl.core.errors import SplitError
from mining_etl.core.models import DatasetManifest, DateRange, RoiClass
from mining_etl.core.roi import RoiEngine
from mining_etl.data.csv_extractor import ingest_manifest
from mining_etl.synthetic.market import (
    Regime,
    ScenarioConfig,
    default_plan,
    generate,
    scenario_frames,
    separable_arrays,
    separable_dataset,
    write_scenario,
)
from mining_etl.synthetic.oracles import mean_std, naive_confusion, naive_metrics, pairwise_auc


class TestScenario:

    def test_same_seed_same_frames(self, small_scenario):
        first = scenario_frames(small_scenario)
        second = scenario_frames(small_scenario)
        for key in first:
            pd.testing.assert_frame_equal(first[key], second[key])

    def test_seed_changes_market(self, small_scenario):
        other = small_scenario.model_copy(update={"seed": small_scenario.seed + 1})
        a = scenario_frames(small_scenario)["chain"]["btc_price_usd"]
        b = scenario_frames(other)["chain"]["btc_price_usd"]
        assert not np.allclose(a, b)

    def test_zero_volatility_is_piecewise_linear(self):
        scenario = ScenarioConfig.three_regime(start=date(2017, 1, 1), years=3, volatility_scale=0.0)
        chain = scenario_frames(scenario)["chain"]
        price = chain["btc_price_usd"].to_numpy()
        start = scenario.period.start
        for regime in scenario.regimes:
            i0 = (regime.period.start - start).days
            i1 = (regime.period.end - start).days
            segment = price[i0:i1]
            assert np.max(np.abs(np.diff(segment, 2))) < 1e-9 * segment.max()
            assert np.diff(segment)[0] == pytest.approx(price[i0] * regime.drift, rel=1e-9, abs=1e-9)

    def test_regimes_must_tile_period(self):
        period = DateRange(start=date(2020, 1, 1), end=date(2021, 1, 1))
        with pytest.raises(ValidationError):
            ScenarioConfig(period=period, regimes=(
                Regime(period=DateRange(start=date(2020, 1, 1), end=date(2020, 6, 1)), drift=0.0),))

    def test_halving_halves_reward(self):
        scenario = ScenarioConfig.three_regime(start=date(2019, 1, 1), years=2,
                                               halving_dates=(date(2019, 1, 1), date(2020, 5, 11)))
        chain = scenario_frames(scenario)["chain"].set_index("date")
        assert chain.loc["2020-05-10", "block_reward_btc"] == 6.25
        assert chain.loc["2020-05-11", "block_reward_btc"] == 3.125

    def test_bull_market_without_energy_cost_is_always_profitable(self):
        period = DateRange(start=date(2020, 1, 1), end=date(2022, 1, 1))
        scenario = ScenarioConfig.create(
            period=period, regimes=(Regime(period=period, drift=0.004, volatility=0.0),),
            electricity_rate=0.0, price_noise=0.0, n_machines=3, seed=5)
        machines, market = generate(scenario)
        engine = RoiEngine(market, scenario.region)
        labels = []
        for m in machines:
            days = [m.first_price_date + timedelta(days=k) for k in range(0, 200, 5)]
            labels.extend(r.label for r in engine.label_machine(m, days, 365).values())
        assert labels
        assert all(label == RoiClass.PROFITABLE for label in labels)

    def test_written_scenario_ingests_to_generated_market(self, small_scenario, tmp_path):
        manifest_path = write_scenario(small_scenario, tmp_path, window=30)
        manifest = DatasetManifest.from_key_values(read_key_values(manifest_path), base_dir=tmp_path)
        machines, market = ingest_manifest(manifest)
        expected_machines, expected_market = generate(small_scenario)

        assert [d.date for d in market] == [d.date for d in expected_market]
        np.testing.assert_allclose([d.btc_price for d in market], [d.btc_price for d in expected_market],
                                   rtol=1e-12)
        assert [m.id for m in machines] == [m.id for m in expected_machines]
        for got, want in zip(machines, expected_machines):
            assert got.price_series.keys() == want.price_series.keys()
            day = got.first_price_date + timedelta(days=3)
            assert got.price_on(day) == pytest.approx(want.price_on(day), rel=1e-12)
        assert manifest.plan.final_test.start > manifest.plan.splits[-1].eval.start


class TestDefaultPlan:

    def test_chunks_are_contiguous(self):
        plan = default_plan(date(2020, 1, 1), date(2020, 12, 31), n_splits=3)
        assert len(plan.splits) == 3
        for prev, nxt in zip(plan.splits, plan.splits[1:]):
            assert prev.eval.end == nxt.eval.start
            assert nxt.train.end == nxt.eval.start
        assert plan.final_train.end == plan.final_test.start
        assert plan.final_test.end == date(2021, 1, 1)

    def test_too_short(self):
        with pytest.raises(SplitError):
            default_plan(date(2020, 1, 1), date(2020, 1, 3), n_splits=3)


class TestSeparable:

    def test_nearest_class_mean_separates(self):
        X, y = separable_arrays(window=30, n_features=14, n_per_class=500, seed=0)
        flat = X.reshape(len(X), -1)
        half = len(X) // 2
        centroids = np.stack([flat[:half][y[:half] == c].mean(axis=0) for c in range(3)])
        distances = ((flat[half:, None, :] - centroids[None]) ** 2).sum(axis=2)
        accuracy = np.mean(distances.argmin(axis=1) == y[half:])
        assert accuracy >= 0.99

    def test_dataset_shape_and_balance(self):
        samples = separable_dataset(window=10, n_per_class=20, seed=1)
        assert len(samples) == 60
        assert samples[0].matrix.shape == (10, 14)
        assert np.bincount([s.label for s in samples]).tolist() == [20, 20, 20]
        assert samples[1].end_date - samples[0].end_date == timedelta(days=1)


class TestOracles:

    def test_naive_metrics_perfect(self):
        counts = naive_confusion([0, 1, 2, 2], [0, 1, 2, 2])
        result = naive_metrics(counts)
        assert result["accuracy"] == 1.0
        assert result["macro_f1"] == 1.0

    def test_pairwise_auc_ties(self):
        assert pairwise_auc([0.5, 0.5], [True, False]) == 0.5

    def test_mean_std(self):
        mean, std = mean_std([0.8, 0.9])
        assert mean == pytest.approx(0.85)
        assert std == pytest.approx(0.0707107, abs=1e-6)
