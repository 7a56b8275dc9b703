"""Shared pytest fixtures: small synthetic markets, planted-class datasets and tiny model configs."""

from datetime import date
from pathlib import Path

import numpy as np
import pytest

from mining_etl.core.models import DatasetManifest
from mining_etl.synthetic.market import ScenarioConfig, default_plan, generate, separable_dataset

TINY_EXPERIMENT = """\
MODEL_KIND=mineroi
PRESET=base-30
D_MODEL=8
N_HEADS=2
N_LAYERS=1
D_FF=16
DROPOUT=0.0
MAX_EPOCHS=2
BATCH_SIZE=64
LEARNING_RATE=0.001
"""


@pytest.fixture(autouse=True)
def _log_dir(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("MINEROI_LOG_DIR", str(tmp_path_factory.getbasetemp() / "logs"))


@pytest.fixture(scope="session")
def small_scenario() -> ScenarioConfig:
    return ScenarioConfig.three_regime(start=date(2018, 1, 1), years=2, seed=7, n_machines=3)


@pytest.fixture(scope="session")
def small_market(small_scenario):
    """(machines, market) of the two-year scenario."""
    return generate(small_scenario)


@pytest.fixture
def tiny_config_values():
    return dict(window=8, n_features=3, d_model=8, n_heads=2, n_layers=1, d_ff=16, dropout=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def planted_manifest(samples, window: int, n_splits: int = 2) -> DatasetManifest:
    plan = default_plan(samples[0].end_date, samples[-1].end_date, n_splits=n_splits)
    return DatasetManifest(
        machine_prices=(), machine_specs=(), chain_csv=Path("chain.csv"), energy_csv=Path("energy.csv"),
        region="US", window=window, halving_dates=(samples[0].end_date,), plan=plan,
    )


@pytest.fixture
def planted_dataset_dir(tmp_path):
    """Dataset directory of 180 planted-class windows (L=8) over 180 consecutive days."""
    from mining_ml.dataset_store import write_dataset

    samples = separable_dataset(window=8, n_per_class=60, seed=3, start=date(2021, 1, 1))
    target = tmp_path / "planted"
    write_dataset(target, samples, {}, planted_manifest(samples, window=8))
    return target


@pytest.fixture
def tiny_experiment_file(tmp_path):
    path = tmp_path / "tiny.experiment"
    path.write_text(TINY_EXPERIMENT, encoding="utf-8")
    return path
