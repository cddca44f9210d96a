from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from information_tracker import LidarScenarioConfig

SNAPSHOT_PATH = Path(__file__).parent / "snapshots"


@pytest.fixture()
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture()
def clean_scenario():
    """Low noise scenario without ghosts and without maneuver."""
    return LidarScenarioConfig(
        sigma_sensor=0.5,
        n_ghost=0,
        process_noise_intensity=0.05,
        estimator_noise_intensity=0.05,
        maneuver_amplitude=0.0,
        seed=3,
    )


@pytest.fixture()
def tick_csv(tmp_path):
    """Write the given rows below a `timestamp,price` header and return the file path."""

    def _write(rows, header="timestamp,price"):
        path = tmp_path / "ticks.csv"
        path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
        return path

    return _write


def load_or_store_snapshot(name, data: pd.DataFrame) -> pd.DataFrame:
    file_name = SNAPSHOT_PATH / (name + ".json")
    if not file_name.is_file():
        SNAPSHOT_PATH.mkdir(exist_ok=True)
        data.to_json(file_name, orient="table", double_precision=15)
        pytest.skip("Snapshot {} was created, commit it and rerun the test.".format(file_name.name))
    out = pd.read_json(file_name, orient="table")
    return out
