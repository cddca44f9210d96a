"""Tick by tick filtering of price series with the Information Tracker.

Each tick is a point cloud with a single point, so the manifold projection becomes an accept/reject gate: a tick is
either taken as pseudo measurement with variance `r_min` or (droplet empty) ignored, while the process noise inflates
the prior until the price is reachable again.
Both estimators use a local level + trend model on the log-price, one frame per tick.
Working on log-prices makes `q_intensity` and `r_min` independent of the price scale.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from information_tracker.geometry import GaussianState, GeometryParams
from information_tracker.tracker import (
    GaussianMapTracker,
    InformationTracker,
    PointCloud,
    TrackerConfig,
    constant_velocity_model,
)

__all__ = [
    "TickSeries",
    "WickConfig",
    "FilteredSeries",
    "ingest_csv",
    "generate_wick_series",
    "tick_tracker_config",
    "filter_series",
    "turnover",
    "reacquisition_lag",
    "truncation_run",
    "to_frame",
]

logger = logging.getLogger(__name__)

#: Default log-price process noise intensity
DEFAULT_Q_INTENSITY = 2.5e-7
#: Default covariance floor of the log-price (a 0.05 % standard deviation)
DEFAULT_R_MIN = 2.5e-7
#: Timestamp of the first synthetic tick (epoch seconds)
SYNTHETIC_START = 1_700_000_000
#: Spacing of synthetic ticks in seconds
SYNTHETIC_STEP = 60

CSV_COLUMNS = ("timestamp", "price")


@dataclass(frozen=True)
class TickSeries:
    """Prices (> 0) with strictly increasing integer timestamps (epoch seconds)."""

    timestamps: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        timestamps = np.asarray(self.timestamps)
        prices = np.asarray(self.prices, dtype=float)
        if timestamps.ndim != 1 or timestamps.shape != prices.shape:
            raise ValueError("`timestamps` and `prices` must be 1D arrays of equal length.")
        if timestamps.size and not np.all(np.equal(np.mod(timestamps, 1), 0)):
            raise ValueError("Timestamps must be integers.")
        timestamps = timestamps.astype(np.int64)
        if np.any(np.diff(timestamps) <= 0):
            raise ValueError("Timestamps must be strictly increasing.")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise ValueError("Prices must be finite and positive.")
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    def prefix(self, n: int) -> "TickSeries":
        """The first `n` ticks."""
        return TickSeries(self.timestamps[:n], self.prices[:n])


@dataclass(frozen=True)
class WickConfig:
    """Settings of the synthetic wick series.

    Parameters
    ----------
    n_ticks
        Length of the series
    base_price
        Level before the first regime change
    drift_regimes
        Pairs of `(start index, new level)`. From `start index` on the level is `new level`.
    wick_probability
        Probability that a tick is a wick
    wick_magnitude
        Relative size of a wick (fraction of the price, < 1). The sign of each wick is random.
    micro_noise
        Standard deviation of the multiplicative (log-normal) noise of every tick
    seed
        Seed of the random stream

    """

    n_ticks: int = 1000
    base_price: float = 2000.0
    drift_regimes: Tuple[Tuple[int, float], ...] = ((400, 2100.0), (700, 1950.0))
    wick_probability: float = 0.02
    wick_magnitude: float = 0.05
    micro_noise: float = 0.0005
    seed: int = 42

    def __post_init__(self):
        regimes = tuple((int(start), float(level)) for start, level in self.drift_regimes)
        object.__setattr__(self, "drift_regimes", regimes)
        if int(self.n_ticks) != self.n_ticks or self.n_ticks < 1:
            raise ValueError("`n_ticks` must be a positive integer, got {}.".format(self.n_ticks))
        if not self.base_price > 0:
            raise ValueError("`base_price` must be positive, got {}.".format(self.base_price))
        for start, level in regimes:
            if start < 0 or level <= 0:
                raise ValueError("Invalid regime ({}, {}): start must be >= 0 and level > 0.".format(start, level))
        if not 0 <= self.wick_probability <= 1:
            raise ValueError("`wick_probability` must be in [0, 1], got {}.".format(self.wick_probability))
        if not 0 <= self.wick_magnitude < 1:
            raise ValueError("`wick_magnitude` must be in [0, 1), got {}.".format(self.wick_magnitude))
        if self.micro_noise < 0:
            raise ValueError("`micro_noise` must be non-negative, got {}.".format(self.micro_noise))
        if not 0 <= self.seed < 2**64:
            raise ValueError("`seed` must be an unsigned 64 bit integer, got {}.".format(self.seed))


class FilteredSeries(NamedTuple):
    """Estimates of both estimators aligned with the ticks and the mask of rejected ticks."""

    tracker: np.ndarray
    baseline: np.ndarray
    truncated: np.ndarray


def ingest_csv(path: Union[str, Path]) -> TickSeries:
    """Load a `timestamp,price` CSV file with header.

    Malformed rows are reported with their 1-based line number in the file (the header is line 1).
    Blank lines are skipped.

    Parameters
    ----------
    path
        Path to a UTF-8 encoded CSV file

    Returns
    -------
    series
        The parsed tick series

    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError("Tick file not found: {}".format(path))
    try:
        raw = pd.read_csv(path, dtype=str, skipinitialspace=True, skip_blank_lines=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise ValueError("empty series") from e
    except pd.errors.ParserError as e:
        raise ValueError("Malformed tick file {}: {}".format(path, e)) from e
    if tuple(c.strip() for c in raw.columns) != CSV_COLUMNS:
        raise ValueError("Expected the header `timestamp,price` in {}, got {}.".format(path, list(raw.columns)))
    raw.columns = list(CSV_COLUMNS)
    # Blank lines are kept while reading so that every row knows its line in the file
    blank = raw.isna().all(axis=1).to_numpy()
    line_numbers = (np.arange(len(raw)) + 2)[~blank]
    raw = raw[~blank].reset_index(drop=True)
    if len(raw) == 0:
        raise ValueError("empty series")

    timestamps = pd.to_numeric(raw["timestamp"], errors="coerce")
    prices = pd.to_numeric(raw["price"], errors="coerce")
    malformed = timestamps.isna() | prices.isna() | (timestamps % 1 != 0)
    if malformed.any():
        row = int(np.flatnonzero(malformed.to_numpy())[0])
        raise ValueError("Malformed row in line {} of {}: {}".format(line_numbers[row], path, raw.iloc[row].to_list()))
    non_positive = ~(prices > 0) | ~np.isfinite(prices)
    if non_positive.any():
        row = int(np.flatnonzero(non_positive.to_numpy())[0])
        raise ValueError("Non-positive price {} in line {} of {}.".format(raw["price"].iloc[row], line_numbers[row], path))
    steps = np.diff(timestamps.to_numpy())
    if np.any(steps <= 0):
        row = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise ValueError("Timestamps are not strictly increasing in line {} of {}.".format(line_numbers[row], path))
    return TickSeries(timestamps.to_numpy().astype(np.int64), prices.to_numpy(dtype=float))


def generate_wick_series(config: WickConfig) -> TickSeries:
    """Piecewise constant price levels with multiplicative noise and isolated single tick wicks.

    The noise, the wick mask and the wick signs are always drawn for the full series, so changing e.g. the
    `wick_probability` does not change the micro noise.
    """
    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal(config.n_ticks)
    is_wick = rng.random(config.n_ticks) < config.wick_probability
    signs = np.where(rng.random(config.n_ticks) < 0.5, -1.0, 1.0)

    levels = np.full(config.n_ticks, config.base_price)
    for start, level in sorted(config.drift_regimes):
        levels[start:] = level
    prices = levels * np.exp(config.micro_noise * noise)
    prices = np.where(is_wick, prices * (1 + signs * config.wick_magnitude), prices)
    timestamps = SYNTHETIC_START + SYNTHETIC_STEP * np.arange(config.n_ticks, dtype=np.int64)
    return TickSeries(timestamps, prices)


def tick_tracker_config(params: Optional[GeometryParams] = None, r_min: float = DEFAULT_R_MIN) -> TrackerConfig:
    """Tracker settings for scalar log-price frames."""
    return TrackerConfig(geometry=params or GeometryParams(), r_min=np.array([[r_min]]))


def filter_series(
    series: TickSeries, tracker_config: Optional[TrackerConfig] = None, q_intensity: float = DEFAULT_Q_INTENSITY
) -> FilteredSeries:
    """Run the Information Tracker and the baseline Kalman filter over a tick series.

    Parameters
    ----------
    series
        At least two ticks
    tracker_config
        Settings of the Information Tracker with a 1x1 `r_min` (in squared log-price).
        Defaults to `tick_tracker_config()`.
        The baseline uses `r_min` as its measurement variance.
    q_intensity
        Process noise intensity of the level + trend model (log-price per tick)

    Returns
    -------
    filtered
        Price estimates of both estimators and the mask of ticks the tracker rejected

    """
    if len(series) < 2:
        raise ValueError("At least two ticks are required, got {}.".format(len(series)))
    tracker_config = tracker_config or tick_tracker_config()
    if tracker_config.r_min.shape != (1, 1):
        raise ValueError("Tick filtering requires a 1x1 `r_min`, got shape {}.".format(tracker_config.r_min.shape))
    r_min = float(tracker_config.r_min[0, 0])
    if not r_min > 0:
        raise ValueError("Tick filtering requires a positive `r_min`.")

    model = constant_velocity_model(1, dt=1.0, intensity=q_intensity)
    log_prices = np.log(series.prices)
    prior = GaussianState(np.array([log_prices[0], 0.0]), np.diag([r_min, r_min]))
    clouds = [PointCloud(np.array([[p]])) for p in log_prices]

    tracker = InformationTracker(model, tracker_config).track(prior, clouds)
    baseline = GaussianMapTracker(model, np.array([[r_min]])).track(prior, clouds)
    truncated = tracker.droplet_empty_
    logger.debug("Rejected %d of %d ticks.", int(truncated.sum()), len(series))
    return FilteredSeries(np.exp(tracker.means_[:, 0]), np.exp(baseline.means_[:, 0]), truncated)


def turnover(estimates: Sequence[float]) -> float:
    """Total variation of a filtered path.

    Examples
    --------
    >>> turnover([0, 1, 0])
    2.0

    """
    estimates = np.asarray(estimates, dtype=float)
    if len(estimates) < 2:
        raise ValueError("Turnover requires at least two estimates.")
    return float(np.sum(np.abs(np.diff(estimates))))


def reacquisition_lag(estimates: Sequence[float], level: float, start: int, tolerance: float = 0.01) -> Optional[int]:
    """Number of ticks after `start` until the estimate is within `tolerance` (relative) of `level`.

    Returns None if the estimate never gets there.
    """
    estimates = np.asarray(estimates, dtype=float)
    hits = np.flatnonzero(np.abs(estimates[start:] - level) <= tolerance * abs(level))
    if len(hits) == 0:
        return None
    return int(hits[0])


def truncation_run(truncated: Sequence[bool], start: int) -> int:
    """Number of consecutive rejected ticks beginning at `start`."""
    truncated = np.asarray(truncated, dtype=bool)[start:]
    accepted = np.flatnonzero(~truncated)
    if len(accepted) == 0:
        return len(truncated)
    return int(accepted[0])


def to_frame(series: TickSeries, filtered: FilteredSeries) -> pd.DataFrame:
    """The output table with the columns `timestamp, price, tracker, baseline, truncated_flag`."""
    return pd.DataFrame(
        {
            "timestamp": series.timestamps,
            "price": series.prices,
            "tracker": filtered.tracker,
            "baseline": filtered.baseline,
            "truncated_flag": filtered.truncated.astype(int),
        }
    )
