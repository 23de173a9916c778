"""
Experiments built on the simulator: the store-and-forward backlog
measurement and one-dimensional ablation sweeps.
python_file: experiments.py
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from config.settings import (
    BACKLOG_CAPTURE_INTERVAL,
    BACKLOG_IMAGES,
    BACKLOG_RATE,
    BACKLOG_WINDOW_DURATION,
    BACKLOG_WINDOW_PERIOD,
)
from skyrag.core import CONFIG_ALIASES, make_rng, validate
from skyrag.errors import ConfigError
from skyrag.link import transfer_time
from skyrag.sim import RunSummary, run

logger = logging.getLogger(__name__)

# Short names accepted for sweep dimensions
DIMENSION_ALIASES = {**CONFIG_ALIASES, "priority": "priority_enabled"}

SWEEP_FIELDS = (
    "top_k", "image_threshold", "instruction_threshold", "min_records",
    "confidence_threshold", "priority_capacity", "priority_enabled",
    "secondary_chunk_size", "uplink_rate", "downlink_rate", "retrieval_mode",
)

BACKLOG_STREAM = 20


@dataclass(frozen=True)
class BacklogResult:
    """Per-image latency of the store-and-forward baseline."""

    rows: tuple
    slope: float

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("index", "capture_time", "latency"))
        for index, capture, latency in self.rows:
            writer.writerow((index, repr(capture), repr(latency)))
        return out.getvalue()

    @property
    def mean_latency(self):
        return float(np.mean([r[2] for r in self.rows])) if self.rows else 0.0

    @property
    def max_latency(self):
        return float(max(r[2] for r in self.rows)) if self.rows else 0.0


def backlog_experiment(n_images=BACKLOG_IMAGES, image_bytes=(300_000, 300_000),
                       capture_interval=BACKLOG_CAPTURE_INTERVAL, window_period=BACKLOG_WINDOW_PERIOD,
                       window_duration=BACKLOG_WINDOW_DURATION, rate=BACKLOG_RATE, seed=0):
    """
    Capture images at a fixed interval and send them first-in first-out
    during short periodic windows.

    An image is sent only if it finishes strictly before its window closes;
    otherwise it waits for the next window.

    Args:
        n_images (int): Number of captures
        image_bytes (tuple): (min, max) image size; equal bounds give a constant size
        capture_interval (float): Seconds between captures
        window_period (float): Seconds between window openings
        window_duration (float): Window length in seconds
        rate (float): Link rate in bits per second
        seed (int): Seed for the image sizes

    Returns:
        BacklogResult: rows (index, capture_time, latency) in capture order and
            the least-squares slope of latency against index
    """
    low, high = image_bytes
    rng = make_rng(seed, BACKLOG_STREAM)
    sizes = [low if low == high else int(rng.integers(low, high + 1)) for _ in range(n_images)]
    if sizes and transfer_time(max(sizes), rate) >= window_duration:
        raise ValueError("an image cannot be sent within a single window")

    rows = []
    k, now = 0, 0.0
    for index, size in enumerate(sizes):
        capture = index * capture_interval
        now = max(now, capture)
        duration = transfer_time(size, rate)
        while True:
            open_time = k * window_period
            close_time = open_time + window_duration
            start = max(now, open_time)
            if start + duration < close_time:
                break
            k += 1
        now = start + duration
        rows.append((index, capture, now - capture))

    slope = 0.0
    if len(rows) >= 2:
        x = np.array([r[0] for r in rows], dtype=np.float64)
        y = np.array([r[2] for r in rows], dtype=np.float64)
        slope = float(np.polyfit(x, y, 1)[0])
    logger.info("backlog experiment: %d images, slope %.6g s/index", n_images, slope)
    return BacklogResult(rows=tuple(rows), slope=slope)


def resolve_dimension(dimension):
    """
    Map a sweep dimension name to its SystemConfig field.

    Raises:
        ConfigError: for an unknown dimension
    """
    name = DIMENSION_ALIASES.get(dimension, dimension)
    if name not in SWEEP_FIELDS:
        raise ConfigError(dimension, f"unknown sweep dimension: {dimension}")
    return name


def point_scenario(scenario, field_name, value):
    """The scenario for one sweep value; K sweeps clamp min_records to K."""
    changes = {field_name: value}
    if field_name == "top_k" and not scenario.allow_degenerate:
        changes["min_records"] = min(scenario.config.min_records, int(value))
    return scenario.with_config(**changes)


def _run_point(args):
    scenario, field_name, value = args
    return run(point_scenario(scenario, field_name, value)).summary


@dataclass(frozen=True)
class SweepPoint:
    dimension: str
    value: object
    summary: RunSummary


def ablation_sweep(scenario, dimension, values, workers=1, progress=False):
    """
    One seeded run per value with everything else held fixed.

    Args:
        scenario (Scenario): Base scenario
        dimension (str): Config field or alias (K, T_M, T_I, T_K, T_Conf, N_mp, priority)
        values (list): Values for the dimension; strings are coerced
        workers (int): Worker processes; results do not depend on it
        progress (bool): Show a progress bar on stderr

    Returns:
        list: SweepPoint per value, in the given order
    """
    field_name = resolve_dimension(dimension)
    values = list(values)
    if not values:
        raise ConfigError("values", "a sweep needs at least one value")
    # surface bad values before any run starts
    for value in values:
        validate(point_scenario(scenario, field_name, value).config, scenario.allow_degenerate)

    jobs = [(scenario, field_name, value) for value in values]
    bar = tqdm(total=len(jobs), desc=f"sweep {dimension}", disable=not progress)
    summaries = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for summary in pool.map(_run_point, jobs):
                summaries.append(summary)
                bar.update(1)
    else:
        for job in jobs:
            summaries.append(_run_point(job))
            bar.update(1)
    bar.close()
    return [SweepPoint(dimension, value, summary) for value, summary in zip(values, summaries)]


def sweep_csv(points):
    """Combined table: dimension, value, then every summary field."""
    fields = list(RunSummary.__dataclass_fields__)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["dimension", "value"] + fields)
    for point in points:
        row = [point.dimension, str(point.value)]
        for name in fields:
            value = getattr(point.summary, name)
            row.append(repr(value) if isinstance(value, float) else str(value))
        writer.writerow(row)
    return out.getvalue()
