"""
Storage module: reading scenario inputs (config, corpus, schedule, traces,
embedding fixtures, scenario files) and writing run outputs.
python_file: storage.py
"""

import logging
import os
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config.settings import (
    DEFAULT_INITIAL_SATELLITE_IMAGES,
    SCALED_CONTACT_DURATION,
    SCALED_ORBIT_PERIOD,
)
from skyrag.core import ArchiveRecord, ImagePayload, config_from_mapping, default_config, parse_config_text
from skyrag.embedding import FixtureEmbeddingProvider
from skyrag.errors import ConfigError, CorpusParseError
from skyrag.inference import OracleBackend, TraceBackend, ground_params, parse_trace_text, satellite_params
from skyrag.link import generate_windows, load_windows
from skyrag.sim import Scenario
from skyrag.workload import WorkloadParams, answer_vocabulary, generate_corpus, initial_satellite_records

logger = logging.getLogger(__name__)


def read_text(path):
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def load_config(path):
    """Read a `key = value` config file into a SystemConfig."""
    return parse_config_text(read_text(path))


def parse_corpus_text(text):
    """
    Parse an archive corpus.

    Each line is tab-separated: image_id, scene_label, feature_seed,
    record_bytes, then alternating instruction and answer fields.

    Returns:
        list: ArchiveRecord in file order
    """
    records = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        fields = raw.split("\t")
        if len(fields) < 6 or (len(fields) - 4) % 2:
            raise CorpusParseError(f"corpus line {lineno}: expected 4 fields plus instruction/answer pairs")
        image_id, label, seed, size = fields[:4]
        if image_id in seen:
            raise CorpusParseError(f"corpus line {lineno}: duplicate image id {image_id}")
        seen.add(image_id)
        rest = fields[4:]
        try:
            records.append(ArchiveRecord(
                image=ImagePayload(image_id, int(seed), label),
                pairs=tuple(zip(rest[0::2], rest[1::2])),
                record_bytes=int(size),
            ))
        except ValueError as e:
            raise CorpusParseError(f"corpus line {lineno}: {e}") from e
    return records


def format_corpus_text(records):
    lines = []
    for record in records:
        image = record.image
        fields = [image.image_id, image.scene_label, str(image.feature_seed), str(record.record_bytes)]
        for instruction, answer in record.pairs:
            fields.extend([instruction, answer])
        lines.append("\t".join(fields))
    return "\n".join(lines) + "\n"


def load_corpus(path):
    return parse_corpus_text(read_text(path))


def load_trace(path):
    return parse_trace_text(read_text(path))


def parse_fixture_text(text):
    """
    Parse an embedding fixture.

    Each line is `id <tab> D space-separated floats`, with one D shared by
    every line. Ids name images and instruction texts alike; `#` lines and
    blank lines are skipped.

    Returns:
        FixtureEmbeddingProvider

    Raises:
        CorpusParseError: naming the first bad line
    """
    vectors = {}
    dim = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        if "\t" not in raw:
            raise CorpusParseError(f"fixture line {lineno}: expected 'id<TAB>floats'")
        key, values = raw.split("\t", 1)
        if not key or key in vectors:
            raise CorpusParseError(f"fixture line {lineno}: missing or duplicate id {key!r}")
        try:
            vector = np.array(values.split(), dtype=np.float64)
        except ValueError as e:
            raise CorpusParseError(f"fixture line {lineno}: {e}") from e
        if vector.size == 0 or not np.all(np.isfinite(vector)):
            raise CorpusParseError(f"fixture line {lineno}: expected finite floats")
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise CorpusParseError(f"fixture line {lineno}: {vector.size} values, expected {dim}")
        if not np.any(vector):
            raise CorpusParseError(f"fixture line {lineno}: zero vector for {key!r}")
        vectors[key] = vector
    return FixtureEmbeddingProvider(vectors, vectors)


def load_fixture(path):
    return parse_fixture_text(read_text(path))


class OrbitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    period: float = SCALED_ORBIT_PERIOD
    contact: float = SCALED_CONTACT_DURATION


class ScenarioFile(BaseModel):
    """JSON scenario; relative paths resolve against the file's directory."""

    model_config = ConfigDict(extra="forbid")

    config: Optional[str] = None
    config_overrides: dict = Field(default_factory=dict)
    corpus: Optional[str] = None
    schedule: Optional[str] = None
    orbit: OrbitSpec = Field(default_factory=OrbitSpec)
    horizon: float
    drain: float = 0.0
    initial_satellite_images: int = DEFAULT_INITIAL_SATELLITE_IMAGES
    satellite_backend: dict = Field(default_factory=dict)
    ground_backend: dict = Field(default_factory=dict)
    workload: WorkloadParams = Field(default_factory=WorkloadParams)
    fixture: Optional[str] = None
    allow_degenerate: bool = False


def _resolve(base_dir, path):
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def build_backend(block, base_dir, role, seed, vocabulary):
    """An oracle backend from a parameter block, or a trace backend for `{"trace": path}`."""
    if "trace" in block:
        return TraceBackend(load_trace(_resolve(base_dir, block["trace"])))
    values = {"seed": seed, **block}
    make = satellite_params if role == "satellite" else ground_params
    try:
        params = make(**values)
    except ValidationError as e:
        raise ConfigError(f"{role}_backend", f"{role}_backend: {e.errors()[0]['msg']}") from e
    return OracleBackend(params, role, vocabulary)


def load_scenario(path, seed=None):
    """
    Build a runnable Scenario from a scenario file.

    Args:
        path (str): Scenario JSON
        seed (int): Optional override of the config's rng_seed

    Returns:
        Scenario

    Raises:
        FileNotFoundError: if the scenario or a file it references is missing
        ConfigError: for invalid scenario or config contents
    """
    try:
        sf = ScenarioFile.model_validate_json(read_text(path))
    except ValidationError as e:
        error = e.errors()[0]
        name = str(error["loc"][0]) if error.get("loc") else "scenario"
        raise ConfigError(name, f"{path}: {name}: {error['msg']}") from e
    base_dir = os.path.dirname(os.path.abspath(path))

    config = load_config(_resolve(base_dir, sf.config)) if sf.config else default_config()
    overrides = dict(sf.config_overrides)
    if seed is not None:
        overrides["rng_seed"] = seed
    if overrides:
        config = config_from_mapping({**config.model_dump(), **overrides})

    if sf.corpus:
        corpus = load_corpus(_resolve(base_dir, sf.corpus))
    else:
        corpus = generate_corpus(config, sf.workload)

    if sf.schedule:
        windows = load_windows(_resolve(base_dir, sf.schedule))
    else:
        windows = generate_windows(sf.orbit.period, sf.orbit.contact, sf.horizon + sf.drain)

    vocabulary = set(answer_vocabulary())
    vocabulary.update(answer for record in corpus for _, answer in record.pairs)
    vocabulary = sorted(vocabulary)

    provider = load_fixture(_resolve(base_dir, sf.fixture)) if sf.fixture else None
    return Scenario(
        config=config,
        corpus=corpus,
        windows=windows,
        horizon=sf.horizon,
        drain=sf.drain,
        satellite_backend=build_backend(sf.satellite_backend, base_dir, "satellite", config.rng_seed, vocabulary),
        ground_backend=build_backend(sf.ground_backend, base_dir, "ground", config.rng_seed, vocabulary),
        initial_records=initial_satellite_records(corpus, config, sf.initial_satellite_images),
        workload_params=sf.workload,
        provider=provider,
        allow_degenerate=sf.allow_degenerate,
    )


class RunStorage:
    """Writes run outputs into one directory; every file is replaced atomically."""

    def __init__(self, out_dir):
        """
        Args:
            out_dir (str): Directory to store run files
        """
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def save_text(self, name, text):
        """
        Write a file through a temporary sibling and rename it into place.

        Args:
            name (str): Path relative to the output directory
            text (str): File contents

        Returns:
            str: Path of the written file
        """
        path = os.path.join(self.out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp, path)
        except OSError:
            logger.error("could not write %s", path)
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        logger.info("wrote %s", path)
        return path

    def save_run(self, result, prefix=""):
        """Write summary, per-query CSV, protocol trace, backlog series and event log."""
        return [
            self.save_text(os.path.join(prefix, "summary.txt"), result.summary_text()),
            self.save_text(os.path.join(prefix, "queries.csv"), result.queries_csv()),
            self.save_text(os.path.join(prefix, "trace.log"), result.trace_text()),
            self.save_text(os.path.join(prefix, "backlog.csv"), result.backlog_csv()),
            self.save_text(os.path.join(prefix, "events.log"), result.events_text()),
        ]

    def save_summary(self, summary, prefix=""):
        return self.save_text(os.path.join(prefix, "summary.txt"), summary.to_text())

    def load_text(self, name):
        return read_text(os.path.join(self.out_dir, name))
