"""
Shared domain types, system configuration, and the deterministic random source.
python_file: core.py
"""

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config.settings import (
    DEFAULT_CAPTURE_INTERVAL,
    DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_DOWNLINK_RATE,
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_GROUND_INFERENCE_TIME,
    DEFAULT_IMAGE_BYTES_MAX,
    DEFAULT_IMAGE_BYTES_MIN,
    DEFAULT_IMAGE_NOISE,
    DEFAULT_IMAGE_THRESHOLD,
    DEFAULT_INSTRUCTION_THRESHOLD,
    DEFAULT_MIN_RECORDS,
    DEFAULT_ONBOARD_INFERENCE_TIME,
    DEFAULT_PRIORITY_CAPACITY,
    DEFAULT_PROPAGATION_DELAY,
    DEFAULT_SAT_ARCHIVE_CAP,
    DEFAULT_SECONDARY_CHUNK_SIZE,
    DEFAULT_TEXT_NOISE,
    DEFAULT_TOP_K,
    DEFAULT_UPLINK_RATE,
    RETRIEVAL_MODES,
)
from skyrag.errors import ConfigError


@dataclass(frozen=True)
class ImagePayload:
    """Stand-in for pixel data: a stable id plus what the synthetic models need."""

    image_id: str
    feature_seed: int
    scene_label: str


@dataclass(frozen=True)
class Query:
    """A captured image and the instruction asked about it."""

    id: int
    capture_time: float
    image: ImagePayload
    instruction: str
    image_bytes: int
    # Known to the workload generator only; used for accuracy accounting.
    ground_truth: str = ""

    def __post_init__(self):
        if self.image_bytes <= 0:
            raise ValueError(f"query {self.id}: image_bytes must be positive")

    @property
    def payload_bytes(self):
        return self.image_bytes + len(self.instruction.encode("utf-8"))


@dataclass(frozen=True)
class ArchiveRecord:
    """An archived image with its ordered instruction/answer pairs."""

    image: ImagePayload
    pairs: tuple
    record_bytes: int

    def __post_init__(self):
        pairs = tuple((str(instr), str(answer)) for instr, answer in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError(f"record {self.image.image_id}: pairs must not be empty")
        instructions = [instr for instr, _ in pairs]
        if len(set(instructions)) != len(instructions):
            raise ValueError(f"record {self.image.image_id}: duplicate instruction text")
        if self.record_bytes <= 0:
            raise ValueError(f"record {self.image.image_id}: record_bytes must be positive")

    @property
    def image_id(self):
        return self.image.image_id

    def merged_with(self, other):
        """
        Return this record extended with the pairs of `other` whose instruction
        is not already present. Existing answers are kept.

        Args:
            other (ArchiveRecord): A record for the same image

        Returns:
            ArchiveRecord: self if nothing new was added, else a merged record
        """
        known = {instr for instr, _ in self.pairs}
        extra = tuple(pair for pair in other.pairs if pair[0] not in known)
        if not extra:
            return self
        return ArchiveRecord(
            image=self.image,
            pairs=self.pairs + extra,
            record_bytes=max(self.record_bytes, other.record_bytes),
        )


class SystemConfig(BaseModel):
    """
    All tunables of a run. Field order is the order validate() checks them in.

    The retrieval and dispatch knobs also answer to their short names
    (K, T_M, T_I, T_K, T_Conf, N_mp); config files may use either form.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    top_k: int = Field(DEFAULT_TOP_K, alias="K")
    image_threshold: float = Field(DEFAULT_IMAGE_THRESHOLD, alias="T_M")
    instruction_threshold: float = Field(DEFAULT_INSTRUCTION_THRESHOLD, alias="T_I")
    min_records: int = Field(DEFAULT_MIN_RECORDS, alias="T_K")
    confidence_threshold: float = Field(DEFAULT_CONFIDENCE_THRESHOLD, alias="T_Conf")
    priority_capacity: int = Field(DEFAULT_PRIORITY_CAPACITY, alias="N_mp")
    sat_archive_cap: int = DEFAULT_SAT_ARCHIVE_CAP
    secondary_chunk_size: int = DEFAULT_SECONDARY_CHUNK_SIZE
    uplink_rate: float = DEFAULT_UPLINK_RATE
    downlink_rate: float = DEFAULT_DOWNLINK_RATE
    capture_interval: float = DEFAULT_CAPTURE_INTERVAL
    rng_seed: int = 0
    image_bytes_min: int = DEFAULT_IMAGE_BYTES_MIN
    image_bytes_max: int = DEFAULT_IMAGE_BYTES_MAX
    onboard_inference_time: float = DEFAULT_ONBOARD_INFERENCE_TIME
    ground_inference_time: float = DEFAULT_GROUND_INFERENCE_TIME
    propagation_delay: float = DEFAULT_PROPAGATION_DELAY
    priority_enabled: bool = True
    retrieval_mode: str = "full"
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    image_noise: float = DEFAULT_IMAGE_NOISE
    text_noise: float = DEFAULT_TEXT_NOISE


# Short name -> field name, and back
CONFIG_ALIASES = {f.alias: name for name, f in SystemConfig.model_fields.items() if f.alias}
FIELD_KEYS = {name: alias for alias, name in CONFIG_ALIASES.items()}


def config_key(name):
    """The name a config file and ConfigError use for a field."""
    return FIELD_KEYS.get(name, name)


def field_name(key):
    """The SystemConfig attribute behind a config key in either form."""
    return CONFIG_ALIASES.get(key, key)


def default_config():
    """Return the configuration used throughout the evaluation."""
    return SystemConfig()


def _unit_interval(value):
    return 0.0 <= value <= 1.0


def validate(config, allow_degenerate=False):
    """
    Check every SystemConfig invariant, in field order.

    Args:
        config (SystemConfig): Configuration to check
        allow_degenerate (bool): Permit min_records > top_k (the all-ground mode)

    Returns:
        SystemConfig: the same config, for chaining

    Raises:
        ConfigError: naming the first violated field by its config key
    """
    checks = [
        ("top_k", config.top_k >= 0),
        ("image_threshold", _unit_interval(config.image_threshold)),
        ("instruction_threshold", _unit_interval(config.instruction_threshold)),
        ("min_records", config.min_records >= 0
            and (allow_degenerate or config.min_records <= config.top_k)),
        ("confidence_threshold", _unit_interval(config.confidence_threshold)),
        ("priority_capacity", config.priority_capacity >= 1),
        ("sat_archive_cap", config.sat_archive_cap >= max(config.top_k, 1)),
        ("secondary_chunk_size", config.secondary_chunk_size >= 1),
        ("uplink_rate", config.uplink_rate > 0),
        ("downlink_rate", config.downlink_rate > 0),
        ("capture_interval", config.capture_interval > 0),
        ("image_bytes_min", config.image_bytes_min > 0),
        ("image_bytes_max", config.image_bytes_max >= config.image_bytes_min),
        ("onboard_inference_time", config.onboard_inference_time >= 0),
        ("ground_inference_time", config.ground_inference_time >= 0),
        ("propagation_delay", config.propagation_delay >= 0),
        ("retrieval_mode", config.retrieval_mode in RETRIEVAL_MODES),
        ("embedding_dim", config.embedding_dim >= 2),
        ("image_noise", config.image_noise >= 0),
        ("text_noise", config.text_noise >= 0),
    ]
    for name, ok in checks:
        if not ok:
            key = config_key(name)
            raise ConfigError(key, f"{key} = {getattr(config, name)!r} violates its constraint")
    return config


def config_from_mapping(values):
    """
    Build a SystemConfig from raw (usually string) values.

    Args:
        values (dict): Config key (field name or short name) to value; a later
            key overrides an earlier one naming the same field

    Returns:
        SystemConfig: the parsed configuration (not yet validated)

    Raises:
        ConfigError: for unknown keys or values of the wrong type
    """
    fields = {}
    for key, value in values.items():
        fields[field_name(key)] = value
    try:
        return SystemConfig.model_validate(fields)
    except ValidationError as e:
        error = e.errors()[0]
        name = config_key(str(error["loc"][0])) if error.get("loc") else "config"
        raise ConfigError(name, f"{name}: {error['msg']}") from e


def parse_config_text(text):
    """Parse the flat `key = value` config format; `K` and `top_k` name the same field."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if field_name(key) in values:
            raise ConfigError(config_key(key), f"line {lineno}: duplicate key {key}")
        values[field_name(key)] = value
    return config_from_mapping(values)


def format_config_text(config):
    """Render a config in the `key = value` format; parse_config_text inverts it."""
    lines = []
    for name in SystemConfig.model_fields:
        key = config_key(name)
        value = getattr(config, name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def make_rng(seed, *stream):
    """
    Deterministic generator for one named stream of a run.

    Every random decision in the simulator draws from a generator keyed by the
    run seed plus small non-negative integers identifying the decision, so
    results do not depend on call order elsewhere.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))


def draw_image_bytes(rng, config):
    """Image size from the constant-or-uniform distribution in the config."""
    if config.image_bytes_min == config.image_bytes_max:
        return int(config.image_bytes_min)
    return int(rng.integers(config.image_bytes_min, config.image_bytes_max + 1))

