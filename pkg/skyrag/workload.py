"""
Synthetic archive corpus and capture workload.

Scenes carry a land-use label; questions follow a handful of templates whose
object parameter varies, and answers are a deterministic function of the
image and the question, so accuracy accounting is exact.
python_file: workload.py
"""

import logging
from typing import Optional

from pydantic import BaseModel, ConfigDict, field_validator

from config.settings import DEFAULT_INITIAL_SATELLITE_IMAGES, IMAGE_PROFILES
from skyrag.core import ArchiveRecord, ImagePayload, Query, make_rng
from skyrag.embedding import stable_seed

logger = logging.getLogger(__name__)

SCENE_LABELS = (
    "residential", "farmland", "forest", "river",
    "industrial", "airport", "beach", "harbor",
)

# Object words per label; each must be a recognised template parameter
LABEL_OBJECTS = {
    "residential": ("buildings", "roads", "trees"),
    "farmland": ("fields", "roads", "water"),
    "forest": ("trees", "roads", "river"),
    "river": ("bridges", "water", "trees"),
    "industrial": ("buildings", "vehicles", "parking"),
    "airport": ("vehicles", "buildings", "grass"),
    "beach": ("water", "buildings", "parking"),
    "harbor": ("ships", "bridges", "vehicles"),
}

COUNTS = tuple(str(n) for n in range(10))
YES_NO = ("yes", "no")
CONDITIONS = ("good", "damaged", "under construction")
POSITIONS = ("top left", "top right", "center", "bottom left", "bottom right")

# (question pattern, answer set); None means the answer is the scene label
TEMPLATES = (
    ("What is the main land use in this image?", None),
    ("How many {} are there in the image?", COUNTS),
    ("Is there any {} in this image?", YES_NO),
    ("What is the condition of the {} in the image?", CONDITIONS),
    ("Where are the {} located in the image?", POSITIONS),
)

# Random streams of the generators
CORPUS_STREAM = 10
WORKLOAD_STREAM = 11
INITIAL_STREAM = 12


class WorkloadParams(BaseModel):
    """Shape of the synthetic corpus and capture stream."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    labels: int = len(SCENE_LABELS)
    images_per_label: int = 40
    templates_per_image: int = 3
    scene_dwell: int = 100
    profile: Optional[str] = None

    @field_validator("labels")
    @classmethod
    def _labels_in_range(cls, value):
        if not 1 <= value <= len(SCENE_LABELS):
            raise ValueError(f"labels must be between 1 and {len(SCENE_LABELS)}")
        return value

    @field_validator("templates_per_image")
    @classmethod
    def _templates_in_range(cls, value):
        if not 1 <= value <= len(TEMPLATES):
            raise ValueError(f"templates_per_image must be between 1 and {len(TEMPLATES)}")
        return value

    @field_validator("images_per_label", "scene_dwell")
    @classmethod
    def _positive(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("profile")
    @classmethod
    def _known_profile(cls, value):
        if value is not None and value not in IMAGE_PROFILES:
            raise ValueError(f"unknown image profile {value!r}; expected one of {sorted(IMAGE_PROFILES)}")
        return value


def answer_vocabulary():
    """Every answer the generators can produce, sorted."""
    answers = set(SCENE_LABELS)
    for _, choices in TEMPLATES:
        if choices:
            answers.update(choices)
    return tuple(sorted(answers))


def make_instruction(template_index, obj):
    pattern, _ = TEMPLATES[template_index]
    return pattern.format(obj) if "{}" in pattern else pattern


def answer_for(label, feature_seed, template_index, instruction):
    """Deterministic ground truth for a question about an image."""
    _, choices = TEMPLATES[template_index]
    if choices is None:
        return label
    return choices[stable_seed(f"{label}:{feature_seed}:{instruction}") % len(choices)]


def image_size_range(config, params):
    if params.profile:
        return IMAGE_PROFILES[params.profile]
    return config.image_bytes_min, config.image_bytes_max


def _draw_size(rng, size_range):
    low, high = size_range
    if low == high:
        return int(low)
    return int(rng.integers(low, high + 1))


def generate_corpus(config, params=None):
    """
    Build the ground archive corpus.

    Every image gets `templates_per_image` distinct question templates, each
    instantiated with one of its label's object words.

    Args:
        config (SystemConfig): Seed and image-size distribution
        params (WorkloadParams): Corpus shape

    Returns:
        list: ArchiveRecord, grouped by label
    """
    params = params or WorkloadParams()
    rng = make_rng(config.rng_seed, CORPUS_STREAM)
    size_range = image_size_range(config, params)
    records = []
    for label in SCENE_LABELS[:params.labels]:
        objects = LABEL_OBJECTS[label]
        for n in range(params.images_per_label):
            feature_seed = int(rng.integers(2**31))
            image = ImagePayload(f"{label}-{n:03d}", feature_seed, label)
            chosen = sorted(int(t) for t in rng.choice(len(TEMPLATES), params.templates_per_image, replace=False))
            pairs = []
            for t in chosen:
                instruction = make_instruction(t, objects[int(rng.integers(len(objects)))])
                pairs.append((instruction, answer_for(label, feature_seed, t, instruction)))
            text_bytes = sum(len(i.encode("utf-8")) + len(a.encode("utf-8")) for i, a in pairs)
            records.append(ArchiveRecord(image, tuple(pairs), _draw_size(rng, size_range) + text_bytes))
    logger.info("generated corpus of %d records", len(records))
    return records


def generate_workload(config, horizon, params=None):
    """
    Captures every capture_interval seconds over [0, horizon).

    The scene label stays fixed for `scene_dwell` consecutive captures, as the
    satellite passes over one region, then a new label is drawn.

    Returns:
        list: Query in capture order, ids from 0
    """
    params = params or WorkloadParams()
    rng = make_rng(config.rng_seed, WORKLOAD_STREAM)
    labels = SCENE_LABELS[:params.labels]
    size_range = image_size_range(config, params)
    queries = []
    label = None
    qid = 0
    while qid * config.capture_interval < horizon:
        if qid % params.scene_dwell == 0:
            label = labels[int(rng.integers(len(labels)))]
        objects = LABEL_OBJECTS[label]
        feature_seed = int(rng.integers(2**31))
        t = int(rng.integers(len(TEMPLATES)))
        instruction = make_instruction(t, objects[int(rng.integers(len(objects)))])
        queries.append(Query(
            id=qid,
            capture_time=qid * config.capture_interval,
            image=ImagePayload(f"cap-{qid:05d}", feature_seed, label),
            instruction=instruction,
            image_bytes=_draw_size(rng, size_range),
            ground_truth=answer_for(label, feature_seed, t, instruction),
        ))
        qid += 1
    return queries


def initial_satellite_records(corpus, config, count=DEFAULT_INITIAL_SATELLITE_IMAGES):
    """A seeded random subset of the corpus to pre-load onboard."""
    count = min(count, len(corpus), config.sat_archive_cap)
    if count <= 0:
        return []
    rng = make_rng(config.rng_seed, INITIAL_STREAM)
    picks = sorted(int(i) for i in rng.choice(len(corpus), count, replace=False))
    return [corpus[i] for i in picks]
