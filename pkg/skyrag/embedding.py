"""
Embedding providers: the interface the archives embed through, a deterministic
synthetic provider, and a fixture provider that replays precomputed vectors.
python_file: embedding.py
"""

import hashlib
import re
from typing import Protocol

import numpy as np

from config.settings import DEFAULT_EMBEDDING_DIM, DEFAULT_IMAGE_NOISE, DEFAULT_TEXT_NOISE
from skyrag.errors import MissingEmbeddingError, ZeroVectorError

# Words treated as template parameters when deriving an instruction's template
PARAMETER_WORDS = frozenset({
    "road", "roads", "building", "buildings", "water", "farmland", "farmlands",
    "residential", "commercial", "industrial", "forest", "forests", "river",
    "rivers", "bridge", "bridges", "parking", "airport", "ship", "ships",
    "vehicle", "vehicles", "tree", "trees", "grass", "beach", "field", "fields",
})

_TOKEN = re.compile(r"[a-z0-9]+")
_NUMBER = re.compile(r"\d+(?:\.\d+)?")
ZERO_NORM = 1e-12


class EmbeddingProvider(Protocol):
    """What an archive needs from a vision and a text embedding model."""

    dim: int

    def embed_image(self, image):
        ...

    def embed_text(self, text):
        ...


def normalize(v):
    """
    Scale a raw vector to unit Euclidean norm.

    Args:
        v: One-dimensional sequence of reals

    Returns:
        np.ndarray: float64 unit vector

    Raises:
        ZeroVectorError: if the norm is below 1e-12
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM:
        raise ZeroVectorError("cannot normalize a zero vector")
    return v / norm


def cosine(a, b):
    """Cosine of two unit vectors (their dot product)."""
    return float(np.dot(a, b))


def stable_seed(text):
    """64-bit seed from text; unlike hash() it is the same in every process."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def split_instruction(text):
    """
    Split an instruction into its template key and its parameters.

    Numbers and known object words are parameters; everything else forms the
    template. "How many roads are there?" and "How many buildings are there?"
    share the template "how many <p> are there".

    Returns:
        tuple: (template key, tuple of parameter tokens)
    """
    tokens = _TOKEN.findall(text.lower())
    template, params = [], []
    for token in tokens:
        if token in PARAMETER_WORDS or _NUMBER.fullmatch(token):
            template.append("<p>")
            params.append(token)
        else:
            template.append(token)
    return " ".join(template), tuple(params)


class SyntheticEmbeddingProvider:
    """
    Structured stand-in for the vision and text embedding models.

    An image embeds as its scene label's base direction plus seeded noise, so
    images of one label cluster and different labels sit near orthogonal.
    Instructions embed as their template's base direction plus noise keyed by
    the parameters, so instructions of one template cluster tightly.
    """

    def __init__(self, dim=DEFAULT_EMBEDDING_DIM, image_noise=DEFAULT_IMAGE_NOISE,
                 text_noise=DEFAULT_TEXT_NOISE, label_bases=None):
        """
        Args:
            dim (int): Embedding dimension
            image_noise (float): Magnitude of per-image noise relative to the base
            text_noise (float): Magnitude of per-parameter noise for instructions
            label_bases (dict): Optional fixed base directions per scene label
        """
        self.dim = dim
        self.image_noise = image_noise
        self.text_noise = text_noise
        self._label_bases = {label: normalize(vec) for label, vec in (label_bases or {}).items()}

    def _direction(self, namespace, key):
        rng = np.random.default_rng(stable_seed(f"{namespace}:{key}"))
        return normalize(rng.standard_normal(self.dim))

    def _noise(self, namespace, key, magnitude):
        if magnitude == 0:
            return np.zeros(self.dim)
        rng = np.random.default_rng(stable_seed(f"{namespace}:{key}"))
        return magnitude * rng.standard_normal(self.dim) / np.sqrt(self.dim)

    def label_base(self, label):
        if label not in self._label_bases:
            self._label_bases[label] = self._direction("label", label)
        return self._label_bases[label]

    def embed_image(self, image):
        base = self.label_base(image.scene_label)
        noise = self._noise("image", f"{image.scene_label}:{image.feature_seed}", self.image_noise)
        return normalize(base + noise)

    def embed_text(self, text):
        template, params = split_instruction(text)
        base = self._direction("template", template)
        if not params:
            return base
        noise = self._noise("params", f"{template}|{' '.join(params)}", self.text_noise)
        return normalize(base + noise)


class FixtureEmbeddingProvider:
    """Replays precomputed vectors keyed by image id and instruction text."""

    def __init__(self, image_vectors, text_vectors):
        """
        Args:
            image_vectors (dict): image_id -> raw vector
            text_vectors (dict): instruction text -> raw vector
        """
        self._images = {key: normalize(vec) for key, vec in image_vectors.items()}
        self._texts = {key: normalize(vec) for key, vec in text_vectors.items()}
        dims = {len(vec) for vec in list(self._images.values()) + list(self._texts.values())}
        if len(dims) > 1:
            raise ValueError(f"fixture vectors have mixed dimensions: {sorted(dims)}")
        self.dim = dims.pop() if dims else DEFAULT_EMBEDDING_DIM

    def embed_image(self, image):
        try:
            return self._images[image.image_id]
        except KeyError:
            raise MissingEmbeddingError(f"no fixture vector for image {image.image_id}") from None

    def embed_text(self, text):
        try:
            return self._texts[text]
        except KeyError:
            raise MissingEmbeddingError(f"no fixture vector for instruction {text!r}") from None


def provider_from_config(config):
    """The synthetic provider parameterised by a SystemConfig."""
    return SyntheticEmbeddingProvider(
        dim=config.embedding_dim,
        image_noise=config.image_noise,
        text_noise=config.text_noise,
    )
