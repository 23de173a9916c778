"""
Shared pytest fixtures: small hand-built queries, records, providers, and
scenarios.
"""

import numpy as np
import pytest

from skyrag.core import ArchiveRecord, ImagePayload, Query, SystemConfig
from skyrag.embedding import SyntheticEmbeddingProvider
from skyrag.inference import OracleBackend, OracleBackendParams
from skyrag.sim import Scenario
from skyrag.workload import WorkloadParams, answer_vocabulary, generate_corpus, initial_satellite_records

ROADS = "How many roads are there in the image?"


@pytest.fixture
def make_query():
    def _make(qid, label="a", instruction=ROADS, image_bytes=1000, truth="3",
              capture_time=None, feature_seed=None):
        return Query(
            id=qid,
            capture_time=float(qid) if capture_time is None else capture_time,
            image=ImagePayload(f"q{qid}", qid if feature_seed is None else feature_seed, label),
            instruction=instruction,
            image_bytes=image_bytes,
            ground_truth=truth,
        )
    return _make


@pytest.fixture
def make_record():
    def _make(image_id, label="a", pairs=((ROADS, "3"),), record_bytes=1000, feature_seed=0):
        return ArchiveRecord(ImagePayload(image_id, feature_seed, label), tuple(pairs), record_bytes)
    return _make


@pytest.fixture
def basis_provider():
    """Noise-free provider whose labels map to orthogonal basis directions."""
    dim = 8
    bases = {label: np.eye(dim)[i] for i, label in enumerate("abcdefgh")}
    return SyntheticEmbeddingProvider(dim=dim, image_noise=0.0, text_noise=0.0, label_bases=bases)


@pytest.fixture
def oracle():
    def _make(role="satellite", **params):
        return OracleBackend(OracleBackendParams(**params), role, answer_vocabulary())
    return _make


@pytest.fixture
def synthetic_scenario():
    """
    Factory for a scenario on the synthetic corpus and workload.

    Keyword arguments starting with `cfg_` become config fields.
    """
    def _make(windows=(), horizon=200.0, drain=0.0, workload=None, sat_params=None,
              ground_params=None, initial=20, allow_degenerate=False, **kwargs):
        config_fields = {k[4:]: v for k, v in kwargs.items() if k.startswith("cfg_")}
        config = SystemConfig(**config_fields)
        params = workload or WorkloadParams()
        corpus = generate_corpus(config, params)
        vocabulary = answer_vocabulary()
        return Scenario(
            config=config,
            corpus=corpus,
            windows=list(windows),
            horizon=horizon,
            drain=drain,
            satellite_backend=OracleBackend(OracleBackendParams(**(sat_params or {})), "satellite", vocabulary),
            ground_backend=OracleBackend(OracleBackendParams(**(ground_params or {"base_accuracy": 0.68})),
                                         "ground", vocabulary),
            initial_records=initial_satellite_records(corpus, config, initial),
            workload_params=params,
            allow_degenerate=allow_degenerate,
        )
    return _make
