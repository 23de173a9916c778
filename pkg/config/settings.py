"""
Configuration settings for the satellite-ground collaborative inference simulator.
python: settings.py
"""

import os

from dotenv import load_dotenv

load_dotenv()

# Retrieval and dispatch defaults
DEFAULT_TOP_K = 5
DEFAULT_IMAGE_THRESHOLD = 0.8
DEFAULT_INSTRUCTION_THRESHOLD = 0.94
DEFAULT_MIN_RECORDS = 3
DEFAULT_CONFIDENCE_THRESHOLD = 0.75

# Satellite archive and transmission buffer
DEFAULT_PRIORITY_CAPACITY = 8
DEFAULT_SAT_ARCHIVE_CAP = 20
DEFAULT_SECONDARY_CHUNK_SIZE = 4
DEFAULT_INITIAL_SATELLITE_IMAGES = 20

# Link rates in bits per second (satellite->ground is the faster direction)
DEFAULT_UPLINK_RATE = 30_000_000.0
DEFAULT_DOWNLINK_RATE = 15_000_000.0
DEFAULT_PROPAGATION_DELAY = 0.0

# Wire framing, in bytes
MESSAGE_HEADER_BYTES = 64
METADATA_ID_BYTES = 16

# Capture and compute timing, in simulation seconds
DEFAULT_CAPTURE_INTERVAL = 2.0
DEFAULT_ONBOARD_INFERENCE_TIME = 1.5
DEFAULT_GROUND_INFERENCE_TIME = 0.3

# Image payload sizes in bytes (constant when min == max)
DEFAULT_IMAGE_BYTES_MIN = 150_000
DEFAULT_IMAGE_BYTES_MAX = 350_000
IMAGE_PROFILES = {
    "lr": (150_000, 350_000),
    "hr": (600_000, 1_400_000),
}

# Synthetic embeddings
DEFAULT_EMBEDDING_DIM = 64
DEFAULT_IMAGE_NOISE = 0.1
DEFAULT_TEXT_NOISE = 0.15
RETRIEVAL_MODES = ("full", "image_only", "instruction_only", "random")

# Orbit geometry: 95-minute orbit with 5 minutes of contact, and the scaled
# orbit used by the canonical scenario (same duty cycle)
ORBIT_PERIOD = 5700.0
CONTACT_DURATION = 300.0
SCALED_ORBIT_PERIOD = 95.0
SCALED_CONTACT_DURATION = 5.0

# Oracle backends
SATELLITE_BASE_ACCURACY = 0.56
GROUND_BASE_ACCURACY = 0.68
DEFAULT_CONTEXT_GAIN = 0.05
DEFAULT_CORRECT_CONF_MEAN = 0.9
DEFAULT_INCORRECT_CONF_MEAN = 0.6
DEFAULT_CONF_SPREAD = 0.1
DEFAULT_TOKENS_PER_ANSWER = 4

# Backlog experiment: one capture every 2 s, 3 s of 30 Mbps contact per minute
BACKLOG_CAPTURE_INTERVAL = 2.0
BACKLOG_WINDOW_PERIOD = 60.0
BACKLOG_WINDOW_DURATION = 3.0
BACKLOG_RATE = 30_000_000.0
BACKLOG_IMAGES = 3000

# Logging
LOG_LEVEL = os.getenv("SKYRAG_LOG_LEVEL", "WARNING")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Paths and execution
OUTPUT_DIR = os.getenv("SKYRAG_OUTPUT_DIR", "output")
SWEEP_WORKERS = int(os.getenv("SKYRAG_WORKERS", "1"))
