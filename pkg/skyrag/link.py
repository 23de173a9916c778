"""
Contact windows, transfer timing, and the hierarchical transmission protocol
run between the satellite and the ground station while a window is open.
python_file: link.py
"""

import logging
from dataclasses import dataclass, field

from config.settings import MESSAGE_HEADER_BYTES, METADATA_ID_BYTES
from skyrag.errors import OverlapError, ScheduleParseError

logger = logging.getLogger(__name__)

# Directions: uplink is satellite -> ground, downlink is ground -> satellite
UP = "up"
DOWN = "down"

PRIORITY_QUERIES = "PriorityQueries"
METADATA = "Metadata"
MISSING_REQUEST = "MissingRequest"
FULL_RECORDS = "FullRecords"
SECONDARY_CHUNK = "SecondaryChunk"
ACK = "Ack"

# Link phases; IDLE means no round or chunk exchange is in progress
IDLE = "idle"
PRIORITY_UP = "priority_up"
METADATA_DOWN = "metadata_down"
MISSING_REQUEST_UP = "missing_request_up"
RECORDS_DOWN = "records_down"
SECONDARY_UP = "secondary_up"
ACK_DOWN = "ack_down"

DELIVERED = "delivered"
DROPPED = "dropped"


@dataclass(frozen=True)
class ContactWindow:
    open_time: float
    close_time: float

    def __post_init__(self):
        if not self.close_time > self.open_time:
            raise ValueError(f"window closes at {self.close_time} before opening at {self.open_time}")

    @property
    def duration(self):
        return self.close_time - self.open_time

    def contains(self, t):
        return self.open_time <= t < self.close_time


def generate_windows(orbit_period_s, contact_duration_s, horizon_s):
    """
    Periodic windows [k*P, k*P + c) for every k with k*P < horizon.

    Args:
        orbit_period_s (float): Orbital period P
        contact_duration_s (float): Contact length c, shorter than P
        horizon_s (float): End of the schedule

    Returns:
        list: ContactWindow in time order
    """
    if not 0 < contact_duration_s < orbit_period_s:
        raise ValueError("contact duration must be positive and shorter than the orbital period")
    windows = []
    k = 0
    while k * orbit_period_s < horizon_s:
        start = k * orbit_period_s
        windows.append(ContactWindow(start, start + contact_duration_s))
        k += 1
    return windows


def check_windows(windows):
    """Raise OverlapError unless windows are time-ordered and disjoint."""
    for earlier, later in zip(windows, windows[1:]):
        if later.open_time < earlier.close_time:
            raise OverlapError(
                f"window [{later.open_time}, {later.close_time}) overlaps or precedes "
                f"[{earlier.open_time}, {earlier.close_time})"
            )
    return windows


def parse_schedule_text(text):
    """Parse `open close` lines; `#` starts a comment."""
    windows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScheduleParseError(f"schedule line {lineno}: expected 'open close'")
        try:
            windows.append(ContactWindow(float(parts[0]), float(parts[1])))
        except ValueError as e:
            raise ScheduleParseError(f"schedule line {lineno}: {e}") from e
    return check_windows(windows)


def load_windows(schedule_file):
    with open(schedule_file, "r", encoding="utf-8") as f:
        return parse_schedule_text(f.read())


def transfer_time(size_bytes, rate_bps):
    """Seconds to push size_bytes through a link of rate_bps bits per second."""
    if rate_bps <= 0:
        raise ValueError("rate must be positive")
    return 8.0 * size_bytes / rate_bps


@dataclass(frozen=True)
class WireMessage:
    kind: str
    direction: str
    phase: str
    items: tuple
    size_bytes: int
    payload: tuple = field(default=(), compare=False, repr=False)


def _message(kind, direction, phase, items, item_bytes, payload=()):
    return WireMessage(kind, direction, phase, tuple(items),
                       MESSAGE_HEADER_BYTES + int(item_bytes), tuple(payload))


@dataclass(frozen=True)
class TransferRecord:
    """One line of the protocol trace."""

    time: float
    direction: str
    kind: str
    size_bytes: int
    phase: str
    status: str
    items: tuple

    def format(self):
        items = ",".join(str(i) for i in self.items) or "-"
        return f"{self.time!r} {self.direction} {self.kind} {self.size_bytes} {self.phase} {self.status} {items}"


class HierarchicalLink:
    """
    Half-duplex protocol state machine; one message is in flight at a time.

    A priority round moves priority queries up, update metadata down, the
    missing-image request up and the full records down. Secondary chunks go
    up one at a time, each acknowledged before the next. The round state
    survives window closure, so a message lost at closure is resent whole in
    the next window. New rounds take precedence over further chunks.
    """

    def __init__(self, config, satellite, ground):
        """
        Args:
            config (SystemConfig): Rates, chunk size, propagation delay
            satellite (SatelliteNode): Sender of queries
            ground (GroundNode): Receiver of queries, source of records
        """
        self.config = config
        self.satellite = satellite
        self.ground = ground
        self.phase = IDLE
        self.window = None
        self.in_flight = None
        self.blocked = False
        self.trace = []
        self.bytes_sent = {UP: 0, DOWN: 0}
        self.bytes_dropped = 0
        self._round_ids = ()
        self._records = ()
        self._ack_ids = ()

    @property
    def is_open(self):
        return self.window is not None

    @property
    def busy(self):
        return self.in_flight is not None or self.blocked

    def rate(self, direction):
        return self.config.uplink_rate if direction == UP else self.config.downlink_rate

    def open_window(self, window):
        self.window = window
        self.blocked = False
        logger.debug("window open [%r, %r)", window.open_time, window.close_time)

    def close_window(self):
        self.window = None
        self.blocked = False

    def _records_piece(self, now):
        """
        Leading pending records that can finish before the window closes;
        at least one record while any are pending.
        """
        pending = self._records
        size = MESSAGE_HEADER_BYTES
        count = 0
        for record in pending:
            size += record.record_bytes
            end = now + transfer_time(size, self.rate(DOWN)) + self.config.propagation_delay
            if end >= self.window.close_time:
                break
            count += 1
        return pending[:max(count, 1)]

    def _next_message(self, now):
        sat, ground = self.satellite, self.ground
        if self.phase == METADATA_DOWN:
            ids = ground.plan.metadata
            return _message(METADATA, DOWN, METADATA_DOWN, ids, METADATA_ID_BYTES * len(ids))
        if self.phase == MISSING_REQUEST_UP:
            ids = sat.missing_ids(ground.plan.metadata)
            return _message(MISSING_REQUEST, UP, MISSING_REQUEST_UP, ids, METADATA_ID_BYTES * len(ids))
        if self.phase == RECORDS_DOWN:
            records = self._records_piece(now)
            return _message(FULL_RECORDS, DOWN, RECORDS_DOWN, [r.image_id for r in records],
                            sum(r.record_bytes for r in records), records)
        if self.phase == ACK_DOWN:
            ids = self._ack_ids
            return _message(ACK, DOWN, ACK_DOWN, ids, METADATA_ID_BYTES * len(ids))

        buffer = sat.buffer
        if buffer.priority:
            queries = list(buffer.priority)
            return _message(PRIORITY_QUERIES, UP, PRIORITY_UP, [q.id for q in queries],
                            sum(q.payload_bytes for q in queries), queries)
        if buffer.secondary:
            queries = buffer.next_chunk(self.config.secondary_chunk_size)
            return _message(SECONDARY_CHUNK, UP, SECONDARY_UP, [q.id for q in queries],
                            sum(q.payload_bytes for q in queries), queries)
        return None

    def pump(self, now):
        """
        Start the next message if the link is open and free.

        A message that cannot finish strictly before the window closes is
        recorded as dropped and blocks the link for the rest of the window.
        An archive record too large for even a whole window is dropped from
        the update instead, so the round can still finish.

        Returns:
            float: completion time of the started message, or None
        """
        if self.window is None or self.busy or now >= self.window.close_time:
            return None
        msg = self._next_message(now)
        if msg is None:
            return None
        end = now + transfer_time(msg.size_bytes, self.rate(msg.direction)) + self.config.propagation_delay
        if end < self.window.close_time:
            self.in_flight = (msg, now, end)
            return end
        self.trace.append(TransferRecord(now, msg.direction, msg.kind, msg.size_bytes,
                                         msg.phase, DROPPED, msg.items))
        self.bytes_dropped += msg.size_bytes
        if msg.kind == FULL_RECORDS and end - now >= self.window.duration:
            logger.warning("record %s of %d bytes cannot fit any window of %r s; left out of the update",
                           msg.items[0], msg.size_bytes, self.window.duration)
            self._records = self._records[1:]
            if not self._records:
                self.phase = IDLE
            return self.pump(now)
        self.blocked = True
        if end - now >= self.window.duration:
            logger.warning("%s of %d bytes is longer than the whole window", msg.kind, msg.size_bytes)
        logger.debug("%s of %d bytes cannot finish before close at %r", msg.kind,
                     msg.size_bytes, self.window.close_time)
        return None

    def complete(self, now):
        """Deliver the in-flight message and advance the protocol."""
        msg, start, _ = self.in_flight
        self.in_flight = None
        self.trace.append(TransferRecord(start, msg.direction, msg.kind, msg.size_bytes,
                                         msg.phase, DELIVERED, msg.items))
        self.bytes_sent[msg.direction] += msg.size_bytes
        sat, ground = self.satellite, self.ground

        if msg.kind == PRIORITY_QUERIES:
            ground.begin_round()
            ground.handle_priority_batch(list(msg.payload), now)
            self._round_ids = msg.items
            self.phase = METADATA_DOWN
        elif msg.kind == METADATA:
            # metadata doubles as the acknowledgement of the priority batch
            sat.buffer.remove_delivered(self._round_ids)
            self.phase = MISSING_REQUEST_UP
        elif msg.kind == MISSING_REQUEST:
            self._records = tuple(ground.resolve_missing(msg.items))
            self.phase = RECORDS_DOWN
        elif msg.kind == FULL_RECORDS:
            # each piece is applied on receipt; the round ends with the last one
            sat.apply_archive_update(list(msg.payload))
            self._records = self._records[len(msg.payload):]
            if not self._records:
                self.phase = IDLE
        elif msg.kind == SECONDARY_CHUNK:
            self._ack_ids = tuple(ground.handle_secondary_chunk(list(msg.payload), now))
            self.phase = ACK_DOWN
        elif msg.kind == ACK:
            sat.buffer.remove_delivered(self._ack_ids)
            self._ack_ids = ()
            self.phase = IDLE
        logger.debug("%s delivered at %r (%d bytes)", msg.kind, now, msg.size_bytes)
        return msg


def run_window(window, satellite, ground, config, link=None):
    """
    Run one contact window to completion with nothing else happening.

    Returns:
        list: TransferRecord entries produced during the window
    """
    link = link or HierarchicalLink(config, satellite, ground)
    first = len(link.trace)
    link.open_window(window)
    now = window.open_time
    end = link.pump(now)
    while end is not None:
        now = end
        link.complete(now)
        end = link.pump(now)
    link.close_window()
    return link.trace[first:]
