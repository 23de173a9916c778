"""
Multimodal knowledge archive shared by both nodes: unit-norm embedding
matrices, instruction de-duplication with the image->instruction mapping,
fused scoring and top-K retrieval. The satellite subclass adds the LRU queue
and the capacity-bounded replace module.
python_file: archive.py
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from skyrag.core import ImagePayload
from skyrag.errors import EmptyArchiveError, UnknownImageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrievedRecord:
    """One fused search hit."""

    image: ImagePayload
    instruction: str
    ground_truth: str
    image_similarity: float
    instruction_similarity: float
    fused_score: float

    @property
    def image_id(self):
        return self.image.image_id


class EmbeddingIndex:
    """Unit vectors stacked as matrix columns, with an id per column."""

    def __init__(self, dim):
        self.dim = dim
        self._ids = []
        self._vectors = []
        self._columns = {}
        self._matrix = None

    def __len__(self):
        return len(self._ids)

    def __contains__(self, key):
        return key in self._columns

    @property
    def ids(self):
        return list(self._ids)

    def column(self, key):
        return self._columns[key]

    def vector(self, key):
        return self._vectors[self._columns[key]]

    def add(self, key, vector):
        if key in self._columns:
            return self._columns[key]
        if len(vector) != self.dim:
            raise ValueError(f"vector for {key!r} has dimension {len(vector)}, expected {self.dim}")
        self._columns[key] = len(self._ids)
        self._ids.append(key)
        self._vectors.append(np.asarray(vector, dtype=np.float64))
        self._matrix = None
        return self._columns[key]

    def remove(self, keys):
        """Drop columns; remaining columns keep their relative order."""
        doomed = set(keys)
        if not doomed:
            return
        kept = [(key, vec) for key, vec in zip(self._ids, self._vectors) if key not in doomed]
        self._ids = [key for key, _ in kept]
        self._vectors = [vec for _, vec in kept]
        self._columns = {key: col for col, key in enumerate(self._ids)}
        self._matrix = None

    @property
    def matrix(self):
        """The D x n matrix whose columns are the stored vectors."""
        if self._matrix is None:
            if self._vectors:
                self._matrix = np.column_stack(self._vectors)
            else:
                self._matrix = np.zeros((self.dim, 0))
        return self._matrix

    def scores(self, q):
        """Dot product of every column with q."""
        if not self._ids:
            raise EmptyArchiveError("index is empty")
        return self.matrix.T @ np.asarray(q, dtype=np.float64)


def rank_fused(sim_m, sim_i, mapping, k):
    """
    Fuse image and instruction scores and rank images.

    For every image i the best instruction j* over mapping[i] is chosen (ties
    to the lowest instruction index) and the fused score is
    sim_m[i] + sim_i[j*]. Images are ranked by fused score descending, ties to
    the lowest image index.

    Args:
        sim_m (np.ndarray): One score per image
        sim_i (np.ndarray): One score per unique instruction
        mapping (list): mapping[i] = instruction indices attached to image i
        k (int): Number of images to return

    Returns:
        list: (image index, instruction index, S_iM, S_iI, fused) tuples
    """
    n = len(sim_m)
    if n == 0:
        raise EmptyArchiveError("no images to rank")
    if len(mapping) != n:
        raise ValueError("mapping must have one entry per image")
    best = []
    for cols in mapping:
        best.append(min(cols, key=lambda c: (-sim_i[c], c)))
    best_scores = np.array([sim_i[j] for j in best], dtype=np.float64)
    fused = np.asarray(sim_m, dtype=np.float64) + best_scores
    order = np.lexsort((np.arange(n), -fused))[:max(k, 0)]
    return [
        (int(i), int(best[i]), float(sim_m[i]), float(best_scores[i]), float(fused[i]))
        for i in order
    ]


class MultimodalArchive:
    """Image/instruction archive with fused retrieval."""

    def __init__(self, provider):
        """
        Args:
            provider: EmbeddingProvider used for records and queries alike
        """
        self.provider = provider
        self.images = EmbeddingIndex(provider.dim)
        self.instructions = EmbeddingIndex(provider.dim)
        self._records = {}
        self._mapping = {}
        self._answers = {}

    def __len__(self):
        return len(self.images)

    def __contains__(self, image_id):
        return image_id in self._records

    @property
    def image_ids(self):
        return self.images.ids

    def record(self, image_id):
        try:
            return self._records[image_id]
        except KeyError:
            raise UnknownImageError(image_id) from None

    def records(self):
        return [self._records[image_id] for image_id in self.images.ids]

    def ground_truth(self, image_id, instruction):
        return self._answers[(image_id, instruction)]

    def insert(self, record):
        """
        Add a record, de-duplicating instructions by exact text.

        Re-inserting a resident image merges any new pairs into it; the
        image column itself is not duplicated.
        """
        image_id = record.image_id
        if image_id in self._records:
            record = self._records[image_id].merged_with(record)
        else:
            self.images.add(image_id, self.provider.embed_image(record.image))
            self._mapping[image_id] = []
        self._records[image_id] = record
        attached = self._mapping[image_id]
        for instruction, answer in record.pairs:
            if instruction not in self.instructions:
                self.instructions.add(instruction, self.provider.embed_text(instruction))
            if instruction not in attached:
                attached.append(instruction)
                self._answers[(image_id, instruction)] = answer

    def remove(self, image_ids):
        """Remove images, then any instruction no remaining image uses."""
        doomed = [image_id for image_id in image_ids if image_id in self._records]
        for image_id in doomed:
            for instruction in self._mapping.pop(image_id):
                del self._answers[(image_id, instruction)]
            del self._records[image_id]
        self.images.remove(doomed)
        in_use = {instr for attached in self._mapping.values() for instr in attached}
        orphans = [instr for instr in self.instructions.ids if instr not in in_use]
        self.instructions.remove(orphans)

    def instruction_map(self):
        """F: for each image column, the instruction columns attached to it."""
        return [
            [self.instructions.column(instr) for instr in self._mapping[image_id]]
            for image_id in self.images.ids
        ]

    def query_vision(self, q):
        """Image similarity scores, one per stored image."""
        return self.images.scores(q)

    def query_instruction(self, q):
        """Instruction similarity scores, one per unique instruction."""
        return self.instructions.scores(q)

    def _package(self, image_col, instr_col, s_m, s_i):
        image_id = self.images.ids[image_col]
        instruction = self.instructions.ids[instr_col]
        return RetrievedRecord(
            image=self._records[image_id].image,
            instruction=instruction,
            ground_truth=self._answers[(image_id, instruction)],
            image_similarity=s_m,
            instruction_similarity=s_i,
            fused_score=s_m + s_i,
        )

    def fuse_and_rank(self, sim_m, sim_i, k):
        """Top-k fused hits for precomputed score vectors."""
        ranked = rank_fused(sim_m, sim_i, self.instruction_map(), k)
        return [self._package(i, j, s_m, s_i) for i, j, s_m, s_i, _ in ranked]

    def retrieve(self, query, k, mode="full", rng=None):
        """
        Retrieve k records for a query.

        Args:
            query (Query): Captured image plus instruction
            k (int): Number of records
            mode (str): full | image_only | instruction_only | random
            rng (np.random.Generator): Source for the random choices of the
                ablation modes

        Returns:
            list: RetrievedRecord, one instruction per image

        Raises:
            EmptyArchiveError: if the archive holds no images
        """
        if not len(self.images):
            raise EmptyArchiveError("archive is empty")
        if k <= 0:
            return []
        sim_m = self.query_vision(self.provider.embed_image(query.image))
        sim_i = self.query_instruction(self.provider.embed_text(query.instruction))
        if mode == "full":
            return self.fuse_and_rank(sim_m, sim_i, k)
        rng = rng if rng is not None else np.random.default_rng(0)
        mapping = self.instruction_map()
        n = len(sim_m)
        if mode == "image_only":
            order = np.lexsort((np.arange(n), -sim_m))[:k]
            picks = [(int(i), int(rng.choice(mapping[i]))) for i in order]
        elif mode == "instruction_only":
            picks = self._instruction_led_picks(sim_i, mapping, k, rng)
        elif mode == "random":
            order = rng.permutation(n)[:k]
            picks = [(int(i), int(rng.choice(mapping[i]))) for i in order]
        else:
            raise ValueError(f"unknown retrieval mode: {mode}")
        return [self._package(i, j, float(sim_m[i]), float(sim_i[j])) for i, j in picks]

    def _instruction_led_picks(self, sim_i, mapping, k, rng):
        owners = [[] for _ in range(len(sim_i))]
        for image_col, cols in enumerate(mapping):
            for col in cols:
                owners[col].append(image_col)
        picks, taken = [], set()
        for j in np.lexsort((np.arange(len(sim_i)), -sim_i)):
            free = [i for i in owners[j] if i not in taken]
            if not free:
                continue
            i = int(rng.choice(free))
            taken.add(i)
            picks.append((i, int(j)))
            if len(picks) == k:
                break
        return picks


class LruQueue:
    """Recency order of resident images; the first entry is the most recent."""

    def __init__(self):
        self._order = OrderedDict()

    def __len__(self):
        return len(self._order)

    def __contains__(self, image_id):
        return image_id in self._order

    def order(self):
        return list(self._order)

    def push_front(self, image_ids):
        """Move or add ids to the front so that they end up in the given order."""
        for image_id in reversed(list(image_ids)):
            self._order[image_id] = None
            self._order.move_to_end(image_id, last=False)

    def pop_tail(self):
        image_id, _ = self._order.popitem(last=True)
        return image_id

    def remove(self, image_id):
        self._order.pop(image_id, None)


class SatelliteArchive(MultimodalArchive):
    """Capacity-bounded archive whose replacement policy is least-recently-used."""

    def __init__(self, provider, cap):
        """
        Args:
            provider: EmbeddingProvider
            cap (int): Maximum number of resident images
        """
        super().__init__(provider)
        self.cap = cap
        self.lru = LruQueue()
        # (operation, ids) in application order, for replaying the recency order
        self.journal = []

    def touch(self, image_ids):
        """Move resident images to the front of the LRU queue, keeping their order."""
        image_ids = list(image_ids)
        for image_id in image_ids:
            if image_id not in self:
                raise UnknownImageError(image_id)
        self.lru.push_front(image_ids)
        self.journal.append(("touch", tuple(image_ids)))

    def evict_and_insert(self, new_records, cap=None):
        """
        Insert records, evicting least-recently-used images to stay within cap.

        Records for images already resident merge their pairs and move to the
        front without eviction. An update larger than the cap keeps only its
        last `cap` images.

        Args:
            new_records (list): ArchiveRecord instances, oldest first
            cap (int): Capacity override; defaults to the archive's cap

        Returns:
            list: evicted image ids, in eviction order
        """
        cap = self.cap if cap is None else cap
        merged = OrderedDict()
        for record in new_records:
            image_id = record.image_id
            merged[image_id] = merged[image_id].merged_with(record) if image_id in merged else record
        if len(merged) > cap:
            logger.warning("archive update of %d images truncated to cap %d", len(merged), cap)
            for image_id in list(merged)[:len(merged) - cap]:
                del merged[image_id]
        update_ids = list(merged)
        resident = [image_id for image_id in update_ids if image_id in self]
        fresh = [image_id for image_id in update_ids if image_id not in self]

        if resident:
            self.touch(resident)
            for image_id in resident:
                self.insert(merged[image_id])

        evicted = []
        while len(self) + len(fresh) - len(evicted) > cap:
            evicted.append(self.lru.pop_tail())
            self.journal.append(("evict", (evicted[-1],)))
        if evicted:
            self.remove(evicted)
            logger.debug("evicted %s", evicted)

        for image_id in fresh:
            self.insert(merged[image_id])
        if update_ids:
            self.lru.push_front(update_ids)
            self.journal.append(("insert", tuple(update_ids)))
        return evicted
