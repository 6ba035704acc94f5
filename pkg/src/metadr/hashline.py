"""Hash-based baseline: SHA-256 fingerprints, Merkle trees, and the
three failure conditions that force re-hashing.

The baseline identifies blocks by content digest. Digests are computed
by an asynchronous pipeline that lags ingestion (condition 1: stale
index), is not atomic across crashes (condition 2: work since the last
checkpoint is discarded and re-hashed), and lives in a store that can be
lost outright (condition 3: full inventory rehash before any delta can
be computed). All hashing is charged to a cost meter so the rebuild cost
shows up in virtual recovery time.

Virtual-fidelity blocks carry (byte_len, content_seed) descriptors
instead of payloads; their fingerprint is a deterministic function of
the descriptor, which preserves duplicate-detection semantics while the
meter charges the modeled byte length.
"""

from __future__ import annotations

import hashlib
import struct
from collections import deque
from dataclasses import dataclass

DIGEST_BYTES = 32
EMPTY_LEAF = b"\x00" * DIGEST_BYTES  # pad sentinel for unequal leaf counts
EMPTY_TREE_ROOT = hashlib.sha256(b"").digest()

# Payloads are raw bytes in concrete mode, (byte_len, seed) tuples in
# virtual mode; payload_digest/payload_len accept both.


class InconsistentIndex(RuntimeError):
    """Delta service refused: the hash index cannot be trusted until the
    pipeline drains or the index is rebuilt."""


def fingerprint_block(content: bytes, meter=None) -> bytes:
    """SHA-256 of the block content, charged to the hash cost meter."""
    if meter is not None:
        meter.charge_hash(len(content), ops=1)
    return hashlib.sha256(content).digest()


def descriptor_digest(byte_len: int, content_seed: int, meter=None) -> bytes:
    """Fingerprint of a virtual block.

    Deterministic in the descriptor, so equal (byte_len, seed) pairs
    collide exactly like equal payloads would. The meter is charged the
    modeled byte length, not the 16 descriptor bytes.
    """
    if meter is not None:
        meter.charge_hash(byte_len, ops=1)
    return hashlib.sha256(struct.pack(">QQ", byte_len, content_seed)).digest()


def payload_digest(payload, meter=None) -> bytes:
    """Fingerprint either payload form (bytes or descriptor tuple)."""
    if isinstance(payload, (bytes, bytearray)):
        return fingerprint_block(bytes(payload), meter)
    byte_len, seed = payload
    return descriptor_digest(byte_len, seed, meter)


def payload_len(payload) -> int:
    if isinstance(payload, (bytes, bytearray)):
        return len(payload)
    return payload[0]


class MerkleTree:
    """Binary hash tree over leaf digests in block-locator order.

    Fanout 2 with odd-node promotion: a level's odd trailing node is
    carried up unchanged (no hash charged). The empty tree's root is the
    SHA-256 of the empty string; a single leaf is its own root.
    """

    def __init__(self, levels: list[list[bytes]]) -> None:
        self.levels = levels

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0]) if self.levels else 0

    @property
    def root(self) -> bytes:
        if not self.levels or not self.levels[0]:
            return EMPTY_TREE_ROOT
        return self.levels[-1][0]

    @property
    def internal_node_count(self) -> int:
        """Number of hashed internal nodes (promotions excluded)."""
        count = 0
        for lower, upper in zip(self.levels, self.levels[1:]):
            count += len(lower) // 2
            assert len(upper) == (len(lower) + 1) // 2
        return count

    @property
    def height(self) -> int:
        return len(self.levels)


def merkle_build(leaves: list[bytes], meter=None) -> MerkleTree:
    """Build the tree; one hash op is charged per internal node."""
    if not leaves:
        return MerkleTree([])
    levels = [list(leaves)]
    sha = hashlib.sha256
    ops = 0
    while len(levels[-1]) > 1:
        lower = levels[-1]
        upper = []
        for i in range(0, len(lower) - 1, 2):
            upper.append(sha(lower[i] + lower[i + 1]).digest())
            ops += 1
        if len(lower) % 2:
            upper.append(lower[-1])  # promote the odd node
        levels.append(upper)
    if meter is not None:
        meter.add_hash_ops(ops)
    return MerkleTree(levels)


@dataclass
class MerkleDiff:
    positions: list[int]
    node_visits: int


def merkle_diff(a: MerkleTree, b: MerkleTree) -> MerkleDiff:
    """Leaf positions where the trees differ.

    The shorter tree is padded (at comparison time) with the empty-leaf
    sentinel so positions cover max(leaf counts). Equal subtrees are
    skipped; node_visits counts compared node pairs and is bounded by
    2 * (differing paths * tree height + 1).
    """
    width = max(a.leaf_count, b.leaf_count)
    if width == 0:
        return MerkleDiff([], 0)
    if a.leaf_count != width or b.leaf_count != width:
        pad_a = (list(a.levels[0]) if a.levels else []) + [EMPTY_LEAF] * (width - a.leaf_count)
        pad_b = (list(b.levels[0]) if b.levels else []) + [EMPTY_LEAF] * (width - b.leaf_count)
        a = merkle_build(pad_a)
        b = merkle_build(pad_b)

    positions: list[int] = []
    visits = 0

    def walk(level: int, pos: int) -> None:
        nonlocal visits
        visits += 1
        la = a.levels[level]
        lb = b.levels[level]
        if la[pos] == lb[pos]:
            return
        if level == 0:
            positions.append(pos)
            return
        below = a.levels[level - 1]
        left = 2 * pos
        walk(level - 1, left)
        if left + 1 < len(below):
            walk(level - 1, left + 1)

    walk(len(a.levels) - 1, 0)
    return MerkleDiff(positions, visits)


class HashIndex:
    """Content-digest index: digest -> block locators, plus coverage state.

    consistent_flag gates delta service; it is true only when every
    ingested block is covered and the store has not been lost.
    """

    def __init__(self) -> None:
        self.by_digest: dict[bytes, set[int]] = {}
        self.by_locator: dict[int, bytes] = {}
        self.coverage_watermark = 0  # highest ingest sequence hashed
        self.lost = False
        self.stale = False  # uncovered ingests exist

    @property
    def consistent_flag(self) -> bool:
        return not self.lost and not self.stale

    @property
    def digest_count(self) -> int:
        return len(self.by_digest)

    def add(self, locator: int, digest: bytes, seq: int) -> None:
        self.by_digest.setdefault(digest, set()).add(locator)
        self.by_locator[locator] = digest
        if seq > self.coverage_watermark:
            self.coverage_watermark = seq

    def remove(self, locator: int) -> None:
        digest = self.by_locator.pop(locator, None)
        if digest is None:
            return
        locators = self.by_digest.get(digest)
        if locators is not None:
            locators.discard(locator)
            if not locators:
                del self.by_digest[digest]

    def mark_lost(self) -> None:
        self.by_digest.clear()
        self.by_locator.clear()
        self.coverage_watermark = 0
        self.lost = True


@dataclass(slots=True)
class PendingBlock:
    seq: int
    locator: int
    byte_len: int
    payload: object  # bytes or (byte_len, seed)


class PipelineState:
    """Asynchronous hashing pipeline feeding a HashIndex.

    lag_blocks = ingested - hashed. The checkpoint is the last ingest
    sequence known durably consistent; a crash rolls coverage back to it
    and re-enqueues everything above.
    """

    def __init__(self, index: HashIndex) -> None:
        self.index = index
        self.pending: deque[PendingBlock] = deque()
        self.hashed_since_checkpoint: list[PendingBlock] = []
        self.checkpoint_seq = 0
        self.ingested = 0
        self.hashed = 0

    @property
    def lag_blocks(self) -> int:
        return len(self.pending)

    @property
    def lag_bytes(self) -> int:
        return sum(p.byte_len for p in self.pending)

    def enqueue(self, locator: int, payload, byte_len: int | None = None) -> None:
        self.ingested += 1
        if byte_len is None:
            byte_len = payload_len(payload)
        self.pending.append(PendingBlock(self.ingested, locator, byte_len, payload))
        self.index.stale = True


def pipeline_tick(state: PipelineState, hash_budget_bytes: int, meter=None) -> int:
    """Hash queued blocks until the byte budget is exhausted.

    Returns the number of blocks hashed this tick. Lag grows whenever
    ingestion outruns the budget.
    """
    if hash_budget_bytes < 0:
        raise ValueError("hash budget must be >= 0")
    remaining = hash_budget_bytes
    done = 0
    while state.pending and state.pending[0].byte_len <= remaining:
        block = state.pending.popleft()
        digest = payload_digest(block.payload, meter)
        state.index.add(block.locator, digest, block.seq)
        state.hashed_since_checkpoint.append(block)
        state.hashed += 1
        remaining -= block.byte_len
        done += 1
    if not state.pending and not state.index.lost:
        state.index.stale = False
    return done


def commit_checkpoint(state: PipelineState) -> None:
    """Mark everything hashed so far as durably consistent."""
    if state.hashed_since_checkpoint:
        state.checkpoint_seq = state.hashed_since_checkpoint[-1].seq
    state.hashed_since_checkpoint.clear()


def crash_interrupt(state: PipelineState) -> int:
    """Condition 2: discard the incomplete index region.

    Coverage rolls back to the last checkpoint; blocks hashed since then
    are removed from the index and re-enqueued (in order) for rehash.
    Returns the number of re-enqueued blocks.
    """
    rolled = state.hashed_since_checkpoint
    if not rolled:
        return 0
    for block in rolled:
        state.index.remove(block.locator)
    state.index.coverage_watermark = state.checkpoint_seq
    state.index.stale = True
    state.hashed -= len(rolled)
    state.pending.extendleft(reversed(rolled))
    state.hashed_since_checkpoint = []
    return len(rolled)


def rebuild_index(blocks, meter=None) -> tuple[HashIndex, MerkleTree]:
    """Condition 3 recovery: full hash scan of the inventory.

    `blocks` is an iterable of (locator, payload) in locator order. The
    meter is charged every content byte (virtual seconds = bytes/(H*C))
    plus one hash op per block and per internal tree node, and one
    content read per block.
    """
    index = HashIndex()
    leaves: list[bytes] = []
    seq = 0
    for locator, payload in blocks:
        seq += 1
        digest = payload_digest(payload, meter)
        if meter is not None:
            meter.add_content_reads(1)
        index.add(locator, digest, seq)
        leaves.append(digest)
    tree = merkle_build(leaves, meter)
    index.lost = False
    index.stale = False
    return index, tree


def hash_delta(local: HashIndex, remote: HashIndex) -> tuple[list[int], list[int]]:
    """Digest-set symmetric difference mapped back to locators.

    Returns (missing_remote, missing_local): local locators whose digest
    the remote lacks, and remote locators whose digest the local lacks.
    Raises InconsistentIndex unless both indexes are trustworthy; paying
    the rebuild/drain cost first is exactly the bottleneck under test.
    """
    if not local.consistent_flag or not remote.consistent_flag:
        raise InconsistentIndex("hash index stale, interrupted, or lost; rehash required")
    missing_remote: list[int] = []
    missing_local: list[int] = []
    for digest, locators in local.by_digest.items():
        if digest not in remote.by_digest:
            missing_remote.extend(locators)
    for digest, locators in remote.by_digest.items():
        if digest not in local.by_digest:
            missing_local.extend(locators)
    missing_remote.sort()
    missing_local.sort()
    return missing_remote, missing_local
