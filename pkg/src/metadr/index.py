"""Per-node identifier index: the artifact exchanged during DR.

Entries are kept in per-nid sequences sorted by lcv. Local ingests are
appends (amortized O(1)); entries arriving via replication insert into
foreign-nid sequences with binary search. Incremental range queries and
the sorted set-difference delta computation both ride on that order.

Wire format (bit-exact): a 16-byte header (magic ``MDRI``, u32 version,
u64 entry count, all big-endian) followed by 32-byte encoded ids. Stream
length is exactly 16 + 32 * entries, which feeds transfer-cost
accounting directly. Index dump files use the same format with the
extension ``.mdri``.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from dataclasses import dataclass, field

from .identity import ENCODED_ID_BYTES, CompositeId, NodeId, decode_id, encode_id

WIRE_MAGIC = b"MDRI"
WIRE_VERSION = 1
WIRE_HEADER_BYTES = 16
_HEADER = struct.Struct(">4sIQ")


class ConflictingEntry(ValueError):
    """Same id inserted with different metadata: corruption or an
    immutability violation upstream."""


class BadMagic(ValueError):
    pass


class BadVersion(ValueError):
    pass


class TruncatedStream(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class IndexEntry:
    """Identifier-to-block mapping. 32 logical bytes on the wire."""

    id: CompositeId
    location: int
    byte_len: int
    crc: int
    user_key: str | None = None

    def __post_init__(self) -> None:
        if self.byte_len <= 0:
            raise ValueError(f"byte_len must be positive, got {self.byte_len}")


class _NidRun:
    """One nid's entries with a parallel lcv array for binary search."""

    __slots__ = ("lcvs", "entries")

    def __init__(self) -> None:
        self.lcvs: list[int] = []
        self.entries: list[IndexEntry] = []


class IdentifierIndex:
    """Sorted per-nid identifier index with instrumented size accounting."""

    def __init__(self, fragmentation_factor: float = 0.0) -> None:
        self._runs: dict[NodeId, _NidRun] = {}
        self.entry_count = 0
        self.fragmentation_factor = fragmentation_factor

    @property
    def logical_size_bytes(self) -> int:
        return ENCODED_ID_BYTES * self.entry_count

    @property
    def fragmentation_overhead_bytes(self) -> float:
        return ENCODED_ID_BYTES * self.entry_count * self.fragmentation_factor

    @property
    def physical_size(self) -> float:
        return physical_size_bytes(self, self.fragmentation_factor)

    def nids(self) -> list[NodeId]:
        return sorted(self._runs, key=lambda n: n.value)

    def max_lcv(self, nid: NodeId) -> int:
        run = self._runs.get(nid)
        return run.lcvs[-1] if run is not None and run.lcvs else 0

    def insert(self, entry: IndexEntry) -> None:
        """Insert an entry, keeping per-nid lcv order.

        Re-inserting the same id is a no-op when the content identity
        (crc, byte_len) matches; a mismatch raises ConflictingEntry,
        signaling corruption or an immutability violation. Locations are
        node-local bookkeeping and do not participate in the check.
        """
        nid = entry.id.nid
        lcv = entry.id.lcv
        run = self._runs.get(nid)
        if run is None:
            run = self._runs[nid] = _NidRun()
        lcvs = run.lcvs
        if not lcvs or lcv > lcvs[-1]:  # append discipline for local ingests
            lcvs.append(lcv)
            run.entries.append(entry)
            self.entry_count += 1
            return
        pos = bisect_right(lcvs, lcv) - 1
        if pos >= 0 and lcvs[pos] == lcv:
            existing = run.entries[pos]
            if existing.crc != entry.crc or existing.byte_len != entry.byte_len:
                raise ConflictingEntry(f"id {entry.id} already present with different content")
            return  # idempotent duplicate
        pos = bisect_right(lcvs, lcv)
        lcvs.insert(pos, lcv)
        run.entries.insert(pos, entry)
        self.entry_count += 1

    def get(self, cid: CompositeId) -> IndexEntry | None:
        run = self._runs.get(cid.nid)
        if run is None:
            return None
        pos = bisect_right(run.lcvs, cid.lcv) - 1
        if pos >= 0 and run.lcvs[pos] == cid.lcv:
            return run.entries[pos]
        return None

    def __contains__(self, cid: CompositeId) -> bool:
        return self.get(cid) is not None

    def entries_above(self, nid: NodeId, watermark_lcv: int) -> list[IndexEntry]:
        """Entries with the given nid and lcv > watermark, in lcv order.

        Binary search locates the start; the scan is proportional to the
        result size. Unknown nids yield an empty list.
        """
        run = self._runs.get(nid)
        if run is None:
            return []
        start = bisect_right(run.lcvs, watermark_lcv)
        return run.entries[start:]

    def entries(self) -> list[IndexEntry]:
        """All entries in global (nid, lcv) order."""
        out: list[IndexEntry] = []
        for nid in self.nids():
            out.extend(self._runs[nid].entries)
        return out

    def ids(self) -> list[CompositeId]:
        return [e.id for e in self.entries()]

    def same_ids(self, other: "IdentifierIndex") -> bool:
        if self.entry_count != other.entry_count:
            return False
        missing_b, missing_a = set_difference(self, other)
        return not missing_b and not missing_a


@dataclass
class Checkpoint:
    """Per-peer synchronization watermarks: nid -> highest synced lcv.

    Watermarks never decrease; lcv 0 is the genesis "never synchronized"
    floor.
    """

    peer: NodeId
    watermarks: dict[NodeId, int] = field(default_factory=dict)

    def watermark(self, nid: NodeId) -> int:
        return self.watermarks.get(nid, 0)

    def advance(self, nid: NodeId, lcv: int) -> None:
        current = self.watermarks.get(nid, 0)
        if lcv > current:
            self.watermarks[nid] = lcv


def set_difference(
    a: IdentifierIndex, b: IdentifierIndex, meter=None
) -> tuple[list[CompositeId], list[CompositeId]]:
    """Symmetric difference of two indexes, partitioned by direction.

    Returns (missing_in_b, missing_in_a) in (nid, lcv) order, computed
    by a single merge pass over the sorted structures. The instrumented
    count is the number of merge-pass steps (head comparisons plus tail
    drains, one per consumed element); every step advances at least one
    cursor, so the count is at most |a| + |b|, and at fixed delta it
    scales linearly with index size.
    """
    missing_in_b: list[CompositeId] = []
    missing_in_a: list[CompositeId] = []
    comparisons = 0
    nids = sorted(set(a._runs) | set(b._runs), key=lambda n: n.value)
    for nid in nids:
        run_a = a._runs.get(nid)
        run_b = b._runs.get(nid)
        if run_a is None:
            missing_in_a.extend(e.id for e in run_b.entries)
            comparisons += len(run_b.entries)
            continue
        if run_b is None:
            missing_in_b.extend(e.id for e in run_a.entries)
            comparisons += len(run_a.entries)
            continue
        la, lb = run_a.lcvs, run_b.lcvs
        ea, eb = run_a.entries, run_b.entries
        i = j = 0
        na, nb = len(la), len(lb)
        while i < na and j < nb:
            comparisons += 1
            va, vb = la[i], lb[j]
            if va == vb:
                i += 1
                j += 1
            elif va < vb:
                missing_in_b.append(ea[i].id)
                i += 1
            else:
                missing_in_a.append(eb[j].id)
                j += 1
        comparisons += (na - i) + (nb - j)
        while i < na:
            missing_in_b.append(ea[i].id)
            i += 1
        while j < nb:
            missing_in_a.append(eb[j].id)
            j += 1
    if meter is not None:
        meter.add_comparisons(comparisons)
    return missing_in_b, missing_in_a


def serialize_index(
    index: IdentifierIndex,
    since: Checkpoint | None = None,
    nids: list[NodeId] | None = None,
) -> bytes:
    """Serialize ids to the wire stream, optionally only above-watermark
    and optionally restricted to the given source nids.

    Stream length is exactly 16 + 32 * entries_emitted.
    """
    chunks: list[bytes] = []
    count = 0
    selected = index.nids() if nids is None else sorted(
        (n for n in nids if n in index._runs), key=lambda n: n.value
    )
    for nid in selected:
        if since is None:
            run_entries = index._runs[nid].entries
        else:
            run_entries = index.entries_above(nid, since.watermark(nid))
        for entry in run_entries:
            chunks.append(encode_id(entry.id))
            count += 1
    return _HEADER.pack(WIRE_MAGIC, WIRE_VERSION, count) + b"".join(chunks)


def deserialize_index(stream: bytes) -> list[CompositeId]:
    """Recover the id sequence from a wire stream, order preserved."""
    if len(stream) < WIRE_HEADER_BYTES:
        raise TruncatedStream(f"stream shorter than header: {len(stream)} bytes")
    magic, version, count = _HEADER.unpack_from(stream, 0)
    if magic != WIRE_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise BadVersion(f"unsupported version {version}")
    body = stream[WIRE_HEADER_BYTES:]
    if len(body) != count * ENCODED_ID_BYTES:
        raise TruncatedStream(
            f"expected {count * ENCODED_ID_BYTES} body bytes, got {len(body)}"
        )
    return [
        decode_id(body[i : i + ENCODED_ID_BYTES])
        for i in range(0, len(body), ENCODED_ID_BYTES)
    ]


def physical_size_bytes(index: IdentifierIndex, fragmentation_factor: float) -> float:
    """Modeled on-disk footprint: 32 * entries * (1 + fragmentation)."""
    if fragmentation_factor < 0:
        raise ValueError("fragmentation_factor must be >= 0")
    return ENCODED_ID_BYTES * index.entry_count * (1.0 + fragmentation_factor)


def dump_index(index: IdentifierIndex, path: str,
               since: Checkpoint | None = None) -> int:
    """Write the wire stream to a `.mdri` dump file; returns bytes written."""
    stream = serialize_index(index, since=since)
    with open(path, "wb") as f:
        f.write(stream)
    return len(stream)


def load_index_dump(path: str) -> list[CompositeId]:
    with open(path, "rb") as f:
        return deserialize_index(f.read())
