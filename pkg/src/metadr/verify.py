"""Executable property suites behind `metadr verify`.

Each suite returns (name, passed, detail) tuples. The identity suite
covers global id uniqueness under crash/restart chaos and WAL
truncation at every byte offset; the sync suite covers partition
convergence, idempotence, framework equivalence, and split-brain
determinism; the baseline suite pins the cryptographic primitives to
independent references and the Merkle/pipeline machinery to brute-force
oracles.
"""

from __future__ import annotations

import hashlib
from random import Random

from . import hashline, identity
from .crc32c import crc32c
from .node import StorageNode
from .index import set_difference
from .sync import (
    Cluster,
    ReconciliationPolicy,
    converge,
    reconcile_split_brain,
    sync_pair_meta,
)

Check = tuple[str, bool, str]


def _crc32c_bitwise(data: bytes) -> int:
    """Independent bit-at-a-time CRC-32C (no table), for cross-checking."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0x82F63B78 if crc & 1 else crc >> 1
    return crc ^ 0xFFFFFFFF


def _chaos_uniqueness(seed: int, nodes: int, target_exposed: int) -> tuple[bool, str]:
    """Interleaved ingest plus crash/restart with torn WAL tails; every
    exposed id must be globally unique."""
    rng = Random(f"verify:{seed}")
    cluster = [StorageNode(identity.new_node_id(rng)) for _ in range(nodes)]
    seen: set[tuple[bytes, int]] = set()
    exposed = 0
    while exposed < target_exposed:
        node = cluster[rng.randrange(len(cluster))]
        if node.status.value == "crashed":
            if rng.random() < 0.6:
                node.restart("none", wal_replay_seconds=0.0)
            continue
        if rng.random() < 0.05:
            node.crash(torn_wal_bytes=rng.randrange(0, identity.WAL_RECORD_BYTES))
            continue
        cid = node.ingest((1024, rng.randrange(1 << 30)))
        key = (cid.nid.value, cid.lcv)
        if key in seen:
            return False, f"duplicate id {cid}"
        seen.add(key)
        exposed += 1
    return True, f"{exposed} exposed ids, all unique"


def _truncation_enumeration() -> tuple[bool, str]:
    """Truncate a small WAL at every byte offset; recovery must never
    re-expose a committed value."""
    wal = identity.MemoryWal()
    clock = identity.LogicalClock(wal)
    nid = identity.NodeId(b"\x01" * 16)
    for _ in range(10):
        clock.next_id(nid)
    data = wal.data()
    for cut in range(len(data) + 1):
        torn = identity.MemoryWal(data[:cut])
        recovered = identity.recover_clock(torn)
        committed = {r.lcv for r in identity.read_wal(data[:cut])[0]}
        nxt = recovered.next_id(nid)
        if nxt.lcv in committed:
            return False, f"reused committed lcv {nxt.lcv} at cut {cut}"
    return True, f"{len(data) + 1} truncation points, no reuse"


def suite_identity(seed: int = 0) -> list[Check]:
    checks: list[Check] = []
    rng = Random(f"verify-id:{seed}")

    ok, detail = _truncation_enumeration()
    checks.append(("wal_truncation_every_offset_no_reuse", ok, detail))

    total_exposed = 0
    ok_all = True
    detail = ""
    for s in range(20):
        ok, detail = _chaos_uniqueness(seed * 100 + s, nodes=8, target_exposed=5200)
        if not ok:
            ok_all = False
            break
        total_exposed += int(detail.split()[0])
    if ok_all:
        detail = f"{total_exposed} exposed ids across 20 chaos runs, all unique"
    checks.append(("uniqueness_under_crash_restart_1e5_events", ok_all and total_exposed >= 100000, detail))

    ok = True
    for _ in range(2000):
        cid = identity.CompositeId(
            identity.NodeId(rng.randbytes(16)),
            rng.randrange(1, 1 << 64),
            rng.randrange(0, 1 << 64),
        )
        if identity.decode_id(identity.encode_id(cid)) != cid:
            ok = False
            break
    checks.append(("encode_decode_roundtrip_fuzz", ok, "2000 random ids"))
    return checks


def _two_node_partition_case(seed: int) -> tuple[bool, str]:
    rng = Random(f"verify-sync:{seed}")
    a = StorageNode(identity.new_node_id(rng))
    b = StorageNode(identity.new_node_id(rng))
    for _ in range(rng.randrange(1, 60)):
        a.ingest((512, rng.randrange(1 << 30)))
    for _ in range(rng.randrange(1, 60)):
        b.ingest((512, rng.randrange(1 << 30)))
    rounds = converge(a, b)
    if rounds != 1:
        return False, f"convergence took {rounds} rounds"
    if not a.id_index.same_ids(b.id_index):
        return False, "indexes differ after convergence"
    before = a.id_index.entry_count
    rounds2 = converge(a, b)
    if rounds2 != 1 or a.id_index.entry_count != before:
        return False, "repeat convergence was not idempotent"
    return True, "union reached in 1 round, idempotent"


def _framework_equivalence_case(seed: int) -> tuple[bool, str]:
    rng = Random(f"verify-fw:{seed}")
    a = StorageNode(identity.new_node_id(rng), baseline=True)
    b = StorageNode(identity.new_node_id(rng), baseline=True)
    cluster = Cluster([a, b])
    payloads = [rng.randbytes(rng.randrange(16, 200)) for _ in range(rng.randrange(5, 80))]
    for i, payload in enumerate(payloads):
        (a if i % 2 else b).ingest(payload)
    for node in (a, b):
        hashline.pipeline_tick(node.baseline.pipeline, 10**12)
    missing_b, missing_a = hashline.hash_delta(
        a.baseline.hash_index, b.baseline.hash_index
    )
    hash_pull_ids = {b.block_store[loc].id for loc in missing_a}
    hash_push_ids = {a.block_store[loc].id for loc in missing_b}
    meta_push, meta_pull = set_difference(a.id_index, b.id_index)
    if set(meta_pull) != hash_pull_ids or set(meta_push) != hash_push_ids:
        return False, "frameworks disagree on the delta block sets"
    sync_pair_meta(cluster, a, b)
    if not a.id_index.same_ids(b.id_index):
        return False, "post-sync indexes differ"
    contents_a = sorted(bl.content for bl in a.block_store.values())
    contents_b = sorted(bl.content for bl in b.block_store.values())
    if contents_a != contents_b:
        return False, "post-sync stores are not byte-identical"
    return True, "identical delta sets and byte-identical stores"


def suite_sync(seed: int = 0) -> list[Check]:
    checks: list[Check] = []
    ok_all, detail = True, ""
    for s in range(25):
        ok, detail = _two_node_partition_case(seed * 100 + s)
        if not ok:
            ok_all = False
            break
    checks.append(("partition_union_convergence_round1", ok_all,
                   detail if not ok_all else "25 randomized partitions"))

    ok_all, detail = True, ""
    for s in range(15):
        ok, detail = _framework_equivalence_case(seed * 100 + s)
        if not ok:
            ok_all = False
            break
    checks.append(("framework_equivalence_fresh_indexes", ok_all,
                   detail if not ok_all else "15 randomized inventories"))

    rng = Random(f"verify-sb:{seed}")
    ok = True
    detail = "20 dual-write workloads, deterministic and symmetric"
    for _ in range(20):
        a = StorageNode(identity.new_node_id(rng))
        b = StorageNode(identity.new_node_id(rng))
        shared = [f"k{i}" for i in range(rng.randrange(1, 10))]
        for key in shared:
            if rng.random() < 0.8:
                a.ingest((64, rng.randrange(1 << 20)), user_key=key)
            if rng.random() < 0.8:
                b.ingest((64, rng.randrange(1 << 20)), user_key=key)
        m1, c1 = reconcile_split_brain(a.id_index, b.id_index, ReconciliationPolicy())
        m2, c2 = reconcile_split_brain(b.id_index, a.id_index, ReconciliationPolicy())
        if m1.entry_count != m2.entry_count or [c.winner for c in c1] != [c.winner for c in c2]:
            ok = False
            detail = "merge is order-sensitive"
            break
        if m1.entry_count != a.id_index.entry_count + b.id_index.entry_count - len(
            set(e.id for e in a.id_index.entries()) & set(e.id for e in b.id_index.entries())
        ):
            ok = False
            detail = "merge lost or invented ids"
            break
    checks.append(("split_brain_merge_commutative_lossless", ok, detail))
    return checks


def suite_baseline(seed: int = 0) -> list[Check]:
    checks: list[Check] = []
    vectors = [
        (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
        (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    ]
    ok = all(
        hashline.fingerprint_block(data).hex() == expected
        and hashlib.sha256(data).hexdigest() == expected
        for data, expected in vectors
    )
    checks.append(("sha256_standard_vectors", ok, "empty and 'abc'"))

    check_value = crc32c(b"123456789")
    bitwise = _crc32c_bitwise(b"123456789")
    ok = check_value == 0xE3069283 == bitwise
    checks.append(
        ("crc32c_castagnoli_check_value", ok,
         f"table {check_value:#010x}, bitwise {bitwise:#010x}")
    )
    rng = Random(f"verify-crc:{seed}")
    ok = all(
        crc32c(payload) == _crc32c_bitwise(payload)
        for payload in (rng.randbytes(rng.randrange(0, 64)) for _ in range(300))
    )
    checks.append(("crc32c_table_matches_bitwise_reference", ok, "300 random payloads"))

    rng = Random(f"verify-merkle:{seed}")
    ok = True
    detail = "60 randomized tree pairs vs exhaustive leaf compare"
    for _ in range(60):
        n = rng.randrange(1, 64)
        leaves_a = [rng.randbytes(32) for _ in range(n)]
        leaves_b = list(leaves_a)
        for pos in range(n):
            if rng.random() < 0.2:
                leaves_b[pos] = rng.randbytes(32)
        diff = hashline.merkle_diff(
            hashline.merkle_build(leaves_a), hashline.merkle_build(leaves_b)
        )
        expected = [i for i in range(n) if leaves_a[i] != leaves_b[i]]
        if diff.positions != expected:
            ok = False
            detail = f"merkle_diff mismatch at n={n}"
            break
    checks.append(("merkle_diff_matches_exhaustive_compare", ok, detail))

    index = hashline.HashIndex()
    pipeline = hashline.PipelineState(index)
    for i in range(100):
        pipeline.enqueue(i, (100, i))
    hashline.pipeline_tick(pipeline, 100 * 50)
    grew = pipeline.lag_blocks == 50
    hashline.commit_checkpoint(pipeline)
    hashline.pipeline_tick(pipeline, 100 * 50)
    drained = pipeline.lag_blocks == 0 and index.consistent_flag
    rolled = hashline.crash_interrupt(pipeline)
    checks.append(
        ("pipeline_lag_and_crash_rollback", grew and drained and rolled == 50,
         f"lag grew to 50, drained, crash re-enqueued {rolled}")
    )
    return checks


SUITES = {
    "identity": suite_identity,
    "sync": suite_sync,
    "baseline": suite_baseline,
}


def run_suites(names, seed: int = 0) -> tuple[bool, list[str]]:
    """Run the named suites; returns (all_passed, printable lines)."""
    lines: list[str] = []
    all_ok = True
    for name in names:
        for check, ok, detail in SUITES[name](seed):
            lines.append(f"{'PASS' if ok else 'FAIL'} {name}.{check}: {detail}")
            all_ok = all_ok and ok
    return all_ok, lines
