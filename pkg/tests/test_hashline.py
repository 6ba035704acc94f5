import hashlib
from random import Random

import pytest

from metadr.costs import CostMeter, CostModel
from metadr.hashline import (
    EMPTY_TREE_ROOT,
    HashIndex,
    InconsistentIndex,
    PipelineState,
    commit_checkpoint,
    crash_interrupt,
    descriptor_digest,
    fingerprint_block,
    hash_delta,
    merkle_build,
    merkle_diff,
    pipeline_tick,
    rebuild_index,
)

# ---------------------------------------------------------------------------
# independent SHA-256 reference (FIPS 180-4, straight from the pseudocode),
# used to cross-check the production path before anything else relies on it

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def sha256_reference(message: bytes) -> bytes:
    h = [0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
         0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19]
    length = len(message) * 8
    message += b"\x80"
    message += b"\x00" * ((56 - len(message) % 64) % 64)
    message += length.to_bytes(8, "big")
    for off in range(0, len(message), 64):
        w = [int.from_bytes(message[off + 4 * i : off + 4 * i + 4], "big") for i in range(16)]
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            temp1 = (hh + s1 + ch + _K[i] + w[i]) & 0xFFFFFFFF
            s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            temp2 = (s0 + maj) & 0xFFFFFFFF
            hh, g, f, e, d, c, b, a = (
                g, f, e, (d + temp1) & 0xFFFFFFFF, c, b, a, (temp1 + temp2) & 0xFFFFFFFF,
            )
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, [a, b, c, d, e, f, g, hh])]
    return b"".join(x.to_bytes(4, "big") for x in h)


EMPTY_SHA = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
ABC_SHA = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_reference_implementation_matches_standard_vectors():
    assert sha256_reference(b"").hex() == EMPTY_SHA
    assert sha256_reference(b"abc").hex() == ABC_SHA


def test_fingerprint_standard_vectors():
    assert fingerprint_block(b"").hex() == EMPTY_SHA
    assert fingerprint_block(b"abc").hex() == ABC_SHA


def test_fingerprint_matches_reference_on_random_inputs():
    rng = Random(13)
    for _ in range(200):
        payload = rng.randbytes(rng.randrange(0, 300))
        assert fingerprint_block(payload) == sha256_reference(payload)


def test_fingerprint_deterministic():
    assert fingerprint_block(b"same content") == fingerprint_block(b"same content")


def test_fingerprint_charges_meter():
    meter = CostMeter(CostModel())
    fingerprint_block(b"x" * 1000, meter)
    assert meter.hashed_bytes == 1000
    assert meter.hash_ops == 1
    assert meter.t_hash == pytest.approx(1000 / (5e8 * 16))


def test_descriptor_digest_models_virtual_blocks():
    meter = CostMeter(CostModel())
    d1 = descriptor_digest(4096, 17, meter)
    d2 = descriptor_digest(4096, 17)
    d3 = descriptor_digest(4096, 18)
    assert d1 == d2 != d3
    assert meter.hashed_bytes == 4096  # charged the modeled length


# -- merkle -------------------------------------------------------------------


def test_empty_tree_root_is_sha_of_empty():
    assert merkle_build([]).root == EMPTY_TREE_ROOT == hashlib.sha256(b"").digest()


def test_single_leaf_is_its_own_root():
    leaf = hashlib.sha256(b"leaf").digest()
    assert merkle_build([leaf]).root == leaf


def test_four_leaves_match_manual_three_hash_oracle():
    leaves = [hashlib.sha256(bytes([i])).digest() for i in range(4)]
    left = hashlib.sha256(leaves[0] + leaves[1]).digest()
    right = hashlib.sha256(leaves[2] + leaves[3]).digest()
    expected_root = hashlib.sha256(left + right).digest()
    meter = CostMeter(CostModel())
    tree = merkle_build(leaves, meter)
    assert tree.root == expected_root
    assert tree.internal_node_count == 3
    assert meter.hash_ops == 3


def test_odd_leaf_is_promoted_not_rehashed():
    leaves = [hashlib.sha256(bytes([i])).digest() for i in range(3)]
    pair = hashlib.sha256(leaves[0] + leaves[1]).digest()
    expected_root = hashlib.sha256(pair + leaves[2]).digest()
    tree = merkle_build(leaves)
    assert tree.root == expected_root
    assert tree.internal_node_count == 2


def test_identical_trees_diff_empty():
    leaves = [hashlib.sha256(bytes([i])).digest() for i in range(16)]
    diff = merkle_diff(merkle_build(leaves), merkle_build(leaves))
    assert diff.positions == []
    assert diff.node_visits == 1  # equal roots, nothing descended


def test_single_divergent_leaf_in_1024():
    rng = Random(21)
    leaves_a = [rng.randbytes(32) for _ in range(1024)]
    leaves_b = list(leaves_a)
    leaves_b[517] = rng.randbytes(32)
    diff = merkle_diff(merkle_build(leaves_a), merkle_build(leaves_b))
    assert diff.positions == [517]
    height = 11  # 1024 leaves -> 11 levels
    assert diff.node_visits <= 2 * (1 * height + 1)


def test_all_leaves_differ():
    rng = Random(22)
    a = [rng.randbytes(32) for _ in range(64)]
    b = [rng.randbytes(32) for _ in range(64)]
    diff = merkle_diff(merkle_build(a), merkle_build(b))
    assert diff.positions == list(range(64))


def test_diff_matches_exhaustive_leaf_compare():
    rng = Random(23)
    for _ in range(100):
        n = rng.randrange(1, 130)
        a = [rng.randbytes(32) for _ in range(n)]
        b = [leaf if rng.random() < 0.7 else rng.randbytes(32) for leaf in a]
        diff = merkle_diff(merkle_build(a), merkle_build(b))
        assert diff.positions == [i for i in range(n) if a[i] != b[i]]


def test_diff_pads_unequal_leaf_counts():
    rng = Random(24)
    a = [rng.randbytes(32) for _ in range(10)]
    b = a + [rng.randbytes(32) for _ in range(3)]
    diff = merkle_diff(merkle_build(a), merkle_build(b))
    assert diff.positions == [10, 11, 12]


# -- pipeline -----------------------------------------------------------------


def make_pipeline(blocks=0, size=100):
    index = HashIndex()
    state = PipelineState(index)
    for i in range(blocks):
        state.enqueue(i, (size, i), size)
    return state


def test_budget_covering_everything_drains():
    state = make_pipeline(50)
    pipeline_tick(state, 50 * 100)
    assert state.lag_blocks == 0
    assert state.index.consistent_flag


def test_zero_budget_starves():
    state = make_pipeline(10)
    pipeline_tick(state, 0)
    assert state.lag_blocks == 10
    state.enqueue(99, (100, 99), 100)
    assert state.lag_blocks == 11  # strictly grows under starvation
    assert not state.index.consistent_flag


def test_sustained_ingest_at_twice_budget_halves_coverage():
    # closed-form queue arithmetic: per tick, 2 blocks in, budget for 1
    state = make_pipeline(0)
    locator = 0
    for _tick in range(40):
        for _ in range(2):
            state.enqueue(locator, (100, locator), 100)
            locator += 1
        pipeline_tick(state, 100)
    assert state.ingested == 80
    assert state.lag_blocks == 40  # half of everything ingested


def test_negative_budget_rejected():
    with pytest.raises(ValueError):
        pipeline_tick(make_pipeline(1), -1)


def test_crash_at_checkpoint_is_noop():
    state = make_pipeline(20)
    pipeline_tick(state, 20 * 100)
    commit_checkpoint(state)
    assert crash_interrupt(state) == 0


def test_crash_reenqueues_everything_past_checkpoint():
    state = make_pipeline(10_000)
    pipeline_tick(state, 100 * 100)  # hash 100 blocks, checkpoint them
    commit_checkpoint(state)
    pipeline_tick(state, 10_000 * 100)  # hash the rest, no checkpoint
    assert state.lag_blocks == 0
    rolled = crash_interrupt(state)
    assert rolled == 9900
    assert state.lag_blocks == 9900
    assert not state.index.consistent_flag
    # post-crash rebuild cost equals the re-enqueued block count
    meter = CostMeter(CostModel())
    pipeline_tick(state, 9900 * 100, meter)
    assert meter.hash_ops == 9900


def test_crash_rollback_preserves_order():
    state = make_pipeline(8)
    pipeline_tick(state, 800)
    crash_interrupt(state)
    assert [p.locator for p in state.pending] == list(range(8))


# -- rebuild and delta -----------------------------------------------------------


def test_rebuild_charges_full_inventory_bytes():
    # 1.1e14 bytes at H=5e8, C=16 -> 13,750 virtual seconds
    meter = CostMeter(CostModel())
    blocks = [(0, (110_000_000_000_000, 1))]
    rebuild_index(blocks, meter)
    assert meter.t_hash == pytest.approx(13_750.0)


def test_rebuild_empty_inventory_costs_nothing():
    meter = CostMeter(CostModel())
    index, tree = rebuild_index([], meter)
    assert meter.t_hash == 0
    assert tree.root == EMPTY_TREE_ROOT


def test_rebuild_16gb_costs_two_seconds():
    meter = CostMeter(CostModel())
    rebuild_index([(0, (16_000_000_000, 1))], meter)
    assert meter.t_hash == pytest.approx(2.0)


def test_rebuild_hash_ops_count_leaves_plus_internal_nodes():
    meter = CostMeter(CostModel())
    blocks = [(i, (64, i)) for i in range(16)]
    index, tree = rebuild_index(blocks, meter)
    assert meter.hash_ops == 16 + tree.internal_node_count == 16 + 15
    assert meter.content_reads == 16
    assert index.consistent_flag


def test_hash_delta_identical_inventories():
    a, _ = rebuild_index([(i, (64, i)) for i in range(10)])
    b, _ = rebuild_index([(i, (64, i)) for i in range(10)])
    assert hash_delta(a, b) == ([], [])


def test_stale_index_refuses_delta_until_drained():
    state = make_pipeline(5)
    fresh, _ = rebuild_index([(i, (64, i)) for i in range(5)])
    with pytest.raises(InconsistentIndex):
        hash_delta(state.index, fresh)
    pipeline_tick(state, 500)
    hash_delta(state.index, fresh)  # now serviceable


def test_lost_index_refuses_delta():
    index, _ = rebuild_index([(i, (64, i)) for i in range(5)])
    index.mark_lost()
    other, _ = rebuild_index([(i, (64, i)) for i in range(5)])
    with pytest.raises(InconsistentIndex):
        hash_delta(index, other)


def test_hash_delta_matches_content_comparison_oracle():
    rng = Random(31)
    for _ in range(30):
        contents_a = {i: rng.randrange(20) for i in range(rng.randrange(1, 40))}
        contents_b = {i: rng.randrange(20) for i in range(rng.randrange(1, 40))}
        a, _ = rebuild_index([(loc, (64, seed)) for loc, seed in sorted(contents_a.items())])
        b, _ = rebuild_index([(loc, (64, seed)) for loc, seed in sorted(contents_b.items())])
        missing_b, missing_a = hash_delta(a, b)
        values_a = set(contents_a.values())
        values_b = set(contents_b.values())
        assert {contents_a[loc] for loc in missing_b} == values_a - values_b
        assert {contents_b[loc] for loc in missing_a} == values_b - values_a
