from random import Random

import pytest

from metadr.costs import CostMeter, CostModel
from metadr.identity import new_node_id
from metadr.index import Checkpoint, set_difference
from metadr.node import StorageNode
from metadr.sync import (
    Cluster,
    ConditionState,
    NoSurvivingReplica,
    ReconciliationPolicy,
    Volumetrics,
    assess_conditions,
    compute_delta_hash,
    compute_delta_meta,
    converge,
    ensure_baseline_consistent,
    execute_failback,
    execute_failover,
    reconcile_split_brain,
    sync_pair_meta,
    volumetric_report,
)

REFERENCE_VOL = Volumetrics(data_bytes=1.1e14, blocks=1_000_000_000, delta_bytes=1.0e12)


def make_nodes(count, *, baseline=False, seed=0):
    rng = Random(f"sync-test:{seed}")
    return [StorageNode(new_node_id(rng), baseline=baseline) for _ in range(count)]


def fill(node, n, tag=0):
    for i in range(n):
        node.ingest((128, tag * 1_000_000 + i))


# -- compute_delta_meta ----------------------------------------------------------


def test_synchronized_peer_yields_empty_plan_with_header_only_streams():
    a, b = make_nodes(2)
    cluster = Cluster([a, b])
    fill(a, 10)
    sync_pair_meta(cluster, a, b)
    ckpt = cluster.checkpoint(a.nid, b.nid)
    plan = compute_delta_meta(a.id_index, ckpt, b.id_index)
    assert plan.ids_to_pull == [] and plan.ids_to_push == []
    assert plan.index_bytes_exchanged == 2 * 16  # two bare headers
    assert plan.rehash_required_bytes == 0


def test_peer_missing_delta_blocks():
    a, b = make_nodes(2)
    cluster = Cluster([a, b])
    fill(a, 20)
    sync_pair_meta(cluster, a, b)
    fill(a, 7)  # the delta
    ckpt = cluster.checkpoint(a.nid, b.nid)
    plan = compute_delta_meta(a.id_index, ckpt, b.id_index)
    assert len(plan.ids_to_push) == 7
    assert plan.ids_to_pull == []
    assert {c.lcv for c in plan.ids_to_push} == set(range(21, 28))


def test_routine_replication_transmits_delta_not_inventory():
    a, b = make_nodes(2)
    cluster = Cluster([a, b])
    fill(a, 1000)
    sync_pair_meta(cluster, a, b)
    fill(a, 5)
    ckpt = cluster.checkpoint(a.nid, b.nid)
    plan = compute_delta_meta(a.id_index, ckpt, b.id_index)
    # O(delta) entries on the wire, not O(N)
    assert plan.index_bytes_exchanged == (16 + 32 * 5) + 16


def test_delta_plan_against_brute_force_oracle():
    for seed in range(30):
        rng = Random(seed)
        a, b = make_nodes(2, seed=seed)
        cluster = Cluster([a, b])
        fill(a, rng.randrange(1, 80), tag=1)
        fill(b, rng.randrange(1, 80), tag=2)
        ckpt = cluster.checkpoint(a.nid, b.nid)
        plan = compute_delta_meta(a.id_index, ckpt, b.id_index)
        push, pull = set_difference(a.id_index, b.id_index)
        assert plan.ids_to_push == push
        assert plan.ids_to_pull == pull


# -- compute_delta_hash ----------------------------------------------------------


def test_fresh_indexes_plan_equals_content_truth():
    a, b = make_nodes(2, baseline=True)
    fill(a, 12, tag=1)
    fill(b, 9, tag=2)
    ensure_baseline_consistent(a)
    ensure_baseline_consistent(b)
    plan = compute_delta_hash(
        a.baseline.hash_index, b.baseline.hash_index, ConditionState()
    )
    assert plan.rehash_required_bytes == 0
    assert len(plan.ids_to_pull) == 9
    assert len(plan.ids_to_push) == 12


def test_condition3_surfaces_full_inventory_cost():
    a, b = make_nodes(2, baseline=True)
    fill(a, 10)
    condition = ConditionState(local_rehash_bytes=int(1.1e14))
    plan = compute_delta_hash(a.baseline.hash_index, b.baseline.hash_index, condition)
    assert plan.rehash_required_bytes == int(1.1e14)
    assert plan.ids_to_pull == [] and plan.ids_to_push == []


def test_condition1_lag_cost_is_sum_of_lagged_blocks():
    a, b = make_nodes(2, baseline=True)
    fill(a, 25)  # pipeline never ticked: all 25 blocks lag
    ensure_baseline_consistent(b)
    condition = assess_conditions(a, b)
    assert condition.local_rehash_bytes == 25 * 128
    assert condition.peer_rehash_bytes == 0


def test_assess_conditions_after_index_loss():
    a, b = make_nodes(2, baseline=True)
    fill(a, 10)
    ensure_baseline_consistent(a)
    a.baseline.hash_index.mark_lost()
    condition = assess_conditions(a, b)
    assert condition.local_rehash_bytes == a.physical_bytes


# -- failover ---------------------------------------------------------------------


def make_cluster(n=3, *, baseline=False, seed=0):
    nodes = make_nodes(n, baseline=baseline, seed=seed)
    return Cluster(nodes), nodes


def replicate_all(cluster, nodes):
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            sync_pair_meta(cluster, a, b)


def test_failover_produces_superset_and_phase_breakdown():
    cluster, (a, b, c) = make_cluster()
    fill(a, 30, tag=1)
    fill(b, 20, tag=2)
    replicate_all(cluster, [a, b, c])
    fill(b, 15, tag=3)  # written after the last sync; only b has these
    b.crash()
    report = execute_failover(cluster, b.nid, c.nid, "meta")
    assert report.kind == "failover" and report.framework == "meta"
    assert report.t_hash == 0.0 and report.hash_ops == 0 and report.content_reads == 0
    assert report.virtual_rto_seconds == pytest.approx(
        report.t_hash + report.t_index + report.t_delta + report.t_wal_replay
    )
    # substitute is a superset of everything the survivor holds
    _, missing = set_difference(c.id_index, a.id_index)
    assert missing == []


def test_failover_requires_crashed_node():
    cluster, (a, b, c) = make_cluster()
    with pytest.raises(RuntimeError):
        execute_failover(cluster, b.nid, c.nid, "meta")


def test_failover_without_survivors():
    cluster, (a, b) = make_cluster(2)
    fill(a, 5)
    a.crash()
    with pytest.raises(NoSurvivingReplica):
        execute_failover(cluster, a.nid, b.nid, "meta")


def test_paper_scale_failover_rtos():
    cluster, (a, b, c) = make_cluster(baseline=True)
    fill(a, 10)
    replicate_all(cluster, [a, b, c])
    for node in (a, b, c):
        ensure_baseline_consistent(node)
    a.crash()
    hash_report = execute_failover(cluster, a.nid, c.nid, "hash", volumetrics=REFERENCE_VOL)
    assert hash_report.virtual_rto_seconds == pytest.approx(14_575.6, abs=0.5)
    a.restart("none", wal_replay_seconds=0.0)
    replicate_all(cluster, [a, b, c])
    a.crash()
    meta_report = execute_failover(cluster, a.nid, c.nid, "meta", volumetrics=REFERENCE_VOL)
    assert meta_report.virtual_rto_seconds == pytest.approx(825.6, abs=0.5)
    assert meta_report.t_hash == 0.0
    factor = hash_report.virtual_rto_seconds / meta_report.virtual_rto_seconds
    assert factor == pytest.approx(17.65, abs=0.1)


def test_zero_delta_failover_is_index_time_only():
    report = volumetric_report(
        "failover", "meta", CostModel(),
        Volumetrics(data_bytes=1.1e14, blocks=1_000_000_000, delta_bytes=0.0),
    )
    assert report.t_delta == 0.0
    assert report.virtual_rto_seconds == report.t_index


def test_network_bytes_identical_across_frameworks():
    meta_r = volumetric_report("failover", "meta", CostModel(), REFERENCE_VOL)
    hash_r = volumetric_report("failover", "hash", CostModel(), REFERENCE_VOL)
    assert meta_r.network_bytes == hash_r.network_bytes
    assert hash_r.t_hash > 0 and meta_r.t_hash == 0


# -- failback ---------------------------------------------------------------------


def test_failback_with_no_absence_writes():
    cluster, (a, b, c) = make_cluster()
    fill(a, 10)
    replicate_all(cluster, [a, b, c])
    a.crash()
    a.restart("none")  # charges 18 s replay
    report = execute_failback(cluster, a.nid, "meta")
    assert report.t_wal_replay == 18.0
    assert report.t_delta == 0.0
    assert report.virtual_rto_seconds == pytest.approx(report.t_index + 18.0)


def test_failback_acquires_absence_writes_union_oracle():
    for seed in range(20):
        rng = Random(seed)
        cluster, nodes = make_cluster(3, seed=seed)
        a, b, c = nodes
        fill(a, 10, tag=1)
        replicate_all(cluster, nodes)
        a.crash()
        for node, tag in ((b, 2), (c, 3)):
            fill(node, rng.randrange(1, 30), tag=tag)
        sync_pair_meta(cluster, b, c)
        a.restart("none", wal_replay_seconds=0.0)
        # oracle: snapshot the union of everything anyone holds pre-failback
        union_before = (
            {e.id for e in a.id_index.entries()}
            | {e.id for e in b.id_index.entries()}
            | {e.id for e in c.id_index.entries()}
        )
        execute_failback(cluster, a.nid, "meta")
        assert {e.id for e in a.id_index.entries()} == union_before


def test_crash_failback_includes_replay_in_report():
    cluster, (a, b, c) = make_cluster()
    fill(a, 5)
    replicate_all(cluster, [a, b, c])
    a.crash(torn_wal_bytes=5)
    a.restart("none")
    report = execute_failback(cluster, a.nid, "meta", volumetrics=REFERENCE_VOL)
    assert report.t_wal_replay == 18.0
    assert report.virtual_rto_seconds > 825.0


# -- converge -----------------------------------------------------------------------


def test_disjoint_partition_writes_converge_in_one_round():
    a, b = make_nodes(2)
    fill(a, 40, tag=1)
    fill(b, 25, tag=2)
    assert converge(a, b) == 1
    assert a.id_index.same_ids(b.id_index)
    assert a.id_index.entry_count == 65


def test_identical_indexes_converge_idempotently():
    a, b = make_nodes(2)
    fill(a, 10)
    converge(a, b)
    meter = CostMeter(CostModel())
    rounds = converge(a, b, meter=meter)
    assert rounds == 1
    assert meter.t_delta == 0.0  # empty transfers on repeat


def test_converge_is_commutative_and_idempotent_across_seeds():
    for seed in range(25):
        rng = Random(seed)
        a, b = make_nodes(2, seed=seed)
        fill(a, rng.randrange(1, 50), tag=1)
        fill(b, rng.randrange(1, 50), tag=2)
        assert converge(a, b) == 1
        before = (a.id_index.entry_count, b.id_index.entry_count)
        assert converge(a, b) == 1
        assert (a.id_index.entry_count, b.id_index.entry_count) == before


# -- split brain ---------------------------------------------------------------------


def test_no_shared_keys_means_no_conflicts():
    a, b = make_nodes(2)
    a.ingest(b"1", user_key="left")
    b.ingest(b"2", user_key="right")
    merged, conflicts = reconcile_split_brain(a.id_index, b.id_index)
    assert conflicts == []
    assert merged.entry_count == 2


def test_lww_by_lcv_picks_higher_value():
    a, b = make_nodes(2)
    for _ in range(16):
        a.ingest(b"filler")  # advance a's clock to 17
    a.ingest(b"a-write", user_key="shared")  # lcv 17
    for _ in range(39):
        b.ingest(b"filler")
    b_write = b.ingest(b"b-write", user_key="shared")  # lcv 40
    merged, conflicts = reconcile_split_brain(a.id_index, b.id_index)
    assert len(conflicts) == 1
    assert conflicts[0].winner == b_write
    assert merged.entry_count == a.id_index.entry_count + b.id_index.entry_count


def test_lcv_tie_broken_by_greater_nid():
    a, b = make_nodes(2)
    wa = a.ingest(b"A", user_key="k")  # lcv 1 on both sides
    wb = b.ingest(b"B", user_key="k")
    _, conflicts = reconcile_split_brain(a.id_index, b.id_index)
    expected = wa if wa.nid.value > wb.nid.value else wb
    assert conflicts[0].winner == expected


def test_merge_hook_receives_both_heads():
    a, b = make_nodes(2)
    a.ingest(b"A", user_key="k")
    b.ingest(b"B", user_key="k")
    seen = []

    def hook(user_key, low, high):
        seen.append((user_key, low, high))
        return low

    policy = ReconciliationPolicy(mode="application_merge_hook", merge_hook=hook)
    _, conflicts = reconcile_split_brain(a.id_index, b.id_index, policy)
    assert seen and conflicts[0].winner == seen[0][1]


def test_reconcile_deterministic_across_argument_order():
    for seed in range(25):
        rng = Random(seed)
        a, b = make_nodes(2, seed=seed)
        for i in range(rng.randrange(1, 15)):
            key = f"k{rng.randrange(6)}"
            if rng.random() < 0.5:
                a.ingest((64, i), user_key=key)
            else:
                b.ingest((64, i), user_key=key)
        m1, c1 = reconcile_split_brain(a.id_index, b.id_index)
        m2, c2 = reconcile_split_brain(b.id_index, a.id_index)
        assert m1.ids() == m2.ids()
        assert [(c.user_key, c.winner) for c in c1] == [(c.user_key, c.winner) for c in c2]


def test_merge_never_loses_ids_and_conflicts_have_two_sources():
    for seed in range(15):
        rng = Random(seed + 500)
        a, b = make_nodes(2, seed=seed + 500)
        for i in range(rng.randrange(2, 25)):
            key = f"k{rng.randrange(4)}"
            (a if rng.random() < 0.5 else b).ingest((64, i), user_key=key)
        ids_union = set(a.id_index.ids()) | set(b.id_index.ids())
        merged, conflicts = reconcile_split_brain(a.id_index, b.id_index)
        assert set(merged.ids()) == ids_union  # union cardinality check
        for conflict in conflicts:
            assert len({c.nid for c in conflict.candidates}) >= 2


# -- framework equivalence -------------------------------------------------------------


def test_frameworks_transfer_identical_block_sets():
    for seed in range(10):
        rng = Random(seed)
        a, b = make_nodes(2, baseline=True, seed=seed)
        cluster = Cluster([a, b])
        for i in range(rng.randrange(2, 60)):
            (a if rng.random() < 0.5 else b).ingest(
                f"unique content {seed}:{i}".encode()
            )
        ensure_baseline_consistent(a)
        ensure_baseline_consistent(b)
        hash_plan = compute_delta_hash(
            a.baseline.hash_index, b.baseline.hash_index, ConditionState()
        )
        hash_pull = {b.block_store[loc].id for loc in hash_plan.ids_to_pull}
        hash_push = {a.block_store[loc].id for loc in hash_plan.ids_to_push}
        ckpt = Checkpoint(peer=b.nid)
        meta_plan = compute_delta_meta(a.id_index, ckpt, b.id_index)
        assert set(meta_plan.ids_to_pull) == hash_pull
        assert set(meta_plan.ids_to_push) == hash_push
        sync_pair_meta(cluster, a, b)
        assert sorted(bl.content for bl in a.block_store.values()) == sorted(
            bl.content for bl in b.block_store.values()
        )


def test_k_node_gossip_converges_within_tournament_bound():
    from metadr.sync import converge_cluster

    for k in (3, 4, 5, 8):
        for seed in range(5):
            rng = Random(f"gossip:{k}:{seed}")
            nodes = [StorageNode(new_node_id(rng)) for _ in range(k)]
            for tag, node in enumerate(nodes):
                for i in range(rng.randrange(1, 25)):
                    node.ingest((64, tag * 10_000 + i))
            rounds = converge_cluster(nodes)
            assert rounds <= k - 1
            union_size = sum(1 for _ in nodes[0].id_index.entries())
            for node in nodes[1:]:
                assert node.id_index.same_ids(nodes[0].id_index)
            assert union_size == nodes[0].id_index.entry_count
