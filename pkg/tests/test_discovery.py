from random import Random

import pytest

from metadr.discovery import (
    ChainTooDeep,
    CnameLoop,
    DnsRecordSet,
    FutureVersion,
    NameNotFound,
    Registry,
    rebind_cname,
    resolve,
)
from metadr.identity import new_node_id


def zone():
    records = DnsRecordSet()
    records.add_endpoint("host-a", "10.0.0.1:7000")
    records.add_endpoint("host-b", "10.0.0.2:7000")
    records.add_cname("service-x", "host-a")
    return records


# -- resolution ----------------------------------------------------------------


def test_direct_endpoint_has_chain_length_zero():
    result = resolve(zone(), "host-a")
    assert result.endpoint == "10.0.0.1:7000"
    assert result.chain_length == 0


def test_two_hop_chain():
    records = zone()
    records.add_cname("alias", "service-x")
    result = resolve(records, "alias")
    assert result.endpoint == "10.0.0.1:7000"
    assert result.chain_length == 2


def test_unknown_name():
    with pytest.raises(NameNotFound):
        resolve(zone(), "ghost")


def test_cname_loop_detected_exactly():
    records = DnsRecordSet()
    records.add_cname("a", "b")
    records.add_cname("b", "a")
    with pytest.raises(CnameLoop):
        resolve(records, "a")


def test_chain_too_deep():
    records = DnsRecordSet()
    for i in range(12):
        records.add_cname(f"n{i}", f"n{i + 1}")
    records.add_endpoint("n12", "10.0.0.9:1")
    with pytest.raises(ChainTooDeep):
        resolve(records, "n0", max_depth=10)
    assert resolve(records, "n0", max_depth=12).chain_length == 12


def test_resolution_is_pure():
    records = zone()
    assert resolve(records, "service-x") == resolve(records, "service-x")


def test_name_cannot_have_both_record_kinds():
    records = zone()
    with pytest.raises(ValueError):
        records.add_cname("host-a", "elsewhere")
    with pytest.raises(ValueError):
        records.add_endpoint("service-x", "1.2.3.4:1")


def test_zone_line_parsing():
    records = DnsRecordSet.from_zone_lines(
        ["# comment", "ENDPT h 1.1.1.1:9", "CNAME s h", ""]
    )
    assert resolve(records, "s").endpoint == "1.1.1.1:9"
    with pytest.raises(ValueError):
        DnsRecordSet.from_zone_lines(["BOGUS x y"])


# -- rebinding -----------------------------------------------------------------


def test_rebind_repoints_resolution():
    records = zone()
    rebind_cname(records, "service-x", "host-b")
    assert resolve(records, "service-x").endpoint == "10.0.0.2:7000"


def test_rebind_unknown_name():
    with pytest.raises(NameNotFound):
        rebind_cname(zone(), "ghost", "host-a")


def test_rebind_into_loop_is_lazy():
    records = zone()
    records.add_cname("alias", "service-x")
    rebind_cname(records, "service-x", "alias")  # rebind itself succeeds
    with pytest.raises(CnameLoop):
        resolve(records, "alias")


def test_registry_resolves_current_endpoint_after_rebind():
    records = zone()
    registry = Registry(records=records)
    nid = new_node_id(Random(1))
    registry.register(nid, "service-x")
    assert registry.lookup_endpoint(nid) == "10.0.0.1:7000"
    rebind_cname(records, "service-x", "host-b")
    # keyed by service name, not cached endpoint
    assert registry.lookup_endpoint(nid) == "10.0.0.2:7000"


# -- registry versioning ----------------------------------------------------------


def test_bulk_registration_is_one_version():
    registry = Registry(records=zone())
    rng = Random(2)
    pairs = [(new_node_id(rng), "service-x") for _ in range(5)]
    version = registry.bulk_register(pairs)
    assert version == 1
    assert registry.version == 1
    assert len(registry.entries) == 5


def test_reregistration_bumps_version_and_wins():
    records = zone()
    registry = Registry(records=records)
    nid = new_node_id(Random(3))
    v1 = registry.register(nid, "service-x")
    rebind_cname(records, "service-x", "host-b")
    v2 = registry.register(nid, "service-x")
    assert (v1, v2) == (1, 2)
    assert registry.entries[nid].endpoint_at_registration == "10.0.0.2:7000"


def test_change_log_replay_reproduces_state():
    registry = Registry(records=zone())
    rng = Random(4)
    nids = [new_node_id(rng) for _ in range(30)]
    for _ in range(1000):
        registry.register(nids[rng.randrange(len(nids))], "service-x")
    assert registry.replay() == registry.entries


def test_delta_since_current_is_empty():
    registry = Registry(records=zone())
    registry.register(new_node_id(Random(5)), "service-x")
    assert registry.delta_since(registry.version) == []


def test_delta_since_genesis_is_full_log():
    registry = Registry(records=zone())
    for _ in range(7):
        registry.register(new_node_id(Random(6)), "service-x")
    assert registry.delta_since(0) == registry.change_log


def test_delta_split_concatenation_oracle():
    registry = Registry(records=zone())
    rng = Random(7)
    for _ in range(50):
        registry.register(new_node_id(rng), "service-x")
    for _ in range(10):
        cut = rng.randrange(0, registry.version + 1)
        assert registry.delta_since(0) == registry.delta_since(0)[:cut] + registry.delta_since(cut)


def test_future_version_rejected():
    registry = Registry(records=zone())
    with pytest.raises(FutureVersion):
        registry.delta_since(99)
