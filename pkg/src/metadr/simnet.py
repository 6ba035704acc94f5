"""Deterministic cluster simulator: virtual clock, fault injection,
scenario execution, and the scaled soak-test driver.

Everything is a pure function of (scenario, seed): node ids, workload
contents, fault timing, and jitter all come from named seeded streams,
so identical inputs produce bit-identical metrics.

Two fidelities coexist. Live mechanics run at desk scale: real
ingestion through the logical clocks and indexes, real WAL recovery,
real index exchange and block transfer, with violation counters watched
throughout. Recovery-time arithmetic for production-scale inventories is
charged through the cost model from declared volumetrics (blocks, data
bytes, delta bytes) so hours-long rehash windows are reproduced in
milliseconds of wall time.

Scenario files are YAML (key/value with nested mappings); see
`load_scenario` for the schema. The soak driver reproduces the
seven-day cadence: planned failover/failback cycles every 12 hours plus
crash injections (with index loss, i.e. condition 3) on configured
days.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from random import Random

import yaml

from .costs import CostMeter, CostModel, account_hash_cost, account_transfer  # noqa: F401
from .discovery import DnsRecordSet, Registry, rebind_cname, resolve
from .identity import new_node_id
from .node import NodeStatus, StorageNode
from .sync import (
    Cluster,
    ConditionState,
    DrReport,
    Volumetrics,
    compute_delta_hash,
    converge,
    ensure_baseline_consistent,
    execute_failback,
    execute_failover,
    volumetric_report,
)

HOURS = 3600.0


class ScenarioValidation(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenario definition


@dataclass
class WorkloadSpec:
    blocks_per_hour_per_node: int = 0
    duplicate_ratio: float = 0.0
    sequential_fraction: float = 0.7
    keyed_fraction: float = 1.0


@dataclass
class InventorySpec:
    blocks_per_node: int = 0
    block_bytes_min: int = 1024
    block_bytes_max: int = 4096


@dataclass
class FaultSpec:
    kind: str
    at_hours: float
    until_hours: float | None = None
    node: int | None = None
    failed: int | None = None
    substitute: int | None = None
    a: int | None = None
    b: int | None = None
    side_a: tuple = ()
    side_b: tuple = ()
    fault_kind: str = "none"
    torn_bytes: int | None = None


@dataclass
class Scenario:
    name: str = "scenario"
    seed: int = 0
    fidelity: str = "concrete"  # concrete | virtual
    framework: str = "meta"  # meta | hash | both
    horizon_hours: float = 8.0
    nodes: int = 2
    replica_factor: int = 2
    inventory: InventorySpec = field(default_factory=InventorySpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    cost: CostModel = field(default_factory=CostModel)
    volumetrics: Volumetrics | None = None
    faults: list[FaultSpec] = field(default_factory=list)
    zone_lines: list[str] = field(default_factory=list)


_FAULT_KINDS = {
    "crash", "restart", "index_loss", "pipeline_crash",
    "partition", "failover", "failback", "converge",
}


def load_scenario(source) -> Scenario:
    """Build a Scenario from a YAML path, YAML text, or a dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if "\n" not in str(source):
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ScenarioValidation("scenario must be a mapping")
    cluster = raw.get("cluster", {})
    inventory = raw.get("inventory", {})
    workload = raw.get("workload", {})
    cost = raw.get("cost", {})
    vol = raw.get("volumetrics")
    scenario = Scenario(
        name=str(raw.get("name", "scenario")),
        seed=int(raw.get("seed", 0)),
        fidelity=str(raw.get("fidelity", "concrete")),
        framework=str(raw.get("framework", "meta")),
        horizon_hours=float(raw.get("horizon_hours", 8.0)),
        nodes=int(cluster.get("nodes", 2)),
        replica_factor=int(cluster.get("replica_factor", 2)),
        inventory=InventorySpec(
            blocks_per_node=int(inventory.get("blocks_per_node", 0)),
            block_bytes_min=int(inventory.get("block_bytes_min", 1024)),
            block_bytes_max=int(inventory.get("block_bytes_max", 4096)),
        ),
        workload=WorkloadSpec(
            blocks_per_hour_per_node=int(workload.get("blocks_per_hour_per_node", 0)),
            duplicate_ratio=float(workload.get("duplicate_ratio", 0.0)),
            sequential_fraction=float(workload.get("sequential_fraction", 0.7)),
            keyed_fraction=float(workload.get("keyed_fraction", 1.0)),
        ),
        cost=CostModel(
            hash_throughput=float(cost.get("hash_throughput", 5.0e8)),
            cores=int(cost.get("cores", 16)),
            bandwidth=float(cost.get("bandwidth", 1.25e9)),
            index_entry_bytes=int(cost.get("index_entry_bytes", 32)),
            wal_replay_seconds=float(cost.get("wal_replay_seconds", 18.0)),
            rto_jitter_cv=float(cost.get("rto_jitter_cv", 0.012)),
            fragmentation_factor=float(cost.get("fragmentation_factor", 0.0)),
            link_latency_seconds=float(cost.get("link_latency_seconds", 0.0)),
        ),
        volumetrics=Volumetrics(
            data_bytes=float(vol["data_bytes"]),
            blocks=int(float(vol["blocks"])),
            delta_bytes=float(vol["delta_bytes"]),
        )
        if vol
        else None,
        faults=[
            FaultSpec(
                kind=str(f["kind"]),
                at_hours=float(f["at_hours"]),
                until_hours=float(f["until_hours"]) if "until_hours" in f else None,
                node=f.get("node"),
                failed=f.get("failed"),
                substitute=f.get("substitute"),
                a=f.get("a"),
                b=f.get("b"),
                side_a=tuple(f.get("side_a", ())),
                side_b=tuple(f.get("side_b", ())),
                fault_kind=str(f.get("fault_kind", "none")),
                torn_bytes=f.get("torn_bytes"),
            )
            for f in raw.get("faults", [])
        ],
        zone_lines=[str(line) for line in raw.get("discovery", {}).get("zone", [])],
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(s: Scenario) -> None:
    if s.fidelity not in ("concrete", "virtual"):
        raise ScenarioValidation(f"fidelity must be concrete|virtual, got {s.fidelity!r}")
    if s.framework not in ("meta", "hash", "both"):
        raise ScenarioValidation(f"framework must be meta|hash|both, got {s.framework!r}")
    if s.nodes < 1:
        raise ScenarioValidation("cluster needs at least one node")
    if not 1 <= s.replica_factor <= s.nodes:
        raise ScenarioValidation("replica_factor must be within [1, nodes]")
    if s.horizon_hours <= 0:
        raise ScenarioValidation("horizon_hours must be positive")
    windows: list[tuple[float, float, frozenset]] = []
    for f in s.faults:
        if f.kind not in _FAULT_KINDS:
            raise ScenarioValidation(f"unknown fault kind {f.kind!r}")
        if not 0 <= f.at_hours <= s.horizon_hours:
            raise ScenarioValidation(f"fault at {f.at_hours}h outside horizon")
        for ordinal in (f.node, f.failed, f.substitute, f.a, f.b):
            if ordinal is not None and not 0 <= int(ordinal) < s.nodes:
                raise ScenarioValidation(f"node ordinal {ordinal} out of range")
        if f.kind == "partition":
            if f.until_hours is None or f.until_hours <= f.at_hours:
                raise ScenarioValidation("partition needs until_hours > at_hours")
            members = frozenset(f.side_a) | frozenset(f.side_b)
            if not f.side_a or not f.side_b or frozenset(f.side_a) & frozenset(f.side_b):
                raise ScenarioValidation("partition sides must be disjoint and non-empty")
            if any(not 0 <= int(m) < s.nodes for m in members):
                raise ScenarioValidation("partition member out of range")
            for start, end, other in windows:
                if f.at_hours < end and start < f.until_hours and members & other:
                    raise ScenarioValidation("overlapping partitions share nodes")
            windows.append((f.at_hours, f.until_hours, members))
        if f.kind == "failover" and f.failed == f.substitute:
            raise ScenarioValidation("failover substitute must differ from failed node")


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Violations:
    lcv_reuse: int = 0
    immutability: int = 0
    corruption: int = 0

    @property
    def total(self) -> int:
        return self.lcv_reuse + self.immutability + self.corruption


@dataclass
class DrEvent:
    at_hours: float
    label: str
    reports: list[DrReport] = field(default_factory=list)


@dataclass
class Metrics:
    scenario: str
    seed: int
    events: list[DrEvent] = field(default_factory=list)
    converge_rounds: list[int] = field(default_factory=list)
    ingests: int = 0
    total_entries: int = 0
    physical_index_bytes: float = 0.0
    index_series: list[tuple[float, int, float]] = field(default_factory=list)
    violations: Violations = field(default_factory=Violations)
    notes: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# runtime


def _content_bytes(seed: int, size: int) -> bytes:
    """Deterministic pseudo-content: equal (seed, size) means equal bytes."""
    pattern = seed.to_bytes(8, "big")
    reps = size // 8 + 1
    return (pattern * reps)[:size]


class SimRuntime:
    """Executes one scenario on a virtual clock."""

    def __init__(self, scenario: Scenario, seed: int | None = None) -> None:
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.rng_work = Random(f"{self.seed}:workload")
        self.rng_sizes = Random(f"{self.seed}:sizes")
        self.rng_faults = Random(f"{self.seed}:faults")
        self.now_hours = 0.0
        self.metrics = Metrics(scenario=scenario.name, seed=self.seed)
        self._content_counter = 0
        self._dup_pool: list[tuple[int, int]] = []
        self._key_counter = 0
        self._keys: list[str] = []

        baseline = scenario.framework in ("hash", "both")
        rng_ids = Random(f"{self.seed}:nid")
        self.sim_nodes: list[StorageNode] = []
        for _ in range(scenario.nodes):
            node = StorageNode(
                new_node_id(rng_ids),
                baseline=baseline,
                fragmentation_factor=scenario.cost.fragmentation_factor,
            )
            self.sim_nodes.append(node)
        replica_map = None
        if scenario.replica_factor > 1:
            replica_map = {}
            n = scenario.nodes
            for i, node in enumerate(self.sim_nodes):
                peers = {
                    self.sim_nodes[(i + k) % n].nid
                    for k in range(1, scenario.replica_factor)
                }
                replica_map[node.nid] = peers
        self.cluster = Cluster(self.sim_nodes, scenario.cost, replica_map=None)
        self.replica_peers = replica_map or {}

        self.records = (
            DnsRecordSet.from_zone_lines(scenario.zone_lines)
            if scenario.zone_lines
            else DnsRecordSet()
        )
        self.registry = Registry(records=self.records)
        for i, node in enumerate(self.sim_nodes):
            service = f"service-{i}"
            if service not in self.records.cname_records and (
                service not in self.records.endpoint_records
            ):
                host = f"host-{i}"
                if host not in self.records.endpoint_records:
                    self.records.add_endpoint(host, f"10.0.0.{10 + i}:7000")
                self.records.add_cname(service, host)
        self.registry.bulk_register(
            [(node.nid, f"service-{i}") for i, node in enumerate(self.sim_nodes)]
        )

    # -- workload ------------------------------------------------------

    def _next_payload(self) -> tuple[object, int]:
        work = self.scenario.workload
        sizes = self.scenario.inventory
        if work.duplicate_ratio > 0 and self._dup_pool and (
            self.rng_work.random() < work.duplicate_ratio
        ):
            seed, size = self._dup_pool[self.rng_work.randrange(len(self._dup_pool))]
        else:
            seed = self._content_counter
            self._content_counter += 1
            lo, hi = sizes.block_bytes_min, sizes.block_bytes_max
            size = (
                lo
                if lo >= hi
                else int(math.exp(self.rng_sizes.uniform(math.log(lo), math.log(hi))))
            )
            if len(self._dup_pool) < 10000:
                self._dup_pool.append((seed, size))
        if self.scenario.fidelity == "concrete":
            return _content_bytes(seed, size), size
        return (size, seed), size

    def _next_user_key(self) -> str | None:
        work = self.scenario.workload
        if work.keyed_fraction <= 0 or self.rng_work.random() >= work.keyed_fraction:
            return None
        if self._keys and self.rng_work.random() >= work.sequential_fraction:
            return self._keys[self.rng_work.randrange(len(self._keys))]
        key = f"k{self._key_counter}"
        self._key_counter += 1
        if len(self._keys) < 50000:
            self._keys.append(key)
        return key

    def ingest_batch(self, node: StorageNode, count: int) -> None:
        peers = [self.cluster.node(p) for p in sorted(
            self.replica_peers.get(node.nid, ()), key=lambda n: n.value
        )]
        for _ in range(count):
            payload, _size = self._next_payload()
            node.ingest(payload, user_key=self._next_user_key())
            self.metrics.ingests += 1
        # replicate everything above the pair watermark, not just this
        # batch: a peer that was down or partitioned catches up here
        for peer in peers:
            if peer.status is not NodeStatus.UP:
                continue
            if not self.cluster.reachable(node.nid, peer.nid):
                continue
            ckpt = self.cluster.checkpoint(node.nid, peer.nid)
            for entry in node.id_index.entries_above(node.nid, ckpt.watermark(node.nid)):
                peer.replicate_in(entry, node.block_store[entry.location])
            ckpt.advance(node.nid, node.id_index.max_lcv(node.nid))

    # -- fault handlers --------------------------------------------------

    def frameworks(self) -> list[str]:
        if self.scenario.framework == "both":
            return ["meta", "hash"]
        return [self.scenario.framework]

    def apply_fault(self, f: FaultSpec) -> None:
        nodes = self.sim_nodes
        if f.kind == "crash":
            torn = f.torn_bytes
            if torn is None and f.fault_kind != "none":
                torn = self.rng_faults.randrange(1, 16)
            nodes[f.node].crash(torn_wal_bytes=torn)
        elif f.kind == "restart":
            seconds = nodes[f.node].restart(
                f.fault_kind, wal_replay_seconds=self.scenario.cost.wal_replay_seconds
            )
            self.metrics.notes.append(
                f"restart node {f.node} at {f.at_hours}h: wal replay {seconds:g}s"
            )
        elif f.kind == "index_loss":
            inject_index_loss(self, f.node)
        elif f.kind == "pipeline_crash":
            node = nodes[f.node]
            if node.baseline is not None:
                crash_interrupt(node.baseline.pipeline)
        elif f.kind == "partition":
            side_a = frozenset(nodes[i].nid for i in f.side_a)
            side_b = frozenset(nodes[i].nid for i in f.side_b)
            self.cluster.partitions.append((side_a, side_b))
        elif f.kind == "failover":
            self._dr_failover(f)
        elif f.kind == "failback":
            self._dr_failback(f)
        elif f.kind == "converge":
            meter = CostMeter(self.scenario.cost)
            rounds = converge(nodes[f.a], nodes[f.b], self.cluster, meter)
            self.metrics.converge_rounds.append(rounds)
            event = DrEvent(at_hours=f.at_hours, label=f"converge {f.a}<->{f.b}")
            event.reports.append(
                DrReport(
                    kind="converge",
                    framework="meta",
                    t_index=meter.t_index,
                    t_delta=meter.t_delta,
                    comparisons=meter.comparisons,
                    network_bytes=meter.network_bytes,
                    note=f"rounds={rounds}",
                )
            )
            self.metrics.events.append(event)

    def _dr_failover(self, f: FaultSpec) -> None:
        event = DrEvent(at_hours=f.at_hours, label=f"failover {f.failed}->{f.substitute}")
        failed = self.sim_nodes[f.failed]
        substitute = self.sim_nodes[f.substitute]
        service = f"service-{f.failed}"
        if service in self.records.cname_records:
            rebind_cname(self.records, service, f"host-{f.substitute}")
            resolved = resolve(self.records, service).endpoint
            event.label += f" via {resolved}"
        frameworks = self.frameworks()
        reports: dict[str, DrReport] = {}
        if frameworks == ["hash"]:
            reports["hash"] = execute_failover(
                self.cluster, failed.nid, substitute.nid, "hash",
                volumetrics=self.scenario.volumetrics,
            )
        else:
            # shadow mode: the hash plan must observe the pre-transfer
            # state, so it is accounted first; the metadata framework
            # then performs the one actual transfer
            if "hash" in frameworks:
                reports["hash"] = self._shadow_hash_failover(failed, substitute)
            reports["meta"] = execute_failover(
                self.cluster, failed.nid, substitute.nid, "meta",
                volumetrics=self.scenario.volumetrics,
            )
        event.reports.extend(reports[fw] for fw in frameworks)
        self.metrics.events.append(event)

    def _shadow_hash_failover(self, failed, substitute) -> DrReport:
        """Hash-framework accounting for the same event: pay whatever the
        failure conditions owe, then plan against the consistent indexes.
        Runs before the metadata transfer so both frameworks see the
        same pre-event state."""
        meter = CostMeter(self.scenario.cost)
        survivors = self.cluster.survivors_for(failed.nid, substitute.nid)
        for participant in [substitute] + survivors:
            ensure_baseline_consistent(participant, meter)
        moved = 0
        for survivor in survivors:
            plan = compute_delta_hash(
                substitute.baseline.hash_index,
                survivor.baseline.hash_index,
                ConditionState(),
                meter,
            )
            meter.charge_index_transfer(plan.index_bytes_exchanged)
            for locator in plan.ids_to_pull:
                moved += survivor.block_store[locator].byte_len
            for locator in plan.ids_to_push:
                moved += substitute.block_store[locator].byte_len
        if moved:
            meter.charge_delta_transfer(moved)
        report = DrReport(
            kind="failover",
            framework="hash",
            t_hash=meter.t_hash,
            t_index=meter.t_index,
            t_delta=meter.t_delta,
            t_wal_replay=0.0,
            hash_ops=meter.hash_ops,
            content_reads=meter.content_reads,
            comparisons=meter.comparisons,
            network_bytes=meter.network_bytes,
        )
        if self.scenario.volumetrics is not None:
            report = volumetric_report(
                "failover", "hash", self.scenario.cost, self.scenario.volumetrics
            )
        return report

    def _dr_failback(self, f: FaultSpec) -> None:
        event = DrEvent(at_hours=f.at_hours, label=f"failback {f.node}")
        node = self.sim_nodes[f.node]
        service = f"service-{f.node}"
        if service in self.records.cname_records:
            rebind_cname(self.records, service, f"host-{f.node}")
        for framework in self.frameworks():
            report = execute_failback(
                self.cluster, node.nid, framework,
                volumetrics=self.scenario.volumetrics,
            )
            event.reports.append(report)
        self.metrics.events.append(event)

    # -- main loop -------------------------------------------------------

    def run(self) -> Metrics:
        s = self.scenario
        # initial inventory
        for node in self.sim_nodes:
            if s.inventory.blocks_per_node:
                self.ingest_batch(node, s.inventory.blocks_per_node)
        self._sample(0.0)

        schedule: list[tuple[float, int, str, object]] = []
        seq = 0
        rate = s.workload.blocks_per_hour_per_node
        if rate > 0:
            hours = int(math.floor(s.horizon_hours))
            for h in range(1, hours + 1):
                schedule.append((float(h), seq, "workload", rate))
                seq += 1
        for f in s.faults:
            schedule.append((f.at_hours, seq, "fault", f))
            seq += 1
            if f.kind == "partition":
                schedule.append(
                    (f.until_hours, seq, "heal", (frozenset(self.sim_nodes[i].nid for i in f.side_a),
                                                  frozenset(self.sim_nodes[i].nid for i in f.side_b)))
                )
                seq += 1
        schedule.sort(key=lambda item: (item[0], item[1]))

        for at, _seq, kind, payload in schedule:
            self.now_hours = at
            if kind == "workload":
                for node in self.sim_nodes:
                    if node.status is NodeStatus.UP:
                        self.ingest_batch(node, payload)
                self._sample(at)
            elif kind == "heal":
                if payload in self.cluster.partitions:
                    self.cluster.partitions.remove(payload)
            else:
                self.apply_fault(payload)

        self._finalize()
        return self.metrics

    def _sample(self, at_hours: float) -> None:
        total_entries = sum(n.id_index.entry_count for n in self.sim_nodes)
        physical = 32 * total_entries * (1.0 + self.scenario.cost.fragmentation_factor)
        self.metrics.index_series.append((at_hours, total_entries, physical))

    def _finalize(self) -> None:
        violations = self.metrics.violations
        for node in self.sim_nodes:
            violations.lcv_reuse += node.counters.lcv_order_violations
            violations.immutability += node.counters.immutability_violations
            if node.status is NodeStatus.UP:
                report = node.scrub(len(node.block_store))
                violations.corruption += len(report.findings)
        self.metrics.total_entries = sum(n.id_index.entry_count for n in self.sim_nodes)
        self.metrics.physical_index_bytes = (
            32 * self.metrics.total_entries
            * (1.0 + self.scenario.cost.fragmentation_factor)
        )


def run_scenario(scenario: Scenario, seed: int | None = None) -> Metrics:
    """Execute the scenario's event script to completion; deterministic
    for a fixed (scenario, seed)."""
    return SimRuntime(scenario, seed).run()


# fault-injection entry points: schedule onto a runtime before run()
# (scripted faults go through the same validation as file-borne ones)


def inject_crash(runtime: SimRuntime, node_ordinal: int, at_hours: float,
                 fault_kind: str = "none") -> None:
    runtime.scenario.faults.append(
        FaultSpec(kind="crash", at_hours=at_hours, node=node_ordinal, fault_kind=fault_kind)
    )
    validate_scenario(runtime.scenario)


def inject_partition(runtime: SimRuntime, side_a, side_b, from_hours: float,
                     to_hours: float) -> None:
    runtime.scenario.faults.append(
        FaultSpec(kind="partition", at_hours=from_hours, until_hours=to_hours,
                  side_a=tuple(side_a), side_b=tuple(side_b))
    )
    validate_scenario(runtime.scenario)


def inject_index_loss(runtime: SimRuntime, node_ordinal: int,
                      at_hours: float | None = None) -> None:
    """Mark the node's baseline index store lost (condition 3). Applies
    immediately when at_hours is None, else schedules."""
    if at_hours is not None:
        runtime.scenario.faults.append(
            FaultSpec(kind="index_loss", at_hours=at_hours, node=node_ordinal)
        )
        validate_scenario(runtime.scenario)
        return
    node = runtime.sim_nodes[node_ordinal]
    if node.baseline is not None:
        node.baseline.hash_index.mark_lost()
    if node.legacy_hash_index is not None:
        node.legacy_hash_index = {}


# ---------------------------------------------------------------------------
# soak driver


@dataclass
class SoakConfig:
    """Seven-day-style soak: live desk-scale cluster plus production-scale
    volumetric accounting per DR event.

    The `paper-soak` preset carries the published model parameters
    (H=500 MB/s/core, C=16, B=10 GbE, delta=1 TB, N=1e9 blocks,
    D=110 TB per event). The published per-event numbers are consistent
    with that 10 GbE arithmetic, not with the testbed's nominal 100 GbE
    fabric; the preset reproduces the published numbers and the report
    annotates the tension rather than resolving it.

    Engaged-core figures for the resource table are back-derived from
    the published utilization rows (they are preset targets, not model
    outputs); the computation itself is engaged-core-seconds over
    basis-cores times phase duration.
    """

    name: str = "paper-soak"
    seed: int = 42
    days: int = 7
    planned_every_hours: float = 12.0
    crash_days: tuple = (2, 4, 6)
    crash_hour_offset: float = 6.5
    nodes: int = 12
    replica_factor: int = 3
    total_ingest_blocks: int = 1_050_000
    intervals_per_day: int = 144
    block_bytes_min: int = 4096
    block_bytes_max: int = 65536
    duplicate_ratio: float = 0.0
    sequential_fraction: float = 0.7
    keyed_fraction: float = 0.0625
    cost: CostModel = field(
        default_factory=lambda: CostModel(fragmentation_factor=0.011)
    )
    volumetrics: Volumetrics = field(
        default_factory=lambda: Volumetrics(
            data_bytes=1.1e14, blocks=1_000_000_000, delta_bytes=1.0e12
        )
    )
    crash_rehash_extra: tuple = (0.025, 0.029)
    cpu_basis_cores: int = 40
    rehash_engaged_cores: float = 37.88
    sync_engaged_cores_meta: float = 1.28
    sync_engaged_cores_hash: float = 1.24
    modeled_assign_latency_us: float = 1.2


def load_soak_config(source) -> SoakConfig:
    """SoakConfig from a YAML path/text/dict (see bundled paper-soak.yaml)."""
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if "\n" not in str(source):
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        raw = yaml.safe_load(text)
    cost = raw.get("cost", {})
    vol = raw.get("volumetrics", {})
    cfg = SoakConfig(
        name=str(raw.get("name", "soak")),
        seed=int(raw.get("seed", 42)),
        days=int(raw.get("days", 7)),
        planned_every_hours=float(raw.get("planned_every_hours", 12.0)),
        crash_days=tuple(raw.get("crash_days", (2, 4, 6))),
        crash_hour_offset=float(raw.get("crash_hour_offset", 6.5)),
        nodes=int(raw.get("nodes", 12)),
        replica_factor=int(raw.get("replica_factor", 3)),
        total_ingest_blocks=int(raw.get("total_ingest_blocks", 1_050_000)),
        intervals_per_day=int(raw.get("intervals_per_day", 144)),
        block_bytes_min=int(raw.get("block_bytes_min", 4096)),
        block_bytes_max=int(raw.get("block_bytes_max", 65536)),
        duplicate_ratio=float(raw.get("duplicate_ratio", 0.0)),
        sequential_fraction=float(raw.get("sequential_fraction", 0.7)),
        keyed_fraction=float(raw.get("keyed_fraction", 0.0625)),
        cost=CostModel(
            hash_throughput=float(cost.get("hash_throughput", 5.0e8)),
            cores=int(cost.get("cores", 16)),
            bandwidth=float(cost.get("bandwidth", 1.25e9)),
            index_entry_bytes=int(cost.get("index_entry_bytes", 32)),
            wal_replay_seconds=float(cost.get("wal_replay_seconds", 18.0)),
            rto_jitter_cv=float(cost.get("rto_jitter_cv", 0.012)),
            fragmentation_factor=float(cost.get("fragmentation_factor", 0.011)),
        ),
        volumetrics=Volumetrics(
            data_bytes=float(vol.get("data_bytes", 1.1e14)),
            blocks=int(float(vol.get("blocks", 1_000_000_000))),
            delta_bytes=float(vol.get("delta_bytes", 1.0e12)),
        ),
        crash_rehash_extra=tuple(raw.get("crash_rehash_extra", (0.025, 0.029))),
    )
    if cfg.nodes % cfg.replica_factor:
        raise ScenarioValidation("soak nodes must split into whole replica groups")
    return cfg


@dataclass
class SoakEventRow:
    event_no: int
    day: int
    kind: str  # Planned | Crash
    meta_seconds: float
    hash_seconds: float

    @property
    def factor(self) -> float:
        return self.hash_seconds / self.meta_seconds


@dataclass
class SoakDriftRow:
    day: int
    entries: int
    physical_gb: float
    growth_gb_per_hour: float
    assign_rate_per_s: float
    lcv_violations: int
    modeled_assign_latency_us: float


@dataclass
class SoakResourceRow:
    resource: str
    hash_value: str
    meta_value: str
    annotation: str = ""


@dataclass
class SoakSummary:
    mean_meta_s: float
    std_meta_s: float
    cv_meta: float
    mean_hash_s: float
    std_hash_s: float
    factor_min: float
    factor_max: float
    crash_excess_seconds: list[float]
    planned_mean_meta_s: float
    violations: Violations
    ingests: int
    total_entries: int
    physical_index_bytes: float
    theoretical_index_bytes: int


@dataclass
class SoakReport:
    config_name: str
    seed: int
    events: list[SoakEventRow]
    drift: list[SoakDriftRow]
    resources: list[SoakResourceRow]
    summary: SoakSummary
    dr_reports: list[DrReport]
    annotations: list[str]


def _clipped_normal(rng: Random, cv: float) -> float:
    if cv <= 0:
        return 1.0
    lo, hi = 1.0 - 2.5 * cv, 1.0 + 2.5 * cv
    return min(hi, max(lo, rng.gauss(1.0, cv)))


def soak(config: SoakConfig | None = None) -> SoakReport:
    """Run the scaled soak: live ingestion with violation monitoring,
    DR cadence with per-event volumetric RTO accounting.

    Planned events share one multiplicative jitter draw across both
    frameworks (the shadow instance ran on identical workloads, so
    event-local variation is common-mode); the draws are mean-normalized
    so aggregate means are seed-stable. Crash events carry explicit
    noise terms instead: a WAL-replay draw on the metadata side and a
    re-enqueued-rehash fraction on the baseline side.
    """
    cfg = config or SoakConfig()
    model = cfg.cost
    vol = cfg.volumetrics
    rng_jitter = Random(f"{cfg.seed}:jitter")
    rng_replay = Random(f"{cfg.seed}:replay")
    rng_rehash = Random(f"{cfg.seed}:rehash")
    rng_ids = Random(f"{cfg.seed}:nid")
    rng_work = Random(f"{cfg.seed}:workload")
    rng_sizes = Random(f"{cfg.seed}:sizes")
    rng_faults = Random(f"{cfg.seed}:faults")

    nodes = [
        StorageNode(new_node_id(rng_ids), baseline=True,
                    fragmentation_factor=model.fragmentation_factor)
        for _ in range(cfg.nodes)
    ]
    rf = cfg.replica_factor
    groups = [nodes[i : i + rf] for i in range(0, cfg.nodes, rf)]
    group_of = {}
    for group in groups:
        for member in group:
            group_of[member.nid] = group
    replica_map = {
        n.nid: {m.nid for m in group_of[n.nid] if m.nid != n.nid} for n in nodes
    }
    cluster = Cluster(nodes, model, replica_map=replica_map)

    records = DnsRecordSet()
    for i in range(cfg.nodes):
        records.add_endpoint(f"host-{i}", f"10.0.0.{10 + i}:7000")
        records.add_cname(f"service-{i}", f"host-{i}")
    registry = Registry(records=records)
    registry.bulk_register([(n.nid, f"service-{i}") for i, n in enumerate(nodes)])
    ordinal = {n.nid: i for i, n in enumerate(nodes)}

    # DR cadence
    horizon = cfg.days * 24.0
    planned_times = []
    t = cfg.planned_every_hours
    while t <= horizon + 1e-9:
        planned_times.append(t)
        t += cfg.planned_every_hours
    crash_times = [(d - 1) * 24.0 + cfg.crash_hour_offset for d in cfg.crash_days]
    events = sorted(
        [(t, "planned") for t in planned_times] + [(t, "crash") for t in crash_times]
    )

    # mean-normalized common-mode jitter for planned events
    raw = [_clipped_normal(rng_jitter, model.rto_jitter_cv) for _ in planned_times]
    mean_raw = sum(raw) / len(raw) if raw else 1.0
    planned_jitter = [j / mean_raw for j in raw]

    # workload slots: exact total, spread across (interval, node) slots
    intervals = cfg.days * cfg.intervals_per_day
    slots = intervals * cfg.nodes
    base_per_slot, remainder = divmod(cfg.total_ingest_blocks, slots)
    interval_hours = 24.0 / cfg.intervals_per_day

    content_counter = 0
    dup_pool: list[tuple[int, int]] = []
    keys: list[str] = []
    key_counter = 0
    log_lo, log_hi = math.log(cfg.block_bytes_min), math.log(cfg.block_bytes_max)

    def next_payload() -> tuple[int, int]:
        nonlocal content_counter
        if cfg.duplicate_ratio > 0 and dup_pool and rng_work.random() < cfg.duplicate_ratio:
            return dup_pool[rng_work.randrange(len(dup_pool))]
        seed = content_counter
        content_counter += 1
        size = int(math.exp(rng_sizes.uniform(log_lo, log_hi)))
        if len(dup_pool) < 10000:
            dup_pool.append((size, seed))
        return (size, seed)

    def next_key() -> str | None:
        nonlocal key_counter
        if cfg.keyed_fraction <= 0 or rng_work.random() >= cfg.keyed_fraction:
            return None
        if keys and rng_work.random() >= cfg.sequential_fraction:
            return keys[rng_work.randrange(len(keys))]
        key = f"k{key_counter}"
        key_counter += 1
        if len(keys) < 50000:
            keys.append(key)
        return key

    def replicate_batch(owner: StorageNode) -> None:
        for peer_nid in sorted(replica_map[owner.nid], key=lambda n: n.value):
            peer = cluster.node(peer_nid)
            if peer.status is not NodeStatus.UP:
                continue
            ckpt = cluster.checkpoint(owner.nid, peer_nid)
            for entry in owner.id_index.entries_above(owner.nid, ckpt.watermark(owner.nid)):
                peer.replicate_in(entry, owner.block_store[entry.location])
            ckpt.advance(owner.nid, owner.id_index.max_lcv(owner.nid))

    total_ingested = 0

    def run_interval(interval_idx: int) -> None:
        nonlocal total_ingested
        for node_idx, node in enumerate(nodes):
            slot = interval_idx * cfg.nodes + node_idx
            count = base_per_slot + (1 if slot < remainder else 0)
            if count == 0 or node.status is not NodeStatus.UP:
                continue
            for _ in range(count):
                node.ingest(next_payload(), user_key=next_key())
            total_ingested += count
            replicate_batch(node)

    # live + volumetric event execution
    dr_reports: list[DrReport] = []
    event_rows: list[SoakEventRow] = []
    drift_rows: list[SoakDriftRow] = []
    crash_excesses_w: list[float] = []
    planned_seen = 0
    event_no = 0
    substitute_shift = rf  # substitute comes from the next replica group

    def live_event(failed: StorageNode, kind: str) -> None:
        f_idx = ordinal[failed.nid]
        s_idx = (f_idx + substitute_shift) % cfg.nodes
        substitute = nodes[s_idx]
        group_nids = [m.nid for m in group_of[failed.nid]]
        rebind_cname(records, f"service-{f_idx}", f"host-{s_idx}")
        assert registry.lookup_endpoint(failed.nid) == resolve(
            records, f"host-{s_idx}"
        ).endpoint
        if kind == "planned":
            failed.crash()
        else:
            failed.crash(torn_wal_bytes=rng_faults.randrange(1, 16))
        # baseline shadow keeps itself honest: participants pay their
        # hashing backlog (condition 1) before the event's exchange
        side_meter = CostMeter(model)
        for participant in [substitute] + cluster.survivors_for(failed.nid, substitute.nid):
            ensure_baseline_consistent(participant, side_meter)
        execute_failover(
            cluster, failed.nid, substitute.nid, "meta", scope_to_failed=True
        )
        if kind == "planned":
            failed.restart("none", wal_replay_seconds=0.0)
        else:
            failed.restart("index_loss", wal_replay_seconds=model.wal_replay_seconds)
            ensure_baseline_consistent(failed, side_meter)  # condition 3 paid live
        peers = [m for m in group_of[failed.nid] if m.nid != failed.nid]
        # two scoped sessions: re-join the replica group, then acquire
        # whatever the substitute wrote on the failed node's behalf
        execute_failback(cluster, failed.nid, "meta", peers=peers, scope_nids=group_nids)
        execute_failback(
            cluster, failed.nid, "meta", peers=[substitute], scope_nids=[substitute.nid]
        )
        rebind_cname(records, f"service-{f_idx}", f"host-{f_idx}")

    def volumetric_rows(kind: str, at_hours: float) -> SoakEventRow:
        nonlocal planned_seen
        day = int(math.ceil(at_hours / 24.0))
        if kind == "planned":
            jitter = planned_jitter[planned_seen]
            planned_seen += 1
            meta_r = volumetric_report("failover", "meta", model, vol).scaled(jitter)
            hash_r = volumetric_report("failover", "hash", model, vol).scaled(jitter)
        else:
            w = model.wal_replay_seconds * _clipped_normal(rng_replay, model.rto_jitter_cv)
            g = rng_rehash.uniform(*cfg.crash_rehash_extra)
            crash_excesses_w.append(w)
            meta_r = volumetric_report("failback", "meta", model, vol, wal_replay_s=w)
            hash_r = volumetric_report(
                "failback", "hash", model, replace(vol, extra_rehash_fraction=g)
            )
        dr_reports.extend([meta_r, hash_r])
        return SoakEventRow(
            event_no=event_no,
            day=day,
            kind="Planned" if kind == "planned" else "Crash",
            meta_seconds=meta_r.virtual_rto_seconds,
            hash_seconds=hash_r.virtual_rto_seconds,
        )

    # merged timeline: ingest intervals and DR events in time order
    event_iter = iter(events)
    next_event = next(event_iter, None)
    rotation = 0
    crash_targets = [groups[(i + 1) % len(groups)][0] for i in range(len(cfg.crash_days))]
    crash_seen = 0
    day_marks = {d: None for d in range(1, cfg.days + 1)}
    prev_day_physical = 0.0

    def record_day(day: int) -> None:
        nonlocal prev_day_physical
        total_entries = sum(n.id_index.entry_count for n in nodes)
        physical = 32 * total_entries * (1.0 + model.fragmentation_factor)
        growth = (physical - prev_day_physical) / 1e9 / 24.0
        assign_rate = total_ingested / (day * 24.0 * 3600.0)
        drift_rows.append(
            SoakDriftRow(
                day=day,
                entries=total_entries,
                physical_gb=physical / 1e9,
                growth_gb_per_hour=growth,
                assign_rate_per_s=assign_rate,
                lcv_violations=sum(n.counters.lcv_order_violations for n in nodes),
                modeled_assign_latency_us=cfg.modeled_assign_latency_us,
            )
        )
        prev_day_physical = physical

    for interval_idx in range(intervals):
        t_end = (interval_idx + 1) * interval_hours
        while next_event is not None and next_event[0] <= t_end + 1e-9:
            at, kind = next_event
            event_no += 1
            if kind == "planned":
                failed = nodes[rotation % cfg.nodes]
                rotation += 1
            else:
                failed = crash_targets[crash_seen % len(crash_targets)]
                crash_seen += 1
            live_event(failed, kind)
            event_rows.append(volumetric_rows(kind, at))
            next_event = next(event_iter, None)
        run_interval(interval_idx)
        day = int(math.ceil(t_end / 24.0))
        if abs(t_end - day * 24.0) < 1e-9 and day_marks.get(day) is None:
            day_marks[day] = True
            record_day(day)

    # correctness counters; scrubbing is budgeted round-robin sampling,
    # as a background integrity pass would be
    violations = Violations()
    for n in nodes:
        violations.lcv_reuse += n.counters.lcv_order_violations
        violations.immutability += n.counters.immutability_violations
        violations.corruption += len(n.scrub(min(len(n.block_store), 20000)).findings)

    metas = [r.meta_seconds for r in event_rows]
    hashes = [r.hash_seconds for r in event_rows]
    planned_metas = [r.meta_seconds for r in event_rows if r.kind == "Planned"]
    crash_metas = [r.meta_seconds for r in event_rows if r.kind == "Crash"]
    mean_meta = sum(metas) / len(metas)
    mean_hash = sum(hashes) / len(hashes)
    std_meta = math.sqrt(sum((m - mean_meta) ** 2 for m in metas) / len(metas))
    std_hash = math.sqrt(sum((h - mean_hash) ** 2 for h in hashes) / len(hashes))
    planned_mean = sum(planned_metas) / len(planned_metas)
    total_entries = sum(n.id_index.entry_count for n in nodes)
    physical = 32 * total_entries * (1.0 + model.fragmentation_factor)

    summary = SoakSummary(
        mean_meta_s=mean_meta,
        std_meta_s=std_meta,
        cv_meta=std_meta / mean_meta,
        mean_hash_s=mean_hash,
        std_hash_s=std_hash,
        factor_min=min(r.factor for r in event_rows),
        factor_max=max(r.factor for r in event_rows),
        crash_excess_seconds=[m - planned_mean for m in crash_metas],
        planned_mean_meta_s=planned_mean,
        violations=violations,
        ingests=total_ingested,
        total_entries=total_entries,
        physical_index_bytes=physical,
        theoretical_index_bytes=32 * total_entries,
    )

    resources = _resource_rows(cfg, model, vol, mean_meta, mean_hash)
    annotations = [
        "per-event RTO phases are volumetric: charged from the preset's declared "
        "production-scale inventory (D, N, delta) through the cost model",
        "preset bandwidth is 10 GbE: the published per-event numbers follow the "
        "10 GbE worked example, not the testbed's nominal 100 GbE fabric "
        "(documented tension)",
        "drift is modeled, not emergent: physical index size is exactly "
        "(1 + fragmentation) x 32 x entries",
        "planned-event jitter draws are mean-normalized so aggregate soak means "
        "are seed-stable",
    ]
    return SoakReport(
        config_name=cfg.name,
        seed=cfg.seed,
        events=event_rows,
        drift=drift_rows,
        resources=resources,
        summary=summary,
        dr_reports=dr_reports,
        annotations=annotations,
    )


def _resource_rows(cfg: SoakConfig, model: CostModel, vol: Volumetrics,
                   mean_meta: float, mean_hash: float) -> list[SoakResourceRow]:
    basis = cfg.cpu_basis_cores
    rehash_pct = 100.0 * cfg.rehash_engaged_cores / basis
    meta_pct = 100.0 * cfg.sync_engaged_cores_meta / basis
    hash_sync_pct = 100.0 * cfg.sync_engaged_cores_hash / basis
    index_delta_bytes = vol.blocks * model.index_entry_bytes + vol.delta_bytes
    xfer_preset = index_delta_bytes / model.bandwidth
    xfer_100gbe = index_delta_bytes / 1.25e10
    return [
        SoakResourceRow(
            "CPU - rehash phase",
            f"{rehash_pct:.1f}% aggregate",
            "0% (eliminated)",
            annotation=(
                "engaged-core figure back-derived from the published utilization "
                "row (preset target, not derivable from H/C/B)"
            ),
        ),
        SoakResourceRow(
            "CPU - index + delta",
            f"{hash_sync_pct:.1f}%",
            f"{meta_pct:.1f}%",
            annotation="engaged-core convention (matches the TCO arithmetic)",
        ),
        SoakResourceRow(
            "Network (index + delta)",
            f"{xfer_preset:.1f} s @ preset B",
            f"{xfer_preset:.1f} s @ preset B",
            annotation=(
                f"identical by construction; at 100 GbE the same bytes take "
                f"{xfer_100gbe:.1f} s, published value (~106 s) is not derivable "
                f"from any stated N/delta pair (flagged)"
            ),
        ),
        SoakResourceRow(
            "Wall-clock RTO (mean)",
            f"{mean_hash / 3600.0:.2f} hr",
            f"{mean_meta / 60.0:.1f} min",
        ),
        SoakResourceRow(
            "App traffic impact",
            "severe (CPU starved)",
            "negligible",
            annotation="qualitative, as published",
        ),
    ]
