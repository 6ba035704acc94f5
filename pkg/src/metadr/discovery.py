"""Node discovery: CNAME-aware resolution over a simulated record set,
plus a versioned registry with delta queries.

The record set is an in-memory zone mutable by fault scripts (real DNS
and RPC transport are out of scope). Resolution follows CNAME chains to
an endpoint record with exact loop detection; registry lookups resolve
by *service name* at session start, so identifier routing stays correct
across rebinds during failover.

The registry is event-sourced: every mutation (single or atomic bulk)
bumps one version and is appended to a change log, and replaying the
log reproduces the registry state. Delta queries return all mutations
after a given version.

Zone snippets in scenario files use one record per line:
``CNAME <name> <target>`` or ``ENDPT <name> <address>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .identity import NodeId


class NameNotFound(KeyError):
    pass


class ChainTooDeep(RuntimeError):
    pass


class CnameLoop(RuntimeError):
    pass


class FutureVersion(ValueError):
    pass


class DnsRecordSet:
    """Simulated zone: a name maps to at most one record kind."""

    def __init__(self) -> None:
        self.cname_records: dict[str, str] = {}
        self.endpoint_records: dict[str, str] = {}

    def add_cname(self, name: str, target: str) -> None:
        if name in self.endpoint_records:
            raise ValueError(f"{name!r} already has an endpoint record")
        self.cname_records[name] = target

    def add_endpoint(self, name: str, address: str) -> None:
        if name in self.cname_records:
            raise ValueError(f"{name!r} already has a CNAME record")
        self.endpoint_records[name] = address

    @classmethod
    def from_zone_lines(cls, lines) -> "DnsRecordSet":
        records = cls()
        for raw in lines:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("CNAME", "ENDPT"):
                raise ValueError(f"bad zone line: {raw!r}")
            kind, name, value = parts
            if kind == "CNAME":
                records.add_cname(name, value)
            else:
                records.add_endpoint(name, value)
        return records


@dataclass(frozen=True)
class Resolution:
    endpoint: str
    chain_length: int


def resolve(records: DnsRecordSet, name: str, max_depth: int = 10) -> Resolution:
    """Follow CNAME links until an endpoint record.

    chain_length counts CNAME hops (0 for a direct endpoint). Cycles are
    detected exactly with a visited set, before the depth limit can
    trigger.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    visited = set()
    current = name
    hops = 0
    while True:
        endpoint = records.endpoint_records.get(current)
        if endpoint is not None:
            return Resolution(endpoint=endpoint, chain_length=hops)
        target = records.cname_records.get(current)
        if target is None:
            raise NameNotFound(f"no record for {current!r} (from {name!r})")
        if current in visited:
            raise CnameLoop(f"CNAME cycle at {current!r} (from {name!r})")
        visited.add(current)
        hops += 1
        if hops > max_depth:
            raise ChainTooDeep(f"chain from {name!r} exceeds max_depth={max_depth}")
        current = target


def rebind_cname(records: DnsRecordSet, name: str, new_target: str) -> None:
    """Repoint an existing CNAME. Validation is lazy: a rebind that
    forms a loop succeeds, and later resolves raise CnameLoop."""
    if name not in records.cname_records:
        raise NameNotFound(f"no CNAME record for {name!r}")
    records.cname_records[name] = new_target


@dataclass(frozen=True)
class RegistryEntry:
    nid: NodeId
    service_name: str
    endpoint_at_registration: str | None


@dataclass(frozen=True)
class RegistryMutation:
    version: int
    entries: tuple  # RegistryEntry, ...


@dataclass
class Registry:
    """NID-to-service registry with a versioned change log."""

    records: DnsRecordSet | None = None
    entries: dict = field(default_factory=dict)  # nid -> RegistryEntry
    version: int = 0
    change_log: list = field(default_factory=list)  # RegistryMutation

    def _resolved(self, service_name: str) -> str | None:
        if self.records is None:
            return None
        try:
            return resolve(self.records, service_name).endpoint
        except (NameNotFound, CnameLoop, ChainTooDeep):
            return None

    def register(self, nid: NodeId, service_name: str) -> int:
        """Register or update one node; returns the new version."""
        return self.bulk_register([(nid, service_name)])

    def bulk_register(self, pairs) -> int:
        """Atomically register a batch: exactly one version increment."""
        batch = tuple(
            RegistryEntry(nid, service_name, self._resolved(service_name))
            for nid, service_name in pairs
        )
        self.version += 1
        mutation = RegistryMutation(version=self.version, entries=batch)
        self.change_log.append(mutation)
        for entry in batch:
            self.entries[entry.nid] = entry
        return self.version

    def delta_since(self, version: int) -> list[RegistryMutation]:
        """Mutations with version strictly greater, in order."""
        if version > self.version:
            raise FutureVersion(f"version {version} is beyond current {self.version}")
        return [m for m in self.change_log if m.version > version]

    def lookup_endpoint(self, nid: NodeId) -> str:
        """Resolve a node's *current* endpoint by its service name.

        Resolution happens now, not at registration, so rebinds during
        failover are always honored.
        """
        entry = self.entries.get(nid)
        if entry is None:
            raise NameNotFound(f"nid {nid} not registered")
        if self.records is None:
            raise NameNotFound("registry has no record set to resolve against")
        return resolve(self.records, entry.service_name).endpoint

    def replay(self) -> dict:
        """Fold the change log into a state snapshot (event-sourcing check)."""
        state: dict = {}
        for mutation in self.change_log:
            for entry in mutation.entries:
                state[entry.nid] = entry
        return state
