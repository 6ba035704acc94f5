"""metadr: disaster-recovery synchronization for distributed storage.

Two delta-identification frameworks run side by side:

* the metadata-driven framework, built on 32-byte composite identifiers
  (node id + logical clock + namespace tag) assigned at ingestion time,
  where DR delta computation is a sorted set-difference over identifier
  indexes with no content hashing anywhere on the critical path; and

* a hash-based baseline (SHA-256 fingerprints + Merkle trees) whose
  well-known failure modes (stale index, crash-interrupted pipeline,
  lost index store) force re-hashing exactly when recovery time matters.

Both run inside a deterministic discrete-event simulator (`simnet`) with
fault injection and virtual cost accounting, and a closed-form analytical
model (`evalmodel`) reproduces the RTO and TCO arithmetic.
"""

__version__ = "0.1.0"
