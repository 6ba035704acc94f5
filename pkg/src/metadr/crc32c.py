"""CRC-32C (Castagnoli polynomial) in pure Python.

Table-driven, reflected form (polynomial 0x1EDC6F41, reflected 0x82F63B78).
Used for the block integrity layer and for WAL record checksums. The
check value for b"123456789" is 0xE3069283.
"""

from __future__ import annotations

_POLY = 0x82F63B78


def _build_table() -> tuple[int, ...]:
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ _POLY if c & 1 else c >> 1
        table.append(c & 0xFFFFFFFF)
    return tuple(table)


_TABLE = _build_table()


def crc32c(data: bytes, init: int = 0) -> int:
    """Return the CRC-32C of `data` as an unsigned 32-bit integer."""
    c = init ^ 0xFFFFFFFF
    table = _TABLE
    for b in data:
        c = table[(c ^ b) & 0xFF] ^ (c >> 8)
    return (c ^ 0xFFFFFFFF) & 0xFFFFFFFF
