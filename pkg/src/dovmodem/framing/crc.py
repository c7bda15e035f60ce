"""CRC-8, polynomial 0x07, init 0, no reflection, no final xor."""

from __future__ import annotations

import numpy as np

POLY = 0x07


def _table():
    t = []
    for b in range(256):
        c = b
        for _ in range(8):
            c = ((c << 1) ^ POLY) & 0xFF if c & 0x80 else (c << 1) & 0xFF
        t.append(c)
    return t


TABLE = _table()


def crc8_bytes(data: bytes, crc: int = 0) -> int:
    for b in data:
        crc = TABLE[crc ^ b]
    return crc


def crc8(bits) -> int:
    """CRC of an arbitrary-length bit sequence (MSB-first)."""
    b = np.asarray(bits, dtype=np.uint8).ravel()
    whole = len(b) // 8
    crc = crc8_bytes(np.packbits(b[:whole * 8]).tobytes()) if whole else 0
    for bit in b[whole * 8:]:
        top = ((crc >> 7) & 1) ^ int(bit)
        crc = (crc << 1) & 0xFF
        if top:
            crc ^= POLY
    return crc
