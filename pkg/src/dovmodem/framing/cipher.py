"""AES-256 counter-mode keystream bound to the frame counter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ..errors import InvalidArgument

KEY_BYTES = 32
NONCE_BYTES = 13


def counter_block(nonce: bytes, counter: int, block_index: int) -> bytes:
    """nonce (104 bits) | frame counter (16 bits) | block index (8 bits)."""
    if not 0 <= counter < 1 << 16:
        raise InvalidArgument("frame counter must fit in 16 bits")
    if not 0 <= block_index < 256:
        raise InvalidArgument("block index must fit in 8 bits")
    return bytes(nonce) + counter.to_bytes(2, "big") + bytes([block_index])


@dataclass(frozen=True)
class CipherSession:
    key: bytes
    nonce: bytes

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise InvalidArgument(f"key must be {KEY_BYTES} bytes")
        if len(self.nonce) != NONCE_BYTES:
            raise InvalidArgument(f"nonce must be {NONCE_BYTES} bytes")

    @classmethod
    def from_hex(cls, key_hex: str, nonce_hex: str) -> "CipherSession":
        try:
            return cls(bytes.fromhex(key_hex), bytes.fromhex(nonce_hex))
        except ValueError as exc:
            raise InvalidArgument(f"bad hex key or nonce: {exc}") from None

    def encrypt_block(self, block: bytes) -> bytes:
        enc = Cipher(algorithms.AES(self.key), modes.ECB()).encryptor()
        return enc.update(block) + enc.finalize()

    def keystream(self, counter: int, nbits: int) -> np.ndarray:
        nblocks = -(-nbits // 128)
        blocks = b"".join(counter_block(self.nonce, counter, i) for i in range(nblocks))
        stream = self.encrypt_block(blocks) if blocks else b""
        return np.unpackbits(np.frombuffer(stream, np.uint8))[:nbits]

    def apply(self, bits, counter: int) -> np.ndarray:
        b = np.asarray(bits, dtype=np.uint8).ravel()
        return b ^ self.keystream(counter, len(b))


def encrypt_frame(speech_bits, counter: int, session: CipherSession) -> np.ndarray:
    return session.apply(speech_bits, counter)


def decrypt_frame(cipher_bits, counter: int, session: CipherSession) -> np.ndarray:
    return session.apply(cipher_bits, counter)
