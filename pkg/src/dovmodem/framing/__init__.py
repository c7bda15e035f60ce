"""Secure-voice frame layer: RS(GF(64)) with erasures, CRC-8, AES-CTR, sync, silence."""

from .cipher import CipherSession, counter_block, decrypt_frame, encrypt_frame
from .crc import crc8, crc8_bytes
from .frame import (
    DecodedFrame,
    FrameConfig,
    FrameLoss,
    ReceiveReport,
    SilenceDetector,
    SyncResult,
    frame_codebook,
    frame_decode,
    frame_encode,
    header_indices,
    header_sync,
    modulate_frames,
    receive_stream,
    silence_detect,
    silence_schedule,
    symbol_reliability,
)
from .rs import ReedSolomon, RsResult

__all__ = [
    "CipherSession", "counter_block", "decrypt_frame", "encrypt_frame", "crc8", "crc8_bytes",
    "DecodedFrame", "FrameConfig", "FrameLoss", "ReceiveReport", "SilenceDetector",
    "SyncResult", "frame_codebook", "frame_decode", "frame_encode", "header_indices",
    "header_sync", "modulate_frames", "receive_stream", "silence_detect", "silence_schedule",
    "symbol_reliability", "ReedSolomon", "RsResult",
]
