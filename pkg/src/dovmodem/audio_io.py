"""WAV and headerless PCM I/O: mono, 16-bit little-endian, 8 kHz."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import AudioFormatError, ClippingError, InvalidArgument, UnsupportedFormat

RATE = 8000
FULL_SCALE = 32768


@dataclass
class AudioBuffer:
    samples: np.ndarray
    rate: int = RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.rate


def quantize(samples) -> np.ndarray:
    """Round half away from zero to int16; +1.0 maps to 32767, |x| > 1 is an error."""
    x = np.asarray(samples, dtype=float).ravel()
    if not np.isfinite(x).all():
        raise InvalidArgument("samples contain non-finite values")
    if x.size and np.abs(x).max() > 1.0:
        raise ClippingError(f"sample magnitude {np.abs(x).max():.6g} exceeds full scale")
    scaled = x * FULL_SCALE
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(q, -FULL_SCALE, FULL_SCALE - 1).astype("<i2")


def dequantize(pcm) -> np.ndarray:
    return np.asarray(pcm, dtype=np.int16).astype(float) / FULL_SCALE


def _check_rate(rate: int) -> None:
    if rate != RATE:
        raise UnsupportedFormat(f"sample rate {rate} Hz; only {RATE} Hz is supported")


def write_raw_pcm(buffer: AudioBuffer) -> bytes:
    _check_rate(buffer.rate)
    return quantize(buffer.samples).tobytes()


def read_raw_pcm(data: bytes, rate: int = RATE) -> AudioBuffer:
    _check_rate(rate)
    if len(data) % 2:
        raise AudioFormatError(f"PCM byte count {len(data)} is odd")
    return AudioBuffer(dequantize(np.frombuffer(data, dtype="<i2")), rate)


def write_wav(path, buffer: AudioBuffer) -> None:
    _check_rate(buffer.rate)
    pcm = write_raw_pcm(buffer)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buffer.rate)
        w.writeframes(pcm)


def read_wav(path) -> AudioBuffer:
    try:
        w = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: malformed WAV ({exc})") from None
    with w:
        if w.getcomptype() != "NONE":
            raise UnsupportedFormat(f"{path}: compressed WAV not supported")
        if w.getnchannels() != 1:
            raise UnsupportedFormat(f"{path}: {w.getnchannels()} channels, need mono")
        if w.getsampwidth() != 2:
            raise UnsupportedFormat(f"{path}: {8 * w.getsampwidth()}-bit samples, need 16-bit")
        _check_rate(w.getframerate())
        data = w.readframes(w.getnframes())
    return read_raw_pcm(data, RATE)
