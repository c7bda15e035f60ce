"""Frame assembly, erasure-retry decoding, header sync and silence handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Union

import numpy as np

from ..errors import Desynchronized, InvalidArgument
from ..modem import ChannelEstimate, WaveformCodebook, demodulate_stream, modulate_stream
from ..quatcode import QuaternaryCodebook, antipode, codebook_search
from .cipher import CipherSession, decrypt_frame, encrypt_frame
from .crc import crc8
from .rs import ReedSolomon

RS_SYMBOL_BITS = 6
COUNTER_BITS = 16
CRC_BITS = 8
COUNTER_MODULUS = 1 << COUNTER_BITS
HEADER_SYMBOLS = 4
SYNC_THRESHOLD = 0.5
# A payload that starts with the header pair repeats the peak two symbols later.
SYNC_MARGIN = 0.1
SILENCE_RATIO = 0.01
ENERGY_HISTORY = 32


@dataclass(frozen=True)
class FrameConfig:
    mode: str
    M: int
    payload_symbols: int
    rs_n: int
    rs_k: int
    speech_bits: int
    N: int = 20
    K: int = 8
    k0: int = 1
    fs: int = 8000
    header_symbols: int = HEADER_SYMBOLS
    margin_weight: float = 0.7
    energy_weight: float = 0.3
    codebook_seed: int = 0

    def __post_init__(self):
        bps = self.bits_per_symbol
        if bps % RS_SYMBOL_BITS:
            raise InvalidArgument("DoV symbol must carry a whole number of RS symbols")
        if self.payload_symbols * bps != self.rs_n * RS_SYMBOL_BITS:
            raise InvalidArgument("payload symbols do not match the RS code length")
        if self.speech_bits + COUNTER_BITS + CRC_BITS != self.rs_k * RS_SYMBOL_BITS:
            raise InvalidArgument("message bit budget does not match the RS dimension")

    @classmethod
    def low(cls, **kw) -> "FrameConfig":
        return cls(mode="low", M=64, payload_symbols=28, rs_n=28, rs_k=20, speech_bits=96, **kw)

    @classmethod
    def high(cls, **kw) -> "FrameConfig":
        return cls(mode="high", M=4096, payload_symbols=20, rs_n=40, rs_k=28, speech_bits=144,
                   **kw)

    @classmethod
    def for_mode(cls, mode: str, **kw) -> "FrameConfig":
        if mode not in ("low", "high"):
            raise InvalidArgument(f"mode must be 'low' or 'high', got {mode!r}")
        return cls.low(**kw) if mode == "low" else cls.high(**kw)

    @property
    def bits_per_symbol(self) -> int:
        return int(self.M).bit_length() - 1

    @property
    def rs_per_symbol(self) -> int:
        return self.bits_per_symbol // RS_SYMBOL_BITS

    @property
    def total_symbols(self) -> int:
        return self.header_symbols + self.payload_symbols

    @property
    def frame_samples(self) -> int:
        return self.total_symbols * self.N

    @property
    def header_samples(self) -> int:
        return self.header_symbols * self.N

    @property
    def frame_duration(self) -> float:
        return self.frame_samples / self.fs

    @property
    def header_duration(self) -> float:
        return self.header_samples / self.fs

    @property
    def counter_span_seconds(self) -> float:
        return COUNTER_MODULUS * self.frame_duration

    @property
    def rs(self) -> ReedSolomon:
        return _rs(self.rs_n, self.rs_k)


@lru_cache(maxsize=None)
def _rs(n: int, k: int) -> ReedSolomon:
    return ReedSolomon(n, k)


@lru_cache(maxsize=None)
def _mode_codebook(M: int, N: int, k0: int, K: int, seed: int) -> WaveformCodebook:
    return WaveformCodebook.build(codebook_search(K, M, seed=seed), N=N, k0=k0)


def frame_codebook(config: FrameConfig) -> WaveformCodebook:
    """Waveform codebook for a mode (built once per process)."""
    return _mode_codebook(config.M, config.N, config.k0, config.K, config.codebook_seed)


def header_pair(quat: QuaternaryCodebook) -> tuple:
    """Indices ``(a, b)`` of the codeword pair at maximum Lee distance.

    For a reflection-symmetric codebook every pair ``(2m, 2m+1)`` is
    antipodal and reaches ``2n``; the first one is used.
    """
    w = quat.words.astype(np.int16)
    if quat.is_reflection_symmetric:
        return 0, 1
    best, pair = -1, (0, 1)
    lee = np.array([0, 1, 2, 1])
    for i in range(len(w) - 1):
        d = lee[(w[i + 1:] - w[i]) % 4].sum(axis=1)
        j = int(np.argmax(d))
        if d[j] > best:
            best, pair = int(d[j]), (i, i + 1 + j)
    return pair


def header_indices(config: FrameConfig, cb: WaveformCodebook) -> np.ndarray:
    a, b = header_pair(cb.quat)
    return np.array([a, b] * (config.header_symbols // 2) + [a] * (config.header_symbols % 2))


# bit helpers, all MSB-first

def int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    v = 0
    for b in np.asarray(bits).ravel():
        v = (v << 1) | int(b)
    return v


def pack_symbols(bits, width: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64).ravel()
    if len(b) % width:
        raise InvalidArgument(f"bit count {len(b)} is not a multiple of {width}")
    weights = 1 << np.arange(width - 1, -1, -1)
    return b.reshape(-1, width) @ weights


def unpack_symbols(symbols, width: int) -> np.ndarray:
    s = np.asarray(symbols, dtype=np.int64).ravel()
    return ((s[:, None] >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8).ravel()


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), np.uint8))


def bits_to_bytes(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def _check_bits(bits, n: int) -> np.ndarray:
    b = np.asarray(bits).ravel()
    if b.size != n:
        raise InvalidArgument(f"expected {n} speech bits, got {b.size}")
    if b.size and not np.isin(b, (0, 1)).all():
        raise InvalidArgument("bits must be 0 or 1")
    return b.astype(np.uint8)


def frame_crc(speech_plain, counter: int) -> int:
    return crc8(np.concatenate([np.asarray(speech_plain, np.uint8), int_to_bits(counter, COUNTER_BITS)]))


def frame_encode(speech_bits, counter: int, session: CipherSession, config: FrameConfig,
                 cb: Optional[WaveformCodebook] = None) -> np.ndarray:
    """Full frame as DoV symbol indices: header, then RS-coded payload.

    RS message bits are ``counter | encrypted speech | CRC`` where the CRC
    covers ``plaintext speech | counter``.
    """
    speech = _check_bits(speech_bits, config.speech_bits)
    counter = int(counter) % COUNTER_MODULUS
    cb = cb if cb is not None else frame_codebook(config)
    if cb.M != config.M:
        raise InvalidArgument(f"codebook has {cb.M} symbols, mode {config.mode} needs {config.M}")
    crc = frame_crc(speech, counter)
    message = np.concatenate([int_to_bits(counter, COUNTER_BITS),
                              encrypt_frame(speech, counter, session),
                              int_to_bits(crc, CRC_BITS)])
    code = config.rs.encode(pack_symbols(message, RS_SYMBOL_BITS))
    payload = pack_symbols(unpack_symbols(code, RS_SYMBOL_BITS), config.bits_per_symbol)
    return np.concatenate([header_indices(config, cb), payload]).astype(np.int64)


@dataclass
class DecodedFrame:
    speech_bits: np.ndarray
    counter: int
    attempts: int
    erasures: int
    corrected: int

    lost = False


@dataclass
class FrameLoss:
    attempts: int
    best_crc_distance: Optional[int]
    reason: str = "crc-mismatch"

    lost = True


FrameResult = Union[DecodedFrame, FrameLoss]


def symbol_reliability(margin, energy, expected_energy: float, config: FrameConfig) -> np.ndarray:
    """Weighted mix of detector margin and closeness of symbol energy to nominal."""
    m = np.clip(np.asarray(margin, float), 0.0, 1.0)
    if expected_energy > 0:
        e = 1.0 - np.abs(np.asarray(energy, float) - expected_energy) / expected_energy
    else:
        e = np.zeros_like(m)
    return config.margin_weight * m + config.energy_weight * np.clip(e, 0.0, 1.0)


def expected_energy(cb: WaveformCodebook, est: Optional[ChannelEstimate] = None) -> float:
    """Nominal I/Q energy of a received symbol: ``sum_k |mean_k|^2`` (or ``K A^2``)."""
    if est is None:
        return cb.params.K * cb.A ** 2
    return float((np.abs(est.mean) ** 2).sum())


def frame_decode(indices, reliability, session: CipherSession, config: FrameConfig,
                 cb: Optional[WaveformCodebook] = None, header_tolerance: int = 1) -> FrameResult:
    """Decode one aligned frame of DoV indices with erasure retry.

    ``reliability`` has one entry per DoV symbol of the frame. Attempts
    erase the 0, 2, 4, ... least reliable RS symbols until the CRC over
    the decrypted speech and counter matches. A header with more than
    ``header_tolerance`` wrong symbols raises ``Desynchronized``.
    """
    idx = np.asarray(indices, dtype=np.int64).ravel()
    rel = np.asarray(reliability, dtype=float).ravel()
    if len(idx) != config.total_symbols or len(rel) != len(idx):
        raise InvalidArgument(f"frame needs {config.total_symbols} indices and reliabilities")
    cb = cb if cb is not None else frame_codebook(config)
    H = config.header_symbols
    wrong = int((idx[:H] != header_indices(config, cb)).sum())
    if wrong > header_tolerance:
        raise Desynchronized(f"{wrong} of {H} header symbols do not match")
    payload = idx[H:]
    rs_syms = pack_symbols(unpack_symbols(payload, config.bits_per_symbol), RS_SYMBOL_BITS)
    rs_rel = np.repeat(rel[H:], config.rs_per_symbol)
    order = np.argsort(rs_rel, kind="stable")
    rs = config.rs
    best_dist: Optional[int] = None
    attempts = 0
    for f in range(0, rs.nsym + 1, 2):
        attempts += 1
        res = rs.decode(rs_syms, order[:f])
        if not res.ok:
            continue
        bits = unpack_symbols(res.message, RS_SYMBOL_BITS)
        counter = bits_to_int(bits[:COUNTER_BITS])
        cipher = bits[COUNTER_BITS:COUNTER_BITS + config.speech_bits]
        got_crc = bits_to_int(bits[COUNTER_BITS + config.speech_bits:])
        speech = decrypt_frame(cipher, counter, session)
        want = frame_crc(speech, counter)
        if want == got_crc:
            return DecodedFrame(speech, counter, attempts, f, res.errors)
        dist = bin(want ^ got_crc).count("1")
        best_dist = dist if best_dist is None else min(best_dist, dist)
    return FrameLoss(attempts, best_dist,
                     "crc-mismatch" if best_dist is not None else "rs-failure")


@dataclass
class SyncResult:
    offset: int
    confidence: float


def header_waveform(config: FrameConfig, cb: WaveformCodebook) -> np.ndarray:
    return modulate_stream(header_indices(config, cb), cb)


def normalized_xcorr(samples, template) -> np.ndarray:
    """``<t, x[l:l+T]> / (|t| |x[l:l+T]|)`` for every lag ``l``; zero windows give 0."""
    x = np.asarray(samples, dtype=float).ravel()
    t = np.asarray(template, dtype=float).ravel()
    T = len(t)
    num = np.correlate(x, t, mode="valid")
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    win = np.maximum(c[T:] - c[:-T], 0.0)
    den = np.sqrt(win) * np.linalg.norm(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 1e-12 * max(np.linalg.norm(t) ** 2, 1e-300), num / den, 0.0)
    return out


def header_sync(samples, config: FrameConfig, cb: Optional[WaveformCodebook] = None,
                max_lag: Optional[int] = None,
                threshold: float = SYNC_THRESHOLD) -> Optional[SyncResult]:
    """Locate the frame header by normalized cross-correlation.

    Lags ``0 .. max_lag`` are searched (default: every lag the window
    allows). Returns ``None`` when the best score is below ``threshold``.
    The earliest lag scoring within ``SYNC_MARGIN`` of the best is chosen.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) < config.frame_samples:
        raise InvalidArgument(
            f"search window of {len(x)} samples is shorter than one frame ({config.frame_samples})")
    cb = cb if cb is not None else frame_codebook(config)
    h = header_waveform(config, cb)
    r = normalized_xcorr(x, h)
    if max_lag is not None:
        r = r[:max_lag + 1]
    best = float(r.max()) if len(r) else 0.0
    if best < threshold:
        return None
    lag = int(np.flatnonzero(r >= best - SYNC_MARGIN)[0])
    return SyncResult(lag, float(r[lag]))


def silence_schedule(frames, period: int):
    """Replace frames ``period-1, 2*period-1, ...`` by zeros; returns (frames, silent mask)."""
    if period < 2:
        raise InvalidArgument("silence period must be at least 2")
    out = [np.asarray(f, dtype=float).copy() for f in frames]
    mask = np.zeros(len(out), dtype=bool)
    mask[period - 1::period] = True
    for i in np.flatnonzero(mask):
        out[i] = np.zeros_like(out[i])
    return out, mask


class SilenceDetector:
    """Energy detector against a running median of recent frame energies."""

    def __init__(self, ratio: float = SILENCE_RATIO, history: int = ENERGY_HISTORY):
        self.ratio = ratio
        self.history: List[float] = []
        self.size = history

    def is_silent(self, frame_samples) -> bool:
        x = np.asarray(frame_samples, dtype=float)
        e = float(np.dot(x, x))
        if e == 0.0:
            return True
        ref = float(np.median(self.history)) if self.history else e
        self.history = (self.history + [e])[-self.size:]
        return e < self.ratio * ref


def silence_detect(frame_samples, detector: Optional[SilenceDetector] = None) -> str:
    d = detector if detector is not None else SilenceDetector()
    return "silent-frame" if d.is_silent(frame_samples) else "speech-frame"


def modulate_frames(frames_indices, cb: WaveformCodebook,
                    silence_period: Optional[int] = None) -> tuple:
    """Concatenate frame waveforms, optionally silencing every S-th; returns (samples, silent mask)."""
    waves = [modulate_stream(f, cb) for f in frames_indices]
    mask = np.zeros(len(waves), dtype=bool)
    if silence_period:
        waves, mask = silence_schedule(waves, silence_period)
    samples = np.concatenate(waves) if waves else np.zeros(0)
    return samples, mask


@dataclass
class ReceivedFrame:
    start: int
    status: str  # "decoded", "lost", "silent", "desynchronized", "not-found"
    result: Optional[FrameResult] = None
    confidence: float = 0.0


@dataclass
class ReceiveReport:
    frames: List[ReceivedFrame] = field(default_factory=list)

    @property
    def decoded(self) -> List[DecodedFrame]:
        return [f.result for f in self.frames if f.status == "decoded"]

    def count(self, status: str) -> int:
        return sum(f.status == status for f in self.frames)


def receive_stream(samples, session: CipherSession, config: FrameConfig,
                   cb: Optional[WaveformCodebook] = None,
                   est: Optional[ChannelEstimate] = None) -> ReceiveReport:
    """Sequential receiver: silence check, header sync, demodulation, frame decode.

    The header is searched over one frame period from the current
    position; after a frame the position advances by one frame.
    """
    x = np.asarray(samples, dtype=float).ravel()
    cb = cb if cb is not None else frame_codebook(config)
    F = config.frame_samples
    H = config.header_samples
    e_ref = expected_energy(cb, est)
    est_used = est if est is not None else ChannelEstimate.identity(cb.params.K, cb.A)
    detector = SilenceDetector()
    report = ReceiveReport()
    pos = 0
    while pos + F <= len(x):
        if detector.is_silent(x[pos:pos + F]):
            report.frames.append(ReceivedFrame(pos, "silent"))
            pos += F
            continue
        window = x[pos:pos + F + F - 1] if pos + 2 * F - 1 <= len(x) else x[pos:]
        sync = header_sync(window, config, cb, max_lag=min(F - 1, len(window) - H))
        if sync is None or pos + sync.offset + F > len(x):
            report.frames.append(ReceivedFrame(pos, "not-found"))
            pos += F
            continue
        start = pos + sync.offset
        dec = demodulate_stream(x[start:start + F], cb, est_used)
        rel = symbol_reliability(dec.reliability, dec.energy, e_ref, config)
        try:
            res = frame_decode(dec.indices, rel, session, config, cb)
            status = "lost" if res.lost else "decoded"
        except Desynchronized:
            res, status = None, "desynchronized"
        report.frames.append(ReceivedFrame(start, status, res, sync.confidence))
        pos = start + F
    return report
