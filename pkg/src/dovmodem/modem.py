"""Harmonic 4-PSK symbol synthesis, channel estimation and demodulation.

A DoV symbol is ``N`` samples holding ``K`` consecutive DFT harmonics
``k0 .. k0+K-1`` of the fundamental ``fs/N``. Each harmonic carries one
quaternary digit as its phase. Received symbols are brought back to the
I/Q domain by subband demultiplexing, where detection is a correlation
against the codebook phase table.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .quatcode import QuaternaryCodebook

# exp(j*2*pi*d/4) for d in Z4, exact in floating point.
PHASORS = np.array([1, 1j, -1, -1j], dtype=complex)
CONJ_PHASORS = np.conj(PHASORS)

VARIANCE_FLOOR = 1e-6
DEFAULT_PEAK = 0.9


@dataclass(frozen=True)
class SymbolParams:
    N: int
    K: int
    k0: int = 1
    A: float = 1.0
    fs: int = 8000

    def __post_init__(self):
        if self.N <= 0 or self.K <= 0:
            raise InvalidArgument("N and K must be positive")
        if self.k0 < 1:
            raise InvalidArgument("lowest harmonic k0 must be >= 1")
        if 2 * (self.k0 + self.K - 1) >= self.N:
            raise InvalidArgument(
                f"harmonics {self.k0}..{self.k0 + self.K - 1} must lie below N/2={self.N / 2}")
        if self.A <= 0:
            raise InvalidArgument("amplitude must be positive")

    @property
    def f0(self) -> float:
        return self.fs / self.N

    @property
    def baud(self) -> float:
        return self.fs / self.N

    @property
    def duration(self) -> float:
        return self.N / self.fs

    @property
    def harmonic_freqs(self) -> np.ndarray:
        return (np.arange(self.K) + self.k0) * self.f0

    def with_amplitude(self, A: float) -> "SymbolParams":
        return SymbolParams(N=self.N, K=self.K, k0=self.k0, A=A, fs=self.fs)


@lru_cache(maxsize=32)
def _carriers(N: int, K: int, k0: int) -> np.ndarray:
    # Reduce the angle mod N before scaling to keep the phase exact-ish.
    n = np.arange(N)
    bins = np.arange(K)[:, None] + k0
    E = np.exp(2j * np.pi * ((bins * n) % N) / N)
    E.setflags(write=False)
    return E


def carriers(params: SymbolParams) -> np.ndarray:
    """``(K, N)`` complex matrix of harmonic carriers ``exp(j(k+k0)2*pi*n/N)``."""
    return _carriers(params.N, params.K, params.k0)


def psk_sequence(words, A: float = 1.0) -> np.ndarray:
    """Map quaternary word(s) to 4-PSK values ``A*exp(j*2*pi*d/4)``."""
    w = np.asarray(words)
    if w.size and (w.min() < 0 or w.max() > 3):
        raise InvalidArgument("quaternary digits must be in {0,1,2,3}")
    return A * PHASORS[w.astype(np.intp)]


def synthesize_psk(params: SymbolParams, values) -> np.ndarray:
    """Real waveform(s) of length N from complex per-harmonic values."""
    v = np.asarray(values, dtype=complex)
    if v.shape[-1] != params.K:
        raise InvalidArgument(f"expected {params.K} harmonic values, got {v.shape[-1]}")
    return (v @ carriers(params)).real


def synthesize_symbol(params: SymbolParams, word) -> np.ndarray:
    w = np.asarray(word)
    if w.ndim != 1 or w.size != params.K:
        raise InvalidArgument(f"word length must be K={params.K}")
    return synthesize_psk(params, psk_sequence(w, params.A))


def demultiplex(samples, params: SymbolParams) -> np.ndarray:
    """I/Q value of each harmonic: ``(2/N) * sum_n x[n] exp(-j(k+k0)2*pi*n/N)``.

    Accepts one symbol (shape ``(N,)``) or a batch (shape ``(L, N)``).
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[-1] != params.N:
        raise InvalidArgument(f"expected {params.N} samples per symbol, got {x.shape[-1]}")
    return (2.0 / params.N) * (x @ carriers(params).conj().T)


def peak_amplitudes(words, N: int, k0: int = 1, A: float = 1.0) -> np.ndarray:
    """Peak absolute sample of the waveform synthesized from each word."""
    w = np.atleast_2d(np.asarray(words))
    params = SymbolParams(N=N, K=w.shape[1], k0=k0, A=A)
    return np.abs(synthesize_psk(params, psk_sequence(w, A))).max(axis=1)


@dataclass(frozen=True)
class WaveformCodebook:
    params: SymbolParams
    quat: QuaternaryCodebook
    waveforms: np.ndarray
    peak: float

    @classmethod
    def build(cls, quat: QuaternaryCodebook, N: int, k0: int = 1, fs: int = 8000,
              amplitude: Optional[float] = None, peak_target: float = DEFAULT_PEAK):
        """Synthesize every codeword.

        Without an explicit ``amplitude`` the per-harmonic amplitude is
        chosen so the loudest codebook sample reaches ``peak_target``.
        """
        unit = SymbolParams(N=N, K=quat.n, k0=k0, A=1.0, fs=fs)
        if amplitude is None:
            unit_peak = float(np.abs(synthesize_psk(unit, psk_sequence(quat.words))).max())
            amplitude = peak_target / unit_peak
        params = unit.with_amplitude(amplitude)
        waves = synthesize_psk(params, psk_sequence(quat.words, amplitude))
        waves.setflags(write=False)
        return cls(params=params, quat=quat, waveforms=waves, peak=float(np.abs(waves).max()))

    @property
    def M(self) -> int:
        return self.quat.size

    @property
    def A(self) -> float:
        return self.params.A

    @property
    def psk(self) -> np.ndarray:
        return psk_sequence(self.quat.words, self.params.A)

    @property
    def symbol_energy(self) -> float:
        return self.params.N * self.params.K * self.params.A ** 2 / 2


@dataclass(frozen=True)
class ChannelEstimate:
    """Per-harmonic complex mean, distortion variance and training length."""

    mean: np.ndarray
    variance: np.ndarray
    L: int
    floored: np.ndarray

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.mean)

    @property
    def gain(self) -> np.ndarray:
        return np.abs(self.mean)

    @property
    def K(self) -> int:
        return len(self.mean)

    @classmethod
    def identity(cls, K: int, A: float = 1.0, variance: float = 1.0) -> "ChannelEstimate":
        return cls(mean=np.full(K, A, dtype=complex), variance=np.full(K, float(variance)),
                   L=0, floored=np.zeros(K, dtype=bool))


def estimate_channel(received, sent_words, params: SymbolParams,
                     floor: float = VARIANCE_FLOOR) -> ChannelEstimate:
    """Sample mean and unbiased sample variance of derotated training symbols.

    ``floor`` is relative to ``A**2``; variances below it are clamped and
    flagged in ``floored``.
    """
    rx = np.atleast_2d(np.asarray(received, dtype=complex))
    sent = np.atleast_2d(np.asarray(sent_words))
    L = rx.shape[0]
    if L < 2:
        raise InvalidArgument("training needs at least 2 symbols")
    if sent.shape != rx.shape or rx.shape[1] != params.K:
        raise InvalidArgument(
            f"received {rx.shape} and sent {sent.shape} must both be (L, K={params.K})")
    v = rx * CONJ_PHASORS[sent.astype(np.intp)]
    # Shifted sums: identical inputs give an exactly reproducible mean.
    pivot = v[0]
    mean = pivot + (v - pivot).mean(axis=0)
    var = (np.abs(v - mean) ** 2).sum(axis=0) / (L - 1)
    lo = floor * params.A ** 2
    floored = var < lo
    var = np.where(floored, lo, var)
    return ChannelEstimate(mean=mean, variance=var, L=L, floored=floored)


def _check_psk(psk, K: int) -> np.ndarray:
    x = np.asarray(psk, dtype=complex)
    if x.shape[-1] != K:
        raise InvalidArgument(f"PSK sequence length must be K={K}, got {x.shape[-1]}")
    return x


def _chunks(n_rows: int, M: int, budget: int = 1 << 21):
    step = max(1, budget // max(M, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


# Scores closer than this (relative to the largest attainable score)
# count as ties and go to the smallest index.
TIE_TOLERANCE = 1e-9


def demodulate_ml(psk, cb: WaveformCodebook):
    """Nearest codeword in Euclidean distance; ties go to the smallest index.

    Uses ``|x|^2 - 2 Re<x, C_m> + |C_m|^2`` with the first term dropped.
    """
    x = _check_psk(psk, cb.params.K)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    C = cb.psk
    norms = (np.abs(C) ** 2).sum(axis=1)
    out = np.empty(len(x2), dtype=np.intp)
    for sl in _chunks(len(x2), cb.M):
        xs = x2[sl]
        d = norms[None, :] - 2 * (xs @ C.conj().T).real
        scale = norms.max() + 2 * np.abs(xs).sum(axis=1) * cb.A
        tol = TIE_TOLERANCE * scale
        best = d.min(axis=1)
        out[sl] = np.argmax(d <= (best + tol)[:, None], axis=1)
    return int(out[0]) if single else out


def _margin(best: np.ndarray, second: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(best > 0, (best - second) / best, 0.0)
    return np.clip(r, 0.0, 1.0)


def _second_largest(a: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    if a.shape[1] < 2:
        return fallback
    return -np.partition(-a, 1, axis=1)[:, 1]


def _correlate_decide(y: np.ndarray, cb: WaveformCodebook):
    """Decide by maximum ``Re(sum_k y_k conj(P_mk))`` over the codebook phases.

    For a reflection-symmetric codebook only even indices are correlated;
    the sign of the score selects ``2m`` or ``2m+1``.
    """
    words = cb.quat.words
    idx = np.empty(len(y), dtype=np.intp)
    rel = np.empty(len(y))
    symmetric = cb.quat.is_reflection_symmetric
    table = CONJ_PHASORS[(words[0::2] if symmetric else words).astype(np.intp)].T
    cols = np.arange(table.shape[1])
    for sl in _chunks(len(y), table.shape[1]):
        ys = y[sl]
        s = (ys @ table).real
        tol = (TIE_TOLERANCE * np.abs(ys).sum(axis=1))[:, None]
        if symmetric:
            a = np.abs(s)
            best = a.max(axis=1)
            near = a >= best[:, None] - tol
            # A zero best score ties 2m with 2m+1; keep the even index.
            odd = (s < 0) & (best[:, None] > tol)
            cand = np.where(near, 2 * cols[None, :] + odd, np.iinfo(np.intp).max)
            idx[sl] = cand.min(axis=1)
            rel[sl] = _margin(best, _second_largest(a, -best))
        else:
            best = s.max(axis=1)
            idx[sl] = np.argmax(s >= best[:, None] - tol, axis=1)
            rel[sl] = _margin(best, _second_largest(s, best))
    return idx, rel


def correction_weights(est: ChannelEstimate, A: float) -> np.ndarray:
    """``(A / var_k) * exp(-j*phase_k)``: undo the channel rotation, down-weight noisy harmonics."""
    return (A / est.variance) * np.exp(-1j * est.phase)


def demodulate_corrected(psk, cb: WaveformCodebook, est: ChannelEstimate):
    """Phase-compensated, variance-weighted correlation detector.

    Returns ``(index, reliability)``; reliability is the gap between the
    best and second-best score relative to the best, in ``[0, 1]``.
    Batches of shape ``(L, K)`` return two arrays.
    """
    x = _check_psk(psk, cb.params.K)
    if est.K != cb.params.K:
        raise InvalidArgument("channel estimate and codebook have different harmonic counts")
    single = x.ndim == 1
    y = np.atleast_2d(x) * correction_weights(est, cb.A)
    idx, rel = _correlate_decide(y, cb)
    if single:
        return int(idx[0]), float(rel[0])
    return idx, rel


@dataclass
class StreamDecisions:
    indices: np.ndarray
    reliability: np.ndarray
    energy: np.ndarray
    psk: np.ndarray
    trailing: int = 0

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(zip(self.indices.tolist(), self.reliability.tolist()))


def modulate_stream(indices, cb: WaveformCodebook) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= cb.M):
        raise InvalidArgument(f"symbol index out of range 0..{cb.M - 1}")
    return cb.waveforms[idx].ravel()


def split_symbols(samples, N: int):
    """Reshape a sample stream into ``(L, N)`` symbols; returns (frames, trailing)."""
    x = np.asarray(samples, dtype=float).ravel()
    L = len(x) // N
    return x[:L * N].reshape(L, N), len(x) - L * N


def demodulate_stream(samples, cb: WaveformCodebook,
                      est: Optional[ChannelEstimate] = None) -> StreamDecisions:
    """Symbol-by-symbol detection of an aligned stream.

    With ``est`` the corrected detector is used, otherwise plain ML.
    A trailing partial symbol is dropped and its length reported.
    """
    frames, trailing = split_symbols(samples, cb.params.N)
    psk = demultiplex(frames, cb.params) if len(frames) else np.zeros((0, cb.params.K), complex)
    energy = (np.abs(psk) ** 2).sum(axis=1)
    if est is None:
        idx = demodulate_ml(psk, cb) if len(psk) else np.zeros(0, dtype=np.intp)
        _, rel = _correlate_decide(psk, cb) if len(psk) else (None, np.zeros(0))
    else:
        if len(psk):
            idx, rel = demodulate_corrected(psk, cb, est)
        else:
            idx, rel = np.zeros(0, dtype=np.intp), np.zeros(0)
    return StreamDecisions(indices=np.asarray(idx), reliability=np.asarray(rel),
                           energy=energy, psk=psk, trailing=trailing)
