"""Distortion and performance statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateSample, InvalidArgument
from .modem import CONJ_PHASORS, SymbolParams, estimate_channel, psk_sequence

SNR_CAP_DB = 200.0
REFERENCE_SYMBOLS = 10_000
LONG_REFERENCE_SYMBOLS = 50_000


def as_points(sample) -> np.ndarray:
    """Complex 1-D input becomes (n, 2) real/imag pairs; real 2-D passes through."""
    x = np.asarray(sample)
    if np.iscomplexobj(x):
        x = x.ravel()
        x = np.column_stack([x.real, x.imag])
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InvalidArgument("sample must be complex 1-D or real (n, p)")
    if not np.isfinite(x).all():
        raise InvalidArgument("sample contains non-finite values")
    return x


def _whiten(sample) -> np.ndarray:
    x = as_points(sample)
    n, p = x.shape
    if n < 3:
        raise InvalidArgument("moment statistics need at least 3 points")
    xc = x - x.mean(axis=0)
    S = xc.T @ xc / n
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= 1e-12 * max(eig[-1], np.finfo(float).tiny):
        raise DegenerateSample("sample covariance is singular")
    chol = np.linalg.cholesky(S)
    # z_i . z_j equals the Mahalanobis cross term (x_i - m)^T S^-1 (x_j - m).
    return np.linalg.solve(chol, xc.T).T


def mardia_skewness(sample) -> float:
    """``(1/n^2) sum_ij [(x_i-m)^T S^-1 (x_j-m)]^3`` with the 1/n covariance.

    Computed from the third-moment tensor of the whitened sample, which
    avoids the n-by-n cross product.
    """
    z = _whiten(sample)
    n = len(z)
    T = np.einsum("ia,ib,ic->abc", z, z, z) / n
    return float((T ** 2).sum())


def mardia_kurtosis(sample) -> float:
    z = _whiten(sample)
    return float(np.mean(np.einsum("ij,ij->i", z, z) ** 2))


def normal_kurtosis(p: int) -> int:
    return p * (p + 2)


def snr_db(reference, received) -> float:
    ref = np.asarray(reference, dtype=float).ravel()
    rx = np.asarray(received, dtype=float).ravel()
    if ref.shape != rx.shape:
        raise InvalidArgument(f"length mismatch {len(ref)} vs {len(rx)}")
    p_sig = float(np.dot(ref, ref))
    if p_sig == 0:
        raise InvalidArgument("reference signal is all zero")
    err = rx - ref
    p_err = float(np.dot(err, err))
    if p_err == 0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10 * math.log10(p_sig / p_err))


def distortion(received_psk, sent_words, amplitude: float = 1.0) -> np.ndarray:
    """Received I/Q derotated by the sent phases, minus the clean value ``A``."""
    rx = np.asarray(received_psk, dtype=complex)
    w = np.asarray(sent_words).astype(np.intp)
    if rx.shape != w.shape:
        raise InvalidArgument("received and sent shapes differ")
    return rx * CONJ_PHASORS[w] - amplitude


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den == 0 or not math.isfinite(den):
        return math.nan
    return max(-1.0, min(1.0, float(np.dot(a, b)) / den))


@dataclass
class CorrelationReport:
    """Pearson correlations of complex distortion.

    Each complex series is turned into one real series by concatenating
    its real and imaginary parts. NaN entries (zero variance) are listed
    in the ``degenerate`` masks.
    """

    matrix: np.ndarray
    lag1: np.ndarray

    @property
    def degenerate_matrix(self) -> np.ndarray:
        return np.isnan(self.matrix)

    @property
    def degenerate_lag1(self) -> np.ndarray:
        return np.isnan(self.lag1)

    @property
    def max_offdiagonal(self) -> float:
        m = self.matrix.copy()
        np.fill_diagonal(m, 0.0)
        return float(np.nanmax(np.abs(m))) if m.size else 0.0

    @property
    def max_lag1(self) -> float:
        return float(np.nanmax(np.abs(self.lag1)))


def correlation_report(stream, min_symbols: int = 100) -> CorrelationReport:
    d = np.asarray(stream, dtype=complex)
    if d.ndim == 1:
        d = d[:, None]
    L, K = d.shape
    if L < min_symbols:
        raise InvalidArgument(f"need at least {min_symbols} symbols, got {L}")
    # a constant channel offset would otherwise show up as Re/Im mean contrast
    d = d - d.mean(axis=0)
    flat = [np.concatenate([d[:, k].real, d[:, k].imag]) for k in range(K)]
    matrix = np.empty((K, K))
    for i in range(K):
        for j in range(i, K):
            matrix[i, j] = matrix[j, i] = _pearson(flat[i], flat[j])
    lag1 = np.array([
        _pearson(np.concatenate([d[:-1, k].real, d[:-1, k].imag]),
                 np.concatenate([d[1:, k].real, d[1:, k].imag]))
        for k in range(K)])
    return CorrelationReport(matrix=matrix, lag1=lag1)


def cross_correlation(a, b) -> float:
    """Pearson correlation of two complex streams under the same convention."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    return _pearson(np.concatenate([a.real, a.imag]), np.concatenate([b.real, b.imag]))


def _wrap(phi):
    return np.angle(np.exp(1j * np.asarray(phi)))


@dataclass
class StandardErrorCurves:
    durations: np.ndarray
    lengths: np.ndarray
    se_phase: np.ndarray
    se_variance: np.ndarray
    se_variance_normalized: np.ndarray
    reference_phase: np.ndarray
    reference_variance: np.ndarray
    runs: int
    reference_symbols: int
    seed: Optional[int]

    def rows(self):
        for i in range(len(self.durations)):
            yield (self.durations[i], int(self.lengths[i]), self.se_phase[i],
                   self.se_variance[i], self.se_variance_normalized[i])

    CSV_HEADER = ("duration_s", "symbols", "se_phase_rad", "se_variance",
                  "se_variance_normalized")


def default_duration_grid(start: float = 0.5, stop: float = 2.5, step: float = 0.05) -> np.ndarray:
    return np.round(np.arange(start, stop + step / 2, step), 10)


def _training_run(model, params: SymbolParams, L: int, rng) -> tuple:
    from .channelsim import apply_parametric

    words = rng.integers(0, 4, size=(L, params.K))
    rx = apply_parametric(psk_sequence(words, params.A), model, rng, params.A)
    return rx, words


def estimator_standard_error(model, params: SymbolParams, durations=None, runs: int = 200,
                             reference_symbols: int = REFERENCE_SYMBOLS,
                             seed: Optional[int] = 0) -> StandardErrorCurves:
    """Monte Carlo standard error of the training estimators versus duration.

    Each run draws one training sequence as long as the longest duration
    and evaluates the estimators on its prefixes. Reference values come
    from one independent run of ``reference_symbols`` symbols. Three
    curves are returned, each the maximum over harmonics:

    * phase: ``sqrt(mean_l wrap(phi_l - phi_ref)^2)``
    * variance: ``sqrt(mean_l (var_l - var_ref)^2)``
    * normalized variance: the variance curve divided by ``sqrt(var_ref)``
    """
    grid = default_duration_grid() if durations is None else np.asarray(durations, float)
    if (grid <= 0).any():
        raise InvalidArgument("training durations must be positive")
    if runs < 100:
        raise InvalidArgument("need at least 100 Monte Carlo runs")
    lengths = np.maximum(2, np.round(grid * params.baud).astype(int))
    root = np.random.SeedSequence(seed)
    ref_seq, *run_seqs = root.spawn(runs + 1)
    rx, words = _training_run(model, params, reference_symbols, np.random.default_rng(ref_seq))
    ref = estimate_channel(rx, words, params)
    phi_ref, var_ref = ref.phase, ref.variance

    dphi = np.empty((runs, len(grid), params.K))
    dvar = np.empty_like(dphi)
    L_max = int(lengths.max())
    for r, ss in enumerate(run_seqs):
        rx, words = _training_run(model, params, L_max, np.random.default_rng(ss))
        for g, L in enumerate(lengths):
            est = estimate_channel(rx[:L], words[:L], params)
            dphi[r, g] = _wrap(est.phase - phi_ref)
            dvar[r, g] = est.variance - var_ref
    se_phase = np.sqrt((dphi ** 2).mean(axis=0))
    se_var = np.sqrt((dvar ** 2).mean(axis=0))
    se_norm = se_var / np.sqrt(var_ref)
    return StandardErrorCurves(
        durations=grid, lengths=lengths, se_phase=se_phase.max(axis=1),
        se_variance=se_var.max(axis=1), se_variance_normalized=se_norm.max(axis=1),
        reference_phase=phi_ref, reference_variance=var_ref, runs=runs,
        reference_symbols=reference_symbols, seed=seed)


def inverse_sqrt_fit(t, y) -> tuple:
    """Least-squares ``y = c / sqrt(t)``; returns ``(c, r_squared)``."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    basis = 1 / np.sqrt(t)
    denom = float(np.dot(basis, basis))
    c = float(np.dot(basis, y)) / denom
    ss_res = float(((y - c * basis) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return c, r2


@dataclass
class ErrorCounts:
    symbols: int
    symbol_errors: int
    bits: int = 0
    bit_errors: int = 0
    frames: int = 0
    frame_errors: int = 0

    @property
    def ser(self) -> float:
        return self.symbol_errors / self.symbols if self.symbols else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0


def index_bits(indices, bits_per_symbol: int) -> np.ndarray:
    """Expand symbol indices into MSB-first bits, shape ``(L, bits_per_symbol)``."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def error_counters(sent, received, bits_per_symbol: Optional[int] = None,
                   frame_length: Optional[int] = None) -> ErrorCounts:
    """Count symbol, bit and frame errors between aligned sequences.

    Bits are the MSB-first binary expansion of each index. Frames are
    consecutive blocks of ``frame_length`` symbols; a trailing partial
    block counts as a frame.
    """
    a = np.asarray(sent).ravel()
    b = np.asarray(received).ravel()
    if a.shape != b.shape:
        raise InvalidArgument(f"length mismatch {len(a)} vs {len(b)}")
    wrong = a != b
    out = ErrorCounts(symbols=len(a), symbol_errors=int(wrong.sum()))
    if bits_per_symbol:
        diff = index_bits(a, bits_per_symbol) != index_bits(b, bits_per_symbol)
        out.bits = diff.size
        out.bit_errors = int(diff.sum())
    if frame_length:
        nf = -(-len(a) // frame_length)
        padded = np.zeros(nf * frame_length, dtype=bool)
        padded[:len(a)] = wrong
        out.frames = nf
        out.frame_errors = int(padded.reshape(nf, frame_length).any(axis=1).sum())
    return out


def proportion_less_test(errors_a: int, n_a: int, errors_b: int, n_b: int) -> tuple:
    """One-sided pooled two-proportion z-test of ``p_a < p_b``; returns (z, p-value)."""
    pa, pb = errors_a / n_a, errors_b / n_b
    pool = (errors_a + errors_b) / (n_a + n_b)
    se = math.sqrt(pool * (1 - pool) * (1 / n_a + 1 / n_b))
    if se == 0:
        return (0.0, 1.0) if pa == pb else (math.copysign(math.inf, pb - pa), 0.0 if pa < pb else 1.0)
    z = (pb - pa) / se
    return z, 0.5 * math.erfc(z / math.sqrt(2))


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.9g" % v
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = ()) -> None:
    text = "".join(f"# {c}\n" for c in comments) + csv_text(header, rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
