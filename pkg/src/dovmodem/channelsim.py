"""Desk-scale voice channel simulator.

The parametric part works per harmonic in the I/Q domain: every symbol is
rotated by a fixed phase, scaled by a fixed gain and hit by independent
circular Gaussian noise. Time-domain impairments (delay, gain, dropouts,
wideband noise) and an external codec hook act on raw samples.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ExternalChannelError, InvalidArgument
from .modem import SymbolParams, demultiplex, estimate_channel, split_symbols, synthesize_psk


@dataclass(frozen=True)
class ParametricChannelModel:
    """Per-harmonic gain, phase shift (rad) and noise variance (units of A**2)."""

    gains: np.ndarray
    phases: np.ndarray
    noise_vars: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        p = np.asarray(self.phases, dtype=float)
        v = np.asarray(self.noise_vars, dtype=float)
        if not (g.ndim == p.ndim == v.ndim == 1 and len(g) == len(p) == len(v)):
            raise InvalidArgument("gains, phases and noise_vars must be 1-D of equal length")
        if (g < 0).any() or (v < 0).any():
            raise InvalidArgument("gains and noise variances must be non-negative")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "phases", p)
        object.__setattr__(self, "noise_vars", v)

    @property
    def K(self) -> int:
        return len(self.gains)

    @classmethod
    def identity(cls, K: int) -> "ParametricChannelModel":
        return cls(np.ones(K), np.zeros(K), np.zeros(K))

    @classmethod
    def uniform(cls, K: int, phase: float = 0.0, noise_var: float = 0.0,
                gain: float = 1.0) -> "ParametricChannelModel":
        return cls(np.full(K, gain), np.full(K, phase), np.full(K, noise_var))


@dataclass
class TimeImpairments:
    snr_db: Optional[float] = None
    gain: Optional[float] = None
    dropouts: list = field(default_factory=list)
    delay_samples: int = 0
    symbol_length: int = 20

    def __post_init__(self):
        if self.delay_samples < 0:
            raise InvalidArgument("delay must be non-negative")
        spans = sorted((int(s), int(n)) for s, n in self.dropouts)
        for (s0, n0), (s1, _) in zip(spans, spans[1:]):
            if s0 + n0 > s1:
                raise InvalidArgument("dropout spans overlap")
        if any(s < 0 or n < 0 for s, n in spans):
            raise InvalidArgument("dropout spans must be non-negative")
        self.dropouts = spans

    @property
    def empty(self) -> bool:
        return (self.snr_db is None and self.gain is None and not self.dropouts
                and self.delay_samples == 0)


def apply_parametric(psk_stream, model: ParametricChannelModel, rng_seed=None,
                     amplitude: float = 1.0) -> np.ndarray:
    """``out_k = g_k exp(j phi_k) in_k + noise_k`` with noise ~ CN(0, var_k * A**2)."""
    x = np.asarray(psk_stream, dtype=complex)
    if x.shape[-1] != model.K:
        raise InvalidArgument(f"stream has {x.shape[-1]} harmonics, model has {model.K}")
    out = x * (model.gains * np.exp(1j * model.phases))
    rng = np.random.default_rng(rng_seed)
    scale = np.sqrt(model.noise_vars * amplitude ** 2 / 2)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return out + noise * scale


def apply_parametric_samples(samples, params: SymbolParams, model: ParametricChannelModel,
                             rng_seed=None) -> np.ndarray:
    """Demultiplex aligned symbols, apply the model and re-synthesize.

    Samples past the last whole symbol pass through unchanged.
    """
    x = np.asarray(samples, dtype=float).ravel()
    frames, trailing = split_symbols(x, params.N)
    if not len(frames):
        return x.copy()
    psk = apply_parametric(demultiplex(frames, params), model, rng_seed, params.A)
    out = synthesize_psk(params, psk).ravel()
    if trailing:
        out = np.concatenate([out, x[len(out):]])
    return out


def apply_time_impairments(samples, impairments: Optional[TimeImpairments] = None,
                           rng_seed=None) -> np.ndarray:
    """Apply delay, gain, dropouts and wideband noise, in that order.

    The delay prepends zeros (the output grows by ``delay_samples``).
    Dropout spans count whole symbols of ``impairments.symbol_length`` samples
    from the start of the delayed signal. Noise power is set against the
    mean power of the post-gain signal, before dropouts.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if impairments is None or impairments.empty:
        return x.copy()
    y = x * (1.0 if impairments.gain is None else impairments.gain)
    signal_power = float(np.mean(y ** 2)) if len(y) else 0.0
    if impairments.delay_samples:
        y = np.concatenate([np.zeros(impairments.delay_samples), y])
    n = impairments.symbol_length
    for start, length in impairments.dropouts:
        y[start * n:(start + length) * n] = 0.0
    if impairments.snr_db is not None and len(y):
        rng = np.random.default_rng(rng_seed)
        noise_power = signal_power / 10 ** (impairments.snr_db / 10)
        y = y + rng.standard_normal(len(y)) * np.sqrt(noise_power)
    return y


def fit_model(received_training, sent_words, params: SymbolParams) -> ParametricChannelModel:
    """Invert a training-based channel estimate into a parametric model."""
    est = estimate_channel(received_training, sent_words, params)
    return ParametricChannelModel(gains=est.gain / params.A, phases=est.phase,
                                  noise_vars=est.variance / params.A ** 2)


def external_codec_channel(samples, command, tolerance: int = 20, rate: int = 8000,
                           timeout: float = 120.0) -> np.ndarray:
    """Pipe samples through an external program as 16-bit LE mono PCM.

    ``command`` is a shell command string (``{rate}`` is substituted) or an
    argument list. The output must hold the input sample count within
    ``tolerance`` samples; it is then trimmed or zero-padded to match.
    """
    from .audio_io import AudioBuffer, read_raw_pcm, write_raw_pcm

    x = np.asarray(samples, dtype=float).ravel()
    payload = write_raw_pcm(AudioBuffer(x, rate))
    if isinstance(command, str):
        argv, shell = command.format(rate=rate), True
    else:
        argv, shell = [str(a).format(rate=rate) for a in command], False
    try:
        proc = subprocess.run(argv, input=payload, capture_output=True, shell=shell,
                              timeout=timeout)
    except FileNotFoundError as exc:
        raise ExternalChannelError(f"codec program not found: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ExternalChannelError(f"codec program timed out after {timeout}s") from exc
    if proc.returncode != 0:
        err = proc.stderr.decode(errors="replace").strip()
        shown = argv if isinstance(argv, str) else shlex.join(argv)
        raise ExternalChannelError(
            f"codec command {shown!r} exited with {proc.returncode}: {err[-500:]}")
    if len(proc.stdout) % 2:
        raise ExternalChannelError(f"codec output has odd byte count {len(proc.stdout)}")
    y = read_raw_pcm(proc.stdout, rate).samples
    if abs(len(y) - len(x)) > tolerance:
        raise ExternalChannelError(
            f"codec output has {len(y)} samples, expected {len(x)} +/- {tolerance}")
    if len(y) >= len(x):
        return y[:len(x)]
    return np.concatenate([y, np.zeros(len(x) - len(y))])


# Synthetic presets: noise grows with frequency, phase shift follows a
# fixed group delay. Not calibrated against any real codec.
PRESETS = {
    "identity": dict(var_lo=0.0, var_hi=0.0, delay=0.0),
    "amr-like": dict(var_lo=0.01, var_hi=0.05, delay=0.25e-3),
    "silk-like": dict(var_lo=0.02, var_hi=0.16, delay=0.4e-3),
}


def preset(name: str, params: SymbolParams) -> ParametricChannelModel:
    try:
        p = PRESETS[name]
    except KeyError:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    K = params.K
    noise = np.linspace(p["var_lo"], p["var_hi"], K)
    phases = -2 * np.pi * params.harmonic_freqs * p["delay"]
    phases = np.angle(np.exp(1j * phases))
    return ParametricChannelModel(np.ones(K), phases, noise)


def model_to_dict(model: ParametricChannelModel,
                  impairments: Optional[TimeImpairments] = None) -> dict:
    d = {"gains": model.gains.tolist(), "phases_rad": model.phases.tolist(),
         "noise_vars": model.noise_vars.tolist()}
    if impairments is not None:
        imp = asdict(impairments)
        imp["dropouts"] = [list(s) for s in impairments.dropouts]
        d["impairments"] = imp
    return d


def model_from_dict(d: dict):
    """Parse the channel model JSON structure; returns ``(model, impairments)``."""
    try:
        model = ParametricChannelModel(np.asarray(d["gains"], float),
                                       np.asarray(d["phases_rad"], float),
                                       np.asarray(d["noise_vars"], float))
    except KeyError as exc:
        raise InvalidArgument(f"channel model is missing field {exc}") from None
    imp = d.get("impairments")
    impairments = None
    if imp is not None:
        known = {"snr_db", "gain", "dropouts", "delay_samples", "symbol_length"}
        extra = set(imp) - known
        if extra:
            raise InvalidArgument(f"unknown impairment fields {sorted(extra)}")
        impairments = TimeImpairments(**imp)
    return model, impairments


def save_model(path, model: ParametricChannelModel,
               impairments: Optional[TimeImpairments] = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, impairments), indent=2) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def simulate(samples, params: SymbolParams, model: Optional[ParametricChannelModel] = None,
             impairments: Optional[TimeImpairments] = None, seed=None) -> np.ndarray:
    """Parametric model (if any) followed by time-domain impairments (if any)."""
    ss = np.random.SeedSequence(seed)
    s_model, s_time = ss.spawn(2)
    y = np.asarray(samples, dtype=float).ravel()
    if model is not None:
        y = apply_parametric_samples(y, params, model, np.random.default_rng(s_model))
    if impairments is not None:
        y = apply_time_impairments(y, impairments, np.random.default_rng(s_time))
    return y


def stack_psk(streams: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.atleast_2d(s) for s in streams], axis=0)
