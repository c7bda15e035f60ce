"""Data-over-voice modem: quaternary codebooks, harmonic 4-PSK symbols,
channel estimation, a parametric voice-channel simulator and a
secure-voice frame layer."""

from .errors import DovError
from .modem import (
    ChannelEstimate,
    SymbolParams,
    WaveformCodebook,
    demodulate_corrected,
    demodulate_ml,
    demodulate_stream,
    demultiplex,
    estimate_channel,
    modulate_stream,
    synthesize_symbol,
)
from .quatcode import QuaternaryCodebook, codebook_search, lee_distance, min_lee_distance

__version__ = "0.1.0"
