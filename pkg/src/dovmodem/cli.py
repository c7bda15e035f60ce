"""Command-line interface.

Every command prints one JSON summary line on stdout (seeds included).
Failures print ``{"error": <category>, "message": ...}`` on stderr and
exit with status 1. A JSON ``--config`` file supplies defaults for any
flag; explicit flags win. Keys may sit at the top level or under the
subcommand name.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import channelsim, stats
from .audio_io import AudioBuffer, read_wav, write_wav
from .errors import DovError, InvalidArgument
from .framing import CipherSession, FrameConfig, frame_codebook, frame_encode
from .framing.frame import bits_to_bytes, bytes_to_bits, modulate_frames, receive_stream
from .modem import (
    ChannelEstimate,
    SymbolParams,
    WaveformCodebook,
    demodulate_stream,
    demultiplex,
    estimate_channel,
    modulate_stream,
    split_symbols,
)
from .quatcode import best_codebook_search, codebook_search, load_codebook, save_codebook

DEFAULT_TRAIN_SECONDS = 2.0
DEFAULT_TRAIN_SEED = 1
LENGTH_PREFIX_BITS = 32


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise InvalidArgument(f"missing required option --{name.replace('_', '-')}")


def _waveform_codebook(args) -> WaveformCodebook:
    quat = load_codebook(args.codebook)
    return WaveformCodebook.build(quat, N=args.N, k0=args.k0, amplitude=args.amplitude)


def _bits_per_symbol(M: int) -> int:
    if M & (M - 1):
        raise InvalidArgument(f"codebook size {M} is not a power of two; cannot carry whole bits")
    return M.bit_length() - 1


def training_indices(cb: WaveformCodebook, seconds: float, seed: int) -> np.ndarray:
    L = int(round(seconds * cb.params.baud))
    if L == 1:
        L = 2
    return np.random.default_rng(seed).integers(0, cb.M, L)


def estimate_from_preamble(samples, cb: WaveformCodebook, train_idx) -> ChannelEstimate:
    L = len(train_idx)
    frames, _ = split_symbols(np.asarray(samples)[:L * cb.params.N], cb.params.N)
    if len(frames) < L:
        raise InvalidArgument("stream is shorter than its training preamble")
    return estimate_channel(demultiplex(frames, cb.params), cb.quat.words[train_idx], cb.params)


def _write_audio(path, samples, rescale: bool = False) -> float:
    x = np.asarray(samples, dtype=float)
    scale = 1.0
    peak = float(np.abs(x).max()) if x.size else 0.0
    if rescale and peak > 1.0:
        scale = 0.99 / peak
    write_wav(path, AudioBuffer(x * scale))
    return scale


# subcommands

def cmd_codebook(args) -> dict:
    _need(args, "n", "M", "out")
    t0 = time.perf_counter()
    if args.retries > 1:
        cb = best_codebook_search(args.n, args.M, seed=args.seed, retries=args.retries,
                                  candidate_pool=args.pool)
    else:
        cb = codebook_search(args.n, args.M, seed=args.seed, candidate_pool=args.pool)
    save_codebook(cb, args.out)
    return {"command": "codebook", "n": cb.n, "M": cb.size, "min_lee_distance": cb.min_lee_distance,
            "seed": cb.seed, "pool": args.pool, "seconds": round(time.perf_counter() - t0, 3),
            "out": str(args.out)}


def encode_payload(data: bytes, bits_per_symbol: int) -> np.ndarray:
    """Length-prefixed payload bits grouped MSB-first into symbol indices."""
    prefix = len(data).to_bytes(LENGTH_PREFIX_BITS // 8, "big")
    bits = bytes_to_bits(prefix + data)
    pad = (-len(bits)) % bits_per_symbol
    bits = np.concatenate([bits, np.zeros(pad, np.uint8)])
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return bits.reshape(-1, bits_per_symbol).astype(np.int64) @ weights


def decode_payload(indices, bits_per_symbol: int) -> tuple:
    idx = np.asarray(indices, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(bits_per_symbol - 1, -1, -1)) & 1).astype(np.uint8).ravel()
    bits = bits[:len(bits) // 8 * 8]
    raw = bits_to_bytes(bits)
    n = LENGTH_PREFIX_BITS // 8
    if len(raw) < n:
        return b"", False
    length = int.from_bytes(raw[:n], "big")
    body = raw[n:]
    if length > len(body):
        return body, False
    return body[:length], True


def cmd_modulate(args) -> dict:
    _need(args, "codebook", "bits_in", "wav_out")
    cb = _waveform_codebook(args)
    bps = _bits_per_symbol(cb.M)
    data = Path(args.bits_in).read_bytes()
    payload = encode_payload(data, bps)
    train = training_indices(cb, args.train, args.train_seed)
    samples = modulate_stream(np.concatenate([train, payload]), cb)
    _write_audio(args.wav_out, samples)
    return {"command": "modulate", "bytes": len(data), "payload_symbols": len(payload),
            "training_symbols": len(train), "train_seed": args.train_seed,
            "amplitude": cb.A, "peak": cb.peak, "wav_out": str(args.wav_out)}


def cmd_demodulate(args) -> dict:
    _need(args, "codebook", "wav_in")
    cb = _waveform_codebook(args)
    bps = _bits_per_symbol(cb.M)
    x = read_wav(args.wav_in).samples
    train = training_indices(cb, args.train, args.train_seed)
    start = len(train) * cb.params.N
    est = None
    if not args.no_training and len(train) >= 2:
        est = estimate_from_preamble(x, cb, train)
    dec = demodulate_stream(x[start:], cb, est)
    data, ok = decode_payload(dec.indices, bps)
    if args.bits_out:
        Path(args.bits_out).write_bytes(data)
    if args.indices_out:
        Path(args.indices_out).write_text("".join(f"{i}\n" for i in dec.indices.tolist()))
    out = {"command": "demodulate", "symbols": len(dec), "trailing_samples": dec.trailing,
           "training_symbols": len(train), "train_seed": args.train_seed,
           "trained": est is not None, "length_prefix_ok": ok, "bytes": len(data)}
    if est is not None:
        out["phase_rad"] = [round(float(p), 6) for p in est.phase]
        out["variance"] = [float("%.6g" % v) for v in est.variance]
    return out


def _load_channel(args, K):
    model, imp = None, None
    if args.model:
        model, imp = channelsim.load_model(args.model)
    elif args.preset:
        if K is None:
            raise InvalidArgument("--preset needs --codebook for the harmonic layout")
        model = channelsim.preset(args.preset, SymbolParams(N=args.N, K=K, k0=args.k0))
    overrides = {}
    if args.snr_db is not None:
        overrides["snr_db"] = args.snr_db
    if args.gain is not None:
        overrides["gain"] = args.gain
    if args.delay:
        overrides["delay_samples"] = args.delay
    if args.dropout:
        try:
            overrides["dropouts"] = [tuple(int(v) for v in d.split(":")) for d in args.dropout]
        except ValueError:
            raise InvalidArgument("--dropout must be START:LENGTH") from None
    if overrides:
        base = asdict(imp) if imp is not None else {"symbol_length": args.N}
        base.update(overrides)
        imp = channelsim.TimeImpairments(**base)
    return model, imp


def cmd_simulate(args) -> dict:
    _need(args, "wav_in", "wav_out")
    x = read_wav(args.wav_in).samples
    if args.codec_command:
        y = channelsim.external_codec_channel(x, args.codec_command, tolerance=args.N)
        model = imp = None
    else:
        cb = _waveform_codebook(args) if args.codebook else None
        K = cb.params.K if cb else None
        model, imp = _load_channel(args, K)
        if model is not None:
            A = cb.A if cb else args.amplitude
            if A is None:
                raise InvalidArgument("a parametric model needs --codebook or --amplitude")
            params = SymbolParams(N=args.N, K=model.K, k0=args.k0, A=A)
            y = channelsim.simulate(x, params, model, imp, seed=args.seed)
        else:
            y = channelsim.simulate(x, None, None, imp, seed=args.seed)
    scale = _write_audio(args.wav_out, y, rescale=args.rescale)
    return {"command": "simulate", "seed": args.seed, "samples_in": len(x), "samples_out": len(y),
            "rescale": scale, "external": bool(args.codec_command), "wav_out": str(args.wav_out)}


def _distortion_from_wavs(args):
    _need(args, "codebook", "ref", "wav_in")
    cb = _waveform_codebook(args)
    ref = read_wav(args.ref).samples
    rx = read_wav(args.wav_in).samples
    n = min(len(ref), len(rx)) // cb.params.N * cb.params.N
    sent = demodulate_stream(ref[:n], cb).indices
    psk = demultiplex(split_symbols(rx[:n], cb.params.N)[0], cb.params)
    return cb, stats.distortion(psk, cb.quat.words[sent], cb.A)


def _grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InvalidArgument("--grid must be START:STOP:STEP") from None
    return stats.default_duration_grid(start, stop, step)


def cmd_stats(args) -> dict:
    _need(args, "csv_out")
    report = args.report
    meta = {"command": "stats", "report": report, "csv_out": str(args.csv_out)}
    if report == "snr":
        _need(args, "ref", "wav_in")
        ref = read_wav(args.ref).samples
        rx = read_wav(args.wav_in).samples
        n = min(len(ref), len(rx))
        value = stats.snr_db(ref[:n], rx[:n])
        stats.write_csv(args.csv_out, ("samples", "snr_db"), [(n, value)])
        meta["snr_db"] = value
    elif report == "mardia":
        cb, d = _distortion_from_wavs(args)
        rows = []
        for k in range(d.shape[1]):
            rows.append((k, cb.params.harmonic_freqs[k], len(d), stats.mardia_skewness(d[:, k]),
                         stats.mardia_kurtosis(d[:, k])))
        stats.write_csv(args.csv_out, ("harmonic", "freq_hz", "points", "skewness", "kurtosis"),
                        rows)
        meta["harmonics"] = len(rows)
    elif report == "correlation":
        cb, d = _distortion_from_wavs(args)
        rep = stats.correlation_report(d)
        rows = [("inter", i, j, rep.matrix[i, j]) for i in range(d.shape[1])
                for j in range(d.shape[1])]
        rows += [("lag1", k, k, rep.lag1[k]) for k in range(d.shape[1])]
        stats.write_csv(args.csv_out, ("kind", "i", "j", "correlation"), rows)
        meta.update(max_offdiagonal=rep.max_offdiagonal, max_lag1=rep.max_lag1)
    elif report == "se":
        K = args.K
        params = SymbolParams(N=args.N, K=K, k0=args.k0, A=args.amplitude or 1.0)
        if args.model:
            model, _ = channelsim.load_model(args.model)
        elif args.preset:
            model = channelsim.preset(args.preset, params)
        else:
            raise InvalidArgument("se report needs --model or --preset")
        if model.K != K:
            raise InvalidArgument(f"model has {model.K} harmonics, --K is {K}")
        ref_len = stats.LONG_REFERENCE_SYMBOLS if args.long_reference else args.reference_symbols
        curves = stats.estimator_standard_error(model, params, _grid(args.grid), runs=args.runs,
                                                reference_symbols=ref_len, seed=args.seed)
        stats.write_csv(args.csv_out, curves.CSV_HEADER, curves.rows(),
                        comments=[f"seed={args.seed} runs={args.runs} reference_symbols={ref_len}"])
        meta.update(seed=args.seed, runs=args.runs, reference_symbols=ref_len)
    else:
        raise InvalidArgument(f"unknown report {report!r}")
    return meta


def _session(args) -> CipherSession:
    if args.key_file:
        lines = [ln.strip() for ln in Path(args.key_file).read_text().splitlines() if ln.strip()]
        if len(lines) != 2:
            raise InvalidArgument("key file must hold two hex lines: key, then nonce")
        return CipherSession.from_hex(lines[0], lines[1])
    _need(args, "key_hex", "nonce_hex")
    return CipherSession.from_hex(args.key_hex, args.nonce_hex)


def cmd_frame(args) -> dict:
    _need(args, "payload", "wav")
    cfg = FrameConfig.for_mode(args.mode)
    session = _session(args)
    cb = frame_codebook(cfg)
    chunk = cfg.speech_bits // 8
    train = training_indices(cb, args.train, args.train_seed)
    if args.action == "encode":
        data = Path(args.payload).read_bytes()
        pad = (-len(data)) % chunk
        data += bytes(pad)
        frames = []
        for i in range(len(data) // chunk):
            bits = bytes_to_bits(data[i * chunk:(i + 1) * chunk])
            frames.append(frame_encode(bits, (args.counter_start + i) % 65536, session, cfg, cb))
        samples, silent = modulate_frames(frames, cb, args.silence_period)
        samples = np.concatenate([modulate_stream(train, cb), samples])
        _write_audio(args.wav, samples)
        return {"command": "frame", "action": "encode", "mode": cfg.mode, "frames": len(frames),
                "padded_bytes": pad, "silenced_frames": int(silent.sum()),
                "training_symbols": len(train), "train_seed": args.train_seed}
    x = read_wav(args.wav).samples
    est = estimate_from_preamble(x, cb, train) if len(train) >= 2 else None
    report = receive_stream(x[len(train) * cb.params.N:], session, cfg, cb, est)
    n_frames = len(report.frames)
    out = bytearray(n_frames * chunk)
    for f in report.decoded:
        slot = (f.counter - args.counter_start) % 65536
        if slot < n_frames:
            out[slot * chunk:(slot + 1) * chunk] = bits_to_bytes(f.speech_bits)
    Path(args.payload).write_bytes(bytes(out))
    return {"command": "frame", "action": "decode", "mode": cfg.mode, "frames": n_frames,
            "decoded": report.count("decoded"), "silent": report.count("silent"),
            "lost": report.count("lost"), "not_found": report.count("not-found"),
            "desynchronized": report.count("desynchronized")}


BENCH_HEADER = ("M", "bits_per_symbol", "min_lee_distance", "symbols", "errors", "ser",
                "detector", "codebook_seed", "channel_seed")


def bench_ser(sizes, n: int, model: channelsim.ParametricChannelModel, symbols: int,
              seed: int = 0, codebook_seed: int = 0, N: int = 20, k0: int = 1,
              train_seconds: float = DEFAULT_TRAIN_SECONDS, detector: str = "corrected"):
    """SER versus codebook size through the parametric channel (time-domain path).

    Returns one row per size in ``BENCH_HEADER`` order. Each size gets its
    own child seed for training and payload noise.
    """
    rows = []
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    for M, ss in zip(sizes, children):
        quat = codebook_search(n, M, seed=codebook_seed)
        cb = WaveformCodebook.build(quat, N=N, k0=k0)
        rng = np.random.default_rng(ss)
        train = rng.integers(0, M, max(2, int(round(train_seconds * cb.params.baud))))
        sent = rng.integers(0, M, symbols)
        x = modulate_stream(np.concatenate([train, sent]), cb)
        y = channelsim.apply_parametric_samples(x, cb.params, model, rng)
        est = None
        if detector == "corrected":
            est = estimate_from_preamble(y, cb, train)
        got = demodulate_stream(y[len(train) * N:], cb, est).indices
        errors = int((got != sent).sum())
        rows.append((M, np.log2(M), quat.min_lee_distance, symbols, errors, errors / symbols,
                     detector, codebook_seed, seed))
    return rows


def cmd_bench_ser(args) -> dict:
    _need(args, "csv_out")
    sizes = [int(s) for s in str(args.sizes).split(",")]
    params = SymbolParams(N=args.N, K=args.n, k0=args.k0)
    if args.model:
        model, _ = channelsim.load_model(args.model)
    elif args.preset:
        model = channelsim.preset(args.preset, params)
    else:
        model = channelsim.ParametricChannelModel.uniform(args.n, phase=args.phase,
                                                          noise_var=args.noise_var)
    rows = bench_ser(sizes, args.n, model, args.symbols, seed=args.seed,
                     codebook_seed=args.codebook_seed, N=args.N, k0=args.k0,
                     train_seconds=args.train, detector=args.detector)
    stats.write_csv(args.csv_out, BENCH_HEADER, rows)
    return {"command": "bench-ser", "seed": args.seed, "codebook_seed": args.codebook_seed,
            "ser": {str(r[0]): r[5] for r in rows}, "csv_out": str(args.csv_out)}


def _symbol_options(p: argparse.ArgumentParser, codebook: bool = True) -> None:
    if codebook:
        p.add_argument("--codebook", help="quaternary codebook file")
    p.add_argument("--N", type=int, default=20, help="samples per symbol (default 20 = 400 baud)")
    p.add_argument("--k0", type=int, default=1, help="lowest harmonic index")
    p.add_argument("--amplitude", type=float, help="per-harmonic amplitude (default: 0.9 peak)")


def _channel_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="channel model JSON")
    p.add_argument("--preset", choices=sorted(channelsim.PRESETS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dovmodem", description="Data-over-voice modem toolkit")
    parser.add_argument("--config", help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codebook", help="construct and certify a quaternary codebook")
    p.add_argument("--n", type=int, help="word length (harmonic count)")
    p.add_argument("--M", type=int, help="codebook size (even)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--retries", type=int, default=1, help="seeds to try, keeping the best")
    p.add_argument("--pool", choices=("full", "even"), default="full")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codebook)

    for name, func in (("modulate", cmd_modulate), ("demodulate", cmd_demodulate)):
        p = sub.add_parser(name, help=f"{name} a byte payload")
        _symbol_options(p)
        p.add_argument("--train", type=float, default=DEFAULT_TRAIN_SECONDS,
                       help="training preamble length in seconds")
        p.add_argument("--train-seed", type=int, default=DEFAULT_TRAIN_SEED)
        if name == "modulate":
            p.add_argument("--bits-in", help="payload file (raw bytes)")
            p.add_argument("--wav-out")
        else:
            p.add_argument("--wav-in")
            p.add_argument("--bits-out")
            p.add_argument("--indices-out", help="write decided indices, one per line")
            p.add_argument("--no-training", action="store_true",
                           help="skip the preamble without estimating the channel")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="pass audio through a simulated or external channel")
    _symbol_options(p)
    _channel_options(p)
    p.add_argument("--wav-in")
    p.add_argument("--wav-out")
    p.add_argument("--codec-command", help="shell command reading/writing s16le 8 kHz PCM")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--gain", type=float)
    p.add_argument("--delay", type=int, help="delay in samples")
    p.add_argument("--dropout", action="append", help="START:LENGTH in symbols (repeatable)")
    p.add_argument("--rescale", action="store_true",
                   help="scale the output to 0.99 peak instead of failing on clipping")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="distortion statistics reports (CSV)")
    p.add_argument("report", choices=("mardia", "snr", "correlation", "se"))
    _symbol_options(p)
    _channel_options(p)
    p.add_argument("--K", type=int, default=8, help="harmonics (se report)")
    p.add_argument("--ref", help="reference (sent) WAV")
    p.add_argument("--wav-in", help="received WAV")
    p.add_argument("--grid", default="0.5:2.5:0.05", help="training durations START:STOP:STEP")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--reference-symbols", type=int, default=stats.REFERENCE_SYMBOLS)
    p.add_argument("--long-reference", action="store_true",
                   help=f"use {stats.LONG_REFERENCE_SYMBOLS} reference symbols")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("frame", help="secure-voice frame encode/decode")
    p.add_argument("action", choices=("encode", "decode"))
    p.add_argument("--mode", choices=("low", "high"), default="low")
    p.add_argument("--key-hex")
    p.add_argument("--nonce-hex")
    p.add_argument("--key-file", help="two hex lines: 256-bit key, 104-bit nonce")
    p.add_argument("--payload", help="speech bits file (input for encode, output for decode)")
    p.add_argument("--wav")
    p.add_argument("--counter-start", type=int, default=0)
    p.add_argument("--silence-period", type=int, help="silence every S-th frame")
    p.add_argument("--train", type=float, default=DEFAULT_TRAIN_SECONDS)
    p.add_argument("--train-seed", type=int, default=DEFAULT_TRAIN_SEED)
    p.set_defaults(func=cmd_frame)

    p = sub.add_parser("bench-ser", help="symbol error rate versus codebook size")
    p.add_argument("--sizes", default="16,64,256,1024")
    p.add_argument("--n", type=int, default=8, help="word length (harmonic count)")
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--k0", type=int, default=1)
    _channel_options(p)
    p.add_argument("--noise-var", type=float, default=1.0, help="uniform noise variance (A^2)")
    p.add_argument("--phase", type=float, default=0.3, help="uniform phase shift (rad)")
    p.add_argument("--symbols", type=int, default=100_000)
    p.add_argument("--train", type=float, default=DEFAULT_TRAIN_SECONDS)
    p.add_argument("--detector", choices=("corrected", "ml"), default="corrected")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--codebook-seed", type=int, default=0)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_bench_ser)
    parser._subcommands = sub.choices
    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv):
    data = json.loads(Path(args.config).read_text())
    if not isinstance(data, dict):
        raise InvalidArgument("config must be a JSON object")
    values = {k: v for k, v in data.items() if not isinstance(v, dict)}
    values.update(data.get(args.command, {}))
    sub = parser._subcommands[args.command]
    known = {a.dest for a in sub._actions}
    values = {k.replace("-", "_"): v for k, v in values.items() if k != "config"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidArgument(f"unknown config keys for {args.command}: {unknown}")
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config(parser, args, argv)
        result = args.func(args)
    except DovError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
